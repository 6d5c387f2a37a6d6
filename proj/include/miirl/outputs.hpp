#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "miirl/eval.hpp"

namespace miirl {

/// Doubles formatted with 9 significant digits, the CSV convention.
std::string format_double(double value);

/// RFC 4180 field quoting (applied only when the field needs it).
std::string csv_field(const std::string& raw);

/// Writes runs.csv, summary.csv, manifest.txt and any reward-map images
/// into out_dir (created if missing). runs.csv columns:
///   run_id,seed,algorithm,env,iteration,avg_evd,transfer_avg_evd,
///   k_predicted,wall_ms
/// with LF line endings.
void write_outputs(const std::vector<RunRecord>& records,
                   const std::vector<SummaryRow>& summaries,
                   const std::vector<RewardMapImage>& maps,
                   const std::string& manifest_text,
                   const std::string& out_dir);

std::vector<RunRecord> parse_runs_csv(const std::string& path);
std::vector<SummaryRow> parse_summary_csv(const std::string& path);

/// Plain-text grayscale image (P2), min-max normalized per image; a constant
/// map renders as mid-gray (128).
void write_ppm(const std::string& path, const Eigen::VectorXd& values,
               int width, int height);

}  // namespace miirl
