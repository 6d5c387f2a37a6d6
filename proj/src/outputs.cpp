#include "miirl/outputs.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace miirl {

namespace {

/// Splits one RFC 4180 record (no embedded newlines in our fields).
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

double parse_double(const std::string& s) {
  if (s == "nan" || s == "-nan")
    return std::numeric_limits<double>::quiet_NaN();
  return std::stod(s);
}

void open_for_write(std::ofstream& out, const std::string& path) {
  out.open(path, std::ios::binary);  // binary: LF line endings everywhere
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", value);
  return buf;
}

std::string csv_field(const std::string& raw) {
  if (raw.find_first_of(",\"\n\r") == std::string::npos) return raw;
  std::string quoted = "\"";
  for (char c : raw) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

void write_outputs(const std::vector<RunRecord>& records,
                   const std::vector<SummaryRow>& summaries,
                   const std::vector<RewardMapImage>& maps,
                   const std::string& manifest_text,
                   const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);

  {
    std::ofstream out;
    open_for_write(out, (dir / "runs.csv").string());
    out << "run_id,seed,algorithm,env,iteration,avg_evd,transfer_avg_evd,"
           "k_predicted,wall_ms\n";
    for (const RunRecord& r : records) {
      out << csv_field(r.run_id) << ',' << r.seed << ','
          << to_string(r.algorithm) << ',' << to_string(r.env) << ','
          << r.iteration << ',' << format_double(r.avg_evd) << ','
          << format_double(r.transfer_avg_evd) << ',' << r.k_predicted << ','
          << format_double(r.wall_ms) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: runs.csv in " + out_dir);
  }

  {
    std::ofstream out;
    open_for_write(out, (dir / "summary.csv").string());
    out << "config,algorithm,env,alpha,repeats,failures,degenerate,"
           "mean_avg_evd,se_avg_evd,mean_transfer_avg_evd,"
           "se_transfer_avg_evd,mean_k_predicted,se_k_predicted\n";
    for (const SummaryRow& s : summaries) {
      out << csv_field(s.config) << ',' << to_string(s.algorithm) << ','
          << to_string(s.env) << ',' << format_double(s.alpha) << ','
          << s.repeats << ',' << s.failures << ',' << (s.degenerate ? 1 : 0)
          << ',' << format_double(s.mean_avg_evd) << ','
          << format_double(s.se_avg_evd) << ','
          << format_double(s.mean_transfer_avg_evd) << ','
          << format_double(s.se_transfer_avg_evd) << ','
          << format_double(s.mean_k_predicted) << ','
          << format_double(s.se_k_predicted) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: summary.csv in " + out_dir);
  }

  {
    std::ofstream out;
    open_for_write(out, (dir / "manifest.txt").string());
    out << manifest_text;
    if (!out) throw std::runtime_error("write failed: manifest.txt in " + out_dir);
  }

  for (const RewardMapImage& map : maps)
    write_ppm((dir / map.name).string(), map.values, map.width, map.height);
}

std::vector<RunRecord> parse_runs_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty runs csv: " + path);
  std::vector<RunRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 9)
      throw std::runtime_error("malformed runs csv row in " + path);
    RunRecord r;
    r.run_id = f[0];
    r.seed = std::stoull(f[1]);
    r.algorithm = algorithm_from_string(f[2]);
    r.env = env_kind_from_string(f[3]);
    r.iteration = std::stoi(f[4]);
    r.avg_evd = parse_double(f[5]);
    r.transfer_avg_evd = parse_double(f[6]);
    r.k_predicted = std::stoi(f[7]);
    r.wall_ms = parse_double(f[8]);
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<SummaryRow> parse_summary_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty summary csv: " + path);
  std::vector<SummaryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 13)
      throw std::runtime_error("malformed summary csv row in " + path);
    SummaryRow s;
    s.config = f[0];
    s.algorithm = algorithm_from_string(f[1]);
    s.env = env_kind_from_string(f[2]);
    s.alpha = parse_double(f[3]);
    s.repeats = std::stoi(f[4]);
    s.failures = std::stoi(f[5]);
    s.degenerate = f[6] == "1";
    s.mean_avg_evd = parse_double(f[7]);
    s.se_avg_evd = parse_double(f[8]);
    s.mean_transfer_avg_evd = parse_double(f[9]);
    s.se_transfer_avg_evd = parse_double(f[10]);
    s.mean_k_predicted = parse_double(f[11]);
    s.se_k_predicted = parse_double(f[12]);
    rows.push_back(std::move(s));
  }
  return rows;
}

void write_ppm(const std::string& path, const Eigen::VectorXd& values,
               int width, int height) {
  if (values.size() != static_cast<Eigen::Index>(width) * height)
    throw std::invalid_argument("write_ppm: size mismatch");
  std::ofstream out;
  open_for_write(out, path);
  out << "P2\n" << width << ' ' << height << "\n255\n";
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  for (int row = 0; row < height; ++row) {
    for (int col = 0; col < width; ++col) {
      int pixel = 128;  // constant map renders mid-gray
      if (hi > lo) {
        const double v = values[row * width + col];
        pixel = static_cast<int>(std::lround((v - lo) / (hi - lo) * 255.0));
      }
      out << pixel << (col + 1 == width ? '\n' : ' ');
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace miirl
