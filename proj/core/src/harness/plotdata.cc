#include "sslforge/harness/plotdata.h"

#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "sslforge/common/error.h"

namespace sslforge {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out(1);
  for (char ch : line) {
    if (ch == ',') {
      out.emplace_back();
    } else if (ch != '\r') {
      out.back() += ch;
    }
  }
  return out;
}

std::size_t parse_step(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw DataError(fmt::format("plot data: bad step '{}'", s));
  }
  return static_cast<std::size_t>(std::stoull(s));
}

std::string sanitize(std::string id) {
  for (char& ch : id) {
    if (ch == ',' || ch == '\n' || ch == '\r') ch = '_';
  }
  return id.empty() ? "run" : id;
}

}  // namespace

std::vector<PlotRow> metrics_to_plot_rows(const std::string& run, const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line.empty()) return {};
  const auto header = split_line(line);
  if (header.front() != "step") throw DataError("metrics file must start with a step column");
  std::vector<PlotRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != header.size()) throw DataError("metrics file: wrong field count");
    const std::size_t step = parse_step(fields[0]);
    for (std::size_t k = 1; k < fields.size(); ++k) {
      if (!fields[k].empty()) rows.push_back({run, step, header[k], fields[k]});
    }
  }
  return rows;
}

std::string format_plot_data(std::span<const PlotRow> rows) {
  std::string out = "run,step,metric,value\n";
  for (const PlotRow& r : rows) out += fmt::format("{},{},{},{}\n", r.run, r.step, r.metric, r.value);
  return out;
}

std::string emit_plot_data(std::span<const std::filesystem::path> metrics_files) {
  std::map<std::string, std::size_t> seen;
  std::vector<PlotRow> rows;
  for (const auto& path : metrics_files) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(fmt::format("cannot read {}", path.string()));
    std::stringstream text;
    text << in.rdbuf();
    const std::string base = sanitize(std::filesystem::absolute(path).parent_path().filename().string());
    const std::size_t n = ++seen[base];
    const std::string id = n == 1 ? base : fmt::format("{}-{}", base, n);
    const auto part = metrics_to_plot_rows(id, text.str());
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return format_plot_data(rows);
}

std::vector<PlotRow> parse_plot_data(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "run,step,metric,value") {
    throw DataError("plot data: missing header");
  }
  std::vector<PlotRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_line(line);
    if (f.size() != 4) throw DataError("plot data: wrong field count");
    rows.push_back({f[0], parse_step(f[1]), f[2], f[3]});
  }
  return rows;
}

}  // namespace sslforge
