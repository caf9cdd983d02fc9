#ifndef SSLFORGE_HARNESS_PLOTDATA_H_
#define SSLFORGE_HARNESS_PLOTDATA_H_

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sslforge {

// One long-format sample: metric value at a step of a run.
struct PlotRow {
  std::string run;
  std::size_t step = 0;
  std::string metric;
  std::string value;  // verbatim from the metrics file

  bool operator==(const PlotRow&) const = default;
};

// Rows of one metrics CSV (any header whose first column is "step"); empty
// cells are skipped.
std::vector<PlotRow> metrics_to_plot_rows(const std::string& run, const std::string& csv);

// "run,step,metric,value" CSV over all files. Run ids are the name of each
// file's parent directory, suffixed "-2", "-3", ... when repeated.
std::string emit_plot_data(std::span<const std::filesystem::path> metrics_files);
std::string format_plot_data(std::span<const PlotRow> rows);
std::vector<PlotRow> parse_plot_data(const std::string& csv);

}  // namespace sslforge

#endif  // SSLFORGE_HARNESS_PLOTDATA_H_
