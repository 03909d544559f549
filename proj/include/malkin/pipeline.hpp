#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "malkin/bifurcation.hpp"
#include "malkin/examples.hpp"
#include "malkin/shooting.hpp"

namespace malkin::pipeline {

using Json = nlohmann::ordered_json;

/// Stage names in dependency order.
inline const std::vector<std::string> kStageOrder = {
    "monodromy", "frame", "malkin", "zeros", "degree", "dilation", "shooting", "uniqueness"};

struct ProblemSpec {
  std::string builtin = "coupled";  ///< "coupled" or "planar"
  double k1 = 0.5;
  double k2 = 1.0;
  double eta = 0.0;
  bool unforced = false;
  std::string spec_file;  ///< external definitions are not supported
};

struct Tolerances {
  double integrator = 1e-12;
  double quad = 1e-9;
  double zero = 1e-8;
  double check = 1e-6;
  double family = 1e-7;
  double shoot = 1e-9;
  double anchor = 1e-2;
};

struct JobConfig {
  ProblemSpec problem;
  std::vector<std::string> stages = kStageOrder;
  std::optional<Box> region;  ///< defaults to the fundamental square
  int grid_density = 64;
  std::vector<double> eps_ladder = {1e-2, 1e-3, 1e-4};
  std::string output_dir = ".";
  std::uint64_t seed = 1;
  std::optional<Vec> h_ref;  ///< frame reference point, defaults to the region center
  double degree_radius = 0.3;
  double dilation_radius = 0.1;
  int dilation_pairs = 100;
  double uniqueness_radius = 0.05;
  int uniqueness_starts = 64;
  Tolerances tol;

  /// Throws ConfigError.
  void validate() const;
  [[nodiscard]] Json to_json() const;
  /// Keys absent from `j` keep the values already in `base`.
  static JobConfig from_json(const Json& j, JobConfig base);
  static JobConfig from_json(const Json& j);
  static JobConfig from_file(const std::string& path, JobConfig base);
  static JobConfig from_file(const std::string& path);
};

/// Throws ConfigError for unknown builtins or external spec files.
examples::Problem make_problem(const ProblemSpec& spec);
Box default_region(const examples::Problem& problem);

struct RunReport {
  Json body;    ///< config echo, stages, verdicts
  Json timing;  ///< wall-clock seconds per stage
  int exit_code = 0;

  [[nodiscard]] Json full() const;
};

RunReport cmd_analyze(const JobConfig& config);

/// Rows (h..., M...) over a density^k grid, row-major, as CSV text.
std::string malkin_grid_csv(const JobConfig& config);
/// Writes malkin_grid_csv to `path`. Throws IoError.
void cmd_malkin_grid(const JobConfig& config, const std::string& path);

struct SweepRow {
  double k1 = 0.0;
  double k2 = 0.0;
  std::size_t zeros = 0;
  bool non_isolated = false;
  int degree_sum = 0;
  double grid_min = 0.0;
};
/// Zero classification over the k1 x k2 product for the coupled system.
std::vector<SweepRow> cmd_sweep(const JobConfig& base, const std::vector<double>& k1s,
                                const std::vector<double>& k2s);
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// 17 significant digits.
std::string format_double(double v);
void write_text(const std::string& path, const std::string& text);

}  // namespace malkin::pipeline
