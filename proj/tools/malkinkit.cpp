// malkinkit: batch front-end for the Malkin bifurcation pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "malkin/errors.hpp"
#include "malkin/pipeline.hpp"

namespace mp = malkin::pipeline;

namespace {

struct Flags {
  mp::JobConfig cfg;
  std::string config_file;
  std::vector<double> region_lo, region_hi, h_ref;
  std::vector<std::string> stages;
  std::string out;
};

void add_job_flags(CLI::App* app, Flags& f, bool with_stages) {
  mp::JobConfig& c = f.cfg;
  app->add_option("--config", f.config_file, "JSON config; its keys override flags");
  app->add_option("--builtin", c.problem.builtin, "builtin problem: coupled or planar");
  app->add_option("--k1", c.problem.k1);
  app->add_option("--k2", c.problem.k2);
  app->add_option("--eta", c.problem.eta, "planar case coupling phase");
  app->add_flag("--unforced", c.problem.unforced, "drop the perturbation entirely (g = 0)");
  app->add_option("--spec-file", c.problem.spec_file, "external problem definition");
  if (with_stages)
    app->add_option("--stages", f.stages, "stages to run, 'none' for an empty list")->delimiter(',');
  app->add_option("--region-lo", f.region_lo)->delimiter(',');
  app->add_option("--region-hi", f.region_hi)->delimiter(',');
  app->add_option("--h-ref", f.h_ref, "frame reference parameter")->delimiter(',');
  app->add_option("--density", c.grid_density, "grid nodes per dimension");
  app->add_option("--eps-ladder", c.eps_ladder)->delimiter(',');
  app->add_option("--output-dir", c.output_dir);
  app->add_option("--seed", c.seed);
  app->add_option("--degree-radius", c.degree_radius);
  app->add_option("--dilation-radius", c.dilation_radius);
  app->add_option("--dilation-pairs", c.dilation_pairs);
  app->add_option("--uniqueness-radius", c.uniqueness_radius);
  app->add_option("--uniqueness-starts", c.uniqueness_starts);
  app->add_option("--tol-integrator", c.tol.integrator);
  app->add_option("--tol-quad", c.tol.quad);
  app->add_option("--tol-zero", c.tol.zero);
  app->add_option("--tol-check", c.tol.check);
  app->add_option("--tol-family", c.tol.family);
  app->add_option("--tol-shoot", c.tol.shoot);
  app->add_option("--tol-anchor", c.tol.anchor);
}

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

mp::JobConfig resolve(Flags f, const std::vector<std::string>& forced_stages) {
  mp::JobConfig c = f.cfg;
  if (!f.region_lo.empty() || !f.region_hi.empty())
    c.region = malkin::Box{to_vec(f.region_lo), to_vec(f.region_hi)};
  if (!f.h_ref.empty()) c.h_ref = to_vec(f.h_ref);
  if (!f.stages.empty()) {
    c.stages = f.stages;
    if (c.stages.size() == 1 && c.stages[0] == "none") c.stages.clear();
  }
  if (!forced_stages.empty()) c.stages = forced_stages;
  if (!f.config_file.empty()) c = mp::JobConfig::from_file(f.config_file, c);
  c.validate();
  return c;
}

std::string in_output_dir(const mp::JobConfig& c, const std::string& name) {
  return (std::filesystem::path(c.output_dir) / name).string();
}

int run_report(const mp::JobConfig& c, const std::string& name) {
  const mp::RunReport rep = mp::cmd_analyze(c);
  const std::string path = in_output_dir(c, name);
  mp::write_text(path, rep.full().dump(2) + "\n");
  int passed = 0, total = 0;
  for (const auto& v : rep.body["verdicts"]) {
    ++total;
    if (v["pass"].get<bool>()) ++passed;
  }
  for (const auto& [stage, entry] : rep.body["stages"].items())
    if (entry["status"] != "ok")
      std::cerr << stage << ": " << entry["status"].get<std::string>() << " ("
                << entry["reason"].get<std::string>() << ")\n";
  std::printf("%s: %d/%d verdicts pass, report %s\n", rep.exit_code == 0 ? "PASS" : "FAIL", passed,
              total, path.c_str());
  return rep.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Malkin bifurcation analysis of periodically forced ODEs"};
  app.require_subcommand(1);

  Flags analyze, grid, zeros, degree, shoot, sweep;
  bool with_uniqueness = false;
  std::vector<double> k1s{-2, -1, -0.5, 0, 0.5, 1, 2}, k2s{0, 0.5, 1, 3};

  auto* a = app.add_subcommand("analyze", "run the pipeline and write report.json");
  add_job_flags(a, analyze, true);
  auto* g = app.add_subcommand("malkin-grid", "tabulate M over the region grid");
  add_job_flags(g, grid, false);
  g->add_option("--out", grid.out, "CSV path, default <output-dir>/malkin_grid.csv");
  auto* z = app.add_subcommand("zeros", "locate and classify zeros of M");
  add_job_flags(z, zeros, false);
  auto* d = app.add_subcommand("degree", "zeros plus degree certificates");
  add_job_flags(d, degree, false);
  auto* s = app.add_subcommand("shoot", "continue orbits from the zeros down the eps ladder");
  add_job_flags(s, shoot, false);
  s->add_flag("--uniqueness", with_uniqueness, "also run the local uniqueness probe");
  auto* w = app.add_subcommand("sweep", "zero classification over a k1 x k2 product");
  add_job_flags(w, sweep, false);
  w->add_option("--k1-list", k1s)->delimiter(',');
  w->add_option("--k2-list", k2s)->delimiter(',');
  w->add_option("--out", sweep.out, "CSV path, default <output-dir>/sweep.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*a) return run_report(resolve(analyze, {}), "report.json");
    if (*z) return run_report(resolve(zeros, {"zeros"}), "zeros.json");
    if (*d) return run_report(resolve(degree, {"degree"}), "degree.json");
    if (*s) {
      std::vector<std::string> st{"shooting"};
      if (with_uniqueness) st.push_back("uniqueness");
      return run_report(resolve(shoot, st), "shoot.json");
    }
    if (*g) {
      const mp::JobConfig c = resolve(grid, {});
      const std::string path = grid.out.empty() ? in_output_dir(c, "malkin_grid.csv") : grid.out;
      mp::cmd_malkin_grid(c, path);
      std::printf("wrote %s\n", path.c_str());
      return 0;
    }
    if (*w) {
      const mp::JobConfig c = resolve(sweep, {});
      const std::string path = sweep.out.empty() ? in_output_dir(c, "sweep.csv") : sweep.out;
      mp::write_text(path, mp::sweep_csv(mp::cmd_sweep(c, k1s, k2s)));
      std::printf("wrote %s\n", path.c_str());
      return 0;
    }
  } catch (const malkin::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const malkin::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
