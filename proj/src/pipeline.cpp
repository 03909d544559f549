#include "malkin/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "malkin/errors.hpp"
#include "malkin/parallel.hpp"

namespace malkin::pipeline {

namespace {

Json vec_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Json mat_json(const Mat& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i).transpose()));
  return rows;
}

Vec json_vec(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + " must be an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(what + " must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& item : j.items())
    if (!known.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("write to " + path + " failed");
}

examples::Problem make_problem(const ProblemSpec& spec) {
  if (!spec.spec_file.empty())
    throw ConfigError("external problem specs are not supported; use a builtin or link the library");
  if (spec.builtin == "coupled") return examples::build_coupled({spec.k1, spec.k2, spec.unforced});
  if (spec.builtin == "planar") return examples::build_planar(spec.k1, spec.eta, spec.unforced);
  throw ConfigError("unknown builtin '" + spec.builtin + "'");
}

Box default_region(const examples::Problem& problem) {
  const int k = problem.family.k;
  return Box{Vec::Zero(k), Vec::Constant(k, kTwoPi)};
}

void JobConfig::validate() const {
  const examples::Problem prob = make_problem(problem);
  const int k = prob.family.k;
  for (const std::string& s : stages)
    if (std::find(kStageOrder.begin(), kStageOrder.end(), s) == kStageOrder.end())
      throw ConfigError("unknown stage '" + s + "'");
  if (region) {
    if (region->dim() != k || region->hi.size() != k)
      throw ConfigError("region dimension must equal the family dimension " + std::to_string(k));
    if (!(region->lo.array() < region->hi.array()).all()) throw ConfigError("region is degenerate");
  }
  if (h_ref && h_ref->size() != k) throw ConfigError("h_ref dimension mismatch");
  if (grid_density < 2) throw ConfigError("grid_density must be at least 2");
  for (std::size_t i = 0; i < eps_ladder.size(); ++i) {
    if (!(eps_ladder[i] > 0.0 && eps_ladder[i] <= ShootConfig{}.eps_max))
      throw ConfigError("eps ladder entries must lie in (0, 0.1]");
    if (i > 0 && !(eps_ladder[i] < eps_ladder[i - 1]))
      throw ConfigError("eps ladder must be strictly decreasing");
  }
  const double tols[] = {tol.integrator, tol.quad, tol.zero, tol.check,
                         tol.family, tol.shoot, tol.anchor};
  for (double t : tols)
    if (!(t > 0.0)) throw ConfigError("tolerances must be positive");
  if (!(degree_radius > 0.0 && dilation_radius > 0.0 && uniqueness_radius > 0.0))
    throw ConfigError("radii must be positive");
  if (dilation_pairs < 100) throw ConfigError("dilation pairs must be at least 100");
  if (uniqueness_starts < 1) throw ConfigError("uniqueness starts must be positive");
}

Json JobConfig::to_json() const {
  Json j;
  Json p;
  if (!problem.spec_file.empty()) {
    p["spec_file"] = problem.spec_file;
  } else {
    p["builtin"] = problem.builtin;
    p["k1"] = problem.k1;
    if (problem.builtin == "coupled") p["k2"] = problem.k2;
    if (problem.builtin == "planar") p["eta"] = problem.eta;
    p["unforced"] = problem.unforced;
  }
  j["problem"] = p;
  j["stages"] = stages;
  if (region) j["region"] = {{"lo", vec_json(region->lo)}, {"hi", vec_json(region->hi)}};
  j["grid_density"] = grid_density;
  j["eps_ladder"] = eps_ladder;
  j["output_dir"] = output_dir;
  j["seed"] = seed;
  if (h_ref) j["h_ref"] = vec_json(*h_ref);
  j["degree_radius"] = degree_radius;
  j["dilation"] = {{"radius", dilation_radius}, {"pairs", dilation_pairs}};
  j["uniqueness"] = {{"radius", uniqueness_radius}, {"starts", uniqueness_starts}};
  j["tolerances"] = {{"integrator", tol.integrator}, {"quad", tol.quad},   {"zero", tol.zero},
                     {"check", tol.check},           {"family", tol.family}, {"shoot", tol.shoot},
                     {"anchor", tol.anchor}};
  return j;
}

JobConfig JobConfig::from_json(const Json& j, JobConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j,
                 {"problem", "stages", "region", "grid_density", "eps_ladder", "output_dir", "seed",
                  "h_ref", "degree_radius", "dilation", "uniqueness", "tolerances"},
                 "config");
  if (j.contains("problem")) {
    const Json& p = j.at("problem");
    if (!p.is_object()) throw ConfigError("problem must be an object");
    reject_unknown(p, {"builtin", "k1", "k2", "eta", "unforced", "spec_file"}, "problem");
    read(p, "builtin", c.problem.builtin);
    read(p, "k1", c.problem.k1);
    read(p, "k2", c.problem.k2);
    read(p, "eta", c.problem.eta);
    read(p, "unforced", c.problem.unforced);
    read(p, "spec_file", c.problem.spec_file);
  }
  read(j, "stages", c.stages);
  if (j.contains("region")) {
    const Json& r = j.at("region");
    if (!r.is_object() || !r.contains("lo") || !r.contains("hi"))
      throw ConfigError("region needs 'lo' and 'hi'");
    c.region = Box{json_vec(r.at("lo"), "region.lo"), json_vec(r.at("hi"), "region.hi")};
  }
  read(j, "grid_density", c.grid_density);
  read(j, "eps_ladder", c.eps_ladder);
  read(j, "output_dir", c.output_dir);
  read(j, "seed", c.seed);
  if (j.contains("h_ref")) c.h_ref = json_vec(j.at("h_ref"), "h_ref");
  read(j, "degree_radius", c.degree_radius);
  if (j.contains("dilation")) {
    read(j.at("dilation"), "radius", c.dilation_radius);
    read(j.at("dilation"), "pairs", c.dilation_pairs);
  }
  if (j.contains("uniqueness")) {
    read(j.at("uniqueness"), "radius", c.uniqueness_radius);
    read(j.at("uniqueness"), "starts", c.uniqueness_starts);
  }
  if (j.contains("tolerances")) {
    const Json& t = j.at("tolerances");
    reject_unknown(t, {"integrator", "quad", "zero", "check", "family", "shoot", "anchor"},
                   "tolerances");
    read(t, "integrator", c.tol.integrator);
    read(t, "quad", c.tol.quad);
    read(t, "zero", c.tol.zero);
    read(t, "check", c.tol.check);
    read(t, "family", c.tol.family);
    read(t, "shoot", c.tol.shoot);
    read(t, "anchor", c.tol.anchor);
  }
  return c;
}

JobConfig JobConfig::from_file(const std::string& path, JobConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return from_json(j, std::move(base));
}

JobConfig JobConfig::from_json(const Json& j) { return from_json(j, JobConfig{}); }

JobConfig JobConfig::from_file(const std::string& path) { return from_file(path, JobConfig{}); }

Json RunReport::full() const {
  Json j = body;
  j["timing"] = timing;
  j["exit_code"] = exit_code;
  return j;
}

namespace {

struct Context {
  const JobConfig& cfg;
  examples::Problem prob;
  Box region;
  Vec h_ref;
  LinearPeriodicConfig lp;
  BifConfig bc;
  ShootConfig sc;

  std::optional<MonodromyRecord> record;
  std::optional<ReductionFrame> frame;
  std::optional<BifFunction> bf;
  std::optional<ZeroSearch> zeros;
  std::vector<std::pair<std::size_t, ContinuationTrace>> traces;
};

Json verdict(const std::string& check, bool pass, double value, double tolerance) {
  return Json{{"check", check}, {"pass", pass}, {"value", value}, {"tolerance", tolerance}};
}

Json run_monodromy(Context& c, Json& verdicts) {
  c.record = monodromy(c.prob.sys, c.prob.family, c.h_ref, c.lp);
  const MonodromyRecord& r = *c.record;
  std::vector<std::complex<double>> mu(r.multipliers.data(), r.multipliers.data() + r.multipliers.size());
  std::sort(mu.begin(), mu.end(), [](auto a, auto b) {
    if (std::abs(a) != std::abs(b)) return std::abs(a) > std::abs(b);
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  Json re = Json::array(), im = Json::array();
  for (auto m : mu) {
    re.push_back(m.real());
    im.push_back(m.imag());
  }
  std::complex<double> prod = 1.0;
  for (auto m : mu) prod *= m;
  const double det = r.w_t.determinant();
  const double det_rel = std::abs(prod - det) / std::max(std::abs(det), 1e-300);
  verdicts.push_back(verdict("monodromy.geo_mult_one_equals_k",
                             r.geo_mult_one == c.prob.family.k, r.geo_mult_one, 0.0));
  verdicts.push_back(verdict("monodromy.kernel_residual", r.kernel_residual() <= c.lp.kernel_tol,
                             r.kernel_residual(), c.lp.kernel_tol));
  verdicts.push_back(verdict("monodromy.det_matches_product", det_rel <= 1e-8, det_rel, 1e-8));
  return Json{{"h", vec_json(r.h)},
              {"multipliers_re", re},
              {"multipliers_im", im},
              {"geo_mult_one", r.geo_mult_one},
              {"excess_multiplicity", r.excess_multiplicity},
              {"kernel_residual", r.kernel_residual()}};
}

Json run_frame(Context& c, Json& verdicts) {
  c.frame = build_frame(c.prob.sys, c.prob.family, c.h_ref, c.lp);
  const FrameSnapshot snap = c.frame->at(c.prob.sys, c.prob.family, c.h_ref);
  const double inv_err =
      (c.frame->s() * c.frame->s_inv() - Mat::Identity(c.frame->n(), c.frame->n())).norm();
  verdicts.push_back(verdict("frame.valid_at_h_ref", snap.valid, snap.top_right_norm,
                             c.lp.block_tol));
  verdicts.push_back(verdict("frame.s_inverse", inv_err <= 1e-12, inv_err, 1e-12));
  verdicts.push_back(verdict("frame.adjoint_periodic",
                             snap.periodicity_defect <= c.lp.periodicity_tol,
                             snap.periodicity_defect, c.lp.periodicity_tol));
  return Json{{"h_ref", vec_json(c.h_ref)},
              {"s", mat_json(c.frame->s())},
              {"pivots", c.frame->pivots()},
              {"det_delta", snap.det_delta},
              {"top_right_norm", snap.top_right_norm},
              {"adjoint_backward", snap.adjoint.backward()},
              {"psi_complement_norm", c.frame->psi_complement_norm(c.prob.family, c.h_ref)}};
}

Json run_malkin(Context& c, Json& verdicts) {
  c.bf = malkin_function(c.prob.sys, c.prob.family, *c.frame, c.prob.angular, c.bc);
  const MalkinValue v = eval_malkin_detail(c.prob.sys, c.prob.family, *c.frame, c.h_ref, c.bc.quad);
  QuadratureConfig doubled = c.bc.quad;
  doubled.panels *= 2;
  const Vec w = eval_malkin(c.prob.sys, c.prob.family, *c.frame, c.h_ref, doubled);
  const double diff = (v.value - w).lpNorm<Eigen::Infinity>();
  verdicts.push_back(verdict("malkin.panel_doubling", diff <= 2.0 * c.bc.quad.tol, diff,
                             2.0 * c.bc.quad.tol));
  return Json{{"h", vec_json(c.h_ref)},
              {"value", vec_json(v.value)},
              {"quad_error", v.quad_error},
              {"evaluations", v.evaluations},
              {"frame_valid", v.frame_valid}};
}

// Oracle zero set for the builtins, empty optional when not applicable.
std::optional<std::vector<Vec>> oracle_zeros(const Context& c) {
  const ProblemSpec& p = c.cfg.problem;
  if (p.unforced) return std::nullopt;
  if (p.builtin == "coupled") {
    const auto o = examples::oracle({p.k1, p.k2});
    if (o.non_isolated) return std::nullopt;
    return o.predicted_zeros;
  }
  const auto o = examples::planar_oracle(p.k1, p.eta);
  if (o.degenerate) return std::nullopt;
  std::vector<Vec> out;
  for (double t : o.predicted_zeros) out.push_back(Vec::Constant(1, t));
  return out;
}

double torus_distance(const Vec& a, const Vec& b) {
  Vec d = a - b;
  for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = std::remainder(d[i], kTwoPi);
  return d.norm();
}

Json run_zeros(Context& c, Json& verdicts) {
  c.zeros = find_zeros(*c.bf, c.region, c.bc);
  const ZeroSearch& zs = *c.zeros;
  Json list = Json::array();
  for (const ZeroRecord& z : zs.zeros)
    list.push_back(Json{{"location", vec_json(z.location)},
                        {"residual", z.residual},
                        {"jac_det", z.jac_det},
                        {"jac_det_sign", z.jac_det_sign},
                        {"isolated", z.isolated},
                        {"local_degree", z.local_degree}});
  std::string classification;
  if (zs.non_isolated)
    classification = "non-isolated zeros";
  else if (zs.zeros.empty())
    classification = "no bifurcating orbits predicted";
  else
    classification = std::to_string(zs.zeros.size()) + " bifurcating orbits predicted";
  if (zs.zeros.empty() && !zs.non_isolated)
    verdicts.push_back(verdict("zeros.grid_min_positive", zs.grid_min_without_zero > c.bc.zero_tol,
                               zs.grid_min_without_zero, c.bc.zero_tol));
  const bool full = c.region.lo.isZero() && (c.region.hi.array() == kTwoPi).all();
  if (const auto expect = oracle_zeros(c); expect && full) {
    const double tol = 1e-5;
    bool match = expect->size() == zs.zeros.size();
    double worst = 0.0;
    for (const Vec& e : *expect) {
      double best = 1e300;
      for (const ZeroRecord& z : zs.zeros) best = std::min(best, torus_distance(e, z.location));
      worst = std::max(worst, best);
    }
    if (!expect->empty()) match = match && worst <= tol;
    verdicts.push_back(verdict("zeros.match_closed_form", match, worst, tol));
  }
  return Json{{"region", {{"lo", vec_json(c.region.lo)}, {"hi", vec_json(c.region.hi)}}},
              {"grid_density", c.bc.grid_density},
              {"zeros", list},
              {"count", zs.zeros.size()},
              {"non_isolated", zs.non_isolated},
              {"non_isolated_reason", zs.non_isolated_reason},
              {"grid_min_without_zero", zs.grid_min_without_zero},
              {"candidate_cells", zs.candidate_cells},
              {"classification", classification}};
}

Json certificate_json(const DegreeCertificate& d) {
  return Json{{"lo", vec_json(d.region.lo)}, {"hi", vec_json(d.region.hi)},
              {"degree", d.degree},          {"boundary_min", d.boundary_min},
              {"samples", d.samples},        {"method", d.method}};
}

double spacing_to_others(const Context& c, std::size_t i) {
  double best = 1e300;
  const auto& zs = c.zeros->zeros;
  for (std::size_t j = 0; j < zs.size(); ++j)
    if (j != i)
      best = std::min(best, (zs[i].location - zs[j].location).cwiseAbs().unaryExpr([](double d) {
                               return std::min(d, kTwoPi - d);
                             }).maxCoeff());
  return best;
}

Json run_degree(Context& c, Json& verdicts) {
  Json local = Json::array();
  int sum = 0;
  for (std::size_t i = 0; i < c.zeros->zeros.size(); ++i) {
    const ZeroRecord& z = c.zeros->zeros[i];
    if (!z.isolated) continue;
    const double r = std::min(c.cfg.degree_radius, 0.45 * spacing_to_others(c, i));
    const DegreeCertificate d = brouwer_degree(*c.bf, Box::around(z.location, r), c.bc);
    Json entry = certificate_json(d);
    entry["zero_index"] = i;
    local.push_back(entry);
    sum += d.degree;
    if (z.jac_det_sign != 0)
      verdicts.push_back(verdict("degree.local_matches_jacobian_sign[" + std::to_string(i) + "]",
                                 d.degree == z.jac_det_sign, d.degree, 0.0));
  }
  Json region;
  try {
    const DegreeCertificate d = brouwer_degree(*c.bf, c.region, c.bc);
    region = certificate_json(d);
    if (!c.zeros->non_isolated && c.bf->k == 2)
      verdicts.push_back(verdict("degree.region_equals_local_sum", d.degree == sum, d.degree, 0.0));
  } catch (const BoundaryZero& e) {
    region = Json{{"undefined", e.what()}};
  }
  return Json{{"local", local}, {"region", region}};
}

Json run_dilation(Context& c, Json& verdicts) {
  Json list = Json::array();
  for (std::size_t i = 0; i < c.zeros->zeros.size(); ++i) {
    const ZeroRecord& z = c.zeros->zeros[i];
    if (!z.isolated) continue;
    const DilationEstimate d = dilation_estimate(*c.bf, z.location, c.cfg.dilation_radius,
                                                 c.cfg.dilation_pairs, c.cfg.seed + i);
    list.push_back(Json{{"zero_index", i},
                        {"center", vec_json(d.center)},
                        {"radius", d.radius},
                        {"l_lower", d.l_lower},
                        {"pairs", d.pairs},
                        {"arg_h1", vec_json(d.arg_h1)},
                        {"arg_h2", vec_json(d.arg_h2)}});
    if (z.jac_det_sign != 0)
      verdicts.push_back(verdict("dilation.positive[" + std::to_string(i) + "]", d.l_lower > 0.0,
                                 d.l_lower, 0.0));
  }
  return Json{{"estimates", list},
              {"uniqueness", "indicated, not proved: dilation and degree are sampled evidence"}};
}

Json run_shooting(Context& c, Json& verdicts) {
  Json list = Json::array();
  if (c.zeros->non_isolated) return Json{{"traces", list}, {"skipped", "zeros are not isolated"}};
  BifConfig loose = c.bc;
  loose.family_tol = 1e-5;
  loose.check_tol = 1e-4;
  for (std::size_t i = 0; i < c.zeros->zeros.size(); ++i) {
    const ZeroRecord& z = c.zeros->zeros[i];
    if (!z.isolated) continue;
    const ContinuationTrace t =
        continue_in_eps(c.prob.sys, c.prob.family, z.location, c.cfg.eps_ladder, c.sc, z);
    const std::string tag = "[" + std::to_string(i) + "]";
    Json orbits = Json::array();
    double worst = 0.0;
    for (const PeriodicOrbit& o : t.orbits) {
      worst = std::max(worst, o.residual);
      orbits.push_back(Json{{"eps", o.eps},
                            {"z", vec_json(o.z)},
                            {"residual", o.residual},
                            {"newton_iters", o.newton_iters}});
    }
    bool decreasing = true;
    for (std::size_t r = 1; r < t.distances.size(); ++r)
      decreasing = decreasing && t.distances[r] < t.distances[r - 1];
    verdicts.push_back(verdict("shooting.converged" + tag, t.converged, t.failed_rung, 0.0));
    verdicts.push_back(verdict("shooting.residual" + tag, t.converged && worst <= c.sc.shoot_tol,
                               worst, c.sc.shoot_tol));
    verdicts.push_back(verdict("shooting.distance_decreasing" + tag, t.converged && decreasing,
                               t.slope, 0.0));
    verdicts.push_back(verdict("shooting.anchor_match" + tag, t.converged && !t.anchor_mismatch,
                               t.converged ? (t.limit_estimate - t.anchor_z).norm() : -1.0,
                               c.sc.anchor_tol));
    Json entry{{"zero_index", i},
               {"anchor_h", vec_json(t.anchor_h)},
               {"eps_ladder", t.eps_ladder},
               {"orbits", orbits},
               {"distances", t.distances},
               {"slope", t.slope},
               {"converged", t.converged},
               {"failure", t.failure},
               {"anchor_mismatch", t.anchor_mismatch}};
    if (t.converged && !t.orbits.empty()) {
      try {
        const NecessaryCheck nc =
            necessary_condition_check(*c.bf, c.prob.family, t.limit_estimate, z.location, loose);
        entry["necessary_condition"] = Json{{"holds", nc.holds},
                                            {"value_norm", nc.value_norm},
                                            {"distance_to_family", nc.distance_to_family},
                                            {"check_tol", loose.check_tol},
                                            {"family_tol", loose.family_tol}};
        verdicts.push_back(
            verdict("shooting.necessary_condition" + tag, nc.holds, nc.value_norm, loose.check_tol));
      } catch (const NotOnFamily& e) {
        entry["necessary_condition"] = Json{{"error", e.what()}};
        verdicts.push_back(verdict("shooting.necessary_condition" + tag, false, -1.0,
                                   loose.family_tol));
      }
    }
    list.push_back(entry);
    c.traces.emplace_back(i, t);
  }
  return Json{{"traces", list}};
}

Json run_uniqueness(Context& c, Json& verdicts) {
  Json list = Json::array();
  for (const auto& [i, t] : c.traces) {
    for (const PeriodicOrbit& o : t.orbits) {
      const UniquenessReport u =
          local_uniqueness_probe(c.prob.sys, o.eps, o, c.cfg.uniqueness_radius,
                                 c.cfg.uniqueness_starts, c.sc, c.cfg.seed);
      list.push_back(Json{{"zero_index", i},
                          {"eps", o.eps},
                          {"unique", u.unique},
                          {"distinct", u.distinct.size()},
                          {"converged", u.converged},
                          {"starts", u.starts}});
      verdicts.push_back(verdict("uniqueness[" + std::to_string(i) + "][eps=" +
                                     format_double(o.eps) + "]",
                                 u.unique, static_cast<double>(u.distinct.size()), 0.0));
    }
  }
  return Json{{"probes", list}, {"radius", c.cfg.uniqueness_radius}};
}

}  // namespace

RunReport cmd_analyze(const JobConfig& config) {
  config.validate();
  Context c{config, make_problem(config.problem), {}, {}, {}, {}, {}, {}, {}, {}, {}, {}};
  c.region = config.region ? *config.region : default_region(c.prob);
  c.h_ref = config.h_ref ? *config.h_ref : c.region.center();
  c.lp.integrator.abs_tol = c.lp.integrator.rel_tol = config.tol.integrator;
  c.bc.quad.tol = config.tol.quad;
  c.bc.zero_tol = config.tol.zero;
  c.bc.check_tol = config.tol.check;
  c.bc.family_tol = config.tol.family;
  c.bc.grid_density = config.grid_density;
  c.sc.integrator = c.lp.integrator;
  c.sc.shoot_tol = config.tol.shoot;
  c.sc.anchor_tol = config.tol.anchor;

  RunReport rep;
  rep.body["config"] = config.to_json();
  rep.body["problem"] = Json{{"name", c.prob.name}, {"n", c.prob.sys.n}, {"k", c.prob.family.k},
                             {"warnings", c.prob.warnings}};
  rep.timing = Json::object();
  Json stages = Json::object();
  Json verdicts = Json::array();

  // Enabled stages pull in everything they depend on.
  const std::map<std::string, std::vector<std::string>> deps = {
      {"monodromy", {}},
      {"frame", {"monodromy"}},
      {"malkin", {"frame"}},
      {"zeros", {"malkin"}},
      {"degree", {"zeros"}},
      {"dilation", {"zeros"}},
      {"shooting", {"zeros"}},
      {"uniqueness", {"shooting"}}};
  std::set<std::string> needed;
  std::function<void(const std::string&)> pull = [&](const std::string& s) {
    if (!needed.insert(s).second) return;
    for (const std::string& d : deps.at(s)) pull(d);
  };
  for (const std::string& s : config.stages) pull(s);
  const std::set<std::string> requested(config.stages.begin(), config.stages.end());

  const std::map<std::string, std::function<Json(Context&, Json&)>> runners = {
      {"monodromy", run_monodromy}, {"frame", run_frame},       {"malkin", run_malkin},
      {"zeros", run_zeros},         {"degree", run_degree},     {"dilation", run_dilation},
      {"shooting", run_shooting},   {"uniqueness", run_uniqueness}};
  std::set<std::string> failed;
  bool stage_failure = false;
  for (const std::string& s : kStageOrder) {
    if (!needed.count(s)) continue;
    Json entry;
    entry["requested"] = requested.count(s) > 0;
    const auto blocker = std::find_if(deps.at(s).begin(), deps.at(s).end(),
                                      [&](const std::string& d) { return failed.count(d) > 0; });
    if (blocker != deps.at(s).end()) {
      entry["status"] = "skipped";
      entry["reason"] = "depends on failed stage '" + *blocker + "'";
      failed.insert(s);
      stages[s] = entry;
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      entry["result"] = runners.at(s)(c, verdicts);
      entry["status"] = "ok";
    } catch (const Error& e) {
      entry["status"] = "failed";
      entry["reason"] = e.what();
      failed.insert(s);
      stage_failure = true;
    }
    rep.timing[s] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    stages[s] = entry;
  }
  rep.body["stages"] = stages;
  rep.body["verdicts"] = verdicts;
  const bool all_pass = std::all_of(verdicts.begin(), verdicts.end(),
                                    [](const Json& v) { return v.at("pass").get<bool>(); });
  rep.exit_code = stage_failure || !all_pass ? 1 : 0;
  return rep;
}

std::string malkin_grid_csv(const JobConfig& config) {
  config.validate();
  const examples::Problem prob = make_problem(config.problem);
  const Box region = config.region ? *config.region : default_region(prob);
  const Vec h_ref = config.h_ref ? *config.h_ref : region.center();
  LinearPeriodicConfig lp;
  lp.integrator.abs_tol = lp.integrator.rel_tol = config.tol.integrator;
  BifConfig bc;
  bc.quad.tol = config.tol.quad;
  const ReductionFrame frame = build_frame(prob.sys, prob.family, h_ref, lp);
  const BifFunction bf = malkin_function(prob.sys, prob.family, frame, prob.angular, bc);

  const int k = prob.family.k;
  const int d = config.grid_density;
  long total = 1;
  for (int i = 0; i < k; ++i) total *= d;
  std::vector<Vec> points(static_cast<std::size_t>(total));
  for (long flat = 0; flat < total; ++flat) {
    Vec p(k);
    long rest = flat;
    for (int i = k - 1; i >= 0; --i) {
      p[i] = region.lo[i] + (region.hi[i] - region.lo[i]) * static_cast<double>(rest % d) / d;
      rest /= d;
    }
    points[static_cast<std::size_t>(flat)] = p;
  }
  std::vector<Vec> values(points.size());
  parallel_for(points.size(), [&](std::size_t i) { values[i] = bf(points[i]); });

  static const char* kNames[] = {"theta", "eta"};
  std::ostringstream out;
  for (int i = 0; i < k; ++i) out << (i ? "," : "") << (k <= 2 ? kNames[i] : "h" + std::to_string(i + 1));
  for (int i = 0; i < k; ++i) out << ",M" << i + 1;
  out << '\n';
  for (std::size_t r = 0; r < points.size(); ++r) {
    for (int i = 0; i < k; ++i) out << (i ? "," : "") << format_double(points[r][i]);
    for (int i = 0; i < k; ++i) out << ',' << format_double(values[r][i]);
    out << '\n';
  }
  return out.str();
}

void cmd_malkin_grid(const JobConfig& config, const std::string& path) {
  write_text(path, malkin_grid_csv(config));
}

std::vector<SweepRow> cmd_sweep(const JobConfig& base, const std::vector<double>& k1s,
                                const std::vector<double>& k2s) {
  std::vector<SweepRow> rows;
  for (double k1 : k1s) {
    for (double k2 : k2s) {
      JobConfig cfg = base;
      cfg.problem.builtin = "coupled";
      cfg.problem.k1 = k1;
      cfg.problem.k2 = k2;
      cfg.problem.unforced = false;
      cfg.region.reset();
      cfg.h_ref.reset();
      cfg.validate();
      const examples::Problem prob = make_problem(cfg.problem);
      const Box region = default_region(prob);
      LinearPeriodicConfig lp;
      lp.integrator.abs_tol = lp.integrator.rel_tol = cfg.tol.integrator;
      BifConfig bc;
      bc.quad.tol = cfg.tol.quad;
      bc.zero_tol = cfg.tol.zero;
      bc.grid_density = cfg.grid_density;
      const ReductionFrame frame = build_frame(prob.sys, prob.family, region.center(), lp);
      const BifFunction bf = malkin_function(prob.sys, prob.family, frame, prob.angular, bc);
      const ZeroSearch zs = find_zeros(bf, region, bc);
      SweepRow row{k1, k2, zs.zeros.size(), zs.non_isolated, 0, zs.grid_min_without_zero};
      for (const ZeroRecord& z : zs.zeros) row.degree_sum += z.isolated ? z.local_degree : 0;
      rows.push_back(row);
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "k1,k2,zeros,non_isolated,degree_sum,grid_min_without_zero\n";
  for (const SweepRow& r : rows)
    out << format_double(r.k1) << ',' << format_double(r.k2) << ',' << r.zeros << ','
        << (r.non_isolated ? 1 : 0) << ',' << r.degree_sum << ',' << format_double(r.grid_min)
        << '\n';
  return out.str();
}

}  // namespace malkin::pipeline
