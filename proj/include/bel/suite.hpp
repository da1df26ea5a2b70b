#pragma once

#include <functional>
#include <future>
#include <sstream>

#include "bel/comparison.hpp"
#include "bel/config.hpp"
#include "bel/killing.hpp"

namespace bel {

struct CheckOutcome {
  std::string id;
  bool errored = false;
  bool failed = false;
  std::string message;
  std::vector<Json> records;
  std::vector<std::pair<std::string, std::string>> files;
};

struct SuiteResult {
  int exit_status = 0;
  std::vector<Json> records;
  std::string summary;
  std::vector<std::pair<std::string, std::string>> files;
};

namespace suite_detail {

inline Expr expr_from(const Json& spec, const char* key, const char* dflt) {
  return Expr::parse(spec.value(key, std::string(dflt)));
}

inline Expr u0_from(const Json& spec, const CatalogSpec& ms, std::uint64_t seed,
                    const char* key = "u0") {
  const std::string text = spec.value(key, std::string("corpus"));
  if (text == "corpus") {
    Chart ch = build_manifold(ms);
    return corpus_expr(ch, seed);
  }
  return Expr::parse(text);
}

inline CatalogSpec manifold_of(const RunConfig& cfg, const Json& spec) {
  return spec.contains("manifold") ? catalog_spec_from_json(spec.at("manifold"))
                                   : cfg.manifold;
}

inline SetupSpec setup_of(const RunConfig& cfg, const Json& spec) {
  return spec.contains("setup") ? setup_spec_from_json(spec.at("setup")) : cfg.setup;
}

inline RunRecipe recipe_of(const RunConfig& cfg, const Json& spec) {
  RunRecipe rr;
  rr.manifold = manifold_of(cfg, spec);
  rr.setup = setup_of(cfg, spec);
  const Json run = spec.value("run", Json::object());
  rr.u0 = u0_from(run, rr.manifold, cfg.seed);
  rr.params.T = run.value("T", 1.0);
  rr.params.dt = run.value("dt", 0.0);
  rr.params.a = run.value("a", 0.0);
  rr.params.q = Expr::parse(run.value("q", std::string("0")));
  rr.params.snapshots = run.value("snapshots", 65);
  rr.params.cfl_factor = run.value("cfl_factor", 0.4);
  return rr;
}

inline std::array<double, 3> point_of(const Json& spec, const char* key,
                                      std::array<double, 3> dflt = {0, 0, 0}) {
  if (!spec.contains(key)) return dflt;
  std::array<double, 3> x{0, 0, 0};
  int i = 0;
  for (auto& v : spec.at(key)) {
    if (i < 3) x[i] = v.get<double>();
    ++i;
  }
  return x;
}

inline GridTensor solve_elliptic_u(const Chart& ch, const Setup& setup, const Json& spec,
                                   std::uint64_t seed, double* residual_out) {
  EllipticOpts opts;
  opts.tol_ell = spec.value("tol_ell", 1e-8);
  opts.max_steps = spec.value("max_steps", (long)1000000);
  GridTensor u0(ch, 0);
  if (spec.contains("boundary_u") || spec.contains("u0")) {
    const std::string key = spec.contains("boundary_u") ? "boundary_u" : "u0";
    u0 = sample_expr(ch, Expr::parse(spec.at(key).get<std::string>()));
  } else {
    u0 = sample_expr(ch, corpus_expr(ch, seed));
  }
  EllipticResult r = solve_v_harmonic(ch, setup, u0, opts);
  if (residual_out) *residual_out = r.residual;
  return std::move(r.u);
}

}  // namespace suite_detail

// One estimate-style record from a margin level function plus the
// refinement protocol.
inline CheckOutcome outcome_from_estimate(const std::string& id, double c_slack,
                                          const std::function<LevelMargin(int)>& fn) {
  EstimateReport rep = estimate_with_refinement(id, c_slack, fn);
  CheckOutcome out;
  out.id = id;
  out.records.push_back(to_json(rep));
  out.failed = rep.verdict == "violated";
  out.message = rep.verdict;
  return out;
}

inline CheckOutcome outcome_from_residuals(const std::string& id,
                                           const std::vector<ResidualReport>& reps) {
  CheckOutcome out;
  out.id = id;
  bool ok = true;
  for (auto& r : reps) {
    out.records.push_back(to_json(r));
    ok = ok && r.pass;
  }
  out.failed = !ok;
  out.message = ok ? "pass" : "order-or-slack failure";
  return out;
}

// Builds the per-resolution margin evaluator for each estimate-type check;
// shared by run_suite (refinement verdicts) and convergence_study.
inline std::function<LevelMargin(int)> make_level_fn(const RunConfig& cfg, const Json& spec,
                                                     const std::string& type) {
  using namespace suite_detail;
  const CatalogSpec ms = manifold_of(cfg, spec);
  const SetupSpec ss = setup_of(cfg, spec);
  const std::uint64_t seed = cfg.seed;

  if (type == "laplacian_comparison") {
    const auto p0 = point_of(spec, "p0");
    const double r_lo = spec.at("r_lo").get<double>();
    const double r_hi = spec.at("r_hi").get<double>();
    return [=](int level) {
      auto ch = build_level(ms, level);
      Setup setup = ss.build(*ch);
      ComparisonResult cr = laplacian_comparison_check(*ch, setup, p0.data(), r_lo, r_hi);
      LevelMargin lm;
      lm.h = ch->hmax();
      lm.margin = cr.margin_theta;
      lm.scale = 1.0 + std::fabs(cr.k_signed);
      lm.params["K_signed"] = cr.k_signed;
      lm.params["n"] = setup.n;
      lm.params["worst_d"] = cr.worst_d;
      lm.params["checked_points"] = double(cr.checked_points);
      if (std::isfinite(cr.margin_linear)) lm.params["margin_eq3.5"] = cr.margin_linear;
      if (std::isfinite(cr.margin_dd)) lm.params["margin_eq3.6"] = cr.margin_dd;
      lm.params["drift_identity"] = cr.drift_identity;
      return lm;
    };
  }
  if (type == "li_yau") {
    LiYauOptions opt;
    const std::string variant = spec.value("variant", std::string("corollary"));
    opt.variant = variant == "compact" ? LiYauVariant::compact
                  : variant == "local" ? LiYauVariant::local
                                       : LiYauVariant::corollary;
    opt.alpha = spec.value("alpha", 2.0);
    opt.eps = spec.value("eps", 0.5);
    opt.t_min = spec.value("t_min", 0.0);
    opt.x0 = point_of(spec, "x0");
    opt.R = spec.value("R", 0.0);
    const RunRecipe rr = recipe_of(cfg, spec);
    return [=](int level) {
      BuiltRun br = make_run(rr, level);
      return check_li_yau_level(*br.chart, br.setup, br.run, rr.params.q, opt);
    };
  }
  if (type == "hamilton") {
    const std::string variant = spec.value("variant", std::string("sharp"));
    if (variant == "liouville") {
      return [=](int level) {
        auto ch = build_level(ms, level);
        Setup setup = ss.build(*ch);
        double resid = 0.0;
        GridTensor u = solve_elliptic_u(*ch, setup, spec, seed, &resid);
        LevelMargin lm = check_hamilton_liouville_level(*ch, setup, u);
        lm.params["solver_residual"] = resid;
        return lm;
      };
    }
    const HamiltonVariant hv = variant == "weak"      ? HamiltonVariant::weak
                               : variant == "prop511" ? HamiltonVariant::prop511
                                                      : HamiltonVariant::sharp;
    const double a_param = spec.value("a_param", 3.0);
    const double t_min = spec.value("t_min", 0.0);
    const RunRecipe rr = recipe_of(cfg, spec);
    const double A_in = spec.contains("A") && spec.at("A").is_number()
                            ? spec.at("A").get<double>()
                            : 0.0;
    return [=](int level) {
      BuiltRun br = make_run(rr, level);
      const double A = A_in > 0.0 ? A_in : br.run.sup_u;
      return check_hamilton_level(*br.chart, br.setup, br.run, hv, A, a_param, t_min);
    };
  }
  if (type == "hessian") {
    const RunRecipe rr = recipe_of(cfg, spec);
    const double t_min = spec.value("t_min", 0.0);
    const double A_in =
        spec.contains("A") && spec.at("A").is_number() ? spec.at("A").get<double>() : 0.0;
    return [=](int level) {
      BuiltRun br = make_run(rr, level);
      const double A = A_in > 0.0 ? A_in : br.run.sup_u;
      return check_hessian_global_level(*br.chart, br.setup, br.run, A, t_min);
    };
  }
  if (type == "cheng_yau") {
    const std::string mode = spec.value("mode", std::string("local"));
    const ChengYauMode cm = mode == "global_compact" ? ChengYauMode::global_compact
                            : mode == "harnack"      ? ChengYauMode::harnack
                                                     : ChengYauMode::local;
    const auto x0 = point_of(spec, "x0");
    const double r = spec.value("r", 0.0);
    return [=](int level) {
      auto ch = build_level(ms, level);
      Setup setup = ss.build(*ch);
      double resid = 0.0;
      GridTensor u = solve_elliptic_u(*ch, setup, spec, seed, &resid);
      LevelMargin lm = check_cheng_yau_level(*ch, setup, u, cm, x0.data(), r);
      lm.params["solver_residual"] = resid;
      return lm;
    };
  }
  if (type == "lemma_h") {
    const Expr F = suite_detail::expr_from(spec, "F", "0");
    const Expr G = suite_detail::expr_from(spec, "G", "1");
    const auto p0 = point_of(spec, "p0");
    const double r = spec.at("r").get<double>();
    return [=](int level) {
      auto ch = build_level(ms, level);
      Setup setup = ss.build(*ch);
      EllipticOpts opts;
      opts.tol_ell = spec.value("tol_ell", 1e-8);
      GridTensor u0 = sample_expr(*ch, u0_from(spec, ms, seed));
      EllipticResult res = solve_semilinear(*ch, setup, F, u0, opts);
      LevelMargin lm = check_lemma_h_level(*ch, setup, res.u, F, G, p0.data(), r);
      lm.params["solver_residual"] = res.residual;
      lm.params["Fprime_min"] = res.fprime_min;
      lm.params["Fprime_max"] = res.fprime_max;
      return lm;
    };
  }
  throw Error(Error::Kind::config, "no margin evaluator for check type '" + type + "'");
}

inline CheckOutcome run_check(const RunConfig& cfg, const Json& spec, int index) {
  using namespace suite_detail;
  const std::string type = spec.at("type").get<std::string>();
  const std::string id = spec.value("id", type + "#" + std::to_string(index));
  const double c_slack = 10.0 * cfg.slack_scale;
  CheckOutcome out;
  out.id = id;
  try {
    if (type == "bochner") {
      const CatalogSpec ms = manifold_of(cfg, spec);
      const Expr u = u0_from(spec, ms, cfg.seed, "u");
      ResidualReport rep = bochner_residual(ms, setup_of(cfg, spec), u,
                                            spec.value("levels", 2), c_slack);
      rep.id = id;
      return outcome_from_residuals(id, {rep});
    }
    if (type == "bochner_harmonic") {
      const CatalogSpec ms = manifold_of(cfg, spec);
      ResidualReport rep = bochner_harmonic_residual(
          ms, setup_of(cfg, spec), u0_from(spec, ms, cfg.seed),
          spec.value("levels", 2), c_slack, spec.value("tol_ell", 1e-8));
      rep.id = id;
      return outcome_from_residuals(id, {rep});
    }
    if (type == "parabolic_identity") {
      std::vector<ResidualReport> reps{parabolic_identity_residual(
          recipe_of(cfg, spec), spec.value("alpha", 2.0), spec.value("levels", 2), c_slack,
          spec.value("t_min", 0.0))};
      return outcome_from_residuals(id, reps);
    }
    if (type == "hessian_evolution") {
      auto reps = hessian_evolution_residual(recipe_of(cfg, spec), spec.value("levels", 2),
                                             c_slack, spec.value("t_min", 0.0));
      return outcome_from_residuals(id, reps);
    }
    if (type == "riccati") {
      const double n = spec.at("n").get<double>();
      const double r_max = spec.value("r_max", 3.2);
      const double dr = spec.value("dr", 1e-4);
      KSpec K = spec.at("K").is_number() ? KSpec::of(spec.at("K").get<double>())
                                         : KSpec::of(Expr::parse(spec.at("K").get<std::string>()));
      ThetaProfile prof = riccati_theta(n, K, r_max, dr);
      EstimateReport rep;
      rep.id = id;
      rep.params["n"] = n;
      rep.params["dr"] = dr;
      rep.params["delta_k"] = prof.exploded() ? prof.delta_k
                                              : std::numeric_limits<double>::quiet_NaN();
      if (K.constant) {
        double max_err = 0.0;
        const double r_hi = std::min(3.0, prof.exploded() ? 0.9 * prof.delta_k : r_max);
        for (std::size_t i = 0; i < prof.r.size(); ++i) {
          if (prof.r[i] < 0.1 || prof.r[i] > r_hi) continue;
          max_err = std::max(max_err,
                             std::fabs(prof.theta[i] - theta_closed_form(n, K.k0, prof.r[i])));
        }
        rep.params["max_closed_form_err"] = max_err;
        rep.worst_margin = 1e-8 - max_err;  // ODE accuracy contract
        rep.slack = 0.0;
        rep.verdict = max_err <= 1e-8 ? "holds" : "violated";
      } else {
        rep.verdict = "holds";
        rep.worst_margin = 0.0;
      }
      out.records.push_back(to_json(rep));
      out.failed = rep.verdict == "violated";
      out.message = rep.verdict;
      if (spec.contains("export")) {
        std::ostringstream os;
        prof.write_columns(os);
        out.files.emplace_back(spec.at("export").get<std::string>(), os.str());
      }
      return out;
    }
    if (type == "heat_run") {
      RunRecipe rr = recipe_of(cfg, spec);
      BuiltRun br = make_run(rr, 0);
      EstimateReport rep;
      rep.id = id;
      rep.params["dt"] = br.run.dt;
      rep.params["cfl_bound"] = br.run.cfl;
      rep.params["sup_u"] = br.run.sup_u;
      rep.params["weighted_mass_drift"] = br.run.weighted_mass_drift;
      double mn = std::numeric_limits<double>::infinity();
      for (auto& d : br.run.diag) mn = std::min(mn, d.min_u);
      rep.params["min_u"] = mn;
      rep.verdict = "holds";
      rep.worst_margin = 0.0;
      out.records.push_back(to_json(rep));
      const bool all = spec.value("export_all", false);
      const std::string base = spec.value("export", std::string());
      if (!base.empty()) {
        for (std::size_t k = 0; k < br.run.snaps.size(); ++k) {
          if (!all && k != 0 && k + 1 != br.run.snaps.size()) continue;
          std::ostringstream txt, bin;
          write_grid_text(txt, *br.chart, br.run.snaps[k]);
          write_raster(bin, br.run.snaps[k]);
          const std::string stem = base + "_" + std::to_string(k);
          out.files.emplace_back(stem + ".txt", txt.str());
          out.files.emplace_back(stem + ".raster", bin.str());
        }
      }
      out.message = "holds";
      return out;
    }
    if (type == "killing_flow") {
      const CatalogSpec ms = manifold_of(cfg, spec);
      auto ch = build_level(ms, 0);
      std::vector<Expr> x0c;
      for (auto& c : spec.at("X0")) x0c.push_back(Expr::parse(c.get<std::string>()));
      if (int(x0c.size()) != ch->m)
        throw Error(Error::Kind::config, "X0 needs one component per axis");
      GridTensor X0 = vector_field(*ch);
      for (int a = 0; a < ch->m; ++a) {
        GridTensor c = sample_expr(*ch, x0c[a]);
        for (long p = 0; p < ch->npts(); ++p) X0.at(p, a) = c.v[p];
      }
      KillingParams kp;
      kp.T = spec.value("T", 1.0);
      kp.dt = spec.value("dt", 0.0);
      kp.snapshots = spec.value("snapshots", 17);
      FlowTrace tr = run_killing_flow(*ch, X0, kp);
      GridTensor lie = lie_derivative_metric(*ch, tr.snaps.back());
      GridTensor lnorm = tensor_g_norm(lie);
      EstimateReport rep;
      rep.id = id;
      rep.params["T"] = kp.T;
      rep.params["dt"] = tr.dt;
      rep.params["energy_initial"] = tr.energy.front();
      rep.params["energy_final"] = tr.energy.back();
      rep.params["final_sup_lie"] = lnorm.max_abs();
      rep.worst_margin = -tr.max_energy_increase;
      rep.slack = 0.0;
      rep.verdict = tr.max_energy_increase <= 0.0 ? "holds" : "violated";
      out.records.push_back(to_json(rep));
      out.failed = rep.verdict == "violated";
      out.message = rep.verdict;
      if (spec.contains("export")) {
        std::vector<double> steps(tr.energy.size());
        for (std::size_t i = 0; i < steps.size(); ++i) steps[i] = double(i) * tr.dt;
        std::ostringstream os;
        write_columns(os, steps, tr.energy);
        out.files.emplace_back(spec.at("export").get<std::string>(), os.str());
      }
      return out;
    }
    if (type == "killing_criteria") {
      const CatalogSpec ms = manifold_of(cfg, spec);
      auto ch = build_level(ms, 0);
      std::vector<Expr> xc;
      for (auto& c : spec.at("X")) xc.push_back(Expr::parse(c.get<std::string>()));
      GridTensor X = vector_field(*ch);
      for (int a = 0; a < ch->m; ++a) {
        GridTensor c = sample_expr(*ch, xc[a]);
        for (long p = 0; p < ch->npts(); ++p) X.at(p, a) = c.v[p];
      }
      const KillingCriterion which =
          killing_criterion_from_string(spec.value("which", std::string("eq1_9")));
      GridTensor f(*ch, 0);
      if (spec.contains("f")) f = sample_expr(*ch, Expr::parse(spec.at("f").get<std::string>()));
      double sup = 0.0;
      killing_criteria_residual(*ch, X, which, &f, &sup);
      const double slk = slack(*ch, c_slack);
      const bool witness = spec.value("expect", std::string("killing")) == "witness";
      EstimateReport rep;
      rep.id = id;
      rep.params["sup_residual"] = sup;
      rep.slack = slk;
      rep.worst_margin = witness ? sup - 10.0 * slk : slk - sup;
      rep.verdict = rep.worst_margin >= 0.0 ? "holds" : "violated";
      out.records.push_back(to_json(rep));
      out.failed = rep.verdict == "violated";
      out.message = rep.verdict;
      return out;
    }
    if (type == "reduction") {
      const CatalogSpec ms = manifold_of(cfg, spec);
      auto ch = build_level(ms, 0);
      const Expr A = expr_from(spec, "A", "1");
      const Expr B = expr_from(spec, "B", "1");
      ReducedOperator red = reduce_diffusion_operator(*ch, A, B);
      GridTensor u = sample_expr(*ch, u0_from(spec, ms, cfg.seed, "u"));
      const double resid = reduced_operator_residual(*ch, A, B, red, u);
      const double slk = slack(*ch, c_slack);
      EstimateReport rep;
      rep.id = id;
      rep.params["residual"] = resid;
      rep.slack = slk;
      rep.worst_margin = slk - resid;
      rep.verdict = resid <= slk ? "holds" : "violated";
      out.records.push_back(to_json(rep));
      out.failed = rep.verdict == "violated";
      out.message = rep.verdict;
      return out;
    }
    if (type == "hessian" && spec.value("variant", std::string("global")) == "local") {
      const RunRecipe rr = recipe_of(cfg, spec);
      const auto x0 = point_of(spec, "x0");
      const double R = spec.at("R").get<double>();
      const double Tcube = spec.value("Tcube", rr.params.T / 2.0);
      const double A_in =
          spec.contains("A") && spec.at("A").is_number() ? spec.at("A").get<double>() : 0.0;
      HessianLocalResult lv[2];
      for (int l = 0; l < 2; ++l) {
        BuiltRun br = make_run(rr, l);
        const double A = A_in > 0.0 ? A_in : br.run.sup_u;
        lv[l] = check_hessian_local_level(*br.chart, br.setup, br.run, A, x0.data(), R, Tcube);
      }
      const double ratio = lv[1].c1_star > 0.0 ? lv[0].c1_star / lv[1].c1_star : 1.0;
      EstimateReport rep;
      rep.id = id;
      rep.params = lv[1].params;
      rep.params["C1_star_coarse"] = lv[0].c1_star;
      rep.params["C1_star_fine"] = lv[1].c1_star;
      rep.params["stability_ratio"] = ratio;
      rep.worst_margin = 0.2 - std::fabs(ratio - 1.0);
      rep.resolutions_checked = 2;
      rep.verdict = rep.worst_margin >= 0.0 ? "holds" : "violated";
      out.records.push_back(to_json(rep));
      out.failed = rep.verdict == "violated";
      out.message = rep.verdict;
      return out;
    }
    // estimate-type checks with the shared refinement protocol
    return outcome_from_estimate(id, c_slack, make_level_fn(cfg, spec, type));
  } catch (const Error& e) {
    out.errored = true;
    out.message = e.what();
    Json j;
    j["record"] = "error";
    j["v"] = 1;
    j["id"] = id;
    j["message"] = e.what();
    out.records.push_back(j);
    return out;
  } catch (const std::exception& e) {
    out.errored = true;
    out.message = e.what();
    Json j;
    j["record"] = "error";
    j["v"] = 1;
    j["id"] = id;
    j["message"] = e.what();
    out.records.push_back(j);
    return out;
  }
}

// Executes the declared checks in order (optionally each on its own thread,
// merged back deterministically), assembles the line-delimited report and a
// human-readable summary. Exit status: 0 clean, 1 violated, 2 errored.
inline SuiteResult run_suite(const RunConfig& cfg) {
  SuiteResult res;
  const int n = int(cfg.checks.size());
  std::vector<CheckOutcome> outcomes(n);
  if (cfg.parallel) {
    std::vector<std::future<CheckOutcome>> futs;
    futs.reserve(n);
    for (int i = 0; i < n; ++i)
      futs.push_back(std::async(std::launch::async,
                                [&cfg, i] { return run_check(cfg, cfg.checks[i], i); }));
    for (int i = 0; i < n; ++i) outcomes[i] = futs[i].get();
  } else {
    for (int i = 0; i < n; ++i) outcomes[i] = run_check(cfg, cfg.checks[i], i);
  }
  bool any_err = false, any_fail = false;
  std::ostringstream sum;
  for (int i = 0; i < n; ++i) {
    CheckOutcome& oc = outcomes[i];
    for (auto& r : oc.records) {
      Json j = r;
      j["check_index"] = i;
      j["check_id"] = oc.id;
      res.records.push_back(std::move(j));
    }
    for (auto& f : oc.files) res.files.push_back(std::move(f));
    any_err = any_err || oc.errored;
    any_fail = any_fail || oc.failed;
    sum << (oc.errored ? "[ERROR] " : oc.failed ? "[FAIL]  " : "[ok]    ") << oc.id << ": "
        << oc.message << "\n";
  }
  res.exit_status = any_err ? 2 : any_fail ? 1 : 0;
  sum << "status " << res.exit_status << "\n";
  res.summary = sum.str();
  return res;
}

// Writes report.jsonl (timestamps confined to the header line), summary.txt
// and any per-check exports into out_dir.
inline void write_suite_files(const SuiteResult& res, const std::string& out_dir,
                              const std::string& timestamp) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream os(fs::path(out_dir) / "report.jsonl", std::ios::binary);
    Json header;
    header["record"] = "header";
    header["schema"] = "bel-report";
    header["v"] = 1;
    header["generated"] = timestamp;
    os << header.dump() << "\n";
    for (auto& r : res.records) os << r.dump() << "\n";
  }
  {
    std::ofstream os(fs::path(out_dir) / "summary.txt", std::ios::binary);
    os << res.summary;
  }
  for (auto& f : res.files) {
    std::ofstream os(fs::path(out_dir) / f.first, std::ios::binary);
    os << f.second;
  }
}

// Reruns a check across refinements and reports (h, discrepancy, order) rows;
// the measured constant feeds c_slack calibration.
inline CheckOutcome run_convergence(const RunConfig& cfg, const Json& spec, int index,
                                    int levels) {
  const std::string type = spec.at("type").get<std::string>();
  const std::string id = spec.value("id", type + "#" + std::to_string(index));
  const double c_slack = 10.0 * cfg.slack_scale;
  CheckOutcome out;
  out.id = id;
  try {
    std::vector<double> hs, vals;
    if (type == "bochner" || type == "bochner_harmonic" || type == "parabolic_identity" ||
        type == "hessian_evolution") {
      Json spec2 = spec;
      spec2["levels"] = levels;
      CheckOutcome inner = run_check(cfg, spec2, index);
      if (inner.errored) return inner;
      ResidualReport rep = residual_from_json(inner.records.at(0));
      for (auto& l : rep.levels) {
        hs.push_back(l.h);
        vals.push_back(l.sup);
      }
    } else if (type == "riccati") {
      for (int l = 0; l < levels; ++l) {
        Json spec2 = spec;
        const double dr = spec.value("dr", 1e-4) / double(1 << l);
        spec2["dr"] = dr;
        CheckOutcome inner = run_check(cfg, spec2, index);
        if (inner.errored) return inner;
        EstimateReport rep = estimate_from_json(inner.records.at(0));
        hs.push_back(dr);
        vals.push_back(rep.params.count("max_closed_form_err")
                           ? rep.params.at("max_closed_form_err")
                           : 0.0);
      }
    } else {
      auto fn = make_level_fn(cfg, spec, type);
      for (int l = 0; l < levels; ++l) {
        LevelMargin lm = fn(l);
        hs.push_back(lm.h);
        vals.push_back(std::max(0.0, -lm.margin));
      }
    }
    Json j;
    j["record"] = "convergence";
    j["v"] = 1;
    j["id"] = id;
    j["h"] = hs;
    j["value"] = vals;
    Json orders = Json::array();
    for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
      if (vals[i] <= 0.0 && vals[i + 1] <= 0.0)
        orders.push_back("exact");
      else
        orders.push_back(num_or_null(observed_order(vals[i], vals[i + 1])));
    }
    j["orders"] = orders;
    const double h_fin = hs.back(), v_fin = vals.back();
    j["suggested_c_slack"] =
        v_fin > 0.0 ? num_or_null(2.0 * v_fin / sqr(h_fin)) : Json(nullptr);
    (void)c_slack;
    out.records.push_back(j);
    out.message = "convergence table";
    return out;
  } catch (const std::exception& e) {
    out.errored = true;
    out.message = e.what();
    Json j;
    j["record"] = "error";
    j["v"] = 1;
    j["id"] = id;
    j["message"] = e.what();
    out.records.push_back(j);
    return out;
  }
}

inline SuiteResult convergence_study(const RunConfig& cfg, int levels) {
  SuiteResult res;
  if (levels < 2) throw Error(Error::Kind::config, "convergence study needs levels >= 2");
  bool any_err = false;
  std::ostringstream sum;
  for (int i = 0; i < int(cfg.checks.size()); ++i) {
    CheckOutcome oc = run_convergence(cfg, cfg.checks[i], i, levels);
    for (auto& r : oc.records) {
      Json j = r;
      j["check_index"] = i;
      j["check_id"] = oc.id;
      res.records.push_back(std::move(j));
    }
    any_err = any_err || oc.errored;
    sum << (oc.errored ? "[ERROR] " : "[ok]    ") << oc.id << ": " << oc.message << "\n";
  }
  res.exit_status = any_err ? 2 : 0;
  sum << "status " << res.exit_status << "\n";
  res.summary = sum.str();
  return res;
}

}  // namespace bel
