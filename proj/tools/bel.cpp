#include <chrono>
#include <cstdio>
#include <ctime>

#include <CLI11.hpp>

#include "bel/suite.hpp"

namespace {

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void print_catalog() {
  std::puts(
      "catalog manifolds (numbers in parentheses are defaults):\n"
      "  flat_torus       m in {1,2,3}; side (1.0); axes periodic; coords x,y,z\n"
      "                   distance: lattice minimum; injectivity bound side/2\n"
      "  sphere_band      m in {2,3}; radius (1.0); theta_min (0.3)\n"
      "                   m=2: g = r^2 (dtheta^2 + sin^2 theta dphi^2),\n"
      "                        theta in [theta_min, pi - theta_min] (neumann), phi periodic\n"
      "                   m=3: Hopf chart, theta in [theta_min, pi/2 - theta_min],\n"
      "                        phi and psi periodic\n"
      "  hyperbolic_disk  m = 2; disk_box (0.55): chart [-c, c]^2, dirichlet;\n"
      "                   g = 4 (dx^2 + dy^2)/(1 - |x|^2)^2, curvature -1\n"
      "  cigar            m = 2; box (4.0): chart [-c, c]^2, dirichlet;\n"
      "                   g = (dx^2 + dy^2)/(1 + x^2 + y^2); scalar curvature\n"
      "                   4/(1 + x^2 + y^2); distance exact from the origin\n"
      "\n"
      "per-axis boundary kinds can be overridden with \"bc\": [..] in the manifold\n"
      "spec (periodic | dirichlet | neumann).");
}

int run_filtered(bel::RunConfig cfg, const std::string& keep_type,
                 const std::string& default_export) {
  std::vector<bel::Json> kept;
  for (auto& c : cfg.checks)
    if (c.value("type", "") == keep_type) {
      bel::Json cc = c;
      if (!cc.contains("export")) cc["export"] = default_export;
      if (keep_type == "heat_run" && !cc.contains("export_all")) cc["export_all"] = true;
      kept.push_back(cc);
    }
  if (kept.empty()) {
    std::fprintf(stderr, "config contains no '%s' checks\n", keep_type.c_str());
    return 2;
  }
  cfg.checks = std::move(kept);
  bel::SuiteResult res = bel::run_suite(cfg);
  std::fputs(res.summary.c_str(), stdout);
  if (!cfg.out_dir.empty()) bel::write_suite_files(res, cfg.out_dir, now_iso8601());
  return res.exit_status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bel: numerical checks for Bakry-Emery curvature, weighted heat flows and\n"
               "their gradient/Harnack/Hessian estimates on catalog manifolds"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  double slack_scale = 1.0;
  bool parallel = false;
  int levels = 3;

  auto add_common = [&](CLI::App* sub, bool need_config) {
    if (need_config)
      sub->add_option("--config", config_path, "run configuration (.json/.yaml)")->required();
    sub->add_option("--out", out_dir, "output directory for reports and exports");
    sub->add_option("--slack-scale", slack_scale, "scales every c_slack tolerance");
    sub->add_flag("--parallel", parallel, "run checks on worker threads");
  };

  CLI::App* cat = app.add_subcommand("catalog", "list catalog manifolds and parameters");
  CLI::App* chk = app.add_subcommand("check", "run a configured check suite");
  add_common(chk, true);
  CLI::App* cvg = app.add_subcommand("converge", "convergence study over grid refinements");
  add_common(cvg, true);
  cvg->add_option("--levels", levels, "number of refinement levels (>= 2)");
  CLI::App* het = app.add_subcommand("heat", "single weighted-heat run with snapshot export");
  add_common(het, true);
  CLI::App* kil = app.add_subcommand("killing", "vector-field flow run with energy export");
  add_common(kil, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cat->parsed()) {
      print_catalog();
      return 0;
    }
    bel::RunConfig cfg = bel::load_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    cfg.slack_scale *= slack_scale;
    cfg.parallel = cfg.parallel || parallel;

    if (chk->parsed()) {
      bel::SuiteResult res = bel::run_suite(cfg);
      std::fputs(res.summary.c_str(), stdout);
      if (!cfg.out_dir.empty()) bel::write_suite_files(res, cfg.out_dir, now_iso8601());
      return res.exit_status;
    }
    if (cvg->parsed()) {
      bel::SuiteResult res = bel::convergence_study(cfg, levels);
      std::fputs(res.summary.c_str(), stdout);
      if (!cfg.out_dir.empty()) bel::write_suite_files(res, cfg.out_dir, now_iso8601());
      return res.exit_status;
    }
    if (het->parsed()) return run_filtered(cfg, "heat_run", "u");
    if (kil->parsed()) return run_filtered(cfg, "killing_flow", "energy.txt");
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
