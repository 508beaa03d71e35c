#pragma once

// Experiment runner: a JSON config names a coefficient pack, a grid, a batch
// size and a study kind; the runner dispatches into the library, writes one
// CSV table plus a structured JSON report and a manifest, and maps verdicts
// to exit codes (0 pass, 2 bound-violation flags; errors raise and the CLI
// maps them to 1).

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fbsde/conditional.hpp"
#include "fbsde/coupling_variance.hpp"
#include "fbsde/decoupling_field.hpp"
#include "fbsde/diagnostics.hpp"
#include "fbsde/report_io.hpp"
#include "fbsde/solver.hpp"

namespace fbsde {

// --- config pieces -------------------------------------------------------------

inline FbsdeSpec spec_from_json(const nlohmann::json& j) {
  const std::string name = j.is_string() ? j.get<std::string>()
                                         : j.value("name", "linear_martingale");
  const nlohmann::json params =
      j.is_object() ? j.value("params", nlohmann::json::object())
                    : nlohmann::json::object();
  const double x0 = params.value("x0", 0.0);

  if (name == "linear_martingale") return specs::linear_martingale(x0);
  if (name == "constant_terminal") {
    return specs::constant_terminal(params.value("kappa", 1.0), x0);
  }
  if (name == "pure_forward") {
    return specs::pure_forward(params.value("sigma0", 1.0), x0);
  }
  if (name == "scaled_diffusion") {
    return specs::scaled_diffusion(params.value("beta", 0.3), x0);
  }
  if (name == "random_generator") {
    return specs::random_generator(params.value("gamma", 0.5), x0);
  }
  if (name == "constant_generator") {
    return specs::constant_generator(params.value("rate", 1.0), x0);
  }
  if (name == "coupled_linear") {
    return specs::coupled_linear(
        params.value("by", 0.3), params.value("s0", 1.0),
        params.value("sy", 0.2), params.value("az", 0.3),
        params.value("fx", 0.4), params.value("gs", 0.5), x0);
  }
  if (name == "trig_bounded") return specs::trig_bounded(x0);
  throw ConfigError("spec_from_json: unknown coefficient pack '" + name + "'");
}

inline CouplingFunction phi_from_json(const nlohmann::json& j) {
  const std::string kind = j.value("kind", "constant");
  if (kind == "constant") return CouplingFunction::constant(j.value("r", 0.5));
  if (kind == "indicator") {
    return CouplingFunction::indicator(j.at("a").get<double>(),
                                       j.at("c").get<double>());
  }
  if (kind == "tabulated") {
    return CouplingFunction::tabulated(
        j.at("values").get<std::vector<double>>());
  }
  throw ConfigError("phi_from_json: unknown profile kind '" + kind + "'");
}

inline std::string phi_label(const nlohmann::json& j) {
  const std::string kind = j.value("kind", "constant");
  if (kind == "constant") return "r=" + format_double(j.value("r", 0.5));
  if (kind == "indicator") {
    return "1(" + format_double(j.at("a").get<double>()) + "," +
           format_double(j.at("c").get<double>()) + "]";
  }
  return "tabulated";
}

inline ScalarFunctional xi_from_json(const nlohmann::json& j) {
  const std::string name = j.is_string() ? j.get<std::string>() : "terminal_value";
  if (name == "terminal_value") {
    return {[](const PathValues& path) {
      return path.value(path.grid().n_steps(), 0);
    }};
  }
  if (name == "terminal_square") {
    return {[](const PathValues& path) {
      const double w = path.value(path.grid().n_steps(), 0);
      return w * w;
    }};
  }
  if (name == "constant") {
    return {[](const PathValues&) { return 1.0; }};
  }
  throw ConfigError("xi_from_json: unknown functional '" + name + "'");
}

inline ProcessFunctional driver_from_json(const std::string& name) {
  if (name == "brownian") {
    return {[](const PathValues& path, std::size_t node) {
              return path.value(node, 0);
            },
            Adaptedness::kAdapted};
  }
  if (name == "time") {
    return {[](const PathValues& path, std::size_t node) {
              return path.grid().node(node);
            },
            Adaptedness::kPredictable};
  }
  throw ConfigError("driver_from_json: unknown driver '" + name + "'");
}

struct RunSetup {
  TimeGrid grid;
  std::size_t dim = 1;
  std::size_t n_paths = 10000;
  std::uint64_t seed = 42;
  std::uint64_t stream_id = 0;
  PicardConfig picard;
  RegressionConfig regression;
  std::filesystem::path out_dir;
};

inline RunSetup setup_from_json(const nlohmann::json& cfg) {
  const auto g = cfg.value("grid", nlohmann::json::object());
  RunSetup setup{TimeGrid(g.value("t_start", 0.0), g.value("t_end", 1.0),
                          g.value("n_steps", std::size_t{64})),
                 cfg.value("dim", std::size_t{1}),
                 cfg.value("n_paths", std::size_t{10000}),
                 cfg.value("seed", std::uint64_t{42}),
                 cfg.value("stream_id", std::uint64_t{0}),
                 {},
                 {},
                 cfg.value("out", std::string{"reports"})};
  const auto s = cfg.value("solver", nlohmann::json::object());
  setup.picard.max_iter = s.value("max_iter", 50);
  setup.picard.tol = s.value("tol", 1e-6);
  setup.regression.degree = s.value("degree", 2);
  setup.regression.include_y = s.value("include_y", false);
  setup.regression.strict_rank = s.value("strict_rank", false);
  return setup;
}

struct ExperimentOutcome {
  int exit_code = 0;
  std::vector<std::string> outputs;
  nlohmann::json summary;
};

// --- individual experiments ------------------------------------------------------

namespace experiments {

inline std::string est_cell(const Estimate& e) { return format_double(e.mean); }

inline ExperimentOutcome run_paths(const nlohmann::json& cfg,
                                   const RunSetup& setup) {
  const auto bundle =
      sample_paths(setup.grid, setup.dim, setup.n_paths, setup.seed,
                   setup.stream_id);
  nlohmann::json profiles = cfg.value(
      "phi_family", nlohmann::json::array({{{"kind", "constant"}, {"r", 0.25}},
                                           {{"kind", "constant"}, {"r", 0.6}},
                                           {{"kind", "constant"}, {"r", 0.9}}}));

  CsvWriter csv({"profile", "var_w", "var_wphi", "cov", "corr"});
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& pj : profiles) {
    const auto phi = phi_from_json(pj);
    const auto coupled = build_coupled_increments(bundle, phi);
    std::vector<double> wT(setup.n_paths, 0.0), wphiT(setup.n_paths, 0.0);
    for (std::size_t p = 0; p < setup.n_paths; ++p) {
      for (std::size_t k = 0; k < setup.grid.n_steps(); ++k) {
        wT[p] += bundle.increments_w[bundle.index(p, k, 0)];
        wphiT[p] += coupled[bundle.index(p, k, 0)];
      }
    }
    const double var_w = sample_variance(wT);
    const double var_c = sample_variance(wphiT);
    const double cov = sample_covariance(wT, wphiT);
    const double corr = sample_correlation(wT, wphiT);
    csv.add_row({phi_label(pj), format_double(var_w), format_double(var_c),
                 format_double(cov), format_double(corr)});
    rows.push_back({{"profile", phi_label(pj)},
                    {"var_w", var_w},
                    {"var_wphi", var_c},
                    {"cov", cov},
                    {"corr", corr}});
  }
  ExperimentOutcome out;
  out.summary = {{"kind", "paths"}, {"rows", rows}};
  const auto csv_path = setup.out_dir / "paths.csv";
  csv.write(csv_path);
  out.outputs.push_back(csv_path.string());
  return out;
}

inline ExperimentOutcome run_solve(const nlohmann::json& cfg,
                                   const RunSetup& setup) {
  const auto spec = spec_from_json(cfg.value("spec", nlohmann::json("linear_martingale")));
  const auto bundle = sample_paths(setup.grid, spec.dim_w, setup.n_paths,
                                   setup.seed, setup.stream_id);
  const auto driving = PathEnsemble::primary(bundle);

  const std::size_t n_partition = cfg.value("partition", std::size_t{1});
  SolutionTriple sol;
  nlohmann::json field_json;
  std::vector<double> residuals;
  if (n_partition <= 1) {
    sol = solve_small_interval(spec, driving, NodeRange::full(setup.grid),
                               setup.picard, setup.regression);
  } else {
    const auto partition = Partition::uniform(setup.grid, n_partition);
    FieldConfig fcfg;
    fcfg.degree = cfg.value("field_degree", 3);
    const auto model = build_field(spec, driving, partition, fcfg,
                                   setup.picard, setup.regression);
    auto long_result = solve_long_horizon(spec, driving, partition, model,
                                          setup.picard, setup.regression);
    sol = std::move(long_result.solution);
    residuals = std::move(long_result.node_residuals);
    field_json = model.to_json();
  }

  CsvWriter csv({"node", "time", "mean_x", "var_x", "mean_y", "var_y",
                 "mean_z_next_cell"});
  const std::size_t n_nodes = sol.n_local_nodes();
  std::vector<double> xs(setup.n_paths), ys(setup.n_paths);
  for (std::size_t k = 0; k < n_nodes; ++k) {
    for (std::size_t p = 0; p < setup.n_paths; ++p) {
      xs[p] = sol.x_at(p, k);
      ys[p] = sol.y_at(p, k);
    }
    double mean_z = 0.0;
    if (k < sol.range.n_cells()) {
      for (std::size_t p = 0; p < setup.n_paths; ++p) mean_z += sol.z_at(p, k);
      mean_z /= static_cast<double>(setup.n_paths);
    }
    const auto ex = mean_se(xs);
    const auto ey = mean_se(ys);
    csv.add_row({std::to_string(k), format_double(setup.grid.node(k)),
                 format_double(ex.mean), format_double(sample_variance(xs)),
                 format_double(ey.mean), format_double(sample_variance(ys)),
                 format_double(mean_z)});
  }

  const auto apriori =
      apriori_check(spec, sol, PathEnsemble::primary(bundle), 2.0);
  ExperimentOutcome out;
  out.summary = {{"kind", "solve"},
                 {"theta_norm_2", theta_norm(sol, 2.0)},
                 {"picard_residuals", sol.picard_residuals},
                 {"apriori_ratio", apriori.ratio},
                 {"apriori_potential", apriori.driver_potential},
                 {"decoupling_residuals", residuals}};
  if (!field_json.is_null()) {
    const auto field_path = setup.out_dir / "field_model.json";
    write_json(field_json, field_path);
    out.outputs.push_back(field_path.string());
  }
  const auto csv_path = setup.out_dir / "solve.csv";
  csv.write(csv_path);
  out.outputs.push_back(csv_path.string());
  return out;
}

inline ExperimentOutcome run_cv(const nlohmann::json& cfg,
                                const RunSetup& setup) {
  const auto spec = spec_from_json(cfg.value("spec", nlohmann::json("linear_martingale")));
  const auto bundle = sample_paths(setup.grid, spec.dim_w, setup.n_paths,
                                   setup.seed, setup.stream_id);
  const auto base = solve_small_interval(spec, PathEnsemble::primary(bundle),
                                         NodeRange::full(setup.grid),
                                         setup.picard, setup.regression);

  nlohmann::json profiles = cfg.value(
      "phi_family",
      nlohmann::json::array({{{"kind", "indicator"}, {"a", 0.0}, {"c", 0.25}},
                             {{"kind", "indicator"}, {"a", 0.25}, {"c", 0.5}},
                             {{"kind", "indicator"}, {"a", 0.5}, {"c", 0.75}},
                             {{"kind", "indicator"}, {"a", 0.75}, {"c", 1.0}}}));
  const auto p_list = cfg.value("p_list", std::vector<double>{2.0});
  const double max_spread =
      cfg.value("tolerances", nlohmann::json::object()).value("bound_spread", 4.0);

  CsvWriter csv({"profile", "t1", "t2", "p", "sup_x_gap", "sup_x_gap_se",
                 "sup_y_gap", "sup_y_gap_se", "z_gap", "z_gap_se",
                 "phi_z_energy", "phi_z_energy_se", "cv", "cv_se",
                 "initial_gap", "terminal_gap", "u_potential", "s_profile",
                 "i_pb", "i_pf", "i_pmu", "i_pT", "bound_ratio", "vacuous"});
  nlohmann::json rows = nlohmann::json::array();

  int exit_code = 0;
  nlohmann::json studies = nlohmann::json::array();
  for (double p : p_list) {
    std::vector<VarianceReport> reports;
    for (const auto& pj : profiles) {
      const auto phi = phi_from_json(pj);
      auto report = estimate_cv(spec, bundle, phi, p, {}, setup.picard,
                                setup.regression, &base);
      report.phi_label = phi_label(pj);
      csv.add_row({report.phi_label, format_double(report.t1),
                   format_double(report.t2), format_double(p),
                   est_cell(report.sup_x_gap),
                   format_double(report.sup_x_gap.se),
                   est_cell(report.sup_y_gap),
                   format_double(report.sup_y_gap.se), est_cell(report.z_gap),
                   format_double(report.z_gap.se),
                   est_cell(report.phi_z_energy),
                   format_double(report.phi_z_energy.se), est_cell(report.cv),
                   format_double(report.cv.se), est_cell(report.initial_gap),
                   est_cell(report.terminal_gap), est_cell(report.u_potential),
                   format_double(report.s_profile), format_double(report.i_pb),
                   format_double(report.i_pf), format_double(report.i_pmu),
                   format_double(report.i_pT),
                   format_double(report.bound_ratio),
                   report.vacuous ? "1" : "0"});
      rows.push_back({{"profile", report.phi_label},
                      {"p", p},
                      {"cv", report.cv.mean},
                      {"cv_se", report.cv.se},
                      {"bound_ratio", report.bound_ratio},
                      {"u_potential", report.u_potential.mean},
                      {"terminal_gap", report.terminal_gap.mean},
                      {"s_profile", report.s_profile},
                      {"degenerate", report.degenerate_denominator}});
      reports.push_back(std::move(report));
    }
    if (reports.size() >= 3) {
      const auto study = verify_bound(reports, max_spread);
      studies.push_back({{"p", p},
                         {"spread", study.spread},
                         {"pass", study.pass},
                         {"violation", study.violation},
                         {"ratios", study.ratios}});
      if (!study.pass) exit_code = 2;
    }
    for (const auto& r : reports) {
      if (r.degenerate_denominator) exit_code = 2;
    }
  }

  ExperimentOutcome out;
  out.exit_code = exit_code;
  out.summary = {{"kind", "cv"}, {"rows", rows}, {"studies", studies}};
  const auto csv_path = setup.out_dir / "cv.csv";
  csv.write(csv_path);
  out.outputs.push_back(csv_path.string());
  return out;
}

inline ExperimentOutcome run_sandwich(const nlohmann::json& cfg,
                                      const RunSetup& setup) {
  const auto xi = xi_from_json(cfg.value("xi", nlohmann::json("terminal_value")));
  const auto bundle = sample_paths(setup.grid, setup.dim, setup.n_paths,
                                   setup.seed, setup.stream_id);
  nlohmann::json windows = cfg.value(
      "windows",
      nlohmann::json::array({{{"a", 0.25}, {"c", 0.75}}}));
  const auto p_list = cfg.value("p_list", std::vector<double>{2.0, 4.0});
  const std::size_t n_inner = cfg.value("n_inner", std::size_t{256});

  CsvWriter csv({"window_a", "window_c", "p", "lhs", "lhs_se", "mid", "mid_se",
                 "rhs", "rhs_se", "pass"});
  nlohmann::json rows = nlohmann::json::array();
  int exit_code = 0;
  for (const auto& wj : windows) {
    const SigmaAlgebraWindow window{wj.at("a").get<double>(),
                                    wj.at("c").get<double>()};
    for (double p : p_list) {
      const auto report = sandwich_check(xi, bundle, window, p, n_inner);
      csv.add_row({format_double(window.a), format_double(window.c),
                   format_double(p), est_cell(report.lhs),
                   format_double(report.lhs.se), est_cell(report.mid),
                   format_double(report.mid.se), est_cell(report.rhs),
                   format_double(report.rhs.se), report.pass ? "1" : "0"});
      rows.push_back({{"a", window.a},
                      {"c", window.c},
                      {"p", p},
                      {"lhs", report.lhs.mean},
                      {"mid", report.mid.mean},
                      {"rhs", report.rhs.mean},
                      {"pass", report.pass}});
      if (!report.pass) exit_code = 2;
    }
  }
  ExperimentOutcome out;
  out.exit_code = exit_code;
  out.summary = {{"kind", "sandwich"}, {"rows", rows}};
  const auto csv_path = setup.out_dir / "sandwich.csv";
  csv.write(csv_path);
  out.outputs.push_back(csv_path.string());
  return out;
}

inline ExperimentOutcome run_malliavin(const nlohmann::json& cfg,
                                       const RunSetup& setup) {
  const auto r_grid = cfg.value("r_grid", default_r_grid());
  const std::string xi_name =
      cfg.value("xi", nlohmann::json("terminal_value")).is_string()
          ? cfg.value("xi", nlohmann::json("terminal_value")).get<std::string>()
          : "terminal_value";

  MalliavinReport report;
  if (xi_name == "fbsde_x" || xi_name == "fbsde_y") {
    const auto spec = spec_from_json(cfg.value("spec", nlohmann::json("linear_martingale")));
    const auto bundle = sample_paths(setup.grid, spec.dim_w, setup.n_paths,
                                     setup.seed, setup.stream_id);
    const std::size_t node =
        setup.grid.index_of_node(cfg.value("node", setup.grid.t_end()));
    report = malliavin_fbsde_test(spec, bundle, node,
                                  xi_name == "fbsde_x"
                                      ? SolutionComponent::kForward
                                      : SolutionComponent::kBackward,
                                  r_grid, setup.picard, setup.regression);
  } else {
    report = malliavin_ratio_test(xi_from_json(nlohmann::json(xi_name)),
                                  setup.grid, setup.dim, setup.n_paths,
                                  setup.seed, r_grid);
  }

  CsvWriter csv({"r", "ratio", "ratio_se", "ratio_doubled", "ratio_doubled_se"});
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& pt : report.curve) {
    csv.add_row({format_double(pt.r), est_cell(pt.ratio),
                 format_double(pt.ratio.se), est_cell(pt.ratio_doubled),
                 format_double(pt.ratio_doubled.se)});
    rows.push_back({{"r", pt.r},
                    {"ratio", pt.ratio.mean},
                    {"ratio_se", pt.ratio.se},
                    {"ratio_doubled", pt.ratio_doubled.mean}});
  }
  ExperimentOutcome out;
  out.exit_code = report.bounded ? 0 : 2;
  out.summary = {{"kind", "malliavin"},
                 {"xi", xi_name},
                 {"sup_ratio", report.sup_ratio},
                 {"sup_ratio_doubled", report.sup_ratio_doubled},
                 {"bounded", report.bounded},
                 {"rows", rows}};
  if (report.hypothesis_m.has_value()) {
    out.summary["hypothesis_m"] = *report.hypothesis_m;
  }
  const auto csv_path = setup.out_dir / "malliavin.csv";
  csv.write(csv_path);
  out.outputs.push_back(csv_path.string());
  return out;
}

inline ExperimentOutcome run_regularity(const nlohmann::json& cfg,
                                        const RunSetup& setup) {
  const auto spec = spec_from_json(cfg.value("spec", nlohmann::json("linear_martingale")));
  const auto bundle = sample_paths(setup.grid, spec.dim_w, setup.n_paths,
                                   setup.seed, setup.stream_id);
  std::vector<std::pair<double, double>> pairs;
  if (cfg.contains("pairs")) {
    for (const auto& pj : cfg.at("pairs")) {
      pairs.emplace_back(pj.at(0).get<double>(), pj.at(1).get<double>());
    }
  } else {
    pairs = {{0.0, 0.0625}, {0.0, 0.125}, {0.0, 0.25}, {0.0, 0.5},
             {0.25, 0.5}, {0.5, 1.0}};
  }
  const double p = cfg.value("p", 2.0);
  const auto report = run_path_regularity(spec, bundle, pairs, p, setup.picard,
                                          setup.regression);

  CsvWriter csv({"s", "r", "x_gap", "x_gap_se", "y_gap", "y_gap_se",
                 "z_energy", "z_energy_se", "cv", "cv_se", "z_le_cv", "i_pb",
                 "i_pmu", "i_pf"});
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.rows) {
    csv.add_row({format_double(row.s), format_double(row.r),
                 est_cell(row.x_gap), format_double(row.x_gap.se),
                 est_cell(row.y_gap), format_double(row.y_gap.se),
                 est_cell(row.z_energy), format_double(row.z_energy.se),
                 format_double(row.cv), format_double(row.cv_se),
                 row.z_le_cv ? "1" : "0", format_double(row.i_pb),
                 format_double(row.i_pmu), format_double(row.i_pf)});
    rows.push_back({{"s", row.s},
                    {"r", row.r},
                    {"y_gap", row.y_gap.mean},
                    {"z_energy", row.z_energy.mean},
                    {"cv", row.cv},
                    {"z_le_cv", row.z_le_cv}});
  }
  ExperimentOutcome out;
  out.exit_code = report.all_z_bounds_hold ? 0 : 2;
  out.summary = {{"kind", "regularity"},
                 {"p", p},
                 {"y_slope", report.y_slope},
                 {"all_z_bounds_hold", report.all_z_bounds_hold},
                 {"rows", rows}};
  const auto csv_path = setup.out_dir / "regularity.csv";
  csv.write(csv_path);
  out.outputs.push_back(csv_path.string());
  return out;
}

inline ExperimentOutcome run_fracpot(const nlohmann::json& cfg,
                                     const RunSetup& setup) {
  const auto r_grid = cfg.value("r_grid", default_r_grid());
  nlohmann::json drivers = cfg.value(
      "fracpot",
      nlohmann::json::array(
          {{{"coefficient", "mu"}, {"driver", "brownian"}, {"beta", 1.0},
            {"case", "II"}}}));

  CsvWriter csv({"coefficient", "r", "sup_ratio_over_time"});
  nlohmann::json rows = nlohmann::json::array();
  int exit_code = 0;
  for (const auto& dj : drivers) {
    FracpotDriver decl;
    decl.coefficient = dj.value("coefficient", "mu");
    decl.driver = driver_from_json(dj.value("driver", "brownian"));
    decl.beta = dj.value("beta", 1.0);
    decl.case_kind = dj.value("case", "II") == "I"
                         ? FracpotCase::kLipschitzRate
                         : FracpotCase::kBoundedRate;
    decl.p = dj.value("p", decl.case_kind == FracpotCase::kLipschitzRate ? 4.0
                                                                         : 2.0);
    decl.rate_depends_on_z = dj.value("rate_depends_on_z", false);
    decl.terminal_only = dj.value("terminal_only", false);

    const auto report = run_fracpot_check(decl, setup.grid, setup.dim,
                                          setup.n_paths, setup.seed, r_grid);
    for (std::size_t i = 0; i < report.r_grid.size(); ++i) {
      csv.add_row({report.coefficient, format_double(report.r_grid[i]),
                   format_double(report.sup_ratio_per_r[i])});
    }
    rows.push_back({{"coefficient", report.coefficient},
                    {"verdict", to_string(report.verdict)},
                    {"sup_ratio", report.sup_ratio},
                    {"small_r_slope", report.small_r_slope}});
    if (report.verdict == FracpotVerdict::kFails) exit_code = 2;
  }
  ExperimentOutcome out;
  out.exit_code = exit_code;
  out.summary = {{"kind", "fracpot"}, {"rows", rows}};
  const auto csv_path = setup.out_dir / "fracpot.csv";
  csv.write(csv_path);
  out.outputs.push_back(csv_path.string());
  return out;
}

}  // namespace experiments

/// Dispatch, write reports and the manifest, return the outcome.
inline ExperimentOutcome run_experiment(const nlohmann::json& cfg) {
  const std::string kind = cfg.value("kind", "");
  RunSetup setup = setup_from_json(cfg);
  std::filesystem::create_directories(setup.out_dir);

  const auto started = std::chrono::steady_clock::now();
  ExperimentOutcome out;
  if (kind == "paths") {
    out = experiments::run_paths(cfg, setup);
  } else if (kind == "solve") {
    out = experiments::run_solve(cfg, setup);
  } else if (kind == "cv") {
    out = experiments::run_cv(cfg, setup);
  } else if (kind == "sandwich") {
    out = experiments::run_sandwich(cfg, setup);
  } else if (kind == "malliavin") {
    out = experiments::run_malliavin(cfg, setup);
  } else if (kind == "regularity") {
    out = experiments::run_regularity(cfg, setup);
  } else if (kind == "fracpot") {
    out = experiments::run_fracpot(cfg, setup);
  } else {
    throw ConfigError("run_experiment: unknown kind '" + kind + "'");
  }
  const double wall_ms =
      std::chrono::duration<double, std::milli>(
          std::chrono::steady_clock::now() - started)
          .count();

  const auto report_path = setup.out_dir / (kind + ".json");
  write_json(out.summary, report_path);
  out.outputs.push_back(report_path.string());

  const auto manifest = make_manifest(cfg, out.outputs, wall_ms);
  write_json(manifest, setup.out_dir / "manifest.json");
  return out;
}

}  // namespace fbsde
