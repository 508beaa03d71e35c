#pragma once

// Discrete decoupling field: a per-node map x -> w(t_i, x) with w(T, .) = g,
// built by backward recursion over a partition whose mesh is short enough for
// the small-interval solver. Each recursion step solves the subinterval
// system from a design of probe initial states against the fitted map at the
// next node, then refits. The field then extends solvability to arbitrary
// horizon lengths by forward stitching, with Y_s = w(s, X_s) as the
// consistency invariant.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fbsde/errors.hpp"
#include "fbsde/fbsde_spec.hpp"
#include "fbsde/regression.hpp"
#include "fbsde/solver.hpp"
#include "fbsde/stats.hpp"

namespace fbsde {

/// Partition t = t_0 < ... < t_N = T over master-grid nodes.
struct Partition {
  std::vector<std::size_t> node_indices;

  static Partition uniform(const TimeGrid& grid, std::size_t n_intervals) {
    if (n_intervals == 0 || grid.n_steps() % n_intervals != 0) {
      throw ConfigError("Partition: interval count must divide n_steps");
    }
    Partition part;
    const std::size_t stride = grid.n_steps() / n_intervals;
    for (std::size_t i = 0; i <= n_intervals; ++i) {
      part.node_indices.push_back(i * stride);
    }
    return part;
  }

  std::size_t n_intervals() const { return node_indices.size() - 1; }

  double mesh(const TimeGrid& grid) const {
    double widest = 0.0;
    for (std::size_t i = 0; i + 1 < node_indices.size(); ++i) {
      widest = std::max(widest, grid.node(node_indices[i + 1]) -
                                    grid.node(node_indices[i]));
    }
    return widest;
  }

  void validate(const TimeGrid& grid, double delta) const {
    if (node_indices.size() < 2 || node_indices.front() != 0 ||
        node_indices.back() != grid.n_steps()) {
      throw ConfigError("Partition: must span node 0 .. n_steps");
    }
    for (std::size_t i = 0; i + 1 < node_indices.size(); ++i) {
      if (node_indices[i] >= node_indices[i + 1]) {
        throw ConfigError("Partition: node indices must increase");
      }
    }
    if (!std::isnan(delta) && mesh(grid) > delta + 1e-12) {
      throw ConfigError("Partition: mesh " + std::to_string(mesh(grid)) +
                        " exceeds delta " + std::to_string(delta));
    }
  }
};

struct FieldConfig {
  int degree = 3;                 // polynomial degree of the fitted map
  std::size_t n_probes = 9;       // probe initial states per node
  double probe_span = 3.0;        // half-width in forward-spread units
  double delta = std::numeric_limits<double>::quiet_NaN();  // mesh bound
  double lipschitz_margin = 1.0;  // abort when Lhat * L_mu3 reaches this
  bool clamp_to_hull = true;      // clamp evaluations to the probe hull
};

/// Fitted decoupling map at the partition nodes. Scalar state only: the
/// regression surrogate is one-dimensional in x (dim_x == 1), which covers
/// the shipped coefficient library; the terminal node always evaluates g
/// itself, never a surrogate.
class DecouplingFieldModel {
 public:
  struct Node {
    double t = 0.0;
    std::size_t grid_node = 0;
    std::vector<double> coefficients;  // per y-component, basis-major
    double lipschitz_hat = 0.0;
  };

  DecouplingFieldModel(std::size_t dim_y, int degree, double hull_lo,
                       double hull_hi, bool clamp)
      : dim_y_(dim_y), degree_(degree), hull_lo_(hull_lo), hull_hi_(hull_hi),
        clamp_(clamp) {}

  std::size_t dim_y() const { return dim_y_; }
  int degree() const { return degree_; }
  double hull_lo() const { return hull_lo_; }
  double hull_hi() const { return hull_hi_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  bool was_clamped() const { return clamped_; }

  void push_node(Node node) { nodes_.push_back(std::move(node)); }

  /// w(t_i, x) for the i-th stored node (interior nodes only).
  void eval(std::size_t node_index, double x, std::span<double> out) const {
    const Node& node = nodes_.at(node_index);
    double xe = x;
    if (clamp_) {
      const double clamped = std::clamp(x, hull_lo_, hull_hi_);
      if (clamped != x) clamped_ = true;
      xe = clamped;
    }
    for (std::size_t i = 0; i < dim_y_; ++i) {
      const double* c = node.coefficients.data() +
                        i * static_cast<std::size_t>(degree_ + 1);
      double acc = 0.0;
      for (int k = degree_; k >= 0; --k) acc = acc * xe + c[k];
      out[i] = acc;
    }
  }

  double eval_scalar(std::size_t node_index, double x) const {
    double out = 0.0;
    eval(node_index, x, {&out, 1});
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["schema"] = "decoupling-field/1";
    j["dim_y"] = dim_y_;
    j["basis"] = {{"kind", "polynomial"}, {"degree", degree_}};
    j["probe_hull"] = {hull_lo_, hull_hi_};
    j["clamp_to_hull"] = clamp_;
    j["nodes"] = nlohmann::json::array();
    for (const auto& node : nodes_) {
      j["nodes"].push_back({{"t", node.t},
                            {"grid_node", node.grid_node},
                            {"coefficients", node.coefficients},
                            {"lipschitz_hat", node.lipschitz_hat}});
    }
    return j;
  }

  static DecouplingFieldModel from_json(const nlohmann::json& j) {
    if (j.value("schema", "") != "decoupling-field/1") {
      throw ConfigError("DecouplingFieldModel: unknown schema");
    }
    DecouplingFieldModel model(j.at("dim_y").get<std::size_t>(),
                               j.at("basis").at("degree").get<int>(),
                               j.at("probe_hull")[0].get<double>(),
                               j.at("probe_hull")[1].get<double>(),
                               j.value("clamp_to_hull", true));
    for (const auto& njson : j.at("nodes")) {
      Node node;
      node.t = njson.at("t").get<double>();
      node.grid_node = njson.at("grid_node").get<std::size_t>();
      node.coefficients = njson.at("coefficients").get<std::vector<double>>();
      node.lipschitz_hat = njson.at("lipschitz_hat").get<double>();
      model.push_node(std::move(node));
    }
    return model;
  }

 private:
  std::size_t dim_y_;
  int degree_;
  double hull_lo_, hull_hi_;
  bool clamp_;
  mutable bool clamped_ = false;
  std::vector<Node> nodes_;
};

namespace detail {

/// Probe design: uniform grid around the forward state's spread, estimated
/// from a zero-feedback Euler pre-roll.
inline std::vector<double> probe_design(const FbsdeSpec& spec,
                                        const PathEnsemble& driving,
                                        const FieldConfig& cfg) {
  if (spec.dim_x != 1) {
    throw ConfigError("decoupling field: probe design supports dim_x == 1");
  }
  // Pre-roll a small sub-batch to size the cloud.
  const std::size_t n_pre = std::min<std::size_t>(driving.n_paths, 512);
  PathEnsemble pre = driving;
  pre.n_paths = n_pre;
  PicardConfig pre_cfg;
  pre_cfg.max_iter = 1;
  pre_cfg.tol = std::numeric_limits<double>::infinity();  // one roll is enough
  pre_cfg.require_gate = false;
  const auto sol = solve_small_interval(spec, pre,
                                        NodeRange::full(*driving.grid), pre_cfg,
                                        RegressionConfig{1, false, false});
  double mean = 0.0, peak_sd = 0.0;
  const std::size_t n_nodes = sol.n_local_nodes();
  for (std::size_t k = 0; k < n_nodes; ++k) {
    std::vector<double> xs(n_pre);
    for (std::size_t p = 0; p < n_pre; ++p) xs[p] = sol.x_at(p, k);
    const auto est = mean_se(xs);
    peak_sd = std::max(peak_sd,
                       est.se * std::sqrt(static_cast<double>(n_pre)));
    if (k == 0) mean = est.mean;
  }
  const double radius = std::max(cfg.probe_span * peak_sd, 1e-3);

  std::vector<double> probes(cfg.n_probes);
  if (cfg.n_probes == 1) {
    probes[0] = mean;
  } else {
    for (std::size_t i = 0; i < cfg.n_probes; ++i) {
      probes[i] = mean - radius +
                  2.0 * radius * static_cast<double>(i) /
                      static_cast<double>(cfg.n_probes - 1);
    }
  }
  return probes;
}

inline std::vector<double> fit_polynomial(std::span<const double> xs,
                                          std::span<const double> ys,
                                          int degree) {
  Eigen::MatrixXd design(xs.size(), degree + 1);
  Eigen::VectorXd target(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double v = 1.0;
    for (int k = 0; k <= degree; ++k) {
      design(i, k) = v;
      v *= xs[i];
    }
    target(i) = ys[i];
  }
  const Eigen::VectorXd coef =
      design.colPivHouseholderQr().solve(target);
  return {coef.data(), coef.data() + coef.size()};
}

}  // namespace detail

/// Builds the per-node maps by backward recursion. Probes share the bundle
/// (common random numbers); each subinterval must pass the solvability gate
/// with the current empirical Lipschitz constant in place of L_g.
inline DecouplingFieldModel build_field(const FbsdeSpec& spec,
                                        const PathEnsemble& driving,
                                        const Partition& partition,
                                        const FieldConfig& cfg = {},
                                        const PicardConfig& picard = {},
                                        const RegressionConfig& regression = {}) {
  spec.validate();
  if (spec.dim_x != 1) {
    throw ConfigError("build_field: regression surrogate supports dim_x == 1");
  }
  const TimeGrid& grid = *driving.grid;
  partition.validate(grid, cfg.delta);

  const auto probes = detail::probe_design(spec, driving, cfg);
  DecouplingFieldModel model(spec.dim_y, cfg.degree, probes.front(),
                             probes.back(), cfg.clamp_to_hull);

  const std::size_t n_int = partition.n_intervals();
  std::vector<DecouplingFieldModel::Node> reversed;

  // Terminal node: record g on the probes for the Lipschitz trace, but keep
  // the evaluation exact (terminal solves always use g itself).
  double lhat_next = spec.lip.g;

  std::optional<std::size_t> fitted_next;  // index into `reversed`

  for (std::size_t i = n_int; i-- > 0;) {
    const std::size_t lo = partition.node_indices[i];
    const std::size_t hi = partition.node_indices[i + 1];

    // Gate with the running Lipschitz estimate in place of L_g.
    if (lhat_next * spec.lip.mu3 >= cfg.lipschitz_margin) {
      throw RegularityLossError(
          "build_field: Lhat * L_mu3 = " +
          std::to_string(lhat_next * spec.lip.mu3) + " at node " +
          std::to_string(i + 1));
    }

    SolveOptions options;
    options.zero_first_cell = false;  // interior subproblem
    if (fitted_next.has_value()) {
      const auto next_node = reversed[*fitted_next];  // copy; vector may grow
      const int degree = cfg.degree;
      const double hull_lo = model.hull_lo(), hull_hi = model.hull_hi();
      const bool clamp = cfg.clamp_to_hull;
      const std::size_t dim_y = spec.dim_y;
      options.terminal_override =
          [next_node, degree, hull_lo, hull_hi, clamp, dim_y](
              const PathValues&, std::span<const double> x,
              std::span<double> out) {
            const double xe = clamp ? std::clamp(x[0], hull_lo, hull_hi) : x[0];
            for (std::size_t comp = 0; comp < dim_y; ++comp) {
              const double* c = next_node.coefficients.data() +
                                comp * static_cast<std::size_t>(degree + 1);
              double acc = 0.0;
              for (int k = degree; k >= 0; --k) acc = acc * xe + c[k];
              out[comp] = acc;
            }
          };
    }

    // Solve from each probe, read off the start-node value of Y.
    std::vector<double> values(probes.size() * spec.dim_y);
    PicardConfig sub_picard = picard;
    sub_picard.require_gate = false;  // gated above with Lhat
    for (std::size_t j = 0; j < probes.size(); ++j) {
      SolveOptions probe_options = options;
      probe_options.initial_values =
          std::vector<double>(driving.n_paths, probes[j]);
      const auto sol = solve_small_interval(spec, driving, {lo, hi},
                                            sub_picard, regression,
                                            probe_options);
      // Deterministic initial state: the fitted start value is shared across
      // paths; average for robustness against rank-deficient corners.
      for (std::size_t comp = 0; comp < spec.dim_y; ++comp) {
        double acc = 0.0;
        for (std::size_t p = 0; p < sol.n_paths; ++p) {
          acc += sol.y_at(p, 0, comp);
        }
        values[j * spec.dim_y + comp] =
            acc / static_cast<double>(sol.n_paths);
      }
    }

    // Fit the node map component by component.
    DecouplingFieldModel::Node node;
    node.t = grid.node(lo);
    node.grid_node = lo;
    node.coefficients.resize(spec.dim_y *
                             static_cast<std::size_t>(cfg.degree + 1));
    for (std::size_t comp = 0; comp < spec.dim_y; ++comp) {
      std::vector<double> ys(probes.size());
      for (std::size_t j = 0; j < probes.size(); ++j) {
        ys[j] = values[j * spec.dim_y + comp];
      }
      const auto coef = detail::fit_polynomial(probes, ys, cfg.degree);
      std::copy(coef.begin(), coef.end(),
                node.coefficients.begin() +
                    comp * static_cast<std::size_t>(cfg.degree + 1));
    }

    // Empirical Lipschitz constant over probe pairs.
    double lhat = 0.0;
    for (std::size_t a = 0; a < probes.size(); ++a) {
      for (std::size_t b = a + 1; b < probes.size(); ++b) {
        double num = 0.0;
        for (std::size_t comp = 0; comp < spec.dim_y; ++comp) {
          const double va = values[a * spec.dim_y + comp];
          const double vb = values[b * spec.dim_y + comp];
          num += (va - vb) * (va - vb);
        }
        lhat = std::max(lhat,
                        std::sqrt(num) / std::abs(probes[a] - probes[b]));
      }
    }
    node.lipschitz_hat = lhat;
    lhat_next = lhat;

    reversed.push_back(std::move(node));
    fitted_next = reversed.size() - 1;
  }

  for (auto it = reversed.rbegin(); it != reversed.rend(); ++it) {
    model.push_node(std::move(*it));
  }
  return model;
}

/// Stitched long-horizon solve plus the per-node decoupling residuals
/// E|Y_{t_i} - w(t_i, X_{t_i})|^2 at the interior partition nodes.
struct LongHorizonResult {
  SolutionTriple solution;
  std::vector<double> node_residuals;
};

inline LongHorizonResult solve_long_horizon(
    const FbsdeSpec& spec, const PathEnsemble& driving,
    const Partition& partition, const DecouplingFieldModel& model,
    const PicardConfig& picard = {}, const RegressionConfig& regression = {},
    const SolveOptions& base_options = {}) {
  spec.validate();
  const TimeGrid& grid = *driving.grid;
  partition.validate(grid, std::numeric_limits<double>::quiet_NaN());
  const std::size_t n_int = partition.n_intervals();
  if (model.nodes().size() != n_int) {
    throw ConfigError("solve_long_horizon: model/partition node mismatch");
  }

  const std::size_t nx = spec.dim_x, ny = spec.dim_y;
  const std::size_t nz = spec.dim_z();
  const std::size_t n_nodes = grid.n_steps() + 1;
  const std::size_t n_paths = driving.n_paths;

  SolutionTriple full;
  full.grid = grid;
  full.range = NodeRange::full(grid);
  full.n_paths = n_paths;
  full.dim_x = nx;
  full.dim_y = ny;
  full.dim_w = spec.dim_w;
  full.x.assign(n_paths * n_nodes * nx, 0.0);
  full.y.assign(n_paths * n_nodes * ny, 0.0);
  full.z.assign(n_paths * grid.n_steps() * nz, 0.0);

  LongHorizonResult result{std::move(full), {}};
  SolutionTriple& out = result.solution;

  std::optional<std::vector<double>> carried_initial =
      base_options.initial_values;

  for (std::size_t i = 0; i < n_int; ++i) {
    const std::size_t lo = partition.node_indices[i];
    const std::size_t hi = partition.node_indices[i + 1];

    SolveOptions options = base_options;
    options.initial_values = carried_initial;
    options.zero_first_cell = base_options.zero_first_cell && i == 0;
    if (i + 1 < n_int) {
      const std::size_t next_index = i + 1;
      options.terminal_override = [&model, next_index](
                                      const PathValues&,
                                      std::span<const double> x,
                                      std::span<double> out_y) {
        model.eval(next_index, x[0], out_y);
      };
    }
    const auto sol = solve_small_interval(spec, driving, {lo, hi}, picard,
                                          regression, options);

    // Copy the subinterval into the global triple; the junction node takes
    // the incoming subinterval's start values.
    const std::size_t local_nodes = sol.n_local_nodes();
    for (std::size_t p = 0; p < n_paths; ++p) {
      for (std::size_t k = 0; k < local_nodes; ++k) {
        const bool is_junction_dup = i > 0 && k == 0;
        if (!is_junction_dup) {
          for (std::size_t c = 0; c < nx; ++c) {
            out.x[(p * n_nodes + lo + k) * nx + c] = sol.x_at(p, k, c);
          }
        }
        for (std::size_t c = 0; c < ny; ++c) {
          out.y[(p * n_nodes + lo + k) * ny + c] = sol.y_at(p, k, c);
        }
      }
      for (std::size_t cell = 0; cell < sol.range.n_cells(); ++cell) {
        for (std::size_t e = 0; e < nz; ++e) {
          out.z[(p * grid.n_steps() + lo + cell) * nz + e] =
              sol.z[(p * sol.range.n_cells() + cell) * nz + e];
        }
      }
    }

    // Decoupling residual at the start node of interior subintervals.
    if (i > 0) {
      std::vector<double> w_val(ny);
      double acc = 0.0;
      for (std::size_t p = 0; p < n_paths; ++p) {
        model.eval(i, sol.x_at(p, 0, 0), w_val);
        double gap_sq = 0.0;
        for (std::size_t c = 0; c < ny; ++c) {
          const double d = sol.y_at(p, 0, c) - w_val[c];
          gap_sq += d * d;
        }
        acc += gap_sq;
      }
      result.node_residuals.push_back(acc / static_cast<double>(n_paths));
    }

    // Carry the terminal states forward.
    std::vector<double> next_initial(n_paths * nx);
    for (std::size_t p = 0; p < n_paths; ++p) {
      for (std::size_t c = 0; c < nx; ++c) {
        next_initial[p * nx + c] = sol.x_at(p, local_nodes - 1, c);
      }
    }
    carried_initial = std::move(next_initial);
  }
  return result;
}

/// Gaps |w(r, x) - w(s, x)| over partition-node pairs at a probe point, with
/// a log-log slope fit of the p-th power against (r - s). Flat fields (all
/// gaps at rounding level) report no slope.
struct FieldTimeRegularity {
  std::vector<double> pair_dt;
  std::vector<double> pair_gap;  // |w(r,x) - w(s,x)|
  double slope_pth = 0.0;        // slope of E|gap|^p vs dt
  bool flat = false;
};

inline FieldTimeRegularity field_time_regularity(
    const DecouplingFieldModel& model, double x, double p) {
  FieldTimeRegularity out;
  const auto& nodes = model.nodes();
  std::vector<double> values(nodes.size());
  std::vector<double> buf(model.dim_y());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    model.eval(i, x, buf);
    double norm = 0.0;
    for (double v : buf) norm += v * v;
    values[i] = std::sqrt(norm);
  }
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    for (std::size_t b = a + 1; b < nodes.size(); ++b) {
      out.pair_dt.push_back(nodes[b].t - nodes[a].t);
      out.pair_gap.push_back(std::abs(values[b] - values[a]));
    }
  }
  double max_gap = 0.0;
  for (double g : out.pair_gap) max_gap = std::max(max_gap, g);
  if (max_gap < 1e-12) {
    out.flat = true;
    return out;
  }
  std::vector<double> powered(out.pair_gap.size());
  for (std::size_t i = 0; i < powered.size(); ++i) {
    powered[i] = std::pow(std::max(out.pair_gap[i], 1e-300), p);
  }
  out.slope_pth = fit_loglog_slope(out.pair_dt, powered).slope;
  return out;
}

}  // namespace fbsde
