#ifndef REGTPS_PIPELINE_HPP
#define REGTPS_PIPELINE_HPP

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "regtps/diagnostics.hpp"
#include "regtps/evaluation.hpp"
#include "regtps/hmc.hpp"
#include "regtps/io/config.hpp"
#include "regtps/io/csv.hpp"
#include "regtps/io/stations.hpp"
#include "regtps/kernels.hpp"
#include "regtps/kle.hpp"
#include "regtps/posterior.hpp"
#include "regtps/predictive.hpp"
#include "regtps/spde.hpp"

namespace regtps::pipeline {

inline const std::string regtps_label = "regTPS-KLE";
inline const std::string spde_label = "SPDE";

/// Exit statuses of the command-line entry points.
enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_data = 3, exit_gate = 4 };

/// Writes CSV files under a root directory, each with a `.meta.json` sidecar.
class ArtifactWriter {
 public:
  ArtifactWriter(std::filesystem::path root, std::uint64_t config_hash)
      : root_(std::move(root)), hash_(io::hex64(config_hash)) {}

  const std::filesystem::path& root() const { return root_; }

  void csv(const std::string& rel, std::uint64_t seed, const std::function<void(std::ostream&)>& body,
           const nlohmann::json& extra = nlohmann::json::object()) {
    const auto path = root_ / rel;
    std::filesystem::create_directories(path.parent_path());
    {
      std::ofstream out(path);
      if (!out) throw DataError("cannot write " + path.string());
      body(out);
    }
    nlohmann::json meta = extra;
    meta["config_hash"] = hash_;
    meta["seed"] = seed;
    meta["version"] = version;
    std::ofstream m(path.string() + ".meta.json");
    m << meta.dump(2) << '\n';
    written_.push_back(rel);
  }

  const std::vector<std::string>& written() const { return written_; }

 private:
  std::filesystem::path root_;
  std::string hash_;
  std::vector<std::string> written_;
};

/// Fields shared by both methods after sampling.
struct MethodFit {
  std::string method;
  PosteriorDraws draws;
  std::vector<Eigen::Index> hyper_indices;
  double offset = 0.0;     // data mean removed before fitting
  FieldDraws grid_field;   // includes the offset
  FieldDraws obs_field;    // includes the offset
  Eigen::VectorXd grid_median;
  GateReport gate;
};

struct RegTpsFit {
  MethodFit fit;
  std::shared_ptr<const KleModel> model;
  std::shared_ptr<const RegTpsPosterior> post;
};

struct SpdeFit {
  MethodFit fit;
  std::shared_ptr<const TriMesh> mesh;
  std::shared_ptr<const SpdePosterior> post;
};

namespace detail {

inline Eigen::VectorXd centered(const Eigen::VectorXd& y, double& offset) {
  offset = y.mean();
  return (y.array() - offset).matrix();
}

inline void add_offset(FieldDraws& f, double offset) { f.field.array() += offset; }

/// Evenly spaced row indices, at most `count` of them.
inline std::vector<Eigen::Index> thin(Eigen::Index total, Eigen::Index count) {
  std::vector<Eigen::Index> idx;
  const Eigen::Index k = std::min(total, count);
  for (Eigen::Index i = 0; i < k; ++i) idx.push_back(i * total / k);
  return idx;
}

}  // namespace detail

/// Retained modes: the complexity knob when set, otherwise the variance rule.
inline KleModel make_kle(std::shared_ptr<const TpsBasisSystem> basis, const io::RunConfig& cfg) {
  if (cfg.complexity) {
    const Eigen::Index m = std::clamp<Eigen::Index>(*cfg.complexity, basis->null_dimension(), basis->size());
    return KleModel(std::move(basis), m);
  }
  return truncate(std::move(basis), cfg.variance_fraction, cfg.alpha_ref);
}

inline RegTpsFit fit_regtps(const KleModel& model, const PointSet& obs, const Eigen::VectorXd& y,
                            const PointSet& grid, const PriorConfig& prior, const HmcConfig& hmc,
                            const ConvergenceGate& gate) {
  RegTpsFit r;
  r.model = std::make_shared<const KleModel>(model);
  r.fit.method = regtps_label;
  const Eigen::VectorXd yc = detail::centered(y, r.fit.offset);
  auto post = std::make_shared<RegTpsPosterior>(RegTpsPosterior::from_model(model, obs, yc, prior));
  r.post = post;
  r.fit.draws = run_hmc(post->target(), hmc);
  r.fit.hyper_indices = {post->modes(), post->modes() + 1};
  r.fit.gate = check_convergence(r.fit.draws, r.fit.hyper_indices, gate);
  r.fit.grid_field = regtps_field_draws(*post, r.fit.draws, model.mode_design(grid));
  r.fit.obs_field = regtps_field_draws(*post, r.fit.draws, post->design());
  detail::add_offset(r.fit.grid_field, r.fit.offset);
  detail::add_offset(r.fit.obs_field, r.fit.offset);
  r.fit.grid_median = column_median(r.fit.grid_field.field);
  return r;
}

inline SpdeFit fit_spde(const TriMesh& mesh, const PointSet& obs, const Eigen::VectorXd& y, const PointSet& grid,
                        const PriorConfig& prior, const HmcConfig& hmc, const ConvergenceGate& gate) {
  SpdeFit r;
  r.mesh = std::make_shared<const TriMesh>(mesh);
  r.fit.method = spde_label;
  const Eigen::VectorXd yc = detail::centered(y, r.fit.offset);
  const SparseRowMatrix a_obs = projection_matrix(mesh, obs);
  auto post = std::make_shared<SpdePosterior>(assemble_fem(mesh), a_obs, yc, prior);
  r.post = post;
  r.fit.draws = run_hmc(post->target(), hmc);
  const Eigen::Index m = post->nodes();
  r.fit.hyper_indices = {m, m + 1, m + 2};
  r.fit.gate = check_convergence(r.fit.draws, r.fit.hyper_indices, gate);
  r.fit.grid_field = spde_field_draws(*post, r.fit.draws, projection_matrix(mesh, grid));
  r.fit.obs_field = spde_field_draws(*post, r.fit.draws, a_obs);
  detail::add_offset(r.fit.grid_field, r.fit.offset);
  detail::add_offset(r.fit.obs_field, r.fit.offset);
  r.fit.grid_median = column_median(r.fit.grid_field.field);
  return r;
}

/// Posterior medians of the mode coordinates z_k and their prior SDs at the
/// posterior-median alpha.
struct ShrinkageReport {
  Eigen::VectorXd z_median;
  Eigen::VectorXd prior_sd;
  double alpha_median = 1.0;
  double fraction_outside = 0.0;
};

inline ShrinkageReport shrinkage_report(const RegTpsFit& r, double width = 2.0) {
  const Eigen::MatrixXd x = r.fit.draws.pooled();
  Eigen::MatrixXd z(x.rows(), r.post->modes());
  Eigen::MatrixXd la(x.rows(), 1);
  for (Eigen::Index s = 0; s < x.rows(); ++s) {
    const Eigen::VectorXd xs = x.row(s).transpose();
    z.row(s) = r.post->coefficients(xs).transpose();
    la(s, 0) = r.post->log_alpha(xs);
  }
  ShrinkageReport rep;
  rep.z_median = column_median(z);
  rep.alpha_median = std::exp(column_median(la)[0]);
  rep.prior_sd = spectral_map(r.model->penalty_eigenvalues(), rep.alpha_median).cwiseSqrt();
  rep.fraction_outside = band_exceedance_fraction(rep.z_median, rep.prior_sd, width);
  return rep;
}

struct ScenarioResult {
  ScenarioResult(io::ScenarioSpec s, std::uint64_t sd, SimulatedScenario d)
      : spec(std::move(s)), seed(sd), data(std::move(d)) {}

  io::ScenarioSpec spec;
  std::uint64_t seed = 0;
  SimulatedScenario data;
  RegTpsFit regtps;
  SpdeFit spde;
  FitMetrics regtps_metrics;
  FitMetrics spde_metrics;
  ShrinkageReport shrinkage;
  SpectrumReport spectrum;
  Eigen::MatrixXd truth_cov;
  CovarianceComparison cov;
};

inline std::shared_ptr<const TriMesh> scenario_mesh(const io::RunConfig& cfg) {
  return std::make_shared<const TriMesh>(build_mesh(cfg.domain, cfg.complexity.value_or(cfg.mesh_nodes)));
}

inline SimulatedScenario simulate(const io::RunConfig& cfg, const io::ScenarioSpec& spec, const TriMesh& mesh) {
  const std::uint64_t seed = cfg.scenario_seed(spec);
  const PointSet obs = scenario_locations(cfg.domain, static_cast<std::size_t>(spec.n_obs), seed);
  return simulate_scenario(cfg.kernel, mesh, obs, make_grid(cfg.domain, cfg.grid_resolution), cfg.sigma_e, seed);
}

/// Simulate one scenario, fit both models and compute every evaluation product.
inline ScenarioResult evaluate_scenario(const io::RunConfig& cfg, const io::ScenarioSpec& spec, bool parallel_chains = true) {
  const auto mesh = scenario_mesh(cfg);
  ScenarioResult r(spec, cfg.scenario_seed(spec), simulate(cfg, spec, *mesh));
  const PriorConfig prior = cfg.prior.resolve(r.data.y, cfg.domain.diameter());
  HmcConfig hmc = cfg.hmc(r.seed);
  hmc.parallel = parallel_chains;

  auto basis = std::make_shared<const TpsBasisSystem>(r.data.obs);
  const KleModel model = make_kle(basis, cfg);
  r.regtps = fit_regtps(model, r.data.obs, r.data.y, r.data.grid, prior, hmc, cfg.gate());
  r.spde = fit_spde(*mesh, r.data.obs, r.data.y, r.data.grid, prior, hmc, cfg.gate());
  r.regtps_metrics = compute_metrics(r.regtps.fit.grid_median, r.data.grid_truth, regtps_label, spec.name);
  r.spde_metrics = compute_metrics(r.spde.fit.grid_median, r.data.grid_truth, spde_label, spec.name);
  r.shrinkage = shrinkage_report(r.regtps);
  r.spectrum = spectrum_report(basis->eigenvalues(), r.shrinkage.alpha_median);

  r.truth_cov = covariance_from_kernel(cfg.kernel, mesh->nodes());
  const Eigen::MatrixXd xr = r.regtps.fit.draws.pooled(), xs = r.spde.fit.draws.pooled();
  std::vector<double> alphas;
  for (const Eigen::Index s : detail::thin(xr.rows(), 200)) alphas.push_back(r.regtps.post->alpha(xr.row(s).transpose()));
  std::vector<SpdeHyper> hypers;
  for (const Eigen::Index s : detail::thin(xs.rows(), 100)) hypers.push_back(r.spde.post->hyper(xs.row(s).transpose()));
  r.cov = covariance_comparison(r.truth_cov, kle_mesh_covariance(model, model.mode_design(mesh->nodes()), alphas),
                                spde_mesh_covariance(r.spde.post->fem(), hypers));
  return r;
}

namespace detail {

inline void write_draws(std::ostream& out, const PosteriorDraws& d) {
  io::CsvWriter w(out);
  std::vector<std::string> head{"chain", "iteration"};
  head.insert(head.end(), d.names.begin(), d.names.end());
  head.push_back("lp");
  head.push_back("divergent");
  w.header(head);
  for (std::size_t c = 0; c < d.chains.size(); ++c) {
    const auto& ch = d.chains[c];
    for (Eigen::Index i = 0; i < ch.draws.rows(); ++i) {
      w.field(static_cast<long long>(c)).field(static_cast<long long>(i));
      for (Eigen::Index j = 0; j < ch.draws.cols(); ++j) w.field(ch.draws(i, j));
      w.field(ch.lp[i]).field(ch.divergent[static_cast<std::size_t>(i)] != 0).end_row();
    }
  }
}

inline void write_loglik(std::ostream& out, const PosteriorDraws& d) {
  io::CsvWriter w(out);
  const Eigen::Index n = d.chains.front().loglik.cols();
  std::vector<std::string> head{"chain", "iteration"};
  for (Eigen::Index j = 0; j < n; ++j) head.push_back("ll_" + std::to_string(j + 1));
  w.header(head);
  for (std::size_t c = 0; c < d.chains.size(); ++c) {
    const auto& ch = d.chains[c];
    for (Eigen::Index i = 0; i < ch.loglik.rows(); ++i) {
      w.field(static_cast<long long>(c)).field(static_cast<long long>(i));
      for (Eigen::Index j = 0; j < n; ++j) w.field(ch.loglik(i, j));
      w.end_row();
    }
  }
}

inline void write_predictive(std::ostream& out, const Eigen::MatrixXd& reps, const PointSet& pts,
                             const Eigen::VectorXd& y) {
  io::CsvWriter w(out);
  w.header({"replicate", "point", "s1", "s2", "y_obs", "y_rep"});
  for (Eigen::Index r = 0; r < reps.rows(); ++r) {
    for (Eigen::Index j = 0; j < reps.cols(); ++j) {
      const auto& p = pts[static_cast<std::size_t>(j)];
      w.field(static_cast<long long>(r)).field(static_cast<long long>(j)).field(p.s1).field(p.s2);
      w.field(y[j]).field(reps(r, j)).end_row();
    }
  }
}

struct DiagnosticRow {
  std::string scope;
  std::string method;
  ParameterSummary s;
  int divergences = 0;
  bool passed = true;
};

inline std::vector<DiagnosticRow> diagnostic_rows(const std::string& scope, const MethodFit& f) {
  std::vector<DiagnosticRow> rows;
  for (const auto& s : f.gate.checked) rows.push_back({scope, f.method, s, f.draws.divergences(), f.gate.passed});
  return rows;
}

inline void write_diagnostics(std::ostream& out, const std::vector<DiagnosticRow>& rows) {
  io::CsvWriter w(out);
  w.header({"scope", "method", "parameter", "mean", "sd", "q2.5", "median", "q97.5", "rhat", "ess_bulk",
            "divergences", "gate_passed"});
  for (const auto& r : rows) {
    w.field(r.scope).field(r.method).field(r.s.name).field(r.s.mean).field(r.s.sd).field(r.s.q025);
    w.field(r.s.median).field(r.s.q975).field(r.s.rhat).field(r.s.ess).field(r.divergences).field(r.passed).end_row();
  }
}

inline std::string method_slug(const std::string& method) { return method == spde_label ? "spde" : "regtps_kle"; }

/// Draws, pointwise log likelihood and predictive replicates for one method.
inline void write_method_outputs(ArtifactWriter& aw, const std::string& dir, std::uint64_t seed, const MethodFit& f,
                                 const PointSet& obs, const Eigen::VectorXd& y, int replicates,
                                 const nlohmann::json& extra = nlohmann::json::object()) {
  const std::string slug = method_slug(f.method);
  nlohmann::json meta = extra;
  meta["method"] = f.method;
  aw.csv(dir + "draws_" + slug + ".csv", seed, [&](std::ostream& o) { write_draws(o, f.draws); }, meta);
  aw.csv(dir + "loglik_" + slug + ".csv", seed, [&](std::ostream& o) { write_loglik(o, f.draws); }, meta);
  const Eigen::MatrixXd reps = posterior_predictive(f.obs_field, replicates, seed ^ 0x9e3779b97f4a7c15ULL);
  aw.csv(dir + "predictive_" + slug + ".csv", seed, [&](std::ostream& o) { write_predictive(o, reps, obs, y); }, meta);
}

}  // namespace detail

inline void write_scenario_data(ArtifactWriter& aw, const std::string& dir, std::uint64_t seed,
                                const SimulatedScenario& sc) {
  std::ostringstream obs, grid;
  write_scenario_csv(obs, grid, sc);
  aw.csv(dir + "observations.csv", seed, [&](std::ostream& o) { o << obs.str(); });
  aw.csv(dir + "grid_truth.csv", seed, [&](std::ostream& o) { o << grid.str(); });
}

/// `simulate`: scenario data only.
inline int run_simulations(const io::RunConfig& cfg, std::ostream& log) {
  ArtifactWriter aw(cfg.output_dir, io::config_hash(cfg));
  const auto mesh = scenario_mesh(cfg);
  for (const auto& spec : cfg.scenarios) {
    write_scenario_data(aw, spec.name + "/", cfg.scenario_seed(spec), simulate(cfg, spec, *mesh));
    log << spec.name << ": simulated " << spec.n_obs << " observations\n";
  }
  return exit_ok;
}

inline void write_scenario_artifacts(ArtifactWriter& aw, const io::RunConfig& cfg, const ScenarioResult& r) {
  const std::string dir = r.spec.name + "/";
  write_scenario_data(aw, dir, r.seed, r.data);
  for (const MethodFit* f : {&r.regtps.fit, &r.spde.fit}) {
    detail::write_method_outputs(aw, dir, r.seed, *f, r.data.obs, r.data.y, cfg.predictive_replicates);
  }
  aw.csv(dir + "metrics.csv", r.seed, [&](std::ostream& o) { write_metrics_table(o, {r.regtps_metrics, r.spde_metrics}); });
  aw.csv(dir + "spectrum.csv", r.seed, [&](std::ostream& o) { write_spectrum_csv(o, r.spectrum); },
         {{"crossing_index", r.spectrum.crossing_index}, {"basis_size", r.spectrum.rows.size()},
          {"retained_modes", r.regtps.model->retained()}, {"level", r.spectrum.level}});
  aw.csv(dir + "covariance_difference.csv", r.seed,
         [&](std::ostream& o) { write_covariance_difference_csv(o, r.truth_cov, r.cov); },
         {{"max_abs_regtps_kle", r.cov.kle.max_abs}, {"frobenius_regtps_kle", r.cov.kle.frobenius},
          {"max_abs_spde", r.cov.spde.max_abs}, {"frobenius_spde", r.cov.spde.frobenius}});
  aw.csv(dir + "shrinkage.csv", r.seed, [&](std::ostream& o) {
    io::CsvWriter w(o);
    w.header({"k", "z_median", "prior_sd", "outside_band"});
    for (Eigen::Index k = 0; k < r.shrinkage.z_median.size(); ++k) {
      w.field(static_cast<long long>(k + 1)).field(r.shrinkage.z_median[k]).field(r.shrinkage.prior_sd[k]);
      w.field(std::abs(r.shrinkage.z_median[k]) > 2.0 * r.shrinkage.prior_sd[k]).end_row();
    }
  }, {{"alpha_median", r.shrinkage.alpha_median}, {"fraction_outside", r.shrinkage.fraction_outside}});
}

/// `fit`: every scenario, both methods, all artifacts plus run-level summaries.
/// Returns exit_gate when any hyperparameter misses the convergence gate.
inline int run_scenarios(const io::RunConfig& cfg, bool parallel, std::ostream& log) {
  ArtifactWriter aw(cfg.output_dir, io::config_hash(cfg));
  std::vector<std::optional<ScenarioResult>> results(cfg.scenarios.size());
  const auto work = [&](std::size_t k) { results[k].emplace(evaluate_scenario(cfg, cfg.scenarios[k])); };
  if (parallel) {
    std::vector<std::future<void>> jobs;
    for (std::size_t k = 0; k < cfg.scenarios.size(); ++k) jobs.push_back(std::async(std::launch::async, work, k));
    for (auto& j : jobs) j.get();
  } else {
    for (std::size_t k = 0; k < cfg.scenarios.size(); ++k) work(k);
  }

  std::vector<FitMetrics> summary;
  std::vector<detail::DiagnosticRow> diag;
  std::vector<std::string> failures;
  for (const auto& opt : results) {
    const ScenarioResult& r = *opt;
    write_scenario_artifacts(aw, cfg, r);
    summary.push_back(r.regtps_metrics);
    summary.push_back(r.spde_metrics);
    for (const MethodFit* f : {&r.regtps.fit, &r.spde.fit}) {
      const auto rows = detail::diagnostic_rows(r.spec.name, *f);
      diag.insert(diag.end(), rows.begin(), rows.end());
      for (const auto& m : f->gate.failures) failures.push_back(r.spec.name + " " + f->method + " " + m);
    }
    log << r.spec.name << ": " << regtps_label << " rmse " << r.regtps_metrics.rmse << ", " << spde_label << " rmse "
        << r.spde_metrics.rmse << '\n';
  }
  aw.csv("summary.csv", cfg.seed, [&](std::ostream& o) { write_metrics_table(o, summary); },
         {{"kernel", to_string(cfg.kernel.family)}});
  aw.csv("diagnostics.csv", cfg.seed, [&](std::ostream& o) { detail::write_diagnostics(o, diag); });
  if (!failures.empty()) {
    std::ofstream rep(std::filesystem::path(cfg.output_dir) / "gate_report.txt");
    for (const auto& f : failures) {
      rep << f << '\n';
      log << "convergence gate: " << f << '\n';
    }
    return exit_gate;
  }
  return exit_ok;
}

/// Square-root-scale value mapped back to concentration units. Negative
/// values on the root scale map to zero, which keeps quantiles ordered.
inline double back_transform(double v) { return v > 0.0 ? v * v : 0.0; }

struct StationResult {
  StationResult(io::StationTable t, PointSet g) : table(std::move(t)), grid(std::move(g)) {}

  io::StationTable table;
  PointSet grid;
  RegTpsFit regtps;
  SpdeFit spde;
  std::vector<LooComparisonRow> loo;
};

inline StationResult evaluate_stations(const io::RunConfig& cfg, io::StationTable table, bool parallel_chains = true) {
  if (table.size() < 30) {
    throw DataError("station analysis needs at least 30 stations, got " + std::to_string(table.size()));
  }
  const PointSet obs = table.locations();
  const Eigen::VectorXd y = table.values();
  const BoundingDomain box = BoundingDomain::enclosing(obs, cfg.stations.margin);
  StationResult r(std::move(table),
                  make_grid(BoundingDomain(box.min1, box.min2, box.max1, box.max2), cfg.stations.grid_resolution));
  const PriorConfig prior = cfg.prior.resolve(y, box.diameter());
  HmcConfig hmc = cfg.hmc(cfg.seed);
  hmc.parallel = parallel_chains;

  auto basis = std::make_shared<const TpsBasisSystem>(obs);
  r.regtps = fit_regtps(make_kle(basis, cfg), obs, y, r.grid, prior, hmc, cfg.gate());
  const TriMesh mesh = build_mesh(box, cfg.complexity.value_or(cfg.mesh_nodes));
  r.spde = fit_spde(mesh, obs, y, r.grid, prior, hmc, cfg.gate());
  r.loo = loo_compare({{regtps_label, loo_elpd(r.regtps.fit.draws.pooled_loglik())},
                       {spde_label, loo_elpd(r.spde.fit.draws.pooled_loglik())}});
  return r;
}

inline void write_surface(std::ostream& out, const PointSet& grid, const FieldDraws& f) {
  const Eigen::VectorXd lo = column_quantile(f.field, 0.025), med = column_median(f.field),
                        hi = column_quantile(f.field, 0.975);
  io::CsvWriter w(out);
  w.header({"x_km", "y_km", "q2.5_sqrt", "median_sqrt", "q97.5_sqrt", "q2.5", "median", "q97.5"});
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    w.field(grid[i].s1).field(grid[i].s2).field(lo[k]).field(med[k]).field(hi[k]);
    w.field(back_transform(lo[k])).field(back_transform(med[k])).field(back_transform(hi[k])).end_row();
  }
}

/// `stations`: both models on the root-transformed station means.
inline int run_station_analysis(const io::RunConfig& cfg, io::StationTable table, std::ostream& log) {
  ArtifactWriter aw(cfg.output_dir, io::config_hash(cfg));
  const StationResult r = evaluate_stations(cfg, std::move(table));
  const nlohmann::json proj = {{"projection", "equirectangular km"}, {"lon0", r.table.lon0}, {"lat0", r.table.lat0},
                               {"dropped_stations", r.table.dropped}};
  aw.csv("stations.csv", cfg.seed, [&](std::ostream& o) { io::write_station_table(o, r.table); }, proj);
  nlohmann::json surface_meta = proj;
  surface_meta["scale"] = "columns suffixed _sqrt are on the square-root scale; the others are max(0, v)^2 of them";
  std::vector<detail::DiagnosticRow> diag;
  bool passed = true;
  for (const MethodFit* f : {&r.regtps.fit, &r.spde.fit}) {
    detail::write_method_outputs(aw, "", cfg.seed, *f, r.table.locations(), r.table.values(), cfg.predictive_replicates,
                                 {{"scale", "square root"}});
    surface_meta["method"] = f->method;
    aw.csv("surface_" + detail::method_slug(f->method) + ".csv", cfg.seed,
           [&](std::ostream& o) { write_surface(o, r.grid, f->grid_field); }, surface_meta);
    const auto rows = detail::diagnostic_rows("stations", *f);
    diag.insert(diag.end(), rows.begin(), rows.end());
    for (const auto& m : f->gate.failures) log << "convergence gate: " << f->method << " " << m << '\n';
    passed = passed && f->gate.passed;
  }
  aw.csv("loo.csv", cfg.seed, [&](std::ostream& o) { write_loo_table(o, r.loo); });
  aw.csv("diagnostics.csv", cfg.seed, [&](std::ostream& o) { detail::write_diagnostics(o, diag); });
  log << r.table.size() << " stations; LOO best model " << r.loo.front().model << '\n';
  return passed ? exit_ok : exit_gate;
}

}  // namespace regtps::pipeline

#endif
