#ifndef REGTPS_IO_CONFIG_HPP
#define REGTPS_IO_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <tuple>
#include <string>
#include <vector>

#include <json.hpp>

#include "regtps/diagnostics.hpp"
#include "regtps/error.hpp"
#include "regtps/geometry.hpp"
#include "regtps/hmc.hpp"
#include "regtps/kernels.hpp"
#include "regtps/priors.hpp"
#include "regtps/tps_basis.hpp"

namespace regtps {

inline constexpr const char* version = "0.1.0";

namespace io {

struct ScenarioSpec {
  std::string name;
  int n_obs = 50;
  std::optional<std::uint64_t> seed;  // falls back to the run seed

  friend bool operator==(const ScenarioSpec&, const ScenarioSpec&) = default;
};

/// Prior settings; unset scales are derived from the data at fit time.
struct PriorOverrides {
  double log_alpha_mean = 0.0;
  double log_alpha_sd = 2.0;
  std::optional<double> sigma_rate;
  std::optional<double> sigma_e_scale;
  std::optional<double> rho0;
  double p_rho = 0.05;
  std::optional<double> sigma0;
  double p_sigma = 0.05;

  friend bool operator==(const PriorOverrides&, const PriorOverrides&) = default;

  PriorConfig resolve(const Eigen::VectorXd& y, double domain_diameter) const {
    PriorConfig p = PriorConfig::from_data(y, domain_diameter);
    p.log_alpha_mean = log_alpha_mean;
    p.log_alpha_sd = log_alpha_sd;
    if (sigma_rate) p.sigma_rate = *sigma_rate;
    if (sigma_e_scale) p.sigma_e_scale = *sigma_e_scale;
    if (rho0) p.pc.rho0 = *rho0;
    if (sigma0) p.pc.sigma0 = *sigma0;
    p.pc.p_rho = p_rho;
    p.pc.p_sigma = p_sigma;
    p.validate();
    return p;
  }
};

struct SamplerSettings {
  int chains = 4;
  int warmup = 1000;
  int draws = 1000;
  double target_accept = 0.8;
  double path_length = 6.0;
  double jitter = 0.5;
  int max_steps = 512;

  friend bool operator==(const SamplerSettings&, const SamplerSettings&) = default;

  HmcConfig hmc(std::uint64_t seed) const {
    HmcConfig c;
    c.chains = chains;
    c.warmup = warmup;
    c.draws = draws;
    c.seed = seed;
    c.target_accept = target_accept;
    c.path_length = path_length;
    c.jitter = jitter;
    c.max_steps = max_steps;
    return c;
  }
};

struct StationSettings {
  std::string path;
  std::string format = "auto";  // auto, hourly or annual
  int grid_resolution = 40;
  double margin = 0.1;  // mesh extension beyond the station bounding box

  friend bool operator==(const StationSettings&, const StationSettings&) = default;
};

struct RunConfig {
  BoundingDomain domain{0.0, 0.0, 1.0, 1.0, 0.2};
  std::vector<ScenarioSpec> scenarios{{"sce1", 50, {}}, {"sce2", 100, {}}, {"sce3", 150, {}}, {"sce4", 200, {}}};
  KernelSpec kernel = KernelSpec::matern(1.0, 0.3, 1.5);
  double sigma_e = 0.2;
  int mesh_nodes = 114;
  int grid_resolution = 30;
  double variance_fraction = 0.95;
  double alpha_ref = 1.0;
  std::optional<int> complexity;  // KLE modes and mesh nodes together
  PriorOverrides prior;
  SamplerSettings sampler;
  double gate_rhat = 1.05;
  double gate_ess = 100.0;
  int predictive_replicates = 100;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  StationSettings stations;

  bool operator==(const RunConfig& o) const {
    const auto dom = [](const BoundingDomain& d) { return std::tie(d.min1, d.min2, d.max1, d.max2, d.margin); };
    return dom(domain) == dom(o.domain) && scenarios == o.scenarios && kernel == o.kernel &&
           sigma_e == o.sigma_e && mesh_nodes == o.mesh_nodes && grid_resolution == o.grid_resolution &&
           variance_fraction == o.variance_fraction && alpha_ref == o.alpha_ref && complexity == o.complexity &&
           prior == o.prior && sampler == o.sampler && gate_rhat == o.gate_rhat && gate_ess == o.gate_ess &&
           predictive_replicates == o.predictive_replicates && seed == o.seed && output_dir == o.output_dir &&
           stations == o.stations;
  }

  ConvergenceGate gate() const { return {gate_rhat, gate_ess}; }
  HmcConfig hmc(std::uint64_t s) const { return sampler.hmc(s); }
  std::uint64_t scenario_seed(const ScenarioSpec& sc) const { return sc.seed.value_or(seed); }

  void validate() const {
    const auto fail = [](const std::string& m) { throw ConfigError(m); };
    try {
      domain.validate();
      kernel.validate();
      sampler.hmc(seed).validate();
      prior.resolve(Eigen::VectorXd::Ones(1), domain.diameter());
    } catch (const InputError& e) {
      fail(e.what());
    }
    if (scenarios.empty()) fail("at least one scenario is required");
    std::set<std::string> names;
    for (const auto& s : scenarios) {
      if (s.name.empty() || s.name.find_first_of("/\\") != std::string::npos) fail("bad scenario name '" + s.name + "'");
      if (!names.insert(s.name).second) fail("duplicate scenario name '" + s.name + "'");
      if (s.n_obs < 10) fail("scenario " + s.name + " needs at least 10 observations");
    }
    if (!(sigma_e >= 0.0) || !std::isfinite(sigma_e)) fail("sigma_e must be >= 0");
    if (mesh_nodes < 9) fail("mesh_nodes must be at least 9");
    if (grid_resolution < 2) fail("grid_resolution must be at least 2");
    if (!(variance_fraction > 0.0 && variance_fraction <= 1.0)) fail("variance_fraction must lie in (0, 1]");
    if (!(alpha_ref > 0.0) || !std::isfinite(alpha_ref)) fail("alpha_ref must be positive");
    if (complexity && *complexity < 9) fail("complexity must be at least 9");
    if (!(gate_rhat >= 1.0) || !(gate_ess > 0.0)) fail("gate thresholds must be rhat >= 1 and ess > 0");
    if (predictive_replicates < 1) fail("predictive_replicates must be positive");
    if (output_dir.empty()) fail("output_dir must not be empty");
    if (stations.format != "auto" && stations.format != "hourly" && stations.format != "annual") {
      fail("stations.format must be auto, hourly or annual");
    }
    if (stations.grid_resolution < 2) fail("stations.grid_resolution must be at least 2");
    if (!(stations.margin >= 0.0)) fail("stations.margin must be >= 0");
  }
};

namespace detail {

using nlohmann::json;

inline void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : keys) ok = ok || k == a;
    if (!ok) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

template <class T>
void read(const json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
  } else {
    out = j.at(key).get<T>();
  }
}

template <class T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  json scen = json::array();
  for (const auto& s : c.scenarios) scen.push_back({{"name", s.name}, {"n_obs", s.n_obs}, {"seed", detail::opt(s.seed)}});
  json kernel = {{"family", to_string(c.kernel.family)}, {"sigma_u", c.kernel.sigma_u}, {"rho", c.kernel.rho}};
  if (c.kernel.nu) kernel["nu"] = *c.kernel.nu;
  return {
      {"domain", {{"min", {c.domain.min1, c.domain.min2}}, {"max", {c.domain.max1, c.domain.max2}}, {"margin", c.domain.margin}}},
      {"scenarios", scen},
      {"kernel", kernel},
      {"sigma_e", c.sigma_e},
      {"mesh_nodes", c.mesh_nodes},
      {"grid_resolution", c.grid_resolution},
      {"kle", {{"variance_fraction", c.variance_fraction}, {"alpha_ref", c.alpha_ref}}},
      {"complexity", detail::opt(c.complexity)},
      {"prior",
       {{"log_alpha_mean", c.prior.log_alpha_mean},
        {"log_alpha_sd", c.prior.log_alpha_sd},
        {"sigma_rate", detail::opt(c.prior.sigma_rate)},
        {"sigma_e_scale", detail::opt(c.prior.sigma_e_scale)},
        {"rho0", detail::opt(c.prior.rho0)},
        {"p_rho", c.prior.p_rho},
        {"sigma0", detail::opt(c.prior.sigma0)},
        {"p_sigma", c.prior.p_sigma}}},
      {"sampler",
       {{"chains", c.sampler.chains},
        {"warmup", c.sampler.warmup},
        {"draws", c.sampler.draws},
        {"target_accept", c.sampler.target_accept},
        {"path_length", c.sampler.path_length},
        {"jitter", c.sampler.jitter},
        {"max_steps", c.sampler.max_steps}}},
      {"gate", {{"rhat", c.gate_rhat}, {"ess", c.gate_ess}}},
      {"predictive_replicates", c.predictive_replicates},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"stations",
       {{"path", c.stations.path},
        {"format", c.stations.format},
        {"grid_resolution", c.stations.grid_resolution},
        {"margin", c.stations.margin}}},
  };
}

/// Parse and validate. Absent keys keep their defaults; unknown keys are errors.
inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::allow_keys;
  using detail::read;
  RunConfig c;
  try {
    allow_keys(j, "config",
               {"domain", "scenarios", "kernel", "sigma_e", "mesh_nodes", "grid_resolution", "kle", "complexity",
                "prior", "sampler", "gate", "predictive_replicates", "seed", "output_dir", "stations"});
    if (j.contains("domain")) {
      const auto& d = j.at("domain");
      allow_keys(d, "domain", {"min", "max", "margin"});
      if (d.contains("min")) {
        const auto v = d.at("min").get<std::vector<double>>();
        if (v.size() != 2) throw ConfigError("domain.min needs two numbers");
        c.domain.min1 = v[0];
        c.domain.min2 = v[1];
      }
      if (d.contains("max")) {
        const auto v = d.at("max").get<std::vector<double>>();
        if (v.size() != 2) throw ConfigError("domain.max needs two numbers");
        c.domain.max1 = v[0];
        c.domain.max2 = v[1];
      }
      read(d, "margin", c.domain.margin);
    }
    if (j.contains("scenarios")) {
      const auto& arr = j.at("scenarios");
      if (!arr.is_array()) throw ConfigError("scenarios must be an array");
      c.scenarios.clear();
      for (const auto& s : arr) {
        allow_keys(s, "scenario", {"name", "n_obs", "seed"});
        ScenarioSpec sc;
        if (!s.contains("name") || !s.contains("n_obs")) throw ConfigError("each scenario needs name and n_obs");
        read(s, "name", sc.name);
        read(s, "n_obs", sc.n_obs);
        read(s, "seed", sc.seed);
        c.scenarios.push_back(sc);
      }
    }
    if (j.contains("kernel")) {
      const auto& k = j.at("kernel");
      allow_keys(k, "kernel", {"family", "sigma_u", "rho", "nu"});
      if (k.contains("family")) {
        c.kernel.family = kernel_family_from_string(k.at("family").get<std::string>());
        if (c.kernel.family != KernelFamily::matern) c.kernel.nu.reset();
      }
      read(k, "sigma_u", c.kernel.sigma_u);
      read(k, "rho", c.kernel.rho);
      read(k, "nu", c.kernel.nu);
    }
    read(j, "sigma_e", c.sigma_e);
    read(j, "mesh_nodes", c.mesh_nodes);
    read(j, "grid_resolution", c.grid_resolution);
    if (j.contains("kle")) {
      const auto& k = j.at("kle");
      allow_keys(k, "kle", {"variance_fraction", "alpha_ref"});
      read(k, "variance_fraction", c.variance_fraction);
      read(k, "alpha_ref", c.alpha_ref);
    }
    read(j, "complexity", c.complexity);
    if (j.contains("prior")) {
      const auto& p = j.at("prior");
      allow_keys(p, "prior",
                 {"log_alpha_mean", "log_alpha_sd", "sigma_rate", "sigma_e_scale", "rho0", "p_rho", "sigma0", "p_sigma"});
      read(p, "log_alpha_mean", c.prior.log_alpha_mean);
      read(p, "log_alpha_sd", c.prior.log_alpha_sd);
      read(p, "sigma_rate", c.prior.sigma_rate);
      read(p, "sigma_e_scale", c.prior.sigma_e_scale);
      read(p, "rho0", c.prior.rho0);
      read(p, "p_rho", c.prior.p_rho);
      read(p, "sigma0", c.prior.sigma0);
      read(p, "p_sigma", c.prior.p_sigma);
    }
    if (j.contains("sampler")) {
      const auto& s = j.at("sampler");
      allow_keys(s, "sampler", {"chains", "warmup", "draws", "target_accept", "path_length", "jitter", "max_steps"});
      read(s, "chains", c.sampler.chains);
      read(s, "warmup", c.sampler.warmup);
      read(s, "draws", c.sampler.draws);
      read(s, "target_accept", c.sampler.target_accept);
      read(s, "path_length", c.sampler.path_length);
      read(s, "jitter", c.sampler.jitter);
      read(s, "max_steps", c.sampler.max_steps);
    }
    if (j.contains("gate")) {
      const auto& g = j.at("gate");
      allow_keys(g, "gate", {"rhat", "ess"});
      read(g, "rhat", c.gate_rhat);
      read(g, "ess", c.gate_ess);
    }
    read(j, "predictive_replicates", c.predictive_replicates);
    read(j, "seed", c.seed);
    read(j, "output_dir", c.output_dir);
    if (j.contains("stations")) {
      const auto& s = j.at("stations");
      allow_keys(s, "stations", {"path", "format", "grid_resolution", "margin"});
      read(s, "path", c.stations.path);
      read(s, "format", c.stations.format);
      read(s, "grid_resolution", c.stations.grid_resolution);
      read(s, "margin", c.stations.margin);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline std::string serialize_config(const RunConfig& c) { return to_json(c).dump(2); }

/// FNV-1a over the canonical (key-sorted, compact) serialization.
inline std::uint64_t config_hash(const RunConfig& c) {
  const std::string s = to_json(c).dump();
  return regtps::detail::fnv1a(s.data(), s.size());
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace io
}  // namespace regtps

#endif
