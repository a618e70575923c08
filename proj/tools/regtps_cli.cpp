// Command-line entry point: simulate, fit, stations, report.

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "regtps/regtps.hpp"

namespace {

using namespace regtps;
namespace pl = regtps::pipeline;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool parallel = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON run configuration (defaults when omitted)");
  app->add_option("--out", c.out, "output directory, overrides output_dir");
  app->add_option("--seed", c.seed, "run seed, overrides seed");
  app->add_flag("--parallel", c.parallel, "run scenarios concurrently");
}

io::RunConfig resolve(const Common& c) {
  io::RunConfig cfg = c.config.empty() ? io::RunConfig{} : io::load_config(c.config);
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

int report(const io::RunConfig& cfg) {
  const auto dir = std::filesystem::path(cfg.output_dir);
  bool any = false;
  for (const char* name : {"summary.csv", "loo.csv", "diagnostics.csv"}) {
    const auto path = dir / name;
    if (!std::filesystem::exists(path)) continue;
    any = true;
    const auto t = io::read_csv_file(path.string());
    std::cout << "== " << name << '\n';
    std::vector<std::size_t> width(t.columns.size());
    for (std::size_t j = 0; j < t.columns.size(); ++j) width[j] = t.columns[j].size();
    for (const auto& row : t.rows) {
      for (std::size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], std::min<std::size_t>(row[j].size(), 12));
    }
    const auto print = [&](const std::vector<std::string>& cells) {
      for (std::size_t j = 0; j < cells.size(); ++j) {
        std::string s = cells[j];
        if (s.size() > 12) {
          try {
            std::ostringstream o;
            o << std::setprecision(6) << std::stod(s);
            s = o.str();
          } catch (const std::exception&) {
          }
        }
        std::cout << std::left << std::setw(static_cast<int>(width[j]) + 2) << s;
      }
      std::cout << '\n';
    };
    print(t.columns);
    for (const auto& row : t.rows) print(row);
  }
  if (!any) throw DataError("no summary.csv, loo.csv or diagnostics.csv in " + dir.string());
  return pl::exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regularized thin-plate-spline KLE and SPDE spatial models"};
  app.require_subcommand(1);
  Common c;
  auto* sim = app.add_subcommand("simulate", "simulate scenario data");
  auto* fit = app.add_subcommand("fit", "simulate, fit both models and evaluate every scenario");
  auto* st = app.add_subcommand("stations", "fit both models to station data");
  auto* rep = app.add_subcommand("report", "print the summary tables of an output directory");
  for (auto* s : {sim, fit, st, rep}) add_common(s, c);
  std::string station_path;
  st->add_option("--input", station_path, "station CSV, overrides stations.path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : pl::exit_config;
  }

  try {
    io::RunConfig cfg = resolve(c);
    if (sim->parsed()) return pl::run_simulations(cfg, std::clog);
    if (fit->parsed()) return pl::run_scenarios(cfg, c.parallel, std::clog);
    if (st->parsed()) {
      if (!station_path.empty()) cfg.stations.path = station_path;
      if (cfg.stations.path.empty()) throw ConfigError("no station file: set stations.path or --input");
      auto table = io::ingest_stations_file(cfg.stations.path, io::station_format_from_string(cfg.stations.format),
                                            &std::clog);
      return pl::run_station_analysis(cfg, std::move(table), std::clog);
    }
    return report(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return pl::exit_config;
  } catch (const InputError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return pl::exit_config;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return pl::exit_data;
  } catch (const SamplingError& e) {
    std::cerr << "sampling failed: " << e.what() << '\n';
    return pl::exit_gate;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
