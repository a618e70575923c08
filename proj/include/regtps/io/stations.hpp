#ifndef REGTPS_IO_STATIONS_HPP
#define REGTPS_IO_STATIONS_HPP

#include <cmath>
#include <numbers>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "regtps/error.hpp"
#include "regtps/geometry.hpp"
#include "regtps/io/csv.hpp"

namespace regtps::io {

enum class StationFormat { auto_detect, hourly, annual };

inline StationFormat station_format_from_string(const std::string& s) {
  if (s == "auto") return StationFormat::auto_detect;
  if (s == "hourly") return StationFormat::hourly;
  if (s == "annual") return StationFormat::annual;
  throw ConfigError("unknown station format '" + s + "'");
}

struct Station {
  std::string id;
  double lon = 0.0;
  double lat = 0.0;
  double x_km = 0.0;
  double y_km = 0.0;
  double value = 0.0;  // square root of the mean of the valid records
  int records = 0;     // valid records
  int missing = 0;     // negative or NA records
};

struct StationTable {
  std::vector<Station> stations;
  std::vector<std::string> dropped;  // stations without a single valid record
  double lon0 = 0.0;
  double lat0 = 0.0;

  std::size_t size() const { return stations.size(); }

  PointSet locations() const {
    std::vector<Point2> p;
    p.reserve(stations.size());
    for (const auto& s : stations) p.push_back({s.x_km, s.y_km});
    return PointSet(std::move(p), PointRole::observation);
  }

  Eigen::VectorXd values() const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(stations.size()));
    for (std::size_t i = 0; i < stations.size(); ++i) v[static_cast<Eigen::Index>(i)] = stations[i].value;
    return v;
  }
};

inline constexpr double earth_radius_km = 6371.0088;

/// Equirectangular projection about (lon0, lat0), in km. Adequate at
/// country scale; distances drift by about 1% per 100 km of latitude span.
inline Point2 equirectangular_km(double lon, double lat, double lon0, double lat0) {
  constexpr double deg = std::numbers::pi / 180.0;
  return {earth_radius_km * (lon - lon0) * deg * std::cos(lat0 * deg), earth_radius_km * (lat - lat0) * deg};
}

/// Read station records. Hourly rows carry a timestamp column; annual rows
/// carry one value per station. Negative or NA values count as missing, the
/// remainder are averaged per station and square-root transformed.
inline StationTable ingest_stations(std::istream& in, StationFormat format = StationFormat::auto_detect,
                                    std::ostream* log = nullptr) {
  const CsvTable t = read_csv(in);
  for (const char* col : {"station_id", "lon", "lat", "value"}) t.index(col);
  if (format == StationFormat::auto_detect) {
    format = t.has("timestamp") ? StationFormat::hourly : StationFormat::annual;
  } else if (format == StationFormat::hourly) {
    t.index("timestamp");
  }
  const std::size_t ci = t.index("station_id"), clon = t.index("lon"), clat = t.index("lat"), cv = t.index("value");

  struct Acc {
    Station st;
    double sum = 0.0;
  };
  std::vector<Acc> acc;
  std::unordered_map<std::string, std::size_t> where;
  std::size_t lineno = 1;
  for (const auto& row : t.rows) {
    ++lineno;
    const std::string ctx = "line " + std::to_string(lineno);
    const std::string& id = row[ci];
    if (id.empty()) throw DataError(ctx + ": empty station_id");
    const double lon = parse_double(row[clon], ctx), lat = parse_double(row[clat], ctx);
    if (!std::isfinite(lon) || !std::isfinite(lat) || std::abs(lat) > 90.0 || std::abs(lon) > 180.0) {
      throw DataError(ctx + ": invalid coordinates for station " + id);
    }
    auto [it, fresh] = where.try_emplace(id, acc.size());
    if (fresh) {
      acc.push_back({});
      acc.back().st.id = id;
      acc.back().st.lon = lon;
      acc.back().st.lat = lat;
    } else {
      if (format == StationFormat::annual) throw DataError(ctx + ": duplicate station " + id + " in annual data");
      const auto& s = acc[it->second].st;
      if (std::abs(s.lon - lon) > 1e-9 || std::abs(s.lat - lat) > 1e-9) {
        throw DataError(ctx + ": station " + id + " changes coordinates");
      }
    }
    Acc& a = acc[it->second];
    const double v = parse_double(row[cv], ctx);
    if (std::isnan(v) || v < 0.0) {
      ++a.st.missing;
    } else {
      ++a.st.records;
      a.sum += v;
    }
  }

  StationTable out;
  for (auto& a : acc) {
    if (a.st.records == 0) {
      out.dropped.push_back(a.st.id);
      continue;
    }
    a.st.value = std::sqrt(a.sum / a.st.records);
    out.stations.push_back(a.st);
  }
  if (log && !out.dropped.empty()) {
    *log << "dropped " << out.dropped.size() << " station(s) with no valid records\n";
  }
  if (out.stations.empty()) throw DataError("no station has a valid record");

  for (const auto& s : out.stations) {
    out.lon0 += s.lon;
    out.lat0 += s.lat;
  }
  out.lon0 /= static_cast<double>(out.stations.size());
  out.lat0 /= static_cast<double>(out.stations.size());
  for (auto& s : out.stations) {
    const Point2 p = equirectangular_km(s.lon, s.lat, out.lon0, out.lat0);
    s.x_km = p.s1;
    s.y_km = p.s2;
  }
  return out;
}

inline StationTable ingest_stations_file(const std::string& path, StationFormat format = StationFormat::auto_detect,
                                         std::ostream* log = nullptr) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return ingest_stations(in, format, log);
}

inline void write_station_table(std::ostream& out, const StationTable& t) {
  CsvWriter w(out);
  w.header({"station_id", "lon", "lat", "x_km", "y_km", "sqrt_value", "records", "missing"});
  for (const auto& s : t.stations) {
    w.field(s.id).field(s.lon).field(s.lat).field(s.x_km).field(s.y_km).field(s.value);
    w.field(s.records).field(s.missing).end_row();
  }
}

}  // namespace regtps::io

#endif
