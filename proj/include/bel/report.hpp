#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "bel/estimates.hpp"
#include "bel/riccati.hpp"

namespace bel {

using Json = nlohmann::json;

inline Json num_or_null(double x) {
  if (std::isnan(x)) return nullptr;
  return x;
}
inline double num_from(const Json& j, double dflt = std::numeric_limits<double>::quiet_NaN()) {
  return j.is_null() ? dflt : j.get<double>();
}

inline Json to_json(const EstimateReport& r) {
  Json j;
  j["record"] = "estimate";
  j["v"] = 1;
  j["id"] = r.id;
  Json params = Json::object();
  for (auto& kv : r.params) params[kv.first] = num_or_null(kv.second);
  j["params"] = params;
  j["worst_margin"] = num_or_null(r.worst_margin);
  j["slack"] = r.slack;
  j["verdict"] = r.verdict;
  j["worst_location"] = {r.worst_location[0], r.worst_location[1], r.worst_location[2],
                         r.worst_location[3]};
  j["violation_ratio"] = num_or_null(r.violation_ratio);
  j["resolutions_checked"] = r.resolutions_checked;
  return j;
}

inline EstimateReport estimate_from_json(const Json& j) {
  EstimateReport r;
  r.id = j.at("id").get<std::string>();
  for (auto it = j.at("params").begin(); it != j.at("params").end(); ++it)
    r.params[it.key()] = num_from(it.value());
  r.worst_margin = num_from(j.at("worst_margin"));
  r.slack = j.at("slack").get<double>();
  r.verdict = j.at("verdict").get<std::string>();
  for (int i = 0; i < 4; ++i) r.worst_location[i] = j.at("worst_location")[i].get<double>();
  r.violation_ratio = num_from(j.at("violation_ratio"));
  r.resolutions_checked = j.at("resolutions_checked").get<int>();
  return r;
}

inline Json to_json(const ResidualReport& r) {
  Json j;
  j["record"] = "residual";
  j["v"] = 1;
  j["id"] = r.id;
  Json levels = Json::array();
  for (auto& l : r.levels)
    levels.push_back({{"h", l.h},
                      {"sup", l.sup},
                      {"l2", l.l2},
                      {"scale", l.scale},
                      {"mask_fraction", l.mask_fraction}});
  j["levels"] = levels;
  j["orders"] = r.orders;
  j["order"] = num_or_null(std::isinf(r.order) ? std::numeric_limits<double>::quiet_NaN()
                                               : r.order);
  j["exact"] = r.exact;
  j["pass"] = r.pass;
  j["slack_finest"] = r.slack_finest;
  Json margins = Json::object();
  for (auto& kv : r.margins) margins[kv.first] = num_or_null(kv.second);
  j["margins"] = margins;
  return j;
}

inline ResidualReport residual_from_json(const Json& j) {
  ResidualReport r;
  r.id = j.at("id").get<std::string>();
  for (auto& l : j.at("levels"))
    r.levels.push_back({l.at("h").get<double>(), l.at("sup").get<double>(),
                        l.at("l2").get<double>(), l.at("scale").get<double>(),
                        l.at("mask_fraction").get<double>()});
  for (auto& o : j.at("orders")) r.orders.push_back(num_from(o));
  r.order = num_from(j.at("order"));
  r.exact = j.at("exact").get<bool>();
  r.pass = j.at("pass").get<bool>();
  r.slack_finest = j.at("slack_finest").get<double>();
  for (auto it = j.at("margins").begin(); it != j.at("margins").end(); ++it)
    r.margins[it.key()] = num_from(it.value());
  return r;
}

// ---------------------------------------------------------------------------
// exports
// ---------------------------------------------------------------------------

// plain-text grid dump: one line per point, coordinates then value
inline void write_grid_text(std::ostream& os, const Chart& ch, const GridTensor& u) {
  char buf[256];
  for_each_point(ch, [&](long p, const std::array<int, kMaxDim>&, const double* x) {
    int off = 0;
    for (int a = 0; a < ch.m; ++a)
      off += std::snprintf(buf + off, sizeof buf - off, "%.17g ", x[a]);
    for (int c = 0; c < u.ncomp; ++c)
      off += std::snprintf(buf + off, sizeof buf - off, "%.17g%s", u.at(p, c),
                           c + 1 == u.ncomp ? "\n" : " ");
    os << buf;
  });
}

// binary raster: ASCII header "belraster 1 <ncomp> <m> <n0> ... <nm-1>\n"
// followed by row-major (last axis fastest) little-endian float64 values
inline void write_raster(std::ostream& os, const GridTensor& u) {
  const Chart& ch = *u.chart;
  os << "belraster 1 " << u.ncomp << " " << ch.m;
  for (int a = 0; a < ch.m; ++a) os << " " << ch.grid.n[a];
  os << "\n";
  os.write(reinterpret_cast<const char*>(u.v.data()),
           std::streamsize(u.v.size() * sizeof(double)));
}

inline GridTensor read_raster(std::istream& is, const Chart& ch) {
  std::string magic;
  int version = 0, ncomp = 0, m = 0;
  is >> magic >> version >> ncomp >> m;
  if (magic != "belraster" || version != 1)
    throw Error(Error::Kind::config, "not a belraster v1 stream");
  if (m != ch.m) throw Error(Error::Kind::config, "raster dimension mismatch");
  for (int a = 0; a < m; ++a) {
    int n = 0;
    is >> n;
    if (n != ch.grid.n[a]) throw Error(Error::Kind::config, "raster shape mismatch");
  }
  is.get();  // newline
  int rank = 0, c = ncomp;
  while (c > 1) { c /= ch.m; ++rank; }
  GridTensor u(ch, rank);
  is.read(reinterpret_cast<char*>(u.v.data()), std::streamsize(u.v.size() * sizeof(double)));
  if (!is) throw Error(Error::Kind::config, "raster payload truncated");
  return u;
}

inline void write_columns(std::ostream& os, const std::vector<double>& a,
                          const std::vector<double>& b) {
  char buf[96];
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g\n", a[i], b[i]);
    os << buf;
  }
}

}  // namespace bel
