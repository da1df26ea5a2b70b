#pragma once

#include <filesystem>
#include <fstream>

#include <yaml-cpp/yaml.h>

#include "bel/report.hpp"

namespace bel {

struct RunConfig {
  CatalogSpec manifold;
  SetupSpec setup;
  std::uint64_t seed = 1;
  double slack_scale = 1.0;
  std::string out_dir;
  bool parallel = false;
  std::vector<Json> checks;
};

inline CatalogSpec catalog_spec_from_json(const Json& j) {
  CatalogSpec s;
  s.name = j.at("name").get<std::string>();
  s.m = j.value("m", 2);
  if (j.at("shape").is_array())
    for (auto& v : j.at("shape")) s.shape.push_back(v.get<int>());
  else
    s.shape.push_back(j.at("shape").get<int>());
  s.side = j.value("side", 1.0);
  s.radius = j.value("radius", 1.0);
  s.theta_min = j.value("theta_min", 0.3);
  s.box = j.value("box", 4.0);
  s.disk_box = j.value("disk_box", 0.55);
  if (j.contains("bc")) {
    for (auto& b : j.at("bc")) {
      const std::string k = b.get<std::string>();
      if (k == "periodic") s.bc_override.push_back(Bc::periodic);
      else if (k == "dirichlet") s.bc_override.push_back(Bc::dirichlet);
      else if (k == "neumann") s.bc_override.push_back(Bc::neumann);
      else throw Error(Error::Kind::config, "unknown boundary kind '" + k + "'");
    }
  }
  return s;
}

inline SetupSpec setup_spec_from_json(const Json& j) {
  if (j.is_string()) {
    const std::string k = j.get<std::string>();
    if (k == "zero") return SetupSpec::zero();
    if (k == "rotation") return SetupSpec::rotation();
    throw Error(Error::Kind::config, "unknown setup '" + k + "'");
  }
  const double n = j.value("n", 0.0);
  if (j.contains("gradient")) return SetupSpec::gradient(Expr::parse(j.at("gradient").get<std::string>()), n);
  if (j.contains("components")) {
    std::vector<Expr> comps;
    for (auto& c : j.at("components")) comps.push_back(Expr::parse(c.get<std::string>()));
    return SetupSpec::components(std::move(comps), n);
  }
  const std::string kind = j.value("kind", "zero");
  if (kind == "zero") return SetupSpec::zero(n);
  if (kind == "rotation") return SetupSpec::rotation(n);
  throw Error(Error::Kind::config, "unparseable setup spec");
}

inline RunConfig config_from_json(const Json& j) {
  RunConfig cfg;
  cfg.manifold = catalog_spec_from_json(j.at("manifold"));
  cfg.setup = j.contains("setup") ? setup_spec_from_json(j.at("setup")) : SetupSpec::zero();
  cfg.seed = j.value("seed", std::uint64_t(1));
  cfg.slack_scale = j.value("slack_scale", 1.0);
  cfg.out_dir = j.value("out", std::string());
  cfg.parallel = j.value("parallel", false);
  if (j.contains("checks"))
    for (auto& c : j.at("checks")) cfg.checks.push_back(c);
  return cfg;
}

inline Json yaml_to_json(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Null: return nullptr;
    case YAML::NodeType::Scalar: {
      // try bool, integer, double, then string
      const std::string& s = n.Scalar();
      if (s == "true") return true;
      if (s == "false") return false;
      try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos == s.size()) return v;
      } catch (...) {}
      try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos == s.size()) return v;
      } catch (...) {}
      return s;
    }
    case YAML::NodeType::Sequence: {
      Json a = Json::array();
      for (auto it = n.begin(); it != n.end(); ++it) a.push_back(yaml_to_json(*it));
      return a;
    }
    case YAML::NodeType::Map: {
      Json o = Json::object();
      for (auto it = n.begin(); it != n.end(); ++it)
        o[it->first.as<std::string>()] = yaml_to_json(it->second);
      return o;
    }
    default: return nullptr;
  }
}

// Config files: JSON or YAML, dispatched on extension.
inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Error::Kind::config, "cannot open config file '" + path + "'");
  const std::string ext = std::filesystem::path(path).extension().string();
  Json j;
  if (ext == ".yaml" || ext == ".yml") {
    j = yaml_to_json(YAML::Load(in));
  } else if (ext == ".json") {
    in >> j;
  } else {
    throw Error(Error::Kind::config, "config must be .json, .yaml or .yml");
  }
  return config_from_json(j);
}

}  // namespace bel
