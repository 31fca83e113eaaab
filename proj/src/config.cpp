#include "chargecast/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "chargecast/common.hpp"

namespace chargecast {

namespace {

using nlohmann::json;

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw InputError("config: '" + where + "' must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw InputError("config: unknown key '" + where + "." + k + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError("config: bad value for '" + where + "." + key + "'");
  }
}

Date read_date(const json& j, const std::string& where) {
  if (!j.is_string()) throw InputError("config: '" + where + "' must be a YYYY-MM-DD string");
  const auto d = parse_iso_date(j.get<std::string>());
  if (!d) throw InputError("config: bad date '" + j.get<std::string>() + "' at '" + where + "'");
  return *d;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string_view policy_name(ingest::DatePolicy p) { return ingest::to_string(p); }

}  // namespace

Config parse_config(std::string_view text, const std::filesystem::path& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("config: invalid JSON: ") + e.what());
  }
  Config c;
  only_keys(j, "", {"data", "curation", "panel", "split", "graph", "mesh", "priors", "inference", "seed", "bootstrap"});
  if (j.contains("data")) {
    const json& d = j["data"];
    only_keys(d, "data", {"sessions", "stations", "weather", "columns"});
    if (d.contains("sessions")) {
      const json& s = d["sessions"];
      if (s.is_string())
        c.session_files.push_back(resolve(base, s.get<std::string>()));
      else if (s.is_array())
        for (const auto& f : s) {
          if (!f.is_string()) throw InputError("config: 'data.sessions' entries must be strings");
          c.session_files.push_back(resolve(base, f.get<std::string>()));
        }
      else
        throw InputError("config: 'data.sessions' must be a path or a list of paths");
    }
    if (d.contains("stations")) c.stations_file = resolve(base, d["stations"].get<std::string>());
    if (d.contains("weather")) c.weather_file = resolve(base, d["weather"].get<std::string>());
    if (d.contains("columns")) {
      const json& col = d["columns"];
      only_keys(col, "data.columns", {"cpid", "start_date", "start_time", "end_date", "end_time", "duration", "energy",
                                      "cost", "site", "local_authority"});
      auto& m = c.columns;
      read(col, "cpid", m.cpid, "data.columns");
      read(col, "start_date", m.start_date, "data.columns");
      read(col, "start_time", m.start_time, "data.columns");
      read(col, "end_date", m.end_date, "data.columns");
      read(col, "end_time", m.end_time, "data.columns");
      read(col, "duration", m.duration, "data.columns");
      read(col, "energy", m.energy, "data.columns");
      read(col, "cost", m.cost, "data.columns");
      read(col, "site", m.site, "data.columns");
      read(col, "local_authority", m.local_authority, "data.columns");
    }
  }
  if (j.contains("curation")) {
    const json& cu = j["curation"];
    only_keys(cu, "curation", {"capacity_cap_kwh", "tariff_cap_gbp", "excluded_cpids", "excluded_windows", "date_policy"});
    read(cu, "capacity_cap_kwh", c.curation.capacity_cap_kwh, "curation");
    read(cu, "tariff_cap_gbp", c.curation.tariff_cap_gbp, "curation");
    read(cu, "excluded_cpids", c.curation.excluded_cpids, "curation");
    if (cu.contains("excluded_windows")) {
      if (!cu["excluded_windows"].is_array()) throw InputError("config: 'curation.excluded_windows' must be a list");
      for (const auto& w : cu["excluded_windows"]) {
        only_keys(w, "curation.excluded_windows[]", {"first", "last"});
        if (!w.contains("first") || !w.contains("last"))
          throw InputError("config: excluded windows need 'first' and 'last'");
        ingest::DateWindow dw{read_date(w["first"], "first"), read_date(w["last"], "last")};
        if (dw.last < dw.first) throw InputError("config: excluded window ends before it starts");
        c.curation.excluded_windows.push_back(dw);
      }
    }
    if (cu.contains("date_policy")) c.curation.date_policy = ingest::parse_date_policy(cu["date_policy"].get<std::string>());
    if (!(c.curation.capacity_cap_kwh > 0) || !(c.curation.tariff_cap_gbp > 0))
      throw InputError("config: curation caps must be positive");
  }
  if (j.contains("panel")) {
    only_keys(j["panel"], "panel", {"zero_fill"});
    if (j["panel"].contains("zero_fill")) c.zero_fill = ingest::parse_zero_fill(j["panel"]["zero_fill"].get<std::string>());
  }
  if (j.contains("split")) {
    const json& s = j["split"];
    only_keys(s, "split", {"date", "fraction"});
    if (s.contains("date") && s.contains("fraction")) throw InputError("config: give split.date or split.fraction, not both");
    if (s.contains("date")) c.split_date = read_date(s["date"], "split.date");
    if (s.contains("fraction")) c.split_date.reset();
    read(s, "fraction", c.split_fraction, "split");
    if (!(c.split_fraction > 0 && c.split_fraction < 1)) throw InputError("config: split.fraction must lie in (0, 1)");
  }
  if (j.contains("graph")) {
    only_keys(j["graph"], "graph", {"knn_k"});
    read(j["graph"], "knn_k", c.knn_k, "graph");
    if (c.knn_k < 1) throw InputError("config: graph.knn_k must be >= 1");
  }
  if (j.contains("mesh")) {
    const json& m = j["mesh"];
    only_keys(m, "mesh", {"inner_edge_m", "outer_edge_m", "cutoff_m", "max_vertices"});
    read(m, "inner_edge_m", c.mesh.inner_edge, "mesh");
    read(m, "outer_edge_m", c.mesh.outer_edge, "mesh");
    read(m, "cutoff_m", c.mesh.cutoff, "mesh");
    read(m, "max_vertices", c.mesh.max_vertices, "mesh");
  }
  if (j.contains("priors")) {
    const json& p = j["priors"];
    only_keys(p, "priors", {"fixed_precision", "rw2_a", "rw2_b", "icar_a", "icar_b", "spde_theta1_mean", "spde_theta1_sd",
                            "spde_theta2_mean", "spde_theta2_sd", "jitter"});
    auto& q = c.priors;
    read(p, "fixed_precision", q.fixed_precision, "priors");
    read(p, "rw2_a", q.rw2_a, "priors");
    read(p, "rw2_b", q.rw2_b, "priors");
    read(p, "icar_a", q.icar_a, "priors");
    read(p, "icar_b", q.icar_b, "priors");
    read(p, "spde_theta1_mean", q.spde_theta1_mean, "priors");
    read(p, "spde_theta1_sd", q.spde_theta1_sd, "priors");
    read(p, "spde_theta2_mean", q.spde_theta2_mean, "priors");
    read(p, "spde_theta2_sd", q.spde_theta2_sd, "priors");
    read(p, "jitter", q.jitter, "priors");
    q.validate();
  }
  if (j.contains("inference")) {
    const json& in = j["inference"];
    only_keys(in, "inference", {"simplex_tol", "simplex_step", "max_evaluations", "fd_step", "half_width",
                                "points_per_axis", "criteria_samples"});
    read(in, "simplex_tol", c.grid.simplex_tol, "inference");
    read(in, "simplex_step", c.grid.simplex_step, "inference");
    read(in, "max_evaluations", c.grid.max_evaluations, "inference");
    read(in, "fd_step", c.grid.fd_step, "inference");
    read(in, "half_width", c.grid.half_width, "inference");
    read(in, "points_per_axis", c.grid.points_per_axis, "inference");
    read(in, "criteria_samples", c.criteria_samples, "inference");
    if (c.grid.points_per_axis < 1 || c.criteria_samples < 0 || !(c.grid.fd_step > 0) || !(c.grid.simplex_tol > 0))
      throw InputError("config: bad inference settings");
  }
  if (j.contains("bootstrap")) {
    only_keys(j["bootstrap"], "bootstrap", {"samples"});
    read(j["bootstrap"], "samples", c.bootstrap_samples, "bootstrap");
    if (c.bootstrap_samples < 1) throw InputError("config: bootstrap.samples must be >= 1");
  }
  read(j, "seed", c.seed, "");
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string config_to_json(const Config& c) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json windows = nlohmann::ordered_json::array();
  for (const auto& w : c.curation.excluded_windows)
    windows.push_back({{"first", format_date(w.first)}, {"last", format_date(w.last)}});
  j["curation"] = {{"capacity_cap_kwh", c.curation.capacity_cap_kwh},
                   {"tariff_cap_gbp", c.curation.tariff_cap_gbp},
                   {"excluded_cpids", c.curation.excluded_cpids},
                   {"excluded_windows", windows},
                   {"date_policy", std::string(policy_name(c.curation.date_policy))}};
  j["panel"] = {{"zero_fill", std::string(ingest::to_string(c.zero_fill))}};
  if (c.split_date)
    j["split"] = {{"date", format_date(*c.split_date)}};
  else
    j["split"] = {{"fraction", c.split_fraction}};
  j["graph"] = {{"knn_k", c.knn_k}};
  j["mesh"] = {{"inner_edge_m", c.mesh.inner_edge},
               {"outer_edge_m", c.mesh.outer_edge},
               {"cutoff_m", c.mesh.cutoff},
               {"max_vertices", c.mesh.max_vertices}};
  const auto& p = c.priors;
  j["priors"] = {{"fixed_precision", p.fixed_precision}, {"rw2_a", p.rw2_a},
                 {"rw2_b", p.rw2_b},                     {"icar_a", p.icar_a},
                 {"icar_b", p.icar_b},                   {"spde_theta1_mean", p.spde_theta1_mean},
                 {"spde_theta1_sd", p.spde_theta1_sd},   {"spde_theta2_mean", p.spde_theta2_mean},
                 {"spde_theta2_sd", p.spde_theta2_sd},   {"jitter", p.jitter}};
  j["inference"] = {{"simplex_tol", c.grid.simplex_tol},         {"simplex_step", c.grid.simplex_step},
                    {"max_evaluations", c.grid.max_evaluations}, {"fd_step", c.grid.fd_step},
                    {"half_width", c.grid.half_width},           {"points_per_axis", c.grid.points_per_axis},
                    {"criteria_samples", c.criteria_samples}};
  j["bootstrap"] = {{"samples", c.bootstrap_samples}};
  j["seed"] = c.seed;
  return j.dump(2) + "\n";
}

}  // namespace chargecast
