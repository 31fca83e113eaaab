#include "chargecast/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "chargecast/baseline.hpp"
#include "chargecast/config.hpp"
#include "chargecast/csv.hpp"
#include "chargecast/graph.hpp"
#include "chargecast/ingest.hpp"
#include "chargecast/lgm.hpp"
#include "chargecast/mesh.hpp"
#include "chargecast/metrics.hpp"

namespace chargecast {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string fd(double v) { return csv::format_double(v); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

fs::path prepare_out(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw InputError("cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw InputError("missing input file " + p.string());
}

void copy_input(const fs::path& from, const fs::path& to) {
  require_file(from);
  if (fs::exists(to) && fs::equivalent(from, to)) return;
  fs::copy_file(from, to, fs::copy_options::overwrite_existing);
}

Eigen::MatrixX2d station_lonlat(const ingest::StationTable& stations, const std::vector<std::string>& cpids) {
  Eigen::MatrixX2d ll(static_cast<Eigen::Index>(cpids.size()), 2);
  for (std::size_t i = 0; i < cpids.size(); ++i) {
    const auto it = stations.find(cpids[i]);
    if (it == stations.end()) throw InputError("no station metadata for CPID '" + cpids[i] + "'");
    ll(static_cast<Eigen::Index>(i), 0) = it->second.lon;
    ll(static_cast<Eigen::Index>(i), 1) = it->second.lat;
  }
  return ll;
}

graph::AdjacencyGraph spatial_graph(const Eigen::MatrixX2d& lonlat, int k) {
  if (lonlat.rows() < 2) throw InputError("the spatial graph needs at least two stations");
  const int kk = std::min<int>(k, static_cast<int>(lonlat.rows()) - 1);
  return graph::bridge_components(graph::knn_graph(mesh::project_coords(lonlat).xy, kk));
}

lgm::LatentModel build_model(const Config& c, lgm::SpatialKind kind, const ingest::ModelFrame& frame,
                             const ingest::StationTable& stations) {
  const Eigen::MatrixX2d ll = station_lonlat(stations, frame.cpids);
  if (kind == lgm::SpatialKind::ICAR) return lgm::assemble_icar(frame, spatial_graph(ll, c.knn_k), ll, c.priors);
  return lgm::assemble_spde(frame, mesh::build_mesh(mesh::project_coords(ll), c.mesh), ll, c.priors);
}

/// Rows of frame whose CPID is in known; the rest are counted in dropped.
ingest::ModelFrame known_rows(const ingest::ModelFrame& frame, const std::set<std::string>& known,
                              std::size_t& dropped) {
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < frame.rows(); ++r)
    if (known.count(frame.row_cpid(r))) keep.push_back(r);
  dropped = frame.rows() - keep.size();
  return ingest::subset_rows(frame, keep);
}

Date split_day(const Config& c, const std::vector<ingest::DailyPanelRow>& panel) {
  if (c.split_date) return *c.split_date;
  std::set<Date> days;
  for (const auto& r : panel) days.insert(r.day);
  if (days.size() < 2) throw InputError("need at least two days of data to split");
  const std::vector<Date> d(days.begin(), days.end());
  auto idx = static_cast<std::size_t>(std::floor(c.split_fraction * static_cast<double>(d.size())));
  idx = std::clamp<std::size_t>(idx, 1, d.size() - 1);
  return d[idx];
}

// --- keyed rows for scoring --------------------------------------------------------------

using RowKey = std::pair<std::string, std::string>;  // cpid, day

std::map<RowKey, double> read_keyed(const fs::path& path, std::initializer_list<const char*> value_columns) {
  const auto t = csv::read_file(path);
  const int cp = t.require("cpid", path.string());
  const int dy = t.require("day", path.string());
  int val = -1;
  for (const char* name : value_columns)
    if ((val = t.find(name)) >= 0) break;
  if (val < 0) throw InputError(path.string() + ": missing column '" + *value_columns.begin() + "'");
  std::map<RowKey, double> out;
  for (const auto& row : t.rows) {
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(row[static_cast<std::size_t>(val)], &used);
      if (used != row[static_cast<std::size_t>(val)].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw InputError(path.string() + ": bad value '" + row[static_cast<std::size_t>(val)] + "'");
    }
    if (!std::isfinite(v)) throw InputError(path.string() + ": non-finite value");
    RowKey key{row[static_cast<std::size_t>(cp)], row[static_cast<std::size_t>(dy)]};
    if (!out.emplace(key, v).second)
      throw InputError(path.string() + ": duplicate row for " + key.first + " on " + key.second);
  }
  return out;
}

struct Scored {
  std::vector<std::string> cpid;
  std::vector<double> y, yhat;
};

Scored join(const std::map<RowKey, double>& truth, const std::map<RowKey, double>& pred,
            const std::set<RowKey>* restrict = nullptr) {
  Scored s;
  for (const auto& [k, y] : truth) {
    if (restrict && !restrict->count(k)) continue;
    const auto it = pred.find(k);
    if (it == pred.end()) continue;
    s.cpid.push_back(k.first);
    s.y.push_back(y);
    s.yhat.push_back(it->second);
  }
  if (s.y.empty()) throw InputError("predictions and truth share no (cpid, day) rows");
  return s;
}

ordered_json metrics_json(const eval::StationMetrics& m) {
  ordered_json j;
  j["cpid"] = m.cpid;
  j["n"] = m.n;
  j["mae"] = m.mae;
  j["rmse"] = m.rmse;
  j["mape"] = std::isnan(m.mape) ? ordered_json(nullptr) : ordered_json(m.mape);
  j["mape_skipped"] = m.mape_skipped;
  return j;
}

void write_metric_rows(std::ostream& out, const eval::MetricTable& t) {
  auto row = [&](const eval::StationMetrics& m) {
    out << csv::escape(t.model) << ',' << csv::escape(m.cpid) << ',' << m.n << ',' << fd(m.mae) << ','
        << fd(m.rmse) << ',' << fd(m.mape) << ',' << m.mape_skipped << '\n';
  };
  for (const auto& m : t.stations) row(m);
  row(t.pooled);
}

std::string default_label(const fs::path& p) { return p.stem().string(); }

// --- subcommands -------------------------------------------------------------------------

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";

  Config load() const {
    Config c = config_path.empty() ? Config{} : load_config(config_path);
    if (seed) c.seed = *seed;
    return c;
  }
};

int cmd_ingest(const Globals& g) {
  const Config c = g.load();
  if (c.session_files.empty()) throw InputError("ingest: the config lists no session files (data.sessions)");
  if (c.stations_file.empty()) throw InputError("ingest: the config names no station file (data.stations)");
  if (c.weather_file.empty()) throw InputError("ingest: the config names no weather file (data.weather)");
  const fs::path out = prepare_out(g.out);

  std::vector<ingest::RawSessionRecord> raw;
  for (const auto& f : c.session_files) {
    auto part = ingest::read_sessions(f, c.columns);
    raw.insert(raw.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  const ingest::StationTable stations = ingest::read_stations(c.stations_file);
  const ingest::WeatherTable weather = ingest::read_weather(c.weather_file);

  auto [sessions, report] = ingest::curate(raw, c.curation);
  const auto agg = ingest::aggregate_daily(sessions, stations, c.zero_fill, c.curation.excluded_windows);
  if (agg.rows.empty()) throw InputError("ingest: no session-day records remain after curation");
  const Date split = split_day(c, agg.rows);
  auto built = ingest::build_frame(agg.rows, weather, split);
  auto [train, test] = ingest::temporal_split(built.frame, split);

  ingest::StationTable used;
  std::set<Date> days;
  long total = 0;
  std::size_t nonzero = 0;
  for (const auto& r : agg.rows) {
    used.emplace(r.cpid, stations.at(r.cpid));
    days.insert(r.day);
    total += r.y;
    nonzero += r.y > 0;
  }

  ingest::write_panel(out / "panel.csv", agg.rows);
  ingest::write_frame(out / "frame.csv", built.frame);
  ingest::write_frame(out / "train_frame.csv", train);
  ingest::write_frame(out / "test_frame.csv", test);
  ingest::write_stations(out / "stations_used.csv", used);
  write_text(out / "curation_report.json", report.to_json());

  ordered_json s;
  s["cpids"] = used.size();
  s["days"] = days.size();
  s["first_day"] = format_date(*days.begin());
  s["last_day"] = format_date(*days.rbegin());
  s["sessions"] = total;
  s["session_day_records"] = agg.rows.size();
  s["nonzero_records"] = nonzero;
  s["zero_fill"] = std::string(ingest::to_string(c.zero_fill));
  s["curated_sessions"] = sessions.size();
  s["dropped_unknown_cpid"] = agg.dropped_unknown_cpid;
  s["unknown_cpids"] = agg.unknown_cpids;
  s["split_date"] = format_date(split);
  s["train_rows"] = train.rows();
  s["test_rows"] = test.rows();
  s["spline_knots"] = {{"lower", built.spline.lower()},
                       {"interior", built.spline.interior_knots()},
                       {"upper", built.spline.upper()}};
  write_text(out / "ingest_summary.json", s.dump(2) + "\n");
  std::cout << "ingest: " << used.size() << " CPIDs, " << days.size() << " days, " << total << " sessions, "
            << agg.rows.size() << " session-day records -> " << out.string() << '\n';
  return 0;
}

int cmd_mesh(const Globals& g, const std::string& data) {
  const Config c = g.load();
  const fs::path out = prepare_out(g.out);
  const auto stations = ingest::read_stations(fs::path(data) / "stations_used.csv");
  std::vector<std::string> cpids;
  for (const auto& [id, meta] : stations) cpids.push_back(id);
  const Eigen::MatrixX2d ll = station_lonlat(stations, cpids);

  const mesh::Mesh m = mesh::build_mesh(mesh::project_coords(ll), c.mesh);
  const mesh::MeshAudit a = mesh::audit_mesh(m);
  mesh::write_mesh_csv(out / "mesh_vertices.csv", out / "mesh_triangles.csv", m);
  mesh::write_mesh_geojson(out / "mesh.geojson", m);

  const graph::AdjacencyGraph gr = spatial_graph(ll, c.knn_k);
  graph::write_edge_list(out / "graph_edges.csv", gr);
  graph::write_adjacency(out / "graph_adjacency.txt", gr);

  ordered_json j;
  j["vertices"] = m.vertex_count();
  j["triangles"] = m.triangles.size();
  j["sites"] = m.n_sites;
  j["inner_edge_limit_m"] = c.mesh.inner_edge;
  j["outer_edge_limit_m"] = c.mesh.outer_edge;
  j["cutoff_m"] = c.mesh.cutoff;
  j["max_inner_edge_m"] = a.max_inner_edge;
  j["max_outer_edge_m"] = a.max_outer_edge;
  j["min_triangle_area_m2"] = a.min_area;
  j["min_site_distance_m"] = a.min_site_distance;
  j["delaunay_violations"] = a.delaunay_violations;
  j["graph"] = {{"nodes", gr.n_nodes},
                {"edges", gr.edges.size()},
                {"bridge_edges", gr.bridge_edges.size()},
                {"components_before_bridging",
                 graph::knn_graph(mesh::project_coords(ll).xy, std::min<int>(c.knn_k, gr.n_nodes - 1))
                     .component_count()}};
  write_text(out / "mesh_audit.json", j.dump(2) + "\n");
  std::cout << "mesh: " << m.vertex_count() << " vertices, " << m.triangles.size() << " triangles; graph "
            << gr.edges.size() << " edges -> " << out.string() << '\n';
  return 0;
}

int cmd_fit(const Globals& g, const std::string& spatial_name, const std::string& data) {
  const Config c = g.load();
  const lgm::SpatialKind kind = lgm::parse_spatial_kind(spatial_name);
  const fs::path dir(data);
  const fs::path out = prepare_out(g.out);
  require_file(dir / "train_frame.csv");
  const ingest::ModelFrame train = ingest::read_frame(dir / "train_frame.csv");
  const ingest::StationTable stations = ingest::read_stations(dir / "stations_used.csv");

  const lgm::LatentModel model = build_model(c, kind, train, stations);
  const lgm::HyperGrid grid = lgm::explore_grid(model.core, model.default_theta(), c.grid);

  std::optional<ingest::ModelFrame> test;
  std::size_t dropped = 0;
  if (fs::is_regular_file(dir / "test_frame.csv")) {
    const std::set<std::string> known(train.cpids.begin(), train.cpids.end());
    test = known_rows(ingest::read_frame(dir / "test_frame.csv"), known, dropped);
    if (test->rows() == 0) test.reset();
  }
  const lgm::FitOutputs res = lgm::analyze(model, grid, c.criteria_samples, c.seed, test ? &*test : nullptr);

  write_text(out / "summary.json", res.summary.to_json());
  lgm::write_grid(out / "grid.csv", model, grid);
  lgm::write_latent(out, model, res.summary);
  if (test) lgm::write_predictions(out / "predictions.csv", res.predictions);
  write_text(out / "config.json", config_to_json(c));
  copy_input(dir / "train_frame.csv", out / "train_frame.csv");
  copy_input(dir / "stations_used.csv", out / "stations.csv");

  ordered_json j;
  j["spatial"] = std::string(lgm::to_string(kind));
  j["train_rows"] = train.rows();
  j["latent_dim"] = model.latent_dim();
  j["predicted_rows"] = test ? test->rows() : 0;
  j["test_rows_unknown_cpid"] = dropped;
  write_text(out / "fit.json", j.dump(2) + "\n");
  std::cout << "fit (" << lgm::to_string(kind) << "): DIC " << res.summary.criteria.dic << ", WAIC "
            << res.summary.criteria.waic << " -> " << out.string() << '\n';
  return 0;
}

int cmd_predict(const Globals& g, const std::string& fit_dir, const std::string& frame_path) {
  const fs::path dir(fit_dir);
  require_file(dir / "fit.json");
  require_file(dir / "config.json");
  require_file(dir / "grid.csv");
  ordered_json manifest;
  {
    std::ifstream in(dir / "fit.json");
    try {
      in >> manifest;
    } catch (const nlohmann::json::exception&) {
      throw InputError((dir / "fit.json").string() + ": invalid JSON");
    }
  }
  if (!manifest.contains("spatial") || !manifest["spatial"].is_string())
    throw InputError((dir / "fit.json").string() + ": missing 'spatial'");
  const Config c = load_config(dir / "config.json");
  const lgm::SpatialKind kind = lgm::parse_spatial_kind(manifest["spatial"].get<std::string>());
  const ingest::ModelFrame train = ingest::read_frame(dir / "train_frame.csv");
  const ingest::StationTable stations = ingest::read_stations(dir / "stations.csv");
  const lgm::LatentModel model = build_model(c, kind, train, stations);
  const lgm::HyperGrid grid = lgm::grid_from_points(lgm::read_grid(dir / "grid.csv"));
  if (grid.mode.size() != model.core.hyper_dim()) throw InputError("grid.csv does not match the fitted model");

  const ingest::ModelFrame frame = ingest::read_frame(frame_path);
  const auto rows = lgm::predict(model, grid, frame);
  const fs::path out = prepare_out(g.out);
  lgm::write_predictions(out / "predictions.csv", rows);
  std::cout << "predict: " << rows.size() << " rows -> " << (out / "predictions.csv").string() << '\n';
  return 0;
}

int cmd_baseline(const Globals& g, const std::string& data, const std::string& frame_path) {
  const fs::path dir(data);
  const fs::path out = prepare_out(g.out);
  require_file(dir / "train_frame.csv");
  const ingest::ModelFrame train = ingest::read_frame(dir / "train_frame.csv");
  const auto fits = baseline::fit_all_stations(train);

  std::ofstream f(out / "baseline_fits.csv");
  if (!f) throw InputError("cannot write " + (out / "baseline_fits.csv").string());
  f << "cpid,column,estimate,se,rows,intercept_only,converged,iterations,deviance\n";
  for (const auto& [cpid, sf] : fits)
    for (std::size_t j = 0; j < sf.columns.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      f << csv::escape(cpid) << ',' << train.column_names[static_cast<std::size_t>(sf.columns[j])] << ','
        << fd(sf.fit.beta(jj)) << ',' << fd(std::sqrt(std::max(0.0, sf.fit.covariance(jj, jj)))) << ','
        << sf.rows << ',' << (sf.intercept_only ? 1 : 0) << ',' << (sf.fit.converged ? 1 : 0) << ','
        << sf.fit.iterations << ',' << fd(sf.fit.deviance) << '\n';
    }

  const fs::path target = frame_path.empty() ? dir / "test_frame.csv" : fs::path(frame_path);
  require_file(target);
  ingest::ModelFrame frame = ingest::read_frame(target);
  std::size_t dropped = 0;
  if (frame_path.empty()) {
    std::set<std::string> known;
    for (const auto& [cpid, sf] : fits) known.insert(cpid);
    frame = known_rows(frame, known, dropped);
  }
  const auto preds = baseline::predict_stations(fits, frame);
  baseline::write_baseline_predictions(out / "baseline_predictions.csv", preds);
  std::cout << "baseline: " << fits.size() << " station fits, " << preds.size() << " predictions";
  if (dropped) std::cout << " (" << dropped << " rows of unseen CPIDs skipped)";
  std::cout << " -> " << out.string() << '\n';
  return 0;
}

int cmd_evaluate(const Globals& g, const std::string& pred_path, const std::string& truth_path, std::string label) {
  if (label.empty()) label = default_label(pred_path);
  const auto truth = read_keyed(truth_path, {"y", "y_true"});
  const auto pred = read_keyed(pred_path, {"mean"});
  const Scored s = join(truth, pred);
  const eval::MetricTable t = eval::metric_table(label, s.cpid, s.y, s.yhat);

  const fs::path out = prepare_out(g.out);
  std::ofstream csvout(out / "metrics.csv");
  if (!csvout) throw InputError("cannot write " + (out / "metrics.csv").string());
  csvout << "model,cpid,n,mae,rmse,mape,mape_skipped\n";
  write_metric_rows(csvout, t);

  ordered_json j;
  j["model"] = label;
  j["rows_scored"] = s.y.size();
  j["truth_rows_without_prediction"] = truth.size() - s.y.size();
  j["prediction_rows_without_truth"] = pred.size() - s.y.size();
  j["pooled"] = metrics_json(t.pooled);
  j["stations"] = ordered_json::array();
  for (const auto& m : t.stations) j["stations"].push_back(metrics_json(m));
  write_text(out / "metrics.json", j.dump(2) + "\n");
  std::cout << "evaluate (" << label << "): MAE " << t.pooled.mae << ", RMSE " << t.pooled.rmse << ", MAPE "
            << t.pooled.mape << " over " << s.y.size() << " rows -> " << out.string() << '\n';
  return 0;
}

int cmd_benchmark(const Globals& g, const std::string& truth_path, const std::vector<std::string>& preds,
                  std::vector<std::string> labels) {
  if (preds.empty()) throw InputError("benchmark: give at least one --predictions file");
  if (!labels.empty() && labels.size() != preds.size())
    throw InputError("benchmark: --label must be given once per --predictions file or not at all");
  if (labels.empty()) {
    for (const auto& p : preds) labels.push_back(default_label(p));
    std::map<std::string, int> seen;
    for (const auto& l : labels) ++seen[l];
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (seen[labels[i]] > 1) labels[i] = fs::path(preds[i]).parent_path().filename().string() + "/" + labels[i];
  }
  {
    std::map<std::string, int> count;
    for (auto& l : labels)
      if (++count[l] > 1) l += "#" + std::to_string(count[l]);
  }

  const auto truth = read_keyed(truth_path, {"y", "y_true"});
  std::vector<std::map<RowKey, double>> pred_rows;
  for (const auto& p : preds) pred_rows.push_back(read_keyed(p, {"mean"}));
  // score every model on the rows all of them cover
  std::set<RowKey> common;
  for (const auto& [k, v] : truth) {
    bool all = true;
    for (const auto& pr : pred_rows) all = all && pr.count(k);
    if (all) common.insert(k);
  }
  if (common.empty()) throw InputError("benchmark: no (cpid, day) row is covered by every prediction file");

  std::vector<eval::MetricTable> tables;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Scored s = join(truth, pred_rows[i], &common);
    tables.push_back(eval::metric_table(labels[i], s.cpid, s.y, s.yhat));
  }

  const fs::path out = prepare_out(g.out);
  {
    std::ofstream f(out / "metrics_long.csv");
    if (!f) throw InputError("cannot write " + (out / "metrics_long.csv").string());
    f << "station,model,metric,value\n";
    std::map<std::string, std::vector<std::pair<std::string, const eval::StationMetrics*>>> by_station;
    for (const auto& t : tables)
      for (const auto& m : t.stations) by_station[m.cpid].emplace_back(t.model, &m);
    auto emit = [&](const std::string& station, std::vector<std::pair<std::string, const eval::StationMetrics*>> rows) {
      std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      for (const auto& [model, m] : rows) {
        f << csv::escape(station) << ',' << csv::escape(model) << ",MAE," << fd(m->mae) << '\n';
        f << csv::escape(station) << ',' << csv::escape(model) << ",MAPE," << fd(m->mape) << '\n';
        f << csv::escape(station) << ',' << csv::escape(model) << ",RMSE," << fd(m->rmse) << '\n';
      }
    };
    for (const auto& [station, rows] : by_station) emit(station, rows);
    std::vector<std::pair<std::string, const eval::StationMetrics*>> pooled;
    for (const auto& t : tables) pooled.emplace_back(t.model, &t.pooled);
    emit("ALL", pooled);
  }
  {
    std::ofstream f(out / "metrics.csv");
    if (!f) throw InputError("cannot write " + (out / "metrics.csv").string());
    f << "model,cpid,n,mae,rmse,mape,mape_skipped\n";
    for (const auto& t : tables) write_metric_rows(f, t);
  }

  ordered_json dj = ordered_json::array();
  std::ofstream dcsv(out / "dominance.csv");
  if (!dcsv) throw InputError("cannot write " + (out / "dominance.csv").string());
  dcsv << "model_a,model_b,metric,stations,wins_a,wins_b,ties,pct_a,pct_b\n";
  for (std::size_t a = 0; a < tables.size(); ++a)
    for (std::size_t b = a + 1; b < tables.size(); ++b) {
      const eval::DominanceResult d = eval::dominance(tables[a], tables[b]);
      ordered_json pj;
      pj["model_a"] = d.model_a;
      pj["model_b"] = d.model_b;
      pj["stations"] = d.stations;
      pj["metrics"] = ordered_json::array();
      for (const auto& e : d.metrics) {
        const int n = e.wins_a + e.wins_b + e.ties;
        dcsv << csv::escape(d.model_a) << ',' << csv::escape(d.model_b) << ',' << e.metric << ',' << n << ','
             << e.wins_a << ',' << e.wins_b << ',' << e.ties << ',' << fd(e.pct_a) << ',' << fd(e.pct_b) << '\n';
        pj["metrics"].push_back({{"metric", e.metric},
                                 {"stations", n},
                                 {"wins_a", e.wins_a},
                                 {"wins_b", e.wins_b},
                                 {"ties", e.ties},
                                 {"pct_a", e.pct_a},
                                 {"pct_b", e.pct_b}});
      }
      dj.push_back(pj);
    }
  ordered_json root;
  root["models"] = labels;
  root["rows_scored"] = common.size();
  root["comparisons"] = dj;
  write_text(out / "dominance.json", root.dump(2) + "\n");
  std::cout << "benchmark: " << tables.size() << " models over " << common.size() << " rows -> " << out.string()
            << '\n';
  return 0;
}

int cmd_eda(const Globals& g, const std::string& data) {
  const Config c = g.load();
  const fs::path dir(data);
  require_file(dir / "panel.csv");
  const auto panel = ingest::read_panel(dir / "panel.csv");
  if (panel.empty()) throw InputError("eda: the panel is empty");
  const fs::path out = prepare_out(g.out);
  {
    std::ofstream f(out / "weekday_summary.csv");
    if (!f) throw InputError("cannot write " + (out / "weekday_summary.csv").string());
    f << "weekday,name,days,mean,lo95,hi95\n";
    for (const auto& w : eval::weekday_summary(panel, c.bootstrap_samples, c.seed))
      f << w.weekday << ',' << weekday_name(w.weekday) << ',' << w.days << ',' << fd(w.ci.mean) << ','
        << fd(w.ci.lo) << ',' << fd(w.ci.hi) << '\n';
  }
  {
    std::ofstream f(out / "sessions_vs_chargers.csv");
    if (!f) throw InputError("cannot write " + (out / "sessions_vs_chargers.csv").string());
    f << "month,sessions,active_chargers\n";
    for (const auto& m : eval::sessions_vs_chargers(panel))
      f << m.month << ',' << m.sessions << ',' << m.active_chargers << '\n';
  }
  std::cout << "eda -> " << out.string() << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"chargecast: spatio-temporal forecasting of daily charging sessions"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "random seed (overrides the config)");
  app.add_option("--out", g.out, "output directory")->capture_default_str();

  auto* ingest_cmd = app.add_subcommand("ingest", "curate raw sessions into the daily panel and model frames");
  std::string data;
  auto* mesh_cmd = app.add_subcommand("mesh", "build the triangulation and the kNN graph");
  mesh_cmd->add_option("--data", data, "ingest output directory")->required();

  auto* fit_cmd = app.add_subcommand("fit", "fit the latent Gaussian model");
  std::string spatial;
  fit_cmd->add_option("--spatial", spatial, "spatial effect")->required()->check(CLI::IsMember({"icar", "spde"}));
  fit_cmd->add_option("--data", data, "ingest output directory")->required();

  auto* predict_cmd = app.add_subcommand("predict", "predict a frame from a fit directory");
  std::string fit_dir, frame;
  predict_cmd->add_option("--fit", fit_dir, "fit output directory")->required();
  predict_cmd->add_option("--frame", frame, "frame CSV")->required()->check(CLI::ExistingFile);

  auto* baseline_cmd = app.add_subcommand("baseline", "per-station Poisson GLM");
  baseline_cmd->add_option("--data", data, "ingest output directory")->required();
  baseline_cmd->add_option("--frame", frame, "frame to predict (default: the test frame)")
      ->check(CLI::ExistingFile);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "score predictions against observed counts");
  std::string pred, truth, label;
  evaluate_cmd->add_option("--predictions", pred, "CSV with cpid,day,mean")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--truth", truth, "CSV with cpid,day,y")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--label", label, "model label");

  auto* bench_cmd = app.add_subcommand("benchmark", "compare several prediction files");
  std::vector<std::string> preds, labels;
  bench_cmd->add_option("--truth", truth, "CSV with cpid,day,y")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--predictions", preds, "prediction CSV (repeatable)")
      ->required()
      ->check(CLI::ExistingFile)
      ->allow_extra_args(false);
  bench_cmd->add_option("--label", labels, "model label per predictions file")->allow_extra_args(false);

  auto* eda_cmd = app.add_subcommand("eda", "weekday and monthly activity summaries");
  eda_cmd->add_option("--data", data, "ingest output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*ingest_cmd) return cmd_ingest(g);
    if (*mesh_cmd) return cmd_mesh(g, data);
    if (*fit_cmd) return cmd_fit(g, spatial, data);
    if (*predict_cmd) return cmd_predict(g, fit_dir, frame);
    if (*baseline_cmd) return cmd_baseline(g, data, frame);
    if (*evaluate_cmd) return cmd_evaluate(g, pred, truth, label);
    if (*bench_cmd) return cmd_benchmark(g, truth, preds, labels);
    if (*eda_cmd) return cmd_eda(g, data);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace chargecast
