#include "chargecast/lgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "chargecast/common.hpp"
#include "chargecast/csv.hpp"

namespace chargecast::lgm {

namespace {

constexpr double kZ975 = 1.959963984540054;

double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// Frame rows reordered by (cpid, day, y, X row) so results do not depend on input order.
ingest::ModelFrame canonical(const ingest::ModelFrame& f) {
  const std::size_t n = f.rows();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (f.cpid_index[a] != f.cpid_index[b]) return f.cpid_index[a] < f.cpid_index[b];
    if (f.day_index[a] != f.day_index[b]) return f.day_index[a] < f.day_index[b];
    if (f.y[a] != f.y[b]) return f.y[a] < f.y[b];
    for (Eigen::Index c = 0; c < f.X.cols(); ++c) {
      const double xa = f.X(static_cast<Eigen::Index>(a), c), xb = f.X(static_cast<Eigen::Index>(b), c);
      if (xa != xb) return xa < xb;
    }
    return false;
  });
  ingest::ModelFrame out;
  out.column_names = f.column_names;
  out.cpids = f.cpids;
  out.days = f.days;
  out.X.resize(f.X.rows(), f.X.cols());
  for (std::size_t i = 0; i < n; ++i) {
    out.y.push_back(f.y[idx[i]]);
    out.cpid_index.push_back(f.cpid_index[idx[i]]);
    out.day_index.push_back(f.day_index[idx[i]]);
    out.X.row(static_cast<Eigen::Index>(i)) = f.X.row(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

void check_frame(const ingest::ModelFrame& f) {
  const std::size_t n = f.rows();
  if (static_cast<std::size_t>(f.X.rows()) != n || f.cpid_index.size() != n || f.day_index.size() != n)
    throw InputError("model frame: inconsistent row counts");
  if (f.X.cols() < 1 || static_cast<std::size_t>(f.X.cols()) != f.column_names.size())
    throw InputError("model frame: design columns do not match their names");
  if (f.days.size() < 3) throw InputError("model frame: need at least 3 days for the RW2 effect");
  for (std::size_t r = 0; r < n; ++r) {
    if (f.cpid_index[r] < 0 || static_cast<std::size_t>(f.cpid_index[r]) >= f.cpids.size() || f.day_index[r] < 0 ||
        static_cast<std::size_t>(f.day_index[r]) >= f.days.size())
      throw InputError("model frame: row " + std::to_string(r) + " has an out-of-range index");
    if (f.y[r] < 0) throw InputError("model frame: negative count in row " + std::to_string(r));
  }
  if (!f.X.allFinite()) throw InputError("model frame: non-finite design values");
}

RowSparse build_incidence(const LatentModel& m, const ingest::ModelFrame& f, const std::vector<int>& day_of_row,
                          const std::vector<int>& cpid_of_row) {
  std::vector<Triplet> trips;
  for (std::size_t r = 0; r < f.rows(); ++r) {
    const auto ri = static_cast<int>(r);
    for (Eigen::Index c = 0; c < m.K; ++c) {
      const double v = f.X(static_cast<Eigen::Index>(r), c);
      if (v != 0.0) trips.emplace_back(ri, static_cast<int>(c), v);
    }
    trips.emplace_back(ri, static_cast<int>(m.time_offset()) + day_of_row[r], 1.0);
    for (RowSparse::InnerIterator it(m.station_weights, cpid_of_row[r]); it; ++it)
      trips.emplace_back(ri, static_cast<int>(m.space_offset() + it.col()), it.value());
  }
  RowSparse B(static_cast<Eigen::Index>(f.rows()), m.latent_dim());
  B.setFromTriplets(trips.begin(), trips.end());
  B.makeCompressed();
  return B;
}

LatentModel base_model(const ingest::ModelFrame& frame, const Eigen::MatrixX2d& station_lonlat,
                       const PriorSpec& priors) {
  priors.validate();
  check_frame(frame);
  if (station_lonlat.rows() != static_cast<Eigen::Index>(frame.cpids.size()))
    throw InputError("assemble: need one station coordinate per CPID");
  LatentModel m;
  m.priors = priors;
  m.frame = canonical(frame);
  m.K = frame.X.cols();
  m.n_t = static_cast<Eigen::Index>(frame.days.size());
  m.station_lonlat = station_lonlat;
  return m;
}

void finish_model(LatentModel& m, std::function<SparseMatrix(const Eigen::VectorXd&)> spatial_block,
                  std::function<double(const Eigen::VectorXd&)> spatial_prior, std::vector<std::string> names) {
  const ingest::ModelFrame& f = m.frame;
  std::vector<int> days(f.day_index.begin(), f.day_index.end());
  std::vector<int> cps(f.cpid_index.begin(), f.cpid_index.end());
  m.core.B = build_incidence(m, f, days, cps);
  m.core.y.resize(static_cast<Eigen::Index>(f.rows()));
  for (std::size_t r = 0; r < f.rows(); ++r) m.core.y(static_cast<Eigen::Index>(r)) = f.y[r];
  m.core.likelihood = Likelihood::Poisson;
  const Eigen::Index n = m.latent_dim();
  m.core.constraints = Eigen::MatrixXd::Zero(2, n);
  m.core.constraints.block(0, m.time_offset(), 1, m.n_t).setOnes();
  m.core.constraints.block(1, m.space_offset(), 1, m.m).setOnes();

  const auto R = std::make_shared<SparseMatrix>(graph::rw2_structure(static_cast<int>(m.n_t)).matrix);
  const PriorSpec pr = m.priors;
  const Eigen::Index K = m.K, nt = m.n_t;
  m.core.precision = [R, pr, K, nt, spatial_block](const Eigen::VectorXd& theta) {
    std::vector<SparseMatrix> blocks;
    blocks.push_back(sparse_identity(K, pr.fixed_precision));
    blocks.push_back(std::exp(theta(0)) * *R + sparse_identity(nt, pr.jitter));
    blocks.push_back(spatial_block(theta));
    SparseMatrix Q = block_diagonal(blocks);
    Q.makeCompressed();
    return Q;
  };
  m.core.log_hyperprior = [pr, spatial_prior](const Eigen::VectorXd& theta) {
    return graph::log_gamma_prior_logdensity(theta(0), pr.rw2_a, pr.rw2_b) + spatial_prior(theta);
  };
  m.core.hyper_names = std::move(names);

  m.core.initial_latent = Eigen::VectorXd::Zero(n);
  const int ic = f.column("intercept");
  if (ic >= 0 && f.rows() > 0) {
    double mean = 0.0;
    for (int y : f.y) mean += y;
    mean /= static_cast<double>(f.rows());
    m.core.initial_latent(ic) = std::log(std::max(mean, 1e-3));
  }
  m.core.validate();
}

/// Summary of exp(c' theta + c0) over the grid; quantiles from the normal on the log scale.
NamedSummary derived(const std::string& name, const HyperGrid& grid, const Eigen::VectorXd& c, double c0) {
  double lm = 0.0, l2 = 0.0, em = 0.0, e2 = 0.0;
  for (const auto& p : grid.points) {
    const double l = c.dot(p.theta) + c0;
    lm += p.weight * l;
    l2 += p.weight * l * l;
    em += p.weight * std::exp(l);
    e2 += p.weight * std::exp(2.0 * l);
  }
  const double lsd = std::sqrt(std::max(l2 - lm * lm, 0.0));
  NamedSummary s{name, {}};
  s.summary.mean = em;
  s.summary.sd = std::sqrt(std::max(e2 - em * em, 0.0));
  s.summary.q025 = std::exp(lm - kZ975 * lsd);
  s.summary.q975 = std::exp(lm + kZ975 * lsd);
  return s;
}

nlohmann::json summary_json(const MixtureSummary& s) {
  return {{"mean", s.mean}, {"sd", s.sd}, {"q025", s.q025}, {"q975", s.q975}};
}

}  // namespace

void PriorSpec::validate() const {
  if (!(fixed_precision > 0) || !(rw2_a > 0) || !(rw2_b > 0) || !(icar_a > 0) || !(icar_b > 0) ||
      !(spde_theta1_sd > 0) || !(spde_theta2_sd > 0) || !(jitter > 0))
    throw InputError("priors: precisions, Log-Gamma parameters, SDs and jitter must be positive");
}

std::string_view to_string(SpatialKind k) { return k == SpatialKind::ICAR ? "icar" : "spde"; }

SpatialKind parse_spatial_kind(std::string_view s) {
  if (s == "icar") return SpatialKind::ICAR;
  if (s == "spde") return SpatialKind::SPDE;
  throw InputError("unknown spatial model '" + std::string(s) + "' (expected icar or spde)");
}

LatentModel assemble_icar(const ingest::ModelFrame& frame, const graph::AdjacencyGraph& g,
                          const Eigen::MatrixX2d& station_lonlat, const PriorSpec& priors) {
  LatentModel m = base_model(frame, station_lonlat, priors);
  if (g.n_nodes != static_cast<int>(frame.cpids.size()))
    throw InputError("assemble_icar: graph has " + std::to_string(g.n_nodes) + " nodes for " +
                     std::to_string(frame.cpids.size()) + " CPIDs");
  m.spatial = SpatialKind::ICAR;
  m.graph = g;
  m.m = g.n_nodes;
  m.station_weights = RowSparse(sparse_identity(m.m));
  m.node_lonlat = station_lonlat;
  const auto S = std::make_shared<SparseMatrix>(graph::icar_structure(g).matrix);
  const PriorSpec pr = m.priors;
  const Eigen::Index nodes = m.m;
  finish_model(
      m, [S, pr, nodes](const Eigen::VectorXd& t) { return SparseMatrix(std::exp(t(1)) * *S + sparse_identity(nodes, pr.jitter)); },
      [pr](const Eigen::VectorXd& t) { return graph::log_gamma_prior_logdensity(t(1), pr.icar_a, pr.icar_b); },
      {"theta_t", "log_tau_icar"});
  return m;
}

LatentModel assemble_spde(const ingest::ModelFrame& frame, const mesh::Mesh& msh,
                          const Eigen::MatrixX2d& station_lonlat, const PriorSpec& priors) {
  LatentModel m = base_model(frame, station_lonlat, priors);
  m.spatial = SpatialKind::SPDE;
  m.mesh = msh;
  m.m = msh.vertex_count();
  const Eigen::MatrixX2d xy = mesh::project_coords(station_lonlat, msh.projection).xy;
  m.station_weights = mesh::projection_matrix(msh, xy);
  m.node_lonlat = mesh::unproject(msh.vertices, msh.projection);
  const auto fem = std::make_shared<mesh::FemMatrices>(mesh::assemble_fem(msh));
  const PriorSpec pr = m.priors;
  finish_model(
      m, [fem](const Eigen::VectorXd& t) { return mesh::spde_precision(*fem, {t(1), t(2)}).matrix; },
      [pr](const Eigen::VectorXd& t) {
        return normal_logpdf(t(1), pr.spde_theta1_mean, pr.spde_theta1_sd) +
               normal_logpdf(t(2), pr.spde_theta2_mean, pr.spde_theta2_sd);
      },
      {"theta_t", "theta1", "theta2"});
  return m;
}

StructureMatrix joint_prior_precision(const LatentModel& model, const Eigen::VectorXd& theta) {
  if (theta.size() != model.core.hyper_dim()) throw InputError("joint_prior_precision: wrong theta dimension");
  StructureMatrix s;
  s.matrix = model.core.precision(theta);
  return s;
}

RowSparse LatentModel::incidence(const ingest::ModelFrame& other, std::vector<bool>* extrapolated) const {
  if (other.column_names != frame.column_names) throw InputError("incidence: design columns differ from the training frame");
  std::map<std::string, int> cp;
  for (std::size_t i = 0; i < frame.cpids.size(); ++i) cp[frame.cpids[i]] = static_cast<int>(i);
  std::vector<int> days, cps;
  if (extrapolated) extrapolated->assign(other.rows(), false);
  for (std::size_t r = 0; r < other.rows(); ++r) {
    const auto it = cp.find(other.row_cpid(r));
    if (it == cp.end()) throw InputError("unknown CPID '" + other.row_cpid(r) + "'");
    cps.push_back(it->second);
    const Date d = other.row_day(r);
    auto pos = std::upper_bound(frame.days.begin(), frame.days.end(), d);
    int idx = static_cast<int>(pos - frame.days.begin()) - 1;
    const bool outside = idx < 0 || d > frame.days.back();
    if (idx < 0) idx = 0;
    if (extrapolated) (*extrapolated)[r] = outside;
    days.push_back(idx);
  }
  return build_incidence(*this, other, days, cps);
}

RowSparse LatentModel::station_incidence() const {
  std::vector<Triplet> trips;
  for (Eigen::Index s = 0; s < station_weights.rows(); ++s)
    for (RowSparse::InnerIterator it(station_weights, s); it; ++it)
      trips.emplace_back(static_cast<int>(s), static_cast<int>(space_offset() + it.col()), it.value());
  RowSparse B(station_weights.rows(), latent_dim());
  B.setFromTriplets(trips.begin(), trips.end());
  return B;
}

Eigen::VectorXd LatentModel::default_theta() const {
  if (spatial == SpatialKind::ICAR) return Eigen::Vector2d(10.0, 1.0);
  const Eigen::Vector2d lo = mesh.inner_hull.colwise().minCoeff(), hi = mesh.inner_hull.colwise().maxCoeff();
  const double diag = (hi - lo).norm();
  const double rho0 = diag > 0 ? 0.3 * diag : 1000.0;
  const double kappa0 = std::sqrt(8.0) / rho0;
  const double tau0 = 1.0 / (std::sqrt(4.0 * std::numbers::pi * 0.25) * kappa0);
  return Eigen::Vector3d(10.0, std::log(tau0), std::log(kappa0));
}

// --- posterior outputs ------------------------------------------------------------------

FitOutputs analyze(const LatentModel& model, const HyperGrid& grid, int criteria_samples, std::uint64_t seed,
                   const ingest::ModelFrame* predict_frame) {
  PassRequest req;
  req.latent = true;
  req.criteria_samples = criteria_samples;
  req.seed = seed;
  const RowSparse station = model.station_incidence();
  req.predict.push_back(&station);
  RowSparse newB;
  std::vector<bool> extrap;
  if (predict_frame) {
    newB = model.incidence(*predict_frame, &extrap);
    req.predict.push_back(&newB);
  }
  const PassResult pr = posterior_pass(model.core, grid, req);

  FitOutputs out;
  PosteriorSummary& s = out.summary;
  s.spatial = model.spatial;
  for (Eigen::Index c = 0; c < model.K; ++c)
    s.fixed.push_back({model.frame.column_names[static_cast<std::size_t>(c)], pr.latent[static_cast<std::size_t>(c)]});
  for (Eigen::Index h = 0; h < model.core.hyper_dim(); ++h)
    s.hyper.push_back({model.core.hyper_names[static_cast<std::size_t>(h)], pr.hyper[static_cast<std::size_t>(h)]});
  const Eigen::Index d = model.core.hyper_dim();
  Eigen::VectorXd e0 = Eigen::VectorXd::Zero(d);
  e0(0) = 1.0;
  s.derived.push_back(derived("tau_t", grid, e0, 0.0));
  if (model.spatial == SpatialKind::ICAR) {
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(d);
    e1(1) = 1.0;
    s.derived.push_back(derived("tau_icar", grid, e1, 0.0));
  } else {
    s.derived.push_back(derived("range_m", grid, Eigen::Vector3d(0.0, 0.0, -1.0), 0.5 * std::log(8.0)));
    s.derived.push_back(
        derived("variance", grid, Eigen::Vector3d(0.0, -2.0, -2.0), -std::log(4.0 * std::numbers::pi)));
  }
  double tsum = 0.0, ssum = 0.0;
  for (Eigen::Index i = 0; i < model.n_t; ++i) {
    s.time.push_back(pr.latent[static_cast<std::size_t>(model.time_offset() + i)]);
    tsum += s.time.back().mean;
  }
  for (Eigen::Index i = 0; i < model.m; ++i) {
    s.space.push_back(pr.latent[static_cast<std::size_t>(model.space_offset() + i)]);
    ssum += s.space.back().mean;
  }
  s.max_time_constraint = std::abs(tsum);
  s.max_space_constraint = std::abs(ssum);
  const auto& st = pr.predictions[0];
  for (Eigen::Index i = 0; i < station.rows(); ++i)
    s.station.push_back({st.eta_mean(i), st.eta_sd(i), std::log(st.lo95(i)), std::log(st.hi95(i))});
  s.criteria = pr.criteria;
  s.theta_mode = grid.mode;
  s.simplex_evaluations = grid.evaluations;
  s.grid_points = grid.points.size();
  s.components_used = pr.components_used;

  if (predict_frame) {
    const auto& p = pr.predictions[1];
    for (std::size_t r = 0; r < predict_frame->rows(); ++r) {
      const auto ri = static_cast<Eigen::Index>(r);
      out.predictions.push_back({predict_frame->row_cpid(r), predict_frame->row_day(r), predict_frame->y[r],
                                 p.mean(ri), p.sd(ri), p.lo95(ri), p.hi95(ri), extrap[r]});
    }
    std::stable_sort(out.predictions.begin(), out.predictions.end(), [](const PredictionRow& a, const PredictionRow& b) {
      return a.cpid != b.cpid ? a.cpid < b.cpid : a.day < b.day;
    });
  }
  return out;
}

PosteriorSummary marginals(const LatentModel& model, const HyperGrid& grid) {
  return analyze(model, grid, 0, 1).summary;
}

std::vector<PredictionRow> predict(const LatentModel& model, const HyperGrid& grid,
                                   const ingest::ModelFrame& frame_new) {
  PassRequest req;
  req.latent = false;
  std::vector<bool> extrap;
  const RowSparse B = model.incidence(frame_new, &extrap);
  req.predict.push_back(&B);
  const PassResult pr = posterior_pass(model.core, grid, req);
  std::vector<PredictionRow> rows;
  const auto& p = pr.predictions[0];
  for (std::size_t r = 0; r < frame_new.rows(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    rows.push_back({frame_new.row_cpid(r), frame_new.row_day(r), frame_new.y[r], p.mean(ri), p.sd(ri), p.lo95(ri),
                    p.hi95(ri), extrap[r]});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const PredictionRow& a, const PredictionRow& b) {
    return a.cpid != b.cpid ? a.cpid < b.cpid : a.day < b.day;
  });
  return rows;
}

InformationCriteria information_criteria(const LatentModel& model, const HyperGrid& grid, int samples,
                                         std::uint64_t seed) {
  PassRequest req;
  req.latent = false;
  req.criteria_samples = samples;
  req.seed = seed;
  return posterior_pass(model.core, grid, req).criteria;
}

std::string PosteriorSummary::to_json() const {
  nlohmann::ordered_json j;
  j["spatial"] = std::string(lgm::to_string(spatial));
  for (const auto& f : fixed) j["fixed_effects"][f.name] = summary_json(f.summary);
  for (const auto& h : hyper) j["hyperparameters"][h.name] = summary_json(h.summary);
  for (const auto& h : derived) j["derived"][h.name] = summary_json(h.summary);
  j["criteria"] = {{"dic", criteria.dic},       {"p_d", criteria.p_d},   {"waic", criteria.waic},
                   {"p_waic", criteria.p_waic}, {"lppd", criteria.lppd}, {"samples", criteria.samples}};
  j["grid"] = {{"theta_mode", std::vector<double>(theta_mode.data(), theta_mode.data() + theta_mode.size())},
               {"simplex_evaluations", simplex_evaluations},
               {"points", grid_points},
               {"components_used", components_used}};
  j["constraints"] = {{"abs_sum_time", max_time_constraint}, {"abs_sum_space", max_space_constraint}};
  return j.dump(2) + "\n";
}

// --- artifact files ---------------------------------------------------------------------

void write_grid(const std::filesystem::path& path, const LatentModel& model, const HyperGrid& grid) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& n : model.core.hyper_names) out << n << ',';
  out << "log_posterior,weight\n";
  for (const auto& p : grid.points) {
    for (Eigen::Index i = 0; i < p.theta.size(); ++i) out << csv::format_double(p.theta(i)) << ',';
    out << csv::format_double(p.log_posterior) << ',' << csv::format_double(p.weight) << '\n';
  }
}

std::vector<HyperPoint> read_grid(const std::filesystem::path& path) {
  const auto t = csv::read_file(path);
  const int lp = t.require("log_posterior", path.string());
  std::vector<HyperPoint> pts;
  for (const auto& row : t.rows) {
    HyperPoint p;
    p.theta.resize(lp);
    try {
      for (int i = 0; i < lp; ++i) p.theta(i) = std::stod(row[static_cast<std::size_t>(i)]);
      p.log_posterior = row[static_cast<std::size_t>(lp)] == "NA" ? -INFINITY : std::stod(row[static_cast<std::size_t>(lp)]);
    } catch (const std::exception&) {
      throw InputError(path.string() + ": malformed grid row");
    }
    pts.push_back(std::move(p));
  }
  if (pts.empty()) throw InputError(path.string() + ": empty grid");
  return pts;
}

void write_latent(const std::filesystem::path& dir, const LatentModel& model, const PosteriorSummary& s) {
  const auto fd = [](double v) { return csv::format_double(v); };
  {
    std::ofstream out(dir / "latent_time.csv");
    if (!out) throw InputError("cannot write " + (dir / "latent_time.csv").string());
    out << "day,day_index,mean,sd,q025,q975\n";
    for (std::size_t i = 0; i < s.time.size(); ++i)
      out << format_date(model.frame.days[i]) << ',' << i + 1 << ',' << fd(s.time[i].mean) << ',' << fd(s.time[i].sd)
          << ',' << fd(s.time[i].q025) << ',' << fd(s.time[i].q975) << '\n';
  }
  const bool icar = model.spatial == SpatialKind::ICAR;
  {
    std::ofstream out(dir / "latent_space.csv");
    if (!out) throw InputError("cannot write " + (dir / "latent_space.csv").string());
    out << (icar ? "node,cpid" : "vertex") << ",lon,lat,mean,sd,q025,q975\n";
    for (std::size_t i = 0; i < s.space.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      out << i;
      if (icar) out << ',' << csv::escape(model.frame.cpids[i]);
      out << ',' << fd(model.node_lonlat(ii, 0)) << ',' << fd(model.node_lonlat(ii, 1)) << ',' << fd(s.space[i].mean)
          << ',' << fd(s.space[i].sd) << ',' << fd(s.space[i].q025) << ',' << fd(s.space[i].q975) << '\n';
    }
  }
  {
    std::ofstream out(dir / "latent_station.csv");
    if (!out) throw InputError("cannot write " + (dir / "latent_station.csv").string());
    out << "cpid,lon,lat,mean,sd,q025,q975\n";
    for (std::size_t i = 0; i < s.station.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      out << csv::escape(model.frame.cpids[i]) << ',' << fd(model.station_lonlat(ii, 0)) << ','
          << fd(model.station_lonlat(ii, 1)) << ',' << fd(s.station[i].mean) << ',' << fd(s.station[i].sd) << ','
          << fd(s.station[i].q025) << ',' << fd(s.station[i].q975) << '\n';
    }
  }
  {
    nlohmann::ordered_json fc;
    fc["type"] = "FeatureCollection";
    fc["features"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < s.space.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      nlohmann::ordered_json props = {{"index", i}, {"mean", s.space[i].mean}, {"sd", s.space[i].sd}};
      if (icar) props["cpid"] = model.frame.cpids[i];
      fc["features"].push_back({{"type", "Feature"},
                                {"properties", props},
                                {"geometry",
                                 {{"type", "Point"},
                                  {"coordinates", {model.node_lonlat(ii, 0), model.node_lonlat(ii, 1)}}}}});
    }
    std::ofstream out(dir / "latent_space.geojson");
    if (!out) throw InputError("cannot write " + (dir / "latent_space.geojson").string());
    out << fc.dump() << '\n';
  }
}

void write_predictions(const std::filesystem::path& path, std::span<const PredictionRow> rows) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "cpid,day,y_true,mean,sd,lo95,hi95,extrapolated\n";
  for (const auto& r : rows) {
    out << csv::escape(r.cpid) << ',' << format_date(r.day) << ',';
    if (r.y_true) out << *r.y_true;
    out << ',' << csv::format_double(r.mean) << ',' << csv::format_double(r.sd) << ','
        << csv::format_double(r.lo95) << ',' << csv::format_double(r.hi95) << ',' << (r.extrapolated ? 1 : 0)
        << '\n';
  }
}

}  // namespace chargecast::lgm
