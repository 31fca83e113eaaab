#include "chargecast/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "chargecast/csv.hpp"

namespace chargecast::baseline {

namespace {

constexpr int kMaxIterations = 100;

double penalized_loglik(const Eigen::MatrixXd& X, std::span<const double> y, const Eigen::VectorXd& beta,
                        double ridge) {
  const Eigen::VectorXd eta = X * beta;
  double s = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) s += y[static_cast<std::size_t>(i)] * eta(i) - std::exp(eta(i));
  return s - 0.5 * ridge * beta.squaredNorm();
}

}  // namespace

double poisson_deviance(std::span<const double> y, const Eigen::VectorXd& mu) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double yi = y[static_cast<std::size_t>(i)];
    d += (yi > 0 ? yi * std::log(yi / mu(i)) : 0.0) - (yi - mu(i));
  }
  return 2.0 * d;
}

GlmFit irls_poisson(const Eigen::MatrixXd& X, std::span<const double> y, double ridge) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (n < 1) throw InputError("irls_poisson: no rows");
  if (static_cast<std::size_t>(n) != y.size()) throw InputError("irls_poisson: X and y lengths differ");
  if (!X.allFinite()) throw InputError("irls_poisson: non-finite design");
  if (!(ridge >= 0)) throw InputError("irls_poisson: ridge must be >= 0");
  for (double v : y)
    if (!(v >= 0)) throw InputError("irls_poisson: counts must be >= 0");

  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p, p);
  // start from a weighted least-squares fit to log(y + 0.5)
  Eigen::VectorXd z(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu0 = y[static_cast<std::size_t>(i)] + 0.5;
    z(i) = std::log(mu0);
    w(i) = mu0;
  }
  GlmFit fit;
  fit.beta = (X.transpose() * w.asDiagonal() * X + std::max(ridge, 1e-8) * I).ldlt().solve(X.transpose() * w.cwiseProduct(z));
  double obj = penalized_loglik(X, y, fit.beta, ridge);
  if (!std::isfinite(obj)) {
    fit.beta.setZero();
    obj = penalized_loglik(X, y, fit.beta, ridge);
  }
  Eigen::VectorXd mu = (X * fit.beta).array().exp();
  fit.deviance = poisson_deviance(y, mu);
  fit.deviance_trace.push_back(fit.deviance);

  Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
  for (int it = 0; it < kMaxIterations; ++it) {
    const Eigen::VectorXd grad = X.transpose() * (yv - mu) - ridge * fit.beta;
    const Eigen::MatrixXd info = X.transpose() * mu.asDiagonal() * X + ridge * I;
    const Eigen::VectorXd step = info.ldlt().solve(grad);
    double t = 1.0;
    Eigen::VectorXd next;
    double next_obj = -INFINITY;
    // near the optimum the gain drops below the rounding error of the objective
    const double noise = 1e-13 * (1.0 + std::abs(obj));
    bool accepted = false;
    for (int h = 0; h < 40; ++h, t *= 0.5) {
      next = fit.beta + t * step;
      next_obj = penalized_loglik(X, y, next, ridge);
      if (!std::isfinite(next_obj)) continue;
      if (next_obj >= obj || (h == 0 && obj - next_obj <= noise)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    fit.beta = next;
    obj = next_obj;
    mu = (X * fit.beta).array().exp();
    const double dev = poisson_deviance(y, mu);
    const double rel = std::abs(dev - fit.deviance) / (std::abs(dev) + 0.1);
    fit.deviance = dev;
    fit.deviance_trace.push_back(dev);
    fit.iterations = it + 1;
    fit.gradient_norm = (X.transpose() * (yv - mu) - ridge * fit.beta).norm();
    if (rel < 1e-10 && fit.gradient_norm < 1e-8) {
      fit.converged = true;
      break;
    }
  }
  fit.gradient_norm = (X.transpose() * (yv - mu) - ridge * fit.beta).norm();
  if (!fit.converged && fit.gradient_norm < 1e-8) fit.converged = true;
  const Eigen::MatrixXd info = X.transpose() * mu.asDiagonal() * X + ridge * I;
  fit.covariance = info.ldlt().solve(I);
  fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
  return fit;
}

Eigen::VectorXd glm_predict(const GlmFit& fit, const Eigen::MatrixXd& X_new) {
  if (X_new.cols() != fit.beta.size())
    throw InputError("glm_predict: design has " + std::to_string(X_new.cols()) + " columns, fit has " +
                     std::to_string(fit.beta.size()));
  return (X_new * fit.beta).array().exp();
}

std::map<std::string, StationFit> fit_all_stations(const ingest::ModelFrame& frame, double ridge) {
  std::map<std::string, std::vector<Eigen::Index>> rows;
  for (std::size_t r = 0; r < frame.rows(); ++r) rows[frame.row_cpid(r)].push_back(static_cast<Eigen::Index>(r));
  const int intercept = frame.column("intercept");
  std::map<std::string, StationFit> out;
  for (const auto& [cpid, idx] : rows) {
    StationFit sf;
    sf.rows = idx.size();
    for (Eigen::Index c = 0; c < frame.X.cols(); ++c) {
      if (c == intercept) {
        sf.columns.push_back(static_cast<int>(c));
        continue;
      }
      double lo = INFINITY, hi = -INFINITY;
      for (Eigen::Index r : idx) {
        lo = std::min(lo, frame.X(r, c));
        hi = std::max(hi, frame.X(r, c));
      }
      if (hi > lo) sf.columns.push_back(static_cast<int>(c));
    }
    if (intercept < 0) throw InputError("fit_all_stations: the frame has no intercept column");
    if (sf.rows < sf.columns.size() + 1) {
      sf.intercept_only = true;
      sf.columns = {intercept};
    }
    Eigen::MatrixXd X(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(sf.columns.size()));
    std::vector<double> y;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < sf.columns.size(); ++j)
        X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = frame.X(idx[i], sf.columns[j]);
      y.push_back(frame.y[static_cast<std::size_t>(idx[i])]);
    }
    sf.fit = irls_poisson(X, y, ridge);
    out.emplace(cpid, std::move(sf));
  }
  return out;
}

std::vector<BaselinePrediction> predict_stations(const std::map<std::string, StationFit>& fits,
                                                 const ingest::ModelFrame& frame) {
  std::vector<BaselinePrediction> out;
  out.reserve(frame.rows());
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    const auto it = fits.find(frame.row_cpid(r));
    if (it == fits.end()) throw InputError("no baseline fit for CPID '" + frame.row_cpid(r) + "'");
    const StationFit& sf = it->second;
    double eta = 0.0;
    for (std::size_t j = 0; j < sf.columns.size(); ++j)
      eta += sf.fit.beta(static_cast<Eigen::Index>(j)) * frame.X(static_cast<Eigen::Index>(r), sf.columns[j]);
    out.push_back({frame.row_cpid(r), frame.row_day(r), std::exp(eta)});
  }
  std::stable_sort(out.begin(), out.end(), [](const BaselinePrediction& a, const BaselinePrediction& b) {
    return a.cpid != b.cpid ? a.cpid < b.cpid : a.day < b.day;
  });
  return out;
}

void write_baseline_predictions(const std::filesystem::path& path, std::span<const BaselinePrediction> rows) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "cpid,day,mean\n";
  for (const auto& r : rows)
    out << csv::escape(r.cpid) << ',' << format_date(r.day) << ',' << csv::format_double(r.mean) << '\n';
}

}  // namespace chargecast::baseline
