#include "chargecast/laplace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "chargecast/common.hpp"

namespace chargecast::lgm {

namespace {

constexpr int kMaxNewton = 50;
constexpr int kMaxHalvings = 30;

double log_det(const Cholesky& f) {
  const SparseMatrix& L = f.matrixL().nestedExpression();
  double s = 0.0;
  for (Eigen::Index j = 0; j < L.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(L, j); it; ++it)
      if (it.row() == j) s += std::log(it.value());
  return 2.0 * s;
}

std::shared_ptr<Cholesky> factorize(const SparseMatrix& M, const char* what) {
  auto f = std::make_shared<Cholesky>();
  f->compute(M);
  if (f->info() != Eigen::Success) throw NumericalError(std::string(what) + " is not positive definite");
  return f;
}

/// Row derivatives of the log likelihood: first derivative and negative second derivative.
void row_derivatives(const LatentGaussianModel& m, const Eigen::VectorXd& eta, Eigen::VectorXd& d,
                     Eigen::VectorXd& c) {
  if (m.likelihood == Likelihood::Poisson) {
    c = eta.array().exp();
    d = m.y - c;
  } else {
    c = m.obs_precision;
    d = m.obs_precision.cwiseProduct(m.y - eta);
  }
}

SparseMatrix hessian(const LatentGaussianModel& m, const SparseMatrix& Q, const Eigen::VectorXd& c) {
  const RowSparse CB = c.asDiagonal() * m.B;
  SparseMatrix H = SparseMatrix(m.B.transpose() * CB) + Q;
  H.makeCompressed();
  return H;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

// --- model ------------------------------------------------------------------------------

double poisson_logpmf(double y, double eta) { return y * eta - std::exp(eta) - std::lgamma(y + 1.0); }

double LatentGaussianModel::row_loglik(Eigen::Index r, double eta) const {
  if (likelihood == Likelihood::Poisson) return poisson_logpmf(y(r), eta);
  const double p = obs_precision(r);
  return 0.5 * std::log(p / (2.0 * std::numbers::pi)) - 0.5 * p * (y(r) - eta) * (y(r) - eta);
}

double LatentGaussianModel::loglik(const Eigen::VectorXd& eta) const {
  double s = 0.0;
  for (Eigen::Index r = 0; r < eta.size(); ++r) s += row_loglik(r, eta(r));
  return s;
}

void LatentGaussianModel::validate() const {
  if (y.size() != B.rows()) throw InputError("latent model: y has " + std::to_string(y.size()) +
                                             " entries, incidence has " + std::to_string(B.rows()) + " rows");
  if (constraints.size() > 0 && constraints.cols() != B.cols())
    throw InputError("latent model: constraint width does not match the latent dimension");
  if (likelihood == Likelihood::Gaussian && obs_precision.size() != y.size())
    throw InputError("latent model: Gaussian likelihood needs one precision per row");
  if (likelihood == Likelihood::Poisson)
    for (Eigen::Index r = 0; r < y.size(); ++r)
      if (!(y(r) >= 0) || y(r) != std::floor(y(r))) throw InputError("latent model: Poisson counts must be integers >= 0");
  if (!precision || !log_hyperprior) throw InputError("latent model: precision and hyperprior are required");
}

// --- Gaussian approximation -------------------------------------------------------------

Eigen::VectorXd GaussianApprox::solve(const Eigen::VectorXd& rhs) const { return factor->solve(rhs); }

ConstraintCorrection constrain(const Eigen::VectorXd& x, const Cholesky& factor, const Eigen::MatrixXd& A) {
  ConstraintCorrection out;
  if (A.rows() == 0) {
    out.x = x;
    return out;
  }
  out.v = factor.solve(Eigen::MatrixXd(A.transpose()));
  out.w = A * out.v;
  Eigen::LLT<Eigen::MatrixXd> llt(out.w);
  const double scale = out.w.diagonal().cwiseAbs().maxCoeff();
  if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().array().square().minCoeff() > 1e-10 * scale))
    throw NumericalError("constrain: A Q^-1 A' is singular (constraints not full row rank)");
  out.log_det_w = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  out.x = x - out.v * llt.solve(A * x);
  return out;
}

GaussianApprox gaussian_approx(const LatentGaussianModel& model, const Eigen::VectorXd& theta,
                               const Eigen::VectorXd* start) {
  const Eigen::Index n = model.latent_dim();
  const Eigen::MatrixXd& A = model.constraints;
  const Eigen::Index k = A.rows();
  const SparseMatrix Q = model.precision(theta);
  if (Q.rows() != n || Q.cols() != n) throw InputError("gaussian_approx: precision has the wrong dimension");

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  if (start && start->size() == n)
    x = *start;
  else if (model.initial_latent.size() == n)
    x = model.initial_latent;
  Eigen::LDLT<Eigen::MatrixXd> aat;
  if (k > 0) {
    aat.compute(A * A.transpose());
    x -= A.transpose() * aat.solve(A * x);
  }

  const auto objective = [&](const Eigen::VectorXd& v) {
    const Eigen::VectorXd eta = model.B * v;
    return model.loglik(eta) - 0.5 * v.dot(Q * v);
  };

  GaussianApprox out;
  double f = objective(x);
  if (!std::isfinite(f)) throw NumericalError("gaussian_approx: objective not finite at the start point");
  out.diagnostics.objective.push_back(f);
  Eigen::VectorXd d, c;
  std::shared_ptr<Cholesky> factor;
  for (int iter = 0;; ++iter) {
    const Eigen::VectorXd eta = model.B * x;
    row_derivatives(model, eta, d, c);
    Eigen::VectorXd g = model.B.transpose() * d - Q * x;
    Eigen::VectorXd gp = g;
    if (k > 0) gp -= A.transpose() * aat.solve(A * g);
    out.diagnostics.gradient_norm = gp.norm();
    factor = factorize(hessian(model, Q, c), "gaussian_approx: conditional precision");
    if (out.diagnostics.gradient_norm < 1e-6 * static_cast<double>(n)) break;
    if (iter >= kMaxNewton)
      throw NumericalError("gaussian_approx: no convergence in " + std::to_string(kMaxNewton) +
                           " Newton iterations (gradient norm " + std::to_string(out.diagnostics.gradient_norm) +
                           ", objective " + std::to_string(f) + ")");
    Eigen::VectorXd step = factor->solve(g);
    if (k > 0) step = constrain(step, *factor, A).x;
    double t = 1.0;
    double f_new = -std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int h = 0; h < kMaxHalvings; ++h, t *= 0.5) {
      f_new = objective(x + t * step);
      if (std::isfinite(f_new) && f_new >= f) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;  // no ascent left at working precision
    x += t * step;
    const double gain = f_new - f;
    f = f_new;
    out.diagnostics.objective.push_back(f);
    out.diagnostics.iterations = iter + 1;
    if (gain < 1e-8) {
      // refresh derivatives and factor at the accepted point
      row_derivatives(model, model.B * x, d, c);
      g = model.B.transpose() * d - Q * x;
      gp = g;
      if (k > 0) gp -= A.transpose() * aat.solve(A * g);
      out.diagnostics.gradient_norm = gp.norm();
      factor = factorize(hessian(model, Q, c), "gaussian_approx: conditional precision");
      break;
    }
  }

  out.mode = x;
  out.eta = model.B * x;
  row_derivatives(model, out.eta, d, c);
  out.H = hessian(model, Q, c);
  out.factor = factor;
  out.log_det = log_det(*factor);
  const Eigen::VectorXd g = model.B.transpose() * d - Q * x;
  out.target = x + factor->solve(g);
  if (k > 0) {
    out.constraint_v = factor->solve(Eigen::MatrixXd(A.transpose()));
    out.constraint_w = A * out.constraint_v;
  }
  return out;
}

LaplaceEvaluation laplace(const LatentGaussianModel& model, const Eigen::VectorXd& theta,
                          const Eigen::VectorXd* start) {
  LaplaceEvaluation ev;
  ev.approx = gaussian_approx(model, theta, start);
  const GaussianApprox& ga = ev.approx;
  const Eigen::MatrixXd& A = model.constraints;
  const Eigen::Index k = A.rows();
  const SparseMatrix Q = model.precision(theta);
  const auto qf = factorize(Q, "prior precision");
  const Eigen::VectorXd& x = ga.mode;

  // log pi(x*) + log p(y | x*) - log pi_G(x*), each restricted to A x = 0
  double e = model.loglik(ga.eta);
  e += 0.5 * log_det(*qf) - 0.5 * x.dot(Q * x);
  e -= 0.5 * ga.log_det;
  const Eigen::VectorXd dx = ga.target - x;
  e += 0.5 * dx.dot(ga.H * dx);
  if (k > 0) {
    e += 0.5 * constrain(Eigen::VectorXd::Zero(x.size()), *qf, A).log_det_w;
    Eigen::LLT<Eigen::MatrixXd> w(ga.constraint_w);
    if (w.info() != Eigen::Success) throw NumericalError("laplace: constraint covariance is singular");
    const Eigen::VectorXd am = A * ga.target;
    e -= w.matrixLLT().diagonal().array().log().sum();
    e -= 0.5 * am.dot(w.solve(am));
  }
  ev.log_evidence = e;
  ev.log_marginal = e + model.log_hyperprior(theta);
  return ev;
}

double log_marginal(const LatentGaussianModel& model, const Eigen::VectorXd& theta) {
  return laplace(model, theta).log_marginal;
}

// --- selected inverse -------------------------------------------------------------------

SelectedInverse::SelectedInverse(std::shared_ptr<const Cholesky> factor) : factor_(std::move(factor)) {
  const SparseMatrix& L = factor_->matrixL().nestedExpression();
  const Eigen::Index n = L.rows();
  perm_ = factor_->permutationP().indices();
  col_start_.assign(static_cast<std::size_t>(n + 1), 0);
  diag_.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<double> lval;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (SparseMatrix::InnerIterator it(L, j); it; ++it) {
      if (it.row() == j) {
        diag_[static_cast<std::size_t>(j)] = it.value();
      } else if (it.row() > j) {
        rows_.push_back(static_cast<int>(it.row()));
        lval.push_back(it.value());
      }
    }
    col_start_[static_cast<std::size_t>(j + 1)] = static_cast<int>(rows_.size());
  }
  sigma_.assign(rows_.size(), 0.0);
  std::vector<double> sdiag(static_cast<std::size_t>(n), 0.0);
  const auto lookup = [&](int a, int b) -> double {
    if (a == b) return sdiag[static_cast<std::size_t>(a)];
    if (a < b) std::swap(a, b);  // a > b: column b, row a
    const auto first = rows_.begin() + col_start_[static_cast<std::size_t>(b)];
    const auto last = rows_.begin() + col_start_[static_cast<std::size_t>(b) + 1];
    const auto it = std::lower_bound(first, last, a);
    if (it == last || *it != a) throw NumericalError("selected inverse: factor pattern is not closed");
    return sigma_[static_cast<std::size_t>(it - rows_.begin())];
  };
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    const int s = col_start_[static_cast<std::size_t>(i)];
    const int e = col_start_[static_cast<std::size_t>(i) + 1];
    const double lii = diag_[static_cast<std::size_t>(i)];
    for (int p = s; p < e; ++p) {
      const int j = rows_[static_cast<std::size_t>(p)];
      double acc = 0.0;
      for (int q = s; q < e; ++q) acc += lval[static_cast<std::size_t>(q)] * lookup(rows_[static_cast<std::size_t>(q)], j);
      sigma_[static_cast<std::size_t>(p)] = -acc / lii;
    }
    double acc = 0.0;
    for (int q = s; q < e; ++q) acc += lval[static_cast<std::size_t>(q)] * sigma_[static_cast<std::size_t>(q)];
    sdiag[static_cast<std::size_t>(i)] = 1.0 / (lii * lii) - acc / lii;
  }
  diag_ = std::move(sdiag);
}

double SelectedInverse::permuted(Eigen::Index a, Eigen::Index b) const {
  if (a == b) return diag_[static_cast<std::size_t>(a)];
  if (a < b) std::swap(a, b);
  const auto first = rows_.begin() + col_start_[static_cast<std::size_t>(b)];
  const auto last = rows_.begin() + col_start_[static_cast<std::size_t>(b) + 1];
  const auto it = std::lower_bound(first, last, static_cast<int>(a));
  if (it == last || *it != a) return std::numeric_limits<double>::quiet_NaN();
  return sigma_[static_cast<std::size_t>(it - rows_.begin())];
}

bool SelectedInverse::in_pattern(Eigen::Index i, Eigen::Index j) const {
  return !std::isnan(permuted(perm_(i), perm_(j)));
}

double SelectedInverse::operator()(Eigen::Index i, Eigen::Index j) const {
  const double v = permuted(perm_(i), perm_(j));
  if (!std::isnan(v)) return v;
  for (const auto& [col, values] : solved_)
    if (col == j) return values(i);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(diag_.size()));
  e(j) = 1.0;
  solved_.emplace_back(j, factor_->solve(e));
  return solved_.back().second(i);
}

Eigen::VectorXd SelectedInverse::diagonal() const {
  Eigen::VectorXd d(static_cast<Eigen::Index>(diag_.size()));
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = diag_[static_cast<std::size_t>(perm_(i))];
  return d;
}

// --- point posterior --------------------------------------------------------------------

PointPosterior::PointPosterior(const LatentGaussianModel& model, GaussianApprox approx)
    : approx_(std::move(approx)), inverse_(approx_.factor), a_(model.constraints) {
  if (a_.rows() > 0) w_inv_ = approx_.constraint_w.inverse();
}

Eigen::VectorXd PointPosterior::variance() const {
  Eigen::VectorXd v = inverse_.diagonal();
  if (w_inv_.size() > 0)
    v -= (approx_.constraint_v * w_inv_).cwiseProduct(approx_.constraint_v).rowwise().sum();
  return v.cwiseMax(0.0);
}

std::pair<double, double> PointPosterior::linear_moments(const RowSparse& Bn, Eigen::Index r) const {
  std::vector<std::pair<Eigen::Index, double>> nz;
  for (RowSparse::InnerIterator it(Bn, r); it; ++it) nz.emplace_back(it.col(), it.value());
  double mean = 0.0, var = 0.0;
  for (const auto& [a, va] : nz) {
    mean += va * approx_.mode(a);
    for (const auto& [b, vb] : nz) var += va * vb * inverse_(a, b);
  }
  if (w_inv_.size() > 0) {
    Eigen::VectorXd vb = Eigen::VectorXd::Zero(w_inv_.rows());
    for (const auto& [a, va] : nz) vb += va * approx_.constraint_v.row(a).transpose();
    var -= vb.dot(w_inv_ * vb);
  }
  return {mean, std::max(var, 0.0)};
}

Eigen::VectorXd PointPosterior::draw(std::mt19937_64& rng) const {
  std::normal_distribution<double> normal;
  const Eigen::Index n = approx_.mode.size();
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(rng);
  const Eigen::VectorXd u = approx_.factor->matrixU().solve(z);
  Eigen::VectorXd dev = approx_.factor->permutationPinv() * u;
  if (w_inv_.size() > 0) {
    dev -= approx_.constraint_v * (w_inv_ * (a_ * dev));
  }
  return approx_.mode + dev;
}

// --- simplex and grid -------------------------------------------------------------------

SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                          double step, double tol, int max_evaluations) {
  const Eigen::Index d = x0.size();
  std::vector<Eigen::VectorXd> s(static_cast<std::size_t>(d + 1), x0);
  std::vector<double> v(static_cast<std::size_t>(d + 1));
  SimplexResult out;
  const auto eval = [&](const Eigen::VectorXd& x) {
    ++out.evaluations;
    const double r = f(x);
    return std::isfinite(r) ? r : std::numeric_limits<double>::max();
  };
  for (Eigen::Index i = 0; i < d; ++i) s[static_cast<std::size_t>(i + 1)](i) += step;
  for (std::size_t i = 0; i < s.size(); ++i) v[i] = eval(s[i]);
  std::vector<std::size_t> order(s.size());
  while (true) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    double spread = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) spread = std::max(spread, (s[i] - s[best]).cwiseAbs().maxCoeff());
    if (spread < tol) {
      out.converged = true;
      out.x = s[best];
      out.value = v[best];
      return out;
    }
    if (out.evaluations >= max_evaluations) {
      out.x = s[best];
      out.value = v[best];
      return out;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != worst) centroid += s[i];
    centroid /= static_cast<double>(d);
    const Eigen::VectorXd xr = centroid + (centroid - s[worst]);
    const double fr = eval(xr);
    if (fr < v[best]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - s[worst]);
      const double fe = eval(xe);
      if (fe < fr) {
        s[worst] = xe;
        v[worst] = fe;
      } else {
        s[worst] = xr;
        v[worst] = fr;
      }
      continue;
    }
    if (fr < v[second]) {
      s[worst] = xr;
      v[worst] = fr;
      continue;
    }
    const bool outside = fr < v[worst];
    const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                       : Eigen::VectorXd(centroid + 0.5 * (s[worst] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : v[worst])) {
      s[worst] = xc;
      v[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i == best) continue;
      s[i] = s[best] + 0.5 * (s[i] - s[best]);
      v[i] = eval(s[i]);
    }
  }
}

namespace {

void normalize_weights(std::vector<HyperPoint>& points) {
  double mx = -std::numeric_limits<double>::infinity();
  for (const auto& p : points)
    if (std::isfinite(p.log_posterior)) mx = std::max(mx, p.log_posterior);
  if (!std::isfinite(mx)) throw NumericalError("hyperparameter grid: no finite log posterior");
  double total = 0.0;
  for (auto& p : points) {
    p.weight = std::isfinite(p.log_posterior) ? std::exp(p.log_posterior - mx) : 0.0;
    total += p.weight;
  }
  for (auto& p : points) p.weight /= total;
}

}  // namespace

HyperGrid explore_grid(const LatentGaussianModel& model, const Eigen::VectorXd& theta_init,
                       const GridOptions& options) {
  model.validate();
  const Eigen::Index d = theta_init.size();
  if (d != model.hyper_dim()) throw InputError("explore_grid: theta_init has the wrong dimension");
  if (d < 1 || d > 3) throw InputError("explore_grid: supports 1 to 3 hyperparameters");

  Eigen::VectorXd warm;
  double best = -std::numeric_limits<double>::infinity();
  const auto lp = [&](const Eigen::VectorXd& theta) {
    try {
      auto ev = laplace(model, theta, warm.size() ? &warm : nullptr);
      if (ev.log_marginal > best) {
        best = ev.log_marginal;
        warm = ev.approx.mode;
      }
      return ev.log_marginal;
    } catch (const NumericalError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  const SimplexResult sr = nelder_mead([&](const Eigen::VectorXd& t) { return -lp(t); }, theta_init,
                                       options.simplex_step, options.simplex_tol, options.max_evaluations);
  if (!sr.converged)
    throw NumericalError("explore_grid: simplex search did not converge in " +
                         std::to_string(options.max_evaluations) + " evaluations");
  HyperGrid grid;
  grid.mode = sr.x;
  grid.evaluations = sr.evaluations;

  // every later evaluation starts from the latent mode at theta*
  const LaplaceEvaluation center = laplace(model, grid.mode, warm.size() ? &warm : nullptr);
  const Eigen::VectorXd start = center.approx.mode;
  const auto at = [&](const Eigen::VectorXd& theta) {
    try {
      return laplace(model, theta, &start).log_marginal;
    } catch (const NumericalError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };
  const double h = options.fd_step;
  const double f0 = center.log_marginal;
  Eigen::MatrixXd hess(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
    e(i) = h;
    hess(i, i) = (at(grid.mode + e) - 2.0 * f0 + at(grid.mode - e)) / (h * h);
    for (Eigen::Index j = 0; j < i; ++j) {
      Eigen::VectorXd u = Eigen::VectorXd::Zero(d);
      u(j) = h;
      hess(i, j) = hess(j, i) = (at(grid.mode + e + u) - at(grid.mode + e - u) - at(grid.mode - e + u) +
                                 at(grid.mode - e - u)) / (4.0 * h * h);
    }
  }
  if (!hess.allFinite()) throw NumericalError("explore_grid: curvature at the mode is not finite");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(-hess);
  Eigen::VectorXd lambda = eig.eigenvalues();
  for (Eigen::Index i = 0; i < d; ++i)
    if (!(lambda(i) > 1e-8)) lambda(i) = 1.0;  // flat direction: unit step in theta
  const Eigen::MatrixXd V = eig.eigenvectors();
  grid.covariance = V * lambda.cwiseInverse().asDiagonal() * V.transpose();
  const Eigen::MatrixXd scale = V * lambda.cwiseInverse().cwiseSqrt().asDiagonal();

  const int m = options.points_per_axis;
  std::vector<double> z(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) z[static_cast<std::size_t>(i)] = m == 1 ? 0.0 : -options.half_width + 2.0 * options.half_width * i / (m - 1);
  long total = 1;
  for (Eigen::Index i = 0; i < d; ++i) total *= m;
  for (long idx = 0; idx < total; ++idx) {
    Eigen::VectorXd zz(d);
    long rem = idx;
    bool is_center = true;
    for (Eigen::Index i = d - 1; i >= 0; --i) {
      zz(i) = z[static_cast<std::size_t>(rem % m)];
      is_center = is_center && zz(i) == 0.0;
      rem /= m;
    }
    HyperPoint p;
    p.theta = is_center ? grid.mode : Eigen::VectorXd(grid.mode + scale * zz);
    p.log_posterior = is_center ? f0 : at(p.theta);
    if (is_center) grid.center = static_cast<std::size_t>(idx);
    grid.points.push_back(std::move(p));
  }
  normalize_weights(grid.points);
  return grid;
}

HyperGrid grid_from_points(std::vector<HyperPoint> points) {
  if (points.empty()) throw InputError("grid_from_points: empty grid");
  HyperGrid grid;
  grid.points = std::move(points);
  normalize_weights(grid.points);
  std::size_t c = 0;
  for (std::size_t i = 1; i < grid.points.size(); ++i)
    if (grid.points[i].log_posterior > grid.points[c].log_posterior) c = i;
  grid.center = c;
  grid.mode = grid.points[c].theta;
  return grid;
}

// --- mixtures ---------------------------------------------------------------------------

double mixture_quantile(std::span<const double> w, std::span<const double> mu, std::span<const double> sd,
                        double p) {
  if (w.empty() || w.size() != mu.size() || w.size() != sd.size())
    throw InputError("mixture_quantile: inconsistent component arrays");
  if (!(p > 0.0 && p < 1.0)) throw InputError("mixture_quantile: p must lie in (0, 1)");
  double total = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t g = 0; g < w.size(); ++g) {
    total += w[g];
    lo = std::min(lo, mu[g] - 12.0 * sd[g]);
    hi = std::max(hi, mu[g] + 12.0 * sd[g]);
  }
  const auto cdf = [&](double x) {
    double c = 0.0;
    for (std::size_t g = 0; g < w.size(); ++g)
      c += w[g] * (sd[g] > 0 ? normal_cdf((x - mu[g]) / sd[g]) : (x >= mu[g] ? 1.0 : 0.0));
    return c / total;
  };
  for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(lo) + std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

MixtureSummary summarize_mixture(std::span<const double> w, std::span<const double> mu,
                                 std::span<const double> sd) {
  MixtureSummary s;
  double total = 0.0, m2 = 0.0;
  for (std::size_t g = 0; g < w.size(); ++g) {
    total += w[g];
    s.mean += w[g] * mu[g];
    m2 += w[g] * (sd[g] * sd[g] + mu[g] * mu[g]);
  }
  s.mean /= total;
  s.sd = std::sqrt(std::max(m2 / total - s.mean * s.mean, 0.0));
  if (w.size() == 1) {
    s.sd = sd[0];
    s.q025 = mu[0] - 1.959963984540054 * sd[0];
    s.q975 = mu[0] + 1.959963984540054 * sd[0];
  } else {
    s.q025 = mixture_quantile(w, mu, sd, 0.025);
    s.q975 = mixture_quantile(w, mu, sd, 0.975);
  }
  return s;
}

// --- information criteria ---------------------------------------------------------------

CriteriaAccumulator::CriteriaAccumulator(Eigen::Index rows)
    : max_(Eigen::VectorXd::Constant(rows, -std::numeric_limits<double>::infinity())),
      sum_exp_(Eigen::VectorXd::Zero(rows)),
      mean_(Eigen::VectorXd::Zero(rows)),
      m2_(Eigen::VectorXd::Zero(rows)) {}

void CriteriaAccumulator::add(const Eigen::VectorXd& ll) {
  ++count_;
  for (Eigen::Index r = 0; r < ll.size(); ++r) {
    const double v = ll(r);
    if (v > max_(r)) {
      sum_exp_(r) = sum_exp_(r) * std::exp(max_(r) - v) + 1.0;
      max_(r) = v;
    } else {
      sum_exp_(r) += std::exp(v - max_(r));
    }
    const double delta = v - mean_(r);
    mean_(r) += delta / count_;
    m2_(r) += delta * (v - mean_(r));
  }
  total_mean_ += (ll.sum() - total_mean_) / count_;
}

InformationCriteria CriteriaAccumulator::finish(double loglik_at_mean) const {
  if (count_ < 1) throw InputError("information criteria need at least one draw");
  InformationCriteria c;
  c.samples = count_;
  for (Eigen::Index r = 0; r < mean_.size(); ++r) {
    c.lppd += max_(r) + std::log(sum_exp_(r) / count_);
    if (count_ > 1) c.p_waic += m2_(r) / (count_ - 1);
  }
  c.waic = -2.0 * (c.lppd - c.p_waic);
  c.p_d = 2.0 * (loglik_at_mean - total_mean_);
  c.dic = -2.0 * loglik_at_mean + 2.0 * c.p_d;
  return c;
}

InformationCriteria criteria_from_draws(std::span<const double> y, const Eigen::MatrixXd& eta_draws,
                                        const Eigen::VectorXd& eta_mean) {
  const auto n = static_cast<Eigen::Index>(y.size());
  if (eta_draws.cols() != n || eta_mean.size() != n) throw InputError("criteria_from_draws: size mismatch");
  CriteriaAccumulator acc(n);
  Eigen::VectorXd ll(n);
  for (Eigen::Index s = 0; s < eta_draws.rows(); ++s) {
    for (Eigen::Index r = 0; r < n; ++r) ll(r) = poisson_logpmf(y[static_cast<std::size_t>(r)], eta_draws(s, r));
    acc.add(ll);
  }
  double at_mean = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) at_mean += poisson_logpmf(y[static_cast<std::size_t>(r)], eta_mean(r));
  return acc.finish(at_mean);
}

// --- posterior sweep --------------------------------------------------------------------

PassResult posterior_pass(const LatentGaussianModel& model, const HyperGrid& grid, const PassRequest& request) {
  model.validate();
  if (grid.points.empty()) throw InputError("posterior_pass: empty grid");
  std::vector<std::size_t> used;
  double wsum = 0.0;
  for (std::size_t g = 0; g < grid.points.size(); ++g)
    if (grid.points[g].weight >= request.min_weight || g == grid.center) {
      used.push_back(g);
      wsum += grid.points[g].weight;
    }
  std::vector<double> w;
  for (std::size_t g : used) w.push_back(grid.points[g].weight / wsum);
  const std::size_t G = used.size();
  const Eigen::Index n = model.latent_dim();

  // multinomial allocation of draws over components
  std::mt19937_64 rng(request.seed);
  std::vector<int> counts(G, 0);
  if (request.criteria_samples > 0) {
    int left = request.criteria_samples;
    double wleft = 1.0;
    for (std::size_t i = 0; i < G && left > 0; ++i) {
      if (i + 1 == G) {
        counts[i] = left;
        break;
      }
      const double p = std::clamp(w[i] / wleft, 0.0, 1.0);
      std::binomial_distribution<int> bin(left, p);
      counts[i] = bin(rng);
      left -= counts[i];
      wleft -= w[i];
    }
  }

  Eigen::MatrixXd lat_mu, lat_sd;
  if (request.latent) {
    lat_mu.resize(n, static_cast<Eigen::Index>(G));
    lat_sd.resize(n, static_cast<Eigen::Index>(G));
  }
  std::vector<Eigen::MatrixXd> pmu(request.predict.size()), psd(request.predict.size());
  for (std::size_t p = 0; p < request.predict.size(); ++p) {
    pmu[p].resize(request.predict[p]->rows(), static_cast<Eigen::Index>(G));
    psd[p].resize(request.predict[p]->rows(), static_cast<Eigen::Index>(G));
  }
  Eigen::VectorXd x_bar = Eigen::VectorXd::Zero(n);
  CriteriaAccumulator acc(model.rows());

  const GaussianApprox center = gaussian_approx(model, grid.points[grid.center].theta);
  for (std::size_t i = 0; i < G; ++i) {
    const HyperPoint& hp = grid.points[used[i]];
    GaussianApprox ga =
        used[i] == grid.center ? center : gaussian_approx(model, hp.theta, &center.mode);
    const PointPosterior post(model, std::move(ga));
    const auto gi = static_cast<Eigen::Index>(i);
    x_bar += w[i] * post.mean();
    if (request.latent) {
      lat_mu.col(gi) = post.mean();
      lat_sd.col(gi) = post.variance().cwiseSqrt();
    }
    for (std::size_t p = 0; p < request.predict.size(); ++p)
      for (Eigen::Index r = 0; r < request.predict[p]->rows(); ++r) {
        const auto [m, v] = post.linear_moments(*request.predict[p], r);
        pmu[p](r, gi) = m;
        psd[p](r, gi) = std::sqrt(v);
      }
    Eigen::VectorXd ll(model.rows());
    for (int s = 0; s < counts[i]; ++s) {
      const Eigen::VectorXd eta = model.B * post.draw(rng);
      for (Eigen::Index r = 0; r < model.rows(); ++r) ll(r) = model.row_loglik(r, eta(r));
      acc.add(ll);
    }
  }

  PassResult out;
  out.components_used = G;
  if (request.latent) {
    out.latent.resize(static_cast<std::size_t>(n));
    std::vector<double> mu(G), sd(G);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < G; ++i) {
        mu[i] = lat_mu(j, static_cast<Eigen::Index>(i));
        sd[i] = lat_sd(j, static_cast<Eigen::Index>(i));
      }
      out.latent[static_cast<std::size_t>(j)] = summarize_mixture(w, mu, sd);
    }
  }
  // hyperparameters: grid-weighted moments, normal quantiles
  for (Eigen::Index h = 0; h < model.hyper_dim(); ++h) {
    MixtureSummary s;
    double m2 = 0.0, total = 0.0;
    for (const auto& p : grid.points) {
      s.mean += p.weight * p.theta(h);
      m2 += p.weight * p.theta(h) * p.theta(h);
      total += p.weight;
    }
    s.mean /= total;
    s.sd = std::sqrt(std::max(m2 / total - s.mean * s.mean, 0.0));
    s.q025 = s.mean - 1.959963984540054 * s.sd;
    s.q975 = s.mean + 1.959963984540054 * s.sd;
    out.hyper.push_back(s);
  }
  for (std::size_t p = 0; p < request.predict.size(); ++p) {
    const Eigen::Index rows = request.predict[p]->rows();
    LinearPredictorSummary lp;
    lp.eta_mean.resize(rows);
    lp.eta_sd.resize(rows);
    lp.mean.resize(rows);
    lp.sd.resize(rows);
    lp.lo95.resize(rows);
    lp.hi95.resize(rows);
    std::vector<double> mu(G), sd(G);
    for (Eigen::Index r = 0; r < rows; ++r) {
      double e1 = 0.0, e2 = 0.0;
      for (std::size_t i = 0; i < G; ++i) {
        mu[i] = pmu[p](r, static_cast<Eigen::Index>(i));
        sd[i] = psd[p](r, static_cast<Eigen::Index>(i));
        e1 += w[i] * std::exp(mu[i] + 0.5 * sd[i] * sd[i]);
        e2 += w[i] * std::exp(2.0 * mu[i] + 2.0 * sd[i] * sd[i]);
      }
      const MixtureSummary s = summarize_mixture(w, mu, sd);
      lp.eta_mean(r) = s.mean;
      lp.eta_sd(r) = s.sd;
      lp.mean(r) = e1;
      lp.sd(r) = std::sqrt(std::max(e2 - e1 * e1, 0.0));
      lp.lo95(r) = std::exp(s.q025);
      lp.hi95(r) = std::exp(s.q975);
    }
    out.predictions.push_back(std::move(lp));
  }
  if (request.criteria_samples > 0) out.criteria = acc.finish(model.loglik(model.B * x_bar));
  return out;
}

}  // namespace chargecast::lgm
