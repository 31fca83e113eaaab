#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "chargecast/structure.hpp"

namespace chargecast::lgm {

enum class Likelihood { Poisson, Gaussian };

using Cholesky = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;
using RowSparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// y_r | x ~ lik(eta_r) with eta = B x, x | theta ~ N(0, Q(theta)^-1) conditioned on A x = 0.
struct LatentGaussianModel {
  RowSparse B;  ///< observations x latent
  Eigen::VectorXd y;
  Likelihood likelihood = Likelihood::Poisson;
  Eigen::VectorXd obs_precision;  ///< Gaussian likelihood only
  Eigen::MatrixXd constraints;    ///< k x n_x, k may be 0
  std::function<SparseMatrix(const Eigen::VectorXd&)> precision;
  std::function<double(const Eigen::VectorXd&)> log_hyperprior;
  std::vector<std::string> hyper_names;
  Eigen::VectorXd initial_latent;  ///< optional Newton start

  Eigen::Index latent_dim() const { return B.cols(); }
  Eigen::Index hyper_dim() const { return static_cast<Eigen::Index>(hyper_names.size()); }
  Eigen::Index rows() const { return B.rows(); }

  /// Per-row log p(y_r | eta_r), normalizing constants included.
  double row_loglik(Eigen::Index r, double eta) const;
  double loglik(const Eigen::VectorXd& eta) const;
  void validate() const;
};

double poisson_logpmf(double y, double eta);

struct NewtonDiagnostics {
  int iterations = 0;
  double gradient_norm = 0.0;       ///< gradient projected onto the constraint null space
  std::vector<double> objective;    ///< accepted objective values, starting point first
};

/// Laplace approximation at the constrained mode.
struct GaussianApprox {
  Eigen::VectorXd mode;    ///< constrained mode x*
  Eigen::VectorXd target;  ///< unconstrained Newton target x* + H^-1 g(x*)
  Eigen::VectorXd eta;     ///< B x*
  SparseMatrix H;          ///< Q + B' diag(c) B at x*
  std::shared_ptr<const Cholesky> factor;
  double log_det = 0.0;    ///< log det H
  Eigen::MatrixXd constraint_v;  ///< H^-1 A'
  Eigen::MatrixXd constraint_w;  ///< A H^-1 A'
  NewtonDiagnostics diagnostics;

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
};

struct ConstraintCorrection {
  Eigen::VectorXd x;
  Eigen::MatrixXd v;  ///< Q^-1 A'
  Eigen::MatrixXd w;  ///< A Q^-1 A'
  double log_det_w = 0.0;
};

/// Conditioning by kriging: x - Q^-1 A' (A Q^-1 A')^-1 A x, with Q given by its factor.
ConstraintCorrection constrain(const Eigen::VectorXd& x, const Cholesky& factor, const Eigen::MatrixXd& A);

/// Constrained Newton with step halving. Throws NumericalError after 50 iterations.
GaussianApprox gaussian_approx(const LatentGaussianModel& model, const Eigen::VectorXd& theta,
                               const Eigen::VectorXd* start = nullptr);

struct LaplaceEvaluation {
  double log_marginal = 0.0;  ///< log pi(theta) + Laplace log p(y | theta)
  double log_evidence = 0.0;  ///< the same without log pi(theta)
  GaussianApprox approx;
};

LaplaceEvaluation laplace(const LatentGaussianModel& model, const Eigen::VectorXd& theta,
                          const Eigen::VectorXd* start = nullptr);
double log_marginal(const LatentGaussianModel& model, const Eigen::VectorXd& theta);

/// Entries of H^-1 on the pattern of the Cholesky factor (Takahashi recursions).
/// Entries off the pattern are obtained by solves and cached.
class SelectedInverse {
 public:
  explicit SelectedInverse(std::shared_ptr<const Cholesky> factor);

  double operator()(Eigen::Index i, Eigen::Index j) const;
  Eigen::VectorXd diagonal() const;
  bool in_pattern(Eigen::Index i, Eigen::Index j) const;

 private:
  /// Permuted-index lookup; NaN when (a, b) is off the factor pattern.
  double permuted(Eigen::Index a, Eigen::Index b) const;
  std::shared_ptr<const Cholesky> factor_;
  Eigen::VectorXi perm_;  ///< original -> permuted
  std::vector<int> col_start_;
  std::vector<int> rows_;
  std::vector<double> sigma_;
  std::vector<double> diag_;
  mutable std::vector<std::pair<Eigen::Index, Eigen::VectorXd>> solved_;
};

/// Posterior of x at one hyperparameter value, constraints included.
class PointPosterior {
 public:
  PointPosterior(const LatentGaussianModel& model, GaussianApprox approx);

  const Eigen::VectorXd& mean() const { return approx_.mode; }
  Eigen::VectorXd variance() const;
  /// Mean and variance of b' x for row r of Bn.
  std::pair<double, double> linear_moments(const RowSparse& Bn, Eigen::Index r) const;
  Eigen::VectorXd draw(std::mt19937_64& rng) const;
  const GaussianApprox& approx() const { return approx_; }

 private:
  GaussianApprox approx_;
  SelectedInverse inverse_;
  Eigen::MatrixXd a_;
  Eigen::MatrixXd w_inv_;
};

// --- hyperparameter grid ----------------------------------------------------------------

struct SimplexResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Nelder-Mead minimization; stops when every vertex is within tol of the best one.
SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                          double step, double tol, int max_evaluations);

struct HyperPoint {
  Eigen::VectorXd theta;
  double log_posterior = 0.0;
  double weight = 0.0;
};

struct GridOptions {
  double simplex_tol = 1e-4;
  double simplex_step = 1.0;
  int max_evaluations = 500;
  double fd_step = 0.05;
  double half_width = 2.5;  ///< in standard deviations
  int points_per_axis = 5;
};

struct HyperGrid {
  std::vector<HyperPoint> points;
  Eigen::VectorXd mode;
  Eigen::MatrixXd covariance;  ///< inverse negative finite-difference Hessian at the mode
  int evaluations = 0;         ///< simplex evaluations
  std::size_t center = 0;      ///< index of the mode in points
};

HyperGrid explore_grid(const LatentGaussianModel& model, const Eigen::VectorXd& theta_init,
                       const GridOptions& options = {});

/// Rebuilds a grid from stored points (weights renormalized from log posteriors).
HyperGrid grid_from_points(std::vector<HyperPoint> points);

// --- mixtures and summaries -------------------------------------------------------------

struct MixtureSummary {
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
};

/// Quantile of sum_g w_g N(mu_g, sd_g^2) by bisection; sd_g = 0 components are point masses.
double mixture_quantile(std::span<const double> w, std::span<const double> mu, std::span<const double> sd,
                        double p);
MixtureSummary summarize_mixture(std::span<const double> w, std::span<const double> mu,
                                 std::span<const double> sd);

struct InformationCriteria {
  double dic = 0.0;
  double p_d = 0.0;
  double waic = 0.0;
  double p_waic = 0.0;
  double lppd = 0.0;
  int samples = 0;
};

/// Online accumulation of per-draw row log-likelihoods.
class CriteriaAccumulator {
 public:
  explicit CriteriaAccumulator(Eigen::Index rows);
  void add(const Eigen::VectorXd& row_loglik);
  InformationCriteria finish(double loglik_at_mean) const;

 private:
  Eigen::VectorXd max_, sum_exp_, mean_, m2_;
  double total_mean_ = 0.0;
  int count_ = 0;
};

/// DIC/WAIC for Poisson rows from explicit draws of eta (draws x rows).
InformationCriteria criteria_from_draws(std::span<const double> y, const Eigen::MatrixXd& eta_draws,
                                        const Eigen::VectorXd& eta_mean);

struct PassRequest {
  bool latent = true;
  int criteria_samples = 0;  ///< 0 skips DIC/WAIC
  std::uint64_t seed = 1;
  std::vector<const RowSparse*> predict;  ///< extra linear predictors
  double min_weight = 1e-10;
};

struct LinearPredictorSummary {
  Eigen::VectorXd eta_mean, eta_sd;
  Eigen::VectorXd mean, sd, lo95, hi95;  ///< of exp(eta)
};

struct PassResult {
  std::vector<MixtureSummary> latent;
  std::vector<MixtureSummary> hyper;
  InformationCriteria criteria;
  std::vector<LinearPredictorSummary> predictions;
  std::size_t components_used = 0;
};

/// One sweep over the grid computing the requested mixture summaries.
PassResult posterior_pass(const LatentGaussianModel& model, const HyperGrid& grid, const PassRequest& request);

}  // namespace chargecast::lgm
