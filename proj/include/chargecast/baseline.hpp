#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "chargecast/common.hpp"
#include "chargecast/ingest.hpp"

namespace chargecast::baseline {

struct GlmFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd covariance;  ///< (X' W X + ridge I)^-1 at the estimate
  double deviance = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> deviance_trace;  ///< accepted iterates, start first
};

double poisson_deviance(std::span<const double> y, const Eigen::VectorXd& mu);

/// Ridge-penalized Poisson log-link regression by IRLS with step halving.
/// All-zero y converges to a large negative intercept held finite by the ridge.
GlmFit irls_poisson(const Eigen::MatrixXd& X, std::span<const double> y, double ridge = 1e-8);

/// mu = exp(X_new beta).
Eigen::VectorXd glm_predict(const GlmFit& fit, const Eigen::MatrixXd& X_new);

struct StationFit {
  GlmFit fit;
  std::vector<int> columns;  ///< frame columns used, in frame order
  std::size_t rows = 0;
  bool intercept_only = false;  ///< fewer than p + 1 rows
};

/// Independent per-CPID fits; columns constant within a station are dropped.
std::map<std::string, StationFit> fit_all_stations(const ingest::ModelFrame& frame, double ridge = 1e-8);

struct BaselinePrediction {
  std::string cpid;
  Date day;
  double mean = 0.0;
};

/// Throws InputError for a CPID without a fit.
std::vector<BaselinePrediction> predict_stations(const std::map<std::string, StationFit>& fits,
                                                 const ingest::ModelFrame& frame);

/// cpid,day,mean sorted by (cpid, day).
void write_baseline_predictions(const std::filesystem::path& path, std::span<const BaselinePrediction> rows);

}  // namespace chargecast::baseline
