#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "chargecast/graph.hpp"
#include "chargecast/ingest.hpp"
#include "chargecast/laplace.hpp"
#include "chargecast/mesh.hpp"

namespace chargecast::lgm {

struct PriorSpec {
  double fixed_precision = 0.001;
  double rw2_a = 1.0;
  double rw2_b = 5e-5;
  double icar_a = 1.0;
  double icar_b = 5e-5;
  double spde_theta1_mean = 0.0;
  double spde_theta1_sd = 10.0;
  double spde_theta2_mean = 0.0;
  double spde_theta2_sd = 10.0;
  double jitter = 1e-5;  ///< added to the intrinsic blocks

  void validate() const;
};

enum class SpatialKind { ICAR, SPDE };
std::string_view to_string(SpatialKind k);
SpatialKind parse_spatial_kind(std::string_view s);

/// Poisson model with eta = X beta + f_time[day] + w' f_space, latent layout [beta | f_time | f_space].
struct LatentModel {
  SpatialKind spatial = SpatialKind::ICAR;
  PriorSpec priors;
  ingest::ModelFrame frame;  ///< rows in canonical (cpid, day, ...) order
  Eigen::Index K = 0;
  Eigen::Index n_t = 0;
  Eigen::Index m = 0;

  graph::AdjacencyGraph graph;         ///< ICAR only
  mesh::Mesh mesh;                     ///< SPDE only
  RowSparse station_weights;           ///< cpids x m spatial weights
  Eigen::MatrixX2d node_lonlat;        ///< per spatial latent element
  Eigen::MatrixX2d station_lonlat;     ///< per cpid

  LatentGaussianModel core;

  Eigen::Index latent_dim() const { return K + n_t + m; }
  Eigen::Index time_offset() const { return K; }
  Eigen::Index space_offset() const { return K + n_t; }
  const std::vector<std::string>& hyper_names() const { return core.hyper_names; }

  /// Incidence rows for another frame with the same columns. Days after the last training
  /// day reuse the last temporal state and are flagged; unknown CPIDs throw InputError.
  RowSparse incidence(const ingest::ModelFrame& other, std::vector<bool>* extrapolated = nullptr) const;
  /// Rows selecting only the spatial effect of each CPID.
  RowSparse station_incidence() const;
  /// A reasonable simplex start.
  Eigen::VectorXd default_theta() const;
};

/// station_lonlat has one row per frame CPID; the graph nodes follow frame.cpids.
LatentModel assemble_icar(const ingest::ModelFrame& frame, const graph::AdjacencyGraph& graph,
                          const Eigen::MatrixX2d& station_lonlat, const PriorSpec& priors = {});
/// Spatial weights are the barycentric rows of each CPID's projected location.
LatentModel assemble_spde(const ingest::ModelFrame& frame, const mesh::Mesh& mesh,
                          const Eigen::MatrixX2d& station_lonlat, const PriorSpec& priors = {});

StructureMatrix joint_prior_precision(const LatentModel& model, const Eigen::VectorXd& theta);

struct NamedSummary {
  std::string name;
  MixtureSummary summary;
};

struct PosteriorSummary {
  SpatialKind spatial = SpatialKind::ICAR;
  std::vector<NamedSummary> fixed;
  std::vector<NamedSummary> hyper;
  std::vector<NamedSummary> derived;  ///< precisions, or range (m) and marginal variance
  std::vector<MixtureSummary> time;
  std::vector<MixtureSummary> space;
  std::vector<MixtureSummary> station;  ///< spatial effect at each CPID
  InformationCriteria criteria;
  Eigen::VectorXd theta_mode;
  int simplex_evaluations = 0;
  std::size_t grid_points = 0;
  std::size_t components_used = 0;
  double max_time_constraint = 0.0;   ///< |sum of temporal means|
  double max_space_constraint = 0.0;  ///< |sum of spatial means|

  std::string to_json() const;
};

struct PredictionRow {
  std::string cpid;
  Date day;
  std::optional<int> y_true;
  double mean = 0.0;
  double sd = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
  bool extrapolated = false;
};

struct FitOutputs {
  PosteriorSummary summary;
  std::vector<PredictionRow> predictions;
};

/// Marginal summaries, DIC/WAIC from criteria_samples draws, and optional predictions.
FitOutputs analyze(const LatentModel& model, const HyperGrid& grid, int criteria_samples, std::uint64_t seed,
                   const ingest::ModelFrame* predict_frame = nullptr);

PosteriorSummary marginals(const LatentModel& model, const HyperGrid& grid);
std::vector<PredictionRow> predict(const LatentModel& model, const HyperGrid& grid,
                                   const ingest::ModelFrame& frame_new);
InformationCriteria information_criteria(const LatentModel& model, const HyperGrid& grid, int samples,
                                         std::uint64_t seed);

// Fit artifact files.
void write_grid(const std::filesystem::path& path, const LatentModel& model, const HyperGrid& grid);
std::vector<HyperPoint> read_grid(const std::filesystem::path& path);
void write_latent(const std::filesystem::path& dir, const LatentModel& model, const PosteriorSummary& summary);
void write_predictions(const std::filesystem::path& path, std::span<const PredictionRow> rows);

}  // namespace chargecast::lgm
