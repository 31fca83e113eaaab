#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "chargecast/ingest.hpp"
#include "chargecast/laplace.hpp"
#include "chargecast/lgm.hpp"
#include "chargecast/mesh.hpp"

namespace chargecast {

/// Run configuration; see docs/config.md for the JSON layout.
struct Config {
  std::vector<std::filesystem::path> session_files;
  std::filesystem::path stations_file;
  std::filesystem::path weather_file;
  ingest::SessionColumns columns;

  ingest::CurationConfig curation;
  ingest::ZeroFill zero_fill = ingest::ZeroFill::ActiveWindow;

  /// Train is day < split_date. When unset the split falls at split_fraction of the distinct days.
  std::optional<Date> split_date = Date{std::chrono::year{2024} / 10 / 6};
  double split_fraction = 0.8;

  int knn_k = 4;
  mesh::MeshOptions mesh;
  lgm::PriorSpec priors;
  lgm::GridOptions grid;
  int criteria_samples = 1000;
  int bootstrap_samples = 1000;
  std::uint64_t seed = 1;
};

/// Reads a config file. Relative data paths resolve against the file's directory.
/// Unknown keys are rejected.
Config load_config(const std::filesystem::path& path);
Config parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
/// The effective settings, data paths omitted.
std::string config_to_json(const Config& config);

}  // namespace chargecast
