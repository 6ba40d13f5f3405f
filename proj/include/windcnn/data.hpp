#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "windcnn/tensor.hpp"

namespace windcnn {

inline constexpr int kDirections = 8;
inline constexpr double kDefaultExtent = 1100.0;
inline constexpr double kVMax = 16.0;
inline constexpr double kHeightScale = 100.0;
inline constexpr int kDatasetFormatVersion = 1;

/// Square height grid in meters, row-major, G x G. Row index grows with +y.
struct Scene {
  std::string id;
  std::uint64_t seed = 0;
  int grid = 0;
  double extent = kDefaultExtent;
  std::vector<double> height;

  double cell() const { return extent / grid; }
  /// Building fraction of the pixels inside the inscribed disk.
  double coverage() const;
};

struct SceneOptions {
  double extent = kDefaultExtent;
  bool ring = true;
  int min_footprints = 8;
  int max_footprints = 25;
  double min_height = 6.0;
  double max_height = 100.0;
  double min_coverage = 0.15;
  double max_coverage = 0.45;
  int max_retries = 200;
};

/// Deterministic procedural scene: ring of buildings with gaps near the disk
/// edge plus rectangular and L-shaped footprints inside.
Scene generate_scene(std::uint64_t seed, int grid, const SceneOptions& options = {}, std::string id = {});

/// An all-zero scene of the given size (no ring).
Scene empty_scene(int grid, double extent = kDefaultExtent);

/// Velocity components in m/s on the scene grid, world frame.
struct WindField {
  int grid = 0;
  std::vector<double> u, v, w;
  std::vector<double> potential;  // converged velocity potential
  int sweeps = 0;
  double last_update = 0.0;
};

struct OracleOptions {
  double omega = 1.8;
  double inflow_speed = 5.0;
  double tolerance = 1e-6;  // relative to inflow_speed * cell size
  int max_sweeps = 50000;
  double smoothing_sigma = 2.0;
  double v_max = kVMax;
};

/// Inflow azimuth for direction index d, in radians.
double direction_angle(int direction);

/// Potential-flow stand-in for CFD: SOR solve of the Laplace equation for the
/// velocity potential around the buildings, central-difference velocities and
/// a height-gradient vertical proxy. Throws NumericError without convergence.
WindField wind_oracle(const Scene& scene, int direction, const OracleOptions& options = {});

/// Height plus three velocity planes on a common grid.
struct GridFields {
  int grid = 0;
  std::vector<double> height;
  std::array<std::vector<double>, 3> uvw;
};

GridFields combine(const Scene& scene, const WindField& field);

/// Counter-clockwise rotation by steps * 45 degrees about the grid center,
/// rotating vector components with the grid. Multiples of 90 degrees are
/// exact index permutations; odd steps resample bilinearly and zero-fill
/// outside the inscribed circle.
GridFields rotate(const GridFields& fields, int steps);

/// Rotates a world-frame sample so the inflow points along -y.
GridFields canonicalize(const GridFields& world, int direction);

std::uint8_t quantize(double value, double v_max = kVMax);
double dequantize(std::uint8_t q, double v_max = kVMax);

struct SplitCounts {
  int train = 0;
  int val = 0;
  int test = 0;
};
SplitCounts split_counts(int n_scenes);

struct DatasetManifest {
  int format_version = kDatasetFormatVersion;
  int grid = 0;
  double extent = kDefaultExtent;
  std::uint64_t seed = 0;
  double v_max = kVMax;
  int directions = kDirections;
  std::vector<std::string> train, val, test;

  std::size_t scene_count() const { return train.size() + val.size() + test.size(); }
  std::size_t sample_count() const { return scene_count() * static_cast<std::size_t>(directions); }
};

nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& doc);

struct BuildOptions {
  SceneOptions scene;
  OracleOptions oracle;
  int workers = 1;
};

/// Generates n_scenes scenes x 8 directions under `root` and writes
/// manifest.json. Output bytes do not depend on the worker count.
DatasetManifest build_dataset(const std::filesystem::path& root, int n_scenes, int grid, std::uint64_t seed,
                              const BuildOptions& options = {});

DatasetManifest load_manifest(const std::filesystem::path& root);

/// One model-frame training pair: input height/100 as (1,1,G,G) and target
/// (v + v_max) / (2 v_max) as (1,3,G,G).
struct Sample {
  std::string scene;
  int direction = 0;
  Tensor<float> input;
  Tensor<float> target;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Sample> train, val, test;
};

enum class Split { train, val, test };

/// Reads a stored world-frame scene/direction pair and returns the canonical sample.
Sample load_sample(const std::filesystem::path& root, const DatasetManifest& manifest, const std::string& scene,
                   int direction);
Sample make_sample(const GridFields& world, int direction, double v_max, std::string scene);

Dataset load_dataset(const std::filesystem::path& root);
std::vector<Sample> load_split(const std::filesystem::path& root, Split split);

/// Pixel-interleaved u,v,w bytes, as stored for each direction.
std::string encode_velocity_u8(const std::array<std::vector<double>, 3>& uvw, double v_max = kVMax);

/// Reads a little-endian float32 G x G height file; G comes from the file size.
std::vector<double> read_height_file(const std::filesystem::path& path);

/// Maps a canonical-frame model output (1,3,G,G) back to world-frame m/s by
/// undoing the direction rotation. The height plane is taken as given.
GridFields prediction_to_world(const Tensor<float>& prediction, std::vector<double> world_height, int direction,
                               double v_max = kVMax);

/// Writes `bytes` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace windcnn
