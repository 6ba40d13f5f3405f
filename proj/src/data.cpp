#include "windcnn/data.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "windcnn/errors.hpp"
#include "windcnn/rng.hpp"

namespace windcnn {

namespace fs = std::filesystem;

namespace {

constexpr double kRingInner = 0.86;
constexpr double kRingOuter = 0.95;
constexpr double kFootprintRadius = 0.72;

bool inside_disk(int i, int j, int grid) {
  const double r = grid / 2.0;
  const double dx = j + 0.5 - r;
  const double dy = i + 0.5 - r;
  return dx * dx + dy * dy <= r * r;
}

void fill_rect(std::vector<double>& height, int grid, double x0, double y0, double x1, double y1, double value) {
  const int j0 = std::max(0, static_cast<int>(std::floor(std::min(x0, x1))));
  const int j1 = std::min(grid, static_cast<int>(std::ceil(std::max(x0, x1))));
  const int i0 = std::max(0, static_cast<int>(std::floor(std::min(y0, y1))));
  const int i1 = std::min(grid, static_cast<int>(std::ceil(std::max(y0, y1))));
  for (int i = i0; i < i1; ++i) {
    for (int j = j0; j < j1; ++j) {
      if (inside_disk(i, j, grid)) height[static_cast<std::size_t>(i) * grid + j] = value;
    }
  }
}

double building_height(Rng& rng, const SceneOptions& o) {
  // Rounded to single precision so the stored float grid reproduces the scene exactly.
  return static_cast<float>(rng.uniform(o.min_height, o.max_height));
}

void add_ring(std::vector<double>& height, int grid, Rng& rng, const SceneOptions& o) {
  const int segments = static_cast<int>(rng.uniform_int(16, 24));
  const double span = 2.0 * std::numbers::pi / segments;
  const double offset = rng.uniform(0.0, span);
  std::vector<double> seg_height(static_cast<std::size_t>(segments));
  std::vector<double> seg_fill(static_cast<std::size_t>(segments));
  for (int s = 0; s < segments; ++s) {
    seg_height[static_cast<std::size_t>(s)] = building_height(rng, o);
    seg_fill[static_cast<std::size_t>(s)] = rng.uniform(0.55, 0.8);
  }
  const double r = grid / 2.0;
  for (int i = 0; i < grid; ++i) {
    for (int j = 0; j < grid; ++j) {
      const double dx = j + 0.5 - r;
      const double dy = i + 0.5 - r;
      const double rho = std::sqrt(dx * dx + dy * dy) / r;
      if (rho < kRingInner || rho > kRingOuter) continue;
      double angle = std::atan2(dy, dx) - offset;
      angle = std::fmod(angle + 4.0 * std::numbers::pi, 2.0 * std::numbers::pi);
      const int s = std::min(segments - 1, static_cast<int>(angle / span));
      const double within = angle / span - s;
      if (within < seg_fill[static_cast<std::size_t>(s)]) {
        height[static_cast<std::size_t>(i) * grid + j] = seg_height[static_cast<std::size_t>(s)];
      }
    }
  }
}

void add_footprint(std::vector<double>& height, int grid, Rng& rng, const SceneOptions& o) {
  const double r = grid / 2.0;
  const double rho = kFootprintRadius * r * std::sqrt(rng.uniform());
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double cx = r + rho * std::cos(angle);
  const double cy = r + rho * std::sin(angle);
  const double w = rng.uniform(0.04, 0.12) * grid;
  const double h = rng.uniform(0.04, 0.12) * grid;
  const double value = building_height(rng, o);
  const bool l_shape = rng.uniform() < 0.35;
  if (!l_shape) {
    fill_rect(height, grid, cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2, value);
    return;
  }
  // Two arms sharing the corner at (x0, y0); the sign picks the orientation.
  const double thick = rng.uniform(0.35, 0.6);
  const double sx = rng.uniform() < 0.5 ? 1.0 : -1.0;
  const double sy = rng.uniform() < 0.5 ? 1.0 : -1.0;
  const double x0 = cx - sx * w / 2;
  const double y0 = cy - sy * h / 2;
  fill_rect(height, grid, x0, y0, x0 + sx * w, y0 + sy * thick * h, value);
  fill_rect(height, grid, x0, y0, x0 + sx * thick * w, y0 + sy * h, value);
}

void gaussian_smooth(const std::vector<double>& in, std::vector<double>& out, int grid, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    total += kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * k * k / (sigma * sigma));
  }
  for (double& k : kernel) k /= total;
  std::vector<double> tmp(in.size(), 0.0);
  out.assign(in.size(), 0.0);
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int jj = j + k;
        if (jj >= 0 && jj < grid) acc += kernel[static_cast<std::size_t>(k + radius)] * in[static_cast<std::size_t>(i) * grid + jj];
      }
      tmp[static_cast<std::size_t>(i) * grid + j] = acc;
    }
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int ii = i + k;
        if (ii >= 0 && ii < grid) acc += kernel[static_cast<std::size_t>(k + radius)] * tmp[static_cast<std::size_t>(ii) * grid + j];
      }
      out[static_cast<std::size_t>(i) * grid + j] = acc;
    }
}

/// Central difference along one axis; one-sided at the grid border. Obstacle
/// neighbors are replaced by the center value (mirror ghost) when `solid` is given.
double central(const std::vector<double>& f, const std::vector<std::uint8_t>* solid, int grid, int i, int j,
               int di, int dj, double h) {
  const std::size_t c = static_cast<std::size_t>(i) * grid + j;
  const int ib = i - di, jb = j - dj, ia = i + di, ja = j + dj;
  const bool has_before = ib >= 0 && jb >= 0;
  const bool has_after = ia < grid && ja < grid;
  auto value = [&](int ii, int jj) {
    const std::size_t n = static_cast<std::size_t>(ii) * grid + jj;
    return (solid && (*solid)[n]) ? f[c] : f[n];
  };
  if (has_before && has_after) return (value(ia, ja) - value(ib, jb)) / (2.0 * h);
  if (has_after) return (value(ia, ja) - f[c]) / h;
  return (f[c] - value(ib, jb)) / h;
}

void put_f32_le(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

float get_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return std::bit_cast<float>(bits);
}

std::string scene_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%04d", index);
  return buf;
}

fs::path scene_dir(const fs::path& root, const std::string& id) { return root / "data" / id; }

}  // namespace

double Scene::coverage() const {
  std::int64_t inside = 0;
  std::int64_t built = 0;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      if (!inside_disk(i, j, grid)) continue;
      ++inside;
      if (height[static_cast<std::size_t>(i) * grid + j] > 0.0) ++built;
    }
  return inside ? static_cast<double>(built) / static_cast<double>(inside) : 0.0;
}

Scene generate_scene(std::uint64_t seed, int grid, const SceneOptions& options, std::string id) {
  if (grid < 64 || grid % 64 != 0) {
    throw ConfigError("scene grid must be a positive multiple of 64, got " + std::to_string(grid));
  }
  Rng rng(seed, "scene");
  Scene scene;
  scene.id = std::move(id);
  scene.seed = seed;
  scene.grid = grid;
  scene.extent = options.extent;
  const auto cells = static_cast<std::size_t>(grid) * grid;
  for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
    scene.height.assign(cells, 0.0);
    if (options.ring) add_ring(scene.height, grid, rng, options);
    const auto footprints = rng.uniform_int(options.min_footprints, options.max_footprints);
    for (std::int64_t k = 0; k < footprints; ++k) add_footprint(scene.height, grid, rng, options);
    const double cov = scene.coverage();
    if (cov >= options.min_coverage && cov <= options.max_coverage) return scene;
  }
  throw DataError("scene generator: no layout within the coverage bounds after " +
                  std::to_string(options.max_retries) + " retries (seed " + std::to_string(seed) + ")");
}

Scene empty_scene(int grid, double extent) {
  Scene scene;
  scene.id = "empty";
  scene.grid = grid;
  scene.extent = extent;
  scene.height.assign(static_cast<std::size_t>(grid) * grid, 0.0);
  return scene;
}

double direction_angle(int direction) { return direction * std::numbers::pi / 4.0; }

WindField wind_oracle(const Scene& scene, int direction, const OracleOptions& o) {
  if (direction < 0 || direction >= kDirections) {
    throw ConfigError("wind direction index must be in 0..7, got " + std::to_string(direction));
  }
  const int g = scene.grid;
  const double h = scene.cell();
  const double theta = direction_angle(direction);
  const double s = std::sin(theta);
  const double c = std::cos(theta);
  const auto cells = static_cast<std::size_t>(g) * g;

  std::vector<std::uint8_t> solid(cells);
  for (std::size_t k = 0; k < cells; ++k) solid[k] = scene.height[k] > 0.0 ? 1 : 0;

  std::vector<double> phi(cells);
  for (int i = 0; i < g; ++i) {
    const double y = (i + 0.5 - g / 2.0) * h;
    for (int j = 0; j < g; ++j) {
      const double x = (j + 0.5 - g / 2.0) * h;
      phi[static_cast<std::size_t>(i) * g + j] = -o.inflow_speed * (x * s + y * c);
    }
  }

  // Per-cell neighbor weights (1/n for each fluid neighbor) make the sweep
  // branch-free; frozen cells (border, obstacles, enclosed pockets) get rate 0.
  std::vector<std::array<double, 4>> weight(cells, {0.0, 0.0, 0.0, 0.0});
  std::vector<double> rate(cells, 0.0);
  for (int i = 1; i < g - 1; ++i) {
    for (int j = 1; j < g - 1; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * g + j;
      if (solid[k]) continue;
      const std::array<bool, 4> open{!solid[k - 1], !solid[k + 1], !solid[k - g], !solid[k + g]};
      const int n = open[0] + open[1] + open[2] + open[3];
      if (n == 0) continue;
      for (std::size_t q = 0; q < 4; ++q) weight[k][q] = open[q] ? 1.0 / n : 0.0;
      rate[k] = o.omega;
    }
  }

  WindField field;
  field.grid = g;
  const double tolerance = o.tolerance * o.inflow_speed * h;
  bool converged = false;
  for (int sweep = 1; sweep <= o.max_sweeps; ++sweep) {
    // Red-black ordering: cells of one parity only read cells of the other.
    double max_update = 0.0;
    for (int color = 0; color < 2; ++color) {
      for (int i = 1; i < g - 1; ++i) {
        const std::size_t row = static_cast<std::size_t>(i) * g;
        for (int j = 1 + ((i + 1 + color) & 1); j < g - 1; j += 2) {
          const std::size_t k = row + j;
          const auto& wk = weight[k];
          const double target = wk[0] * phi[k - 1] + wk[1] * phi[k + 1] + wk[2] * phi[k - g] + wk[3] * phi[k + g];
          const double delta = rate[k] * (target - phi[k]);
          phi[k] += delta;
          max_update = std::max(max_update, std::abs(delta));
        }
      }
    }
    field.sweeps = sweep;
    field.last_update = max_update;
    if (max_update < tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "wind oracle: SOR did not converge after " << o.max_sweeps << " sweeps (scene '" << scene.id
        << "', direction " << direction << "): max update " << field.last_update << " > tolerance " << tolerance;
    throw NumericError(msg.str());
  }

  std::vector<double> smooth;
  gaussian_smooth(scene.height, smooth, g, o.smoothing_sigma);
  field.u.assign(cells, 0.0);
  field.v.assign(cells, 0.0);
  field.w.assign(cells, 0.0);
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * g + j;
      if (solid[k]) continue;
      const double u = central(phi, &solid, g, i, j, 0, 1, h);
      const double v = central(phi, &solid, g, i, j, 1, 0, h);
      const double hx = central(smooth, nullptr, g, i, j, 0, 1, h);
      const double hy = central(smooth, nullptr, g, i, j, 1, 0, h);
      const double w = -0.3 * (u * hx + v * hy) / 10.0;
      field.u[k] = std::clamp(u, -o.v_max, o.v_max);
      field.v[k] = std::clamp(v, -o.v_max, o.v_max);
      field.w[k] = std::clamp(w, -o.v_max, o.v_max);
    }
  }
  field.potential = std::move(phi);
  return field;
}

GridFields combine(const Scene& scene, const WindField& field) {
  if (scene.grid != field.grid) throw ShapeError("scene and wind field grids differ");
  return GridFields{scene.grid, scene.height, {field.u, field.v, field.w}};
}

namespace {

GridFields quarter_turn(const GridFields& in) {
  const int g = in.grid;
  GridFields out{g, std::vector<double>(in.height.size()), {}};
  for (auto& plane : out.uvw) plane.resize(in.height.size());
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      const std::size_t dst = static_cast<std::size_t>(i) * g + j;
      const std::size_t src = static_cast<std::size_t>(g - 1 - j) * g + i;
      out.height[dst] = in.height[src];
      out.uvw[0][dst] = -in.uvw[1][src];
      out.uvw[1][dst] = in.uvw[0][src];
      out.uvw[2][dst] = in.uvw[2][src];
    }
  }
  return out;
}

double bilinear(const std::vector<double>& f, int g, double fi, double fj) {
  const int i0 = static_cast<int>(std::floor(fi));
  const int j0 = static_cast<int>(std::floor(fj));
  const double ti = fi - i0;
  const double tj = fj - j0;
  auto at = [&](int i, int j) {
    return (i < 0 || j < 0 || i >= g || j >= g) ? 0.0 : f[static_cast<std::size_t>(i) * g + j];
  };
  return (1 - ti) * ((1 - tj) * at(i0, j0) + tj * at(i0, j0 + 1)) +
         ti * ((1 - tj) * at(i0 + 1, j0) + tj * at(i0 + 1, j0 + 1));
}

}  // namespace

GridFields rotate(const GridFields& fields, int steps) {
  steps = ((steps % 8) + 8) % 8;
  if (steps % 2 == 0) {
    GridFields out = fields;
    for (int q = 0; q < steps / 2; ++q) out = quarter_turn(out);
    return out;
  }
  const int g = fields.grid;
  const double theta = steps * std::numbers::pi / 4.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double half = g / 2.0;
  GridFields out{g, std::vector<double>(fields.height.size(), 0.0), {}};
  for (auto& plane : out.uvw) plane.assign(fields.height.size(), 0.0);
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      const double x = j + 0.5 - half;
      const double y = i + 0.5 - half;
      if (x * x + y * y > half * half) continue;
      const double xs = x * c + y * s;
      const double ys = -x * s + y * c;
      const double fj = xs + half - 0.5;
      const double fi = ys + half - 0.5;
      const std::size_t dst = static_cast<std::size_t>(i) * g + j;
      out.height[dst] = bilinear(fields.height, g, fi, fj);
      const double u = bilinear(fields.uvw[0], g, fi, fj);
      const double v = bilinear(fields.uvw[1], g, fi, fj);
      out.uvw[0][dst] = u * c - v * s;
      out.uvw[1][dst] = u * s + v * c;
      out.uvw[2][dst] = bilinear(fields.uvw[2], g, fi, fj);
    }
  }
  return out;
}

GridFields canonicalize(const GridFields& world, int direction) { return rotate(world, direction); }

std::uint8_t quantize(double value, double v_max) {
  const double v = std::clamp(value, -v_max, v_max);
  const double q = std::floor((v + v_max) / (2.0 * v_max) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

double dequantize(std::uint8_t q, double v_max) { return q / 255.0 * 2.0 * v_max - v_max; }

SplitCounts split_counts(int n_scenes) {
  SplitCounts s;
  s.train = n_scenes * 8 / 10;
  s.val = n_scenes / 10;
  s.test = n_scenes - s.train - s.val;
  return s;
}

nlohmann::json to_json(const DatasetManifest& m) {
  return nlohmann::json{{"format_version", m.format_version},
                        {"grid", m.grid},
                        {"extent", m.extent},
                        {"seed", m.seed},
                        {"v_max", m.v_max},
                        {"directions", m.directions},
                        {"splits", {{"train", m.train}, {"val", m.val}, {"test", m.test}}}};
}

DatasetManifest manifest_from_json(const nlohmann::json& doc) {
  try {
    DatasetManifest m;
    m.format_version = doc.at("format_version").get<int>();
    if (m.format_version != kDatasetFormatVersion) {
      throw DataError("unsupported dataset format version " + std::to_string(m.format_version));
    }
    m.grid = doc.at("grid").get<int>();
    m.extent = doc.at("extent").get<double>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.v_max = doc.at("v_max").get<double>();
    m.directions = doc.at("directions").get<int>();
    const auto& splits = doc.at("splits");
    m.train = splits.at("train").get<std::vector<std::string>>();
    m.val = splits.at("val").get<std::vector<std::string>>();
    m.test = splits.at("test").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed dataset manifest: ") + e.what());
  }
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string encode_velocity_u8(const std::array<std::vector<double>, 3>& uvw, double v_max) {
  const std::size_t n = uvw[0].size();
  if (uvw[1].size() != n || uvw[2].size() != n) throw ShapeError("velocity planes differ in size");
  std::string q;
  q.reserve(n * 3);
  for (std::size_t p = 0; p < n; ++p)
    for (const auto& plane : uvw) q.push_back(static_cast<char>(quantize(plane[p], v_max)));
  return q;
}

std::vector<double> read_height_file(const fs::path& path) {
  const std::string bytes = read_file(path);
  const std::size_t n = bytes.size() / 4;
  const auto g = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (bytes.size() % 4 != 0 || g == 0 || g * g != n) {
    throw DataError("'" + path.string() + "' is not a square float32 height grid (" + std::to_string(bytes.size()) +
                    " bytes)");
  }
  std::vector<double> height(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t k = 0; k < n; ++k) height[k] = get_f32_le(p + 4 * k);
  return height;
}

GridFields prediction_to_world(const Tensor<float>& prediction, std::vector<double> world_height, int direction,
                               double v_max) {
  const Shape s = prediction.shape();
  if (s.n != 1 || s.c != 3 || s.h != s.w || static_cast<std::size_t>(s.plane()) != world_height.size()) {
    throw ShapeError("prediction " + s.str() + " does not match a (1,3,G,G) field over the height grid");
  }
  const int g = static_cast<int>(s.h);
  const auto plane = static_cast<std::size_t>(s.plane());
  GridFields canon{g, std::vector<double>(plane, 0.0), {}};
  const auto data = prediction.data();
  for (std::size_t c = 0; c < 3; ++c) {
    canon.uvw[c].resize(plane);
    for (std::size_t p = 0; p < plane; ++p) canon.uvw[c][p] = data[c * plane + p] * 2.0 * v_max - v_max;
  }
  GridFields world = rotate(canon, -direction);
  world.height = std::move(world_height);
  return world;
}

DatasetManifest build_dataset(const fs::path& root, int n_scenes, int grid, std::uint64_t seed,
                              const BuildOptions& options) {
  if (n_scenes < 10) throw ConfigError("dataset needs at least 10 scenes, got " + std::to_string(n_scenes));
  if (grid < 64 || grid % 64 != 0) {
    throw ConfigError("dataset grid must be a positive multiple of 64, got " + std::to_string(grid));
  }
  DatasetManifest m;
  m.grid = grid;
  m.extent = options.scene.extent;
  m.seed = seed;
  m.v_max = options.oracle.v_max;
  const SplitCounts counts = split_counts(n_scenes);
  for (int k = 0; k < n_scenes; ++k) {
    auto& split = k < counts.train ? m.train : (k < counts.train + counts.val ? m.val : m.test);
    split.push_back(scene_name(k));
  }

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (int k = next++; k < n_scenes; k = next++) {
      try {
        const std::string id = scene_name(k);
        const Scene scene = generate_scene(derive_seed(seed, static_cast<std::uint64_t>(k)), grid, options.scene, id);
        const fs::path dir = scene_dir(root, id);
        std::string bytes;
        bytes.reserve(scene.height.size() * 4);
        for (double v : scene.height) put_f32_le(bytes, static_cast<float>(v));
        write_file_atomic(dir / "height.f32", bytes);
        for (int d = 0; d < kDirections; ++d) {
          const WindField f = wind_oracle(scene, d, options.oracle);
          write_file_atomic(dir / ("d" + std::to_string(d) + ".u8"), encode_velocity_u8({f.u, f.v, f.w}, m.v_max));
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n_scenes;
      }
    }
  };
  const int workers = std::max(1, std::min(options.workers, n_scenes));
  std::vector<std::thread> pool;
  for (int t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  write_file_atomic(root / "manifest.json", to_json(m).dump(2) + "\n");
  return m;
}

DatasetManifest load_manifest(const fs::path& root) {
  const fs::path path = root / "manifest.json";
  if (!fs::exists(path)) throw DataError("dataset manifest not found: '" + path.string() + "'");
  try {
    return manifest_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("dataset manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

Sample make_sample(const GridFields& world, int direction, double v_max, std::string scene) {
  const GridFields canon = canonicalize(world, direction);
  const int g = canon.grid;
  const auto plane = static_cast<std::size_t>(g) * g;
  Sample s;
  s.scene = std::move(scene);
  s.direction = direction;
  s.input = Tensor<float>({1, 1, g, g});
  s.target = Tensor<float>({1, 3, g, g});
  auto in = s.input.data();
  auto out = s.target.data();
  for (std::size_t p = 0; p < plane; ++p) in[p] = static_cast<float>(canon.height[p] / kHeightScale);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < plane; ++p)
      out[c * plane + p] = static_cast<float>((canon.uvw[c][p] + v_max) / (2.0 * v_max));
  return s;
}

Sample load_sample(const fs::path& root, const DatasetManifest& m, const std::string& scene, int direction) {
  const int g = m.grid;
  const auto plane = static_cast<std::size_t>(g) * g;
  const fs::path dir = scene_dir(root, scene);
  const std::string hbytes = read_file(dir / "height.f32");
  if (hbytes.size() != plane * 4) {
    throw DataError("'" + (dir / "height.f32").string() + "' has " + std::to_string(hbytes.size()) +
                    " bytes, expected " + std::to_string(plane * 4));
  }
  const fs::path vpath = dir / ("d" + std::to_string(direction) + ".u8");
  const std::string vbytes = read_file(vpath);
  if (vbytes.size() != plane * 3) {
    throw DataError("'" + vpath.string() + "' has " + std::to_string(vbytes.size()) + " bytes, expected " +
                    std::to_string(plane * 3));
  }
  GridFields world{g, std::vector<double>(plane), {}};
  for (auto& p : world.uvw) p.resize(plane);
  const auto* hp = reinterpret_cast<const unsigned char*>(hbytes.data());
  const auto* vp = reinterpret_cast<const unsigned char*>(vbytes.data());
  for (std::size_t p = 0; p < plane; ++p) {
    world.height[p] = get_f32_le(hp + 4 * p);
    for (std::size_t c = 0; c < 3; ++c) world.uvw[c][p] = dequantize(vp[3 * p + c], m.v_max);
  }
  return make_sample(world, direction, m.v_max, scene);
}

static std::vector<Sample> load_ids(const fs::path& root, const DatasetManifest& m, Split split) {
  const auto& ids = split == Split::train ? m.train : (split == Split::val ? m.val : m.test);
  std::vector<Sample> out;
  out.reserve(ids.size() * kDirections);
  for (const auto& id : ids)
    for (int d = 0; d < m.directions; ++d) out.push_back(load_sample(root, m, id, d));
  return out;
}

std::vector<Sample> load_split(const fs::path& root, Split split) {
  return load_ids(root, load_manifest(root), split);
}

Dataset load_dataset(const fs::path& root) {
  Dataset ds;
  ds.manifest = load_manifest(root);
  ds.train = load_ids(root, ds.manifest, Split::train);
  ds.val = load_ids(root, ds.manifest, Split::val);
  ds.test = load_ids(root, ds.manifest, Split::test);
  return ds;
}

}  // namespace windcnn
