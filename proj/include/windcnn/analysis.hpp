#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "windcnn/model.hpp"
#include "windcnn/model_config.hpp"

namespace windcnn {

/// One trained configuration placed in (loss, runtime) objective space.
struct ParetoPoint {
  std::string config;  // trial reference, e.g. "half-u-next:3"
  double loss = 0.0;
  double runtime_ms = 0.0;
  double relative_loss = 0.0;
  double relative_runtime = 0.0;
  BlockType block_type = BlockType::convnext;
  DecoderType decoder_type = DecoderType::half_unet;
  std::int64_t params = 0;
  std::int64_t macs = 0;
};

/// p dominates q iff p is no worse in both objectives and better in one.
bool dominates(const ParetoPoint& p, const ParetoPoint& q);

/// Non-dominated subset with both objectives minimized, sorted by descending
/// runtime (equivalently ascending loss). Points identical in both objectives
/// collapse to the first occurrence. Throws std::invalid_argument on
/// non-finite or non-positive objectives.
std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points);

/// Annotates a front with ratios against its minimum-loss member.
std::vector<ParetoPoint> relative_metrics(std::vector<ParetoPoint> front);

/// Rounds half away from zero to the given number of decimals.
double round_decimals(double value, int decimals);

struct BenchReport {
  int warmup = 0;
  int repeats = 0;
  std::vector<double> times_ms;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double min_ms = 0.0;
  double cv = 0.0;  // sample standard deviation / mean
};

/// Summary statistics over per-repeat wall times.
BenchReport make_bench_report(int warmup, std::vector<double> times_ms);

/// Wall-clock latency of eval-mode forward passes on a fixed zero input of
/// the given (N, C, H, W) shape. Requires repeats >= 5.
BenchReport bench_runtime(Model<float>& model, const std::array<int, 4>& input_shape, int warmup = 10,
                          int repeats = 50);

inline constexpr char kReportHeader[] =
    "config,huber_loss,runtime_ms,relative_loss,relative_runtime,block_type,decoder_type,parameters,multiply_adds";

/// Report CSV text: objectives at full precision, relative columns at 4 decimals.
std::string report_csv(const std::vector<ParetoPoint>& front);
std::vector<ParetoPoint> parse_report_csv(const std::string& text);

/// Self-contained SVG scatter of every trial with the front highlighted and
/// connected in runtime order.
std::string pareto_svg(const std::vector<ParetoPoint>& all, const std::vector<ParetoPoint>& front);

/// Writes `csv_path` and `svg_path` atomically.
void export_report(const std::vector<ParetoPoint>& all, const std::vector<ParetoPoint>& front,
                   const std::filesystem::path& csv_path, const std::filesystem::path& svg_path);

}  // namespace windcnn
