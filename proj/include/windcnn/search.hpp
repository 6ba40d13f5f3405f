#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "windcnn/analysis.hpp"
#include "windcnn/data.hpp"
#include "windcnn/model_config.hpp"
#include "windcnn/rng.hpp"
#include "windcnn/train.hpp"

namespace windcnn {

/// Finite categorical hyperparameter space of one architecture. Decoder
/// channels are derived: reversed encoder channels for the U-Net decoder,
/// the encoder channels themselves for the Half-U-Net decoder.
struct ParamSpace {
  Architecture architecture = Architecture::half_u_next;
  std::vector<StageList> encoder_channels;
  std::vector<StageList> encoder_blocks;
  std::vector<StageList> decoder_blocks;
  std::vector<int> output_blocks;
  std::vector<int> resmerge_blocks;
  std::vector<double> dropout;
};

/// The tested space for `arch`. With `tiny`, only the narrowest channel
/// option is kept.
ParamSpace param_space(Architecture arch, bool tiny = false);

/// Axis-wise membership test, including the derived decoder channels.
bool contains(const ParamSpace& space, const ModelConfig& config);

/// One independent uniform draw per axis, in a fixed axis order.
ModelConfig sample_config(const ParamSpace& space, Rng& rng);

struct TrialResult {
  int trial = 0;
  Architecture architecture = Architecture::half_u_next;
  ModelConfig config;
  double loss = 0.0;        // final validation Huber loss; NaN for a failed trial
  double runtime_ms = 0.0;  // mean batch-1 forward latency; NaN for a failed trial
  std::int64_t params = 0;
  std::int64_t macs = 0;
  std::uint64_t seed = 0;
  std::vector<EpochLoss> history;  // empty for rows restored from disk
  std::string error;               // failure diagnostic, empty on success

  bool ok() const;
};

struct SearchOptions {
  int n_trials = 16;
  std::uint64_t base_seed = 0;
  /// Optimizer, batch size, loss and epoch count; `seed` is replaced per trial.
  TrainConfig train{.epochs = 5};
  int workers = 1;
  int bench_warmup = 10;
  int bench_repeats = 50;
  /// Per-trial epoch histories go here as CSV when non-empty.
  std::filesystem::path history_dir;
  /// Called after each trial completes, serialized across workers.
  std::function<void(const TrialResult&)> on_trial;
};

/// Seed of trial `t`: drives config sampling, weight init, shuffling and dropout.
std::uint64_t trial_seed(std::uint64_t base_seed, int trial);

/// Samples, builds, trains, evaluates, benchmarks and counts one trial.
/// Numeric failures and config rejections produce a failure row instead of
/// throwing.
TrialResult run_trial(const ParamSpace& space, int trial, const std::vector<Sample>& train,
                      const std::vector<Sample>& val, const SearchOptions& options);

inline constexpr char kSearchHeader[] = "trial,arch,loss,runtime_ms,params,macs,seed,config_json";

std::string search_csv_row(const TrialResult& result);
TrialResult parse_search_row(const std::string& line);

/// Complete rows of a results file. A trailing line without its newline is
/// treated as an interrupted write and ignored.
std::vector<TrialResult> read_search_csv(const std::filesystem::path& path);

/// Runs trials 0..n_trials-1, appending each finished row to `csv_path`.
/// Trial ids already present in the file are skipped, so an interrupted
/// search resumes where it stopped. Returns every row sorted by trial id.
/// Throws DataError if the file holds rows from a different architecture
/// or base seed.
std::vector<TrialResult> run_search(const ParamSpace& space, const std::vector<Sample>& train,
                                    const std::vector<Sample>& val, const SearchOptions& options,
                                    const std::filesystem::path& csv_path);

/// Minimum validation loss per architecture; ties go to the lower runtime,
/// then the lower trial id. Architectures without a successful trial are absent.
std::map<Architecture, TrialResult> select_best(const std::vector<TrialResult>& results);

/// Successful trials as objective-space points labelled "<arch-slug>:<trial>".
std::vector<ParetoPoint> to_pareto_points(const std::vector<TrialResult>& results);

}  // namespace windcnn
