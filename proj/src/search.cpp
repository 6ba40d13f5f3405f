#include "windcnn/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

#include "windcnn/counting.hpp"
#include "windcnn/csv.hpp"
#include "windcnn/errors.hpp"
#include "windcnn/model.hpp"

namespace windcnn {

namespace fs = std::filesystem;

ParamSpace param_space(Architecture arch, bool tiny) {
  ParamSpace s;
  s.architecture = arch;
  if (decoder_type_of(arch) == DecoderType::unet) {
    s.encoder_channels = {{32, 64, 128, 256, 512}, {64, 128, 256, 512, 1024}, {128, 256, 512, 1024, 2048}};
  } else {
    s.encoder_channels = {{32, 32, 32, 32, 32}, {64, 64, 64, 64, 64}, {128, 128, 128, 128, 128}};
  }
  if (tiny) s.encoder_channels.resize(1);
  s.encoder_blocks = {{1, 1, 1, 1, 1}, {2, 2, 2, 2, 2}, {4, 4, 4, 4, 4}};
  s.decoder_blocks = s.encoder_blocks;
  s.output_blocks = {1, 2, 4};
  s.resmerge_blocks = {1, 2, 4};
  s.dropout = {0.1, 0.2, 0.3};
  return s;
}

namespace {

StageList derived_decoder_channels(const ParamSpace& space, const StageList& encoder) {
  return decoder_type_of(space.architecture) == DecoderType::unet ? reversed(encoder) : encoder;
}

template <typename V>
const typename V::value_type& pick(const V& options, Rng& rng) {
  if (options.empty()) throw ConfigError("search space has an empty axis");
  return options[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(options.size()) - 1))];
}

template <typename V, typename X>
bool member(const V& options, const X& x) {
  return std::find(options.begin(), options.end(), x) != options.end();
}

}  // namespace

bool contains(const ParamSpace& space, const ModelConfig& c) {
  return c.block_type == block_type_of(space.architecture) && c.decoder_type == decoder_type_of(space.architecture) &&
         member(space.encoder_channels, c.encoder_channels) &&
         c.decoder_channels == derived_decoder_channels(space, c.encoder_channels) &&
         member(space.encoder_blocks, c.encoder_blocks) && member(space.decoder_blocks, c.decoder_blocks) &&
         member(space.output_blocks, c.output_blocks) && member(space.resmerge_blocks, c.resmerge_blocks) &&
         member(space.dropout, c.dropout) && c.input_channels == 1 && c.output_channels == 3;
}

ModelConfig sample_config(const ParamSpace& space, Rng& rng) {
  ModelConfig c;
  c.block_type = block_type_of(space.architecture);
  c.decoder_type = decoder_type_of(space.architecture);
  c.encoder_channels = pick(space.encoder_channels, rng);
  c.decoder_channels = derived_decoder_channels(space, c.encoder_channels);
  c.encoder_blocks = pick(space.encoder_blocks, rng);
  c.decoder_blocks = pick(space.decoder_blocks, rng);
  c.output_blocks = pick(space.output_blocks, rng);
  c.resmerge_blocks = pick(space.resmerge_blocks, rng);
  c.dropout = pick(space.dropout, rng);
  return c;
}

bool TrialResult::ok() const { return std::isfinite(loss) && std::isfinite(runtime_ms); }

std::uint64_t trial_seed(std::uint64_t base_seed, int trial) {
  return derive_seed(base_seed, static_cast<std::uint64_t>(trial));
}


TrialResult run_trial(const ParamSpace& space, int trial, const std::vector<Sample>& train,
                      const std::vector<Sample>& val, const SearchOptions& options) {
  if (train.empty() || val.empty()) throw ConfigError("search needs non-empty train and validation splits");
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();

  TrialResult r;
  r.trial = trial;
  r.architecture = space.architecture;
  r.seed = trial_seed(options.base_seed, trial);
  Rng config_rng(r.seed, "config");
  r.config = sample_config(space, config_rng);
  r.loss = nan;
  r.runtime_ms = nan;

  const Shape grid = val.front().input.shape();
  try {
    validate(r.config);
    r.params = count_params(r.config);
    r.macs = count_macs(r.config, grid.h, grid.w);

    TrainConfig tc = options.train;
    tc.seed = r.seed;
    Model<float> model(r.config, r.seed);
    Trainer trainer(model, tc);
    r.history = trainer.fit(train, val);
    const double loss = r.history.back().val_loss;
    if (!std::isfinite(loss)) throw NumericError("validation loss is not finite");

    const BenchReport bench = bench_runtime(model, {1, static_cast<int>(grid.c), static_cast<int>(grid.h),
                                                    static_cast<int>(grid.w)},
                                            options.bench_warmup, options.bench_repeats);
    r.loss = loss;
    r.runtime_ms = bench.mean_ms;
  } catch (const NumericError& e) {
    r.error = e.what();
  } catch (const ConfigError& e) {
    r.error = e.what();
  }
  return r;
}

std::string search_csv_row(const TrialResult& r) {
  return std::to_string(r.trial) + ',' + std::string(architecture_slug(r.architecture)) + ',' +
         format_number(r.loss) + ',' + format_number(r.runtime_ms) + ',' + std::to_string(r.params) + ',' +
         std::to_string(r.macs) + ',' + std::to_string(r.seed) + ',' + csv_field(config_to_json_string(r.config));
}

TrialResult parse_search_row(const std::string& line) {
  const auto f = split_csv_line(line);
  if (f.size() != 8) throw DataError("search CSV row has " + std::to_string(f.size()) + " fields, expected 8");
  TrialResult r;
  try {
    std::size_t used = 0;
    r.trial = std::stoi(f[0], &used);
    if (used != f[0].size() || r.trial < 0) throw DataError("bad trial id");
    r.params = std::stoll(f[4]);
    r.macs = std::stoll(f[5]);
    r.seed = std::stoull(f[6]);
  } catch (const std::logic_error&) {
    throw DataError("malformed integer field in search CSV row: " + line);
  }
  try {
    r.architecture = parse_architecture(f[1]);
    r.config = config_from_json_string(f[7]);
  } catch (const ConfigError& e) {
    throw DataError(std::string("bad search CSV row: ") + e.what());
  }
  r.loss = parse_number(f[2]);
  r.runtime_ms = parse_number(f[3]);
  if (!r.ok()) r.error = "failed";
  return r;
}

namespace {

struct ParsedFile {
  std::vector<TrialResult> rows;
  std::uintmax_t complete_bytes = 0;  // length of the prefix made of whole lines
};

ParsedFile parse_search_file(const fs::path& path) {
  ParsedFile out;
  const std::string text = read_file(path);
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) break;  // torn final write
    const std::string line = text.substr(pos, nl - pos);
    if (!header_seen) {
      if (line != kSearchHeader) throw DataError("'" + path.string() + "' is not a search results file");
      header_seen = true;
    } else if (!line.empty()) {
      out.rows.push_back(parse_search_row(line));
    }
    pos = nl + 1;
    out.complete_bytes = pos;
  }
  return out;
}

}  // namespace

std::vector<TrialResult> read_search_csv(const fs::path& path) { return parse_search_file(path).rows; }

std::vector<TrialResult> run_search(const ParamSpace& space, const std::vector<Sample>& train,
                                    const std::vector<Sample>& val, const SearchOptions& options,
                                    const fs::path& csv_path) {
  if (options.n_trials < 1) throw ConfigError("n_trials must be >= 1");
  if (options.workers < 1) throw ConfigError("workers must be >= 1");
  validate(options.train);

  std::vector<TrialResult> results;
  std::set<int> done;
  if (fs::exists(csv_path) && fs::file_size(csv_path) > 0) {
    ParsedFile existing = parse_search_file(csv_path);
    for (auto& r : existing.rows) {
      if (r.architecture != space.architecture) {
        throw DataError("'" + csv_path.string() + "' holds results for " +
                        std::string(architecture_name(r.architecture)));
      }
      if (r.seed != trial_seed(options.base_seed, r.trial)) {
        throw DataError("'" + csv_path.string() + "' was produced with a different base seed");
      }
      if (!done.insert(r.trial).second) {
        throw DataError("duplicate trial " + std::to_string(r.trial) + " in '" + csv_path.string() + "'");
      }
      results.push_back(std::move(r));
    }
    if (existing.complete_bytes == 0) {
      fs::remove(csv_path);
    } else if (existing.complete_bytes != fs::file_size(csv_path)) {
      fs::resize_file(csv_path, existing.complete_bytes);
    }
  }
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  if (!fs::exists(csv_path)) {
    std::ofstream out(csv_path, std::ios::binary);
    out << kSearchHeader << '\n';
    if (!out.flush()) throw DataError("cannot write '" + csv_path.string() + "'");
  }
  if (!options.history_dir.empty()) fs::create_directories(options.history_dir);

  std::vector<int> pending;
  for (int t = 0; t < options.n_trials; ++t) {
    if (!done.count(t)) pending.push_back(t);
  }

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  auto worker = [&] {
    while (true) {
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      const std::size_t i = next.fetch_add(1);
      if (i >= pending.size()) return;
      try {
        TrialResult r = run_trial(space, pending[i], train, val, options);
        if (!options.history_dir.empty() && !r.history.empty()) {
          char name[64];
          std::snprintf(name, sizeof(name), "%s_trial_%04d.csv", std::string(architecture_slug(r.architecture)).c_str(),
                        r.trial);
          write_file_atomic(options.history_dir / name, loss_history_csv(r.history));
        }
        std::lock_guard lock(mu);
        std::ofstream out(csv_path, std::ios::binary | std::ios::app);
        out << search_csv_row(r) << '\n';
        if (!out.flush()) throw DataError("cannot append to '" + csv_path.string() + "'");
        if (options.on_trial) options.on_trial(r);
        results.push_back(std::move(r));
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const int n_workers = std::min<int>(options.workers, static_cast<int>(std::max<std::size_t>(pending.size(), 1)));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::sort(results.begin(), results.end(), [](const TrialResult& a, const TrialResult& b) { return a.trial < b.trial; });
  return results;
}

std::map<Architecture, TrialResult> select_best(const std::vector<TrialResult>& results) {
  std::map<Architecture, TrialResult> best;
  for (const auto& r : results) {
    if (!r.ok()) continue;
    auto it = best.find(r.architecture);
    if (it == best.end()) {
      best.emplace(r.architecture, r);
      continue;
    }
    const TrialResult& b = it->second;
    const bool better = r.loss < b.loss || (r.loss == b.loss && (r.runtime_ms < b.runtime_ms ||
                                                                 (r.runtime_ms == b.runtime_ms && r.trial < b.trial)));
    if (better) it->second = r;
  }
  return best;
}

std::vector<ParetoPoint> to_pareto_points(const std::vector<TrialResult>& results) {
  std::vector<ParetoPoint> points;
  for (const auto& r : results) {
    if (!r.ok()) continue;
    ParetoPoint p;
    p.config = std::string(architecture_slug(r.architecture)) + ":" + std::to_string(r.trial);
    p.loss = r.loss;
    p.runtime_ms = r.runtime_ms;
    p.block_type = r.config.block_type;
    p.decoder_type = r.config.decoder_type;
    p.params = r.params;
    p.macs = r.macs;
    points.push_back(std::move(p));
  }
  return points;
}

}  // namespace windcnn
