#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <memory>
#include <optional>
#include <utility>
#include <string>
#include <vector>

#include <json.hpp>

#include "png_writer.hpp"
#include "windcnn/analysis.hpp"
#include "windcnn/counting.hpp"
#include "windcnn/csv.hpp"
#include "windcnn/data.hpp"
#include "windcnn/errors.hpp"
#include "windcnn/model.hpp"
#include "windcnn/search.hpp"
#include "windcnn/train.hpp"

#ifndef WINDCNN_VERSION
#define WINDCNN_VERSION "unknown"
#endif

namespace windcnn::tools {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Replay record written next to a command's outputs. Timestamps live here
// and nowhere else, so primary outputs stay byte-identical across reruns.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  json options = json::object();
  json seeds = json::object();
  std::vector<std::string> artifacts;
  std::string started_at = utc_now();

  void write(const fs::path& path) const {
    json doc = {{"tool", "windcnn"},        {"version", WINDCNN_VERSION}, {"command", command},
                {"argv", argv},             {"options", options},         {"seeds", seeds},
                {"artifacts", artifacts},   {"started_at", started_at},   {"finished_at", utc_now()}};
    write_file_atomic(path, doc.dump(2) + "\n");
  }
};

// Deletes outputs this run created unless commit() is reached, so a failed
// command leaves no partial primary outputs behind.
class OutputGuard {
 public:
  void track(const fs::path& p) {
    if (!fs::exists(p)) created_.push_back(p);
  }
  void commit() { committed_ = true; }
  ~OutputGuard() {
    if (committed_) return;
    for (const auto& p : created_) {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
  }

 private:
  std::vector<fs::path> created_;
  bool committed_ = false;
};

fs::path sibling(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

ModelConfig load_model_config(const std::string& file) {
  if (file.empty()) return ModelConfig{};
  ModelConfig c = config_from_json_string(read_file(file));
  validate(c);
  return c;
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

struct LoadedModel {
  CheckpointHeader header;
  std::unique_ptr<Model<float>> model;
  std::vector<EpochLoss> history;
};

LoadedModel load_trained_model(const fs::path& ckpt) {
  LoadedModel out;
  out.header = read_checkpoint_header(ckpt);
  out.model = std::make_unique<Model<float>>(out.header.model, out.header.model_seed);
  Trainer trainer(*out.model, out.header.train);
  trainer.load_checkpoint(ckpt);
  out.history = trainer.history();
  return out;
}

bool given(const CLI::App* sub, const std::string& name) { return sub->get_option(name)->count() > 0; }

// ---------------------------------------------------------------------------

struct GenDataArgs {
  int scenes = 16;
  int grid = 128;
  std::uint64_t seed = 0;
  std::string out;
  int workers = 1;
  bool paper_scale = false;
};

int cmd_gen_data(GenDataArgs a, const CLI::App* sub, RunManifest& run) {
  if (a.paper_scale) {
    if (!given(sub, "--scenes")) a.scenes = 163;
    if (!given(sub, "--grid")) a.grid = 1024;
  }
  run.options = {{"scenes", a.scenes}, {"grid", a.grid}, {"seed", a.seed}, {"out", a.out}, {"workers", a.workers}};
  run.seeds = {{"dataset", a.seed}};

  const fs::path root(a.out);
  OutputGuard guard;
  guard.track(root);
  BuildOptions opts;
  opts.workers = a.workers;
  const DatasetManifest m = build_dataset(root, a.scenes, a.grid, a.seed, opts);
  run.artifacts = {(root / "manifest.json").string(), (root / "data").string()};
  run.write(root / "run_manifest.json");
  guard.commit();

  std::cout << "dataset " << root.string() << ": " << m.scene_count() << " scenes (train/val/test = " << m.train.size()
            << "/" << m.val.size() << "/" << m.test.size() << "), " << m.sample_count() << " samples, grid "
            << m.grid << "x" << m.grid << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  int epochs = 30;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int batch = 4;
  double weight_decay = 0.01;
  double delta = 1.0;
  std::string out;
  std::string loss_csv;
  bool resume = false;
};

int cmd_train(const TrainArgs& a, const CLI::App* sub, RunManifest& run) {
  const fs::path ckpt(a.out);
  const fs::path csv = a.loss_csv.empty() ? sibling(ckpt, ".loss.csv") : fs::path(a.loss_csv);

  ModelConfig mc = load_model_config(a.config);
  TrainConfig tc;
  tc.learning_rate = a.lr;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.weight_decay = a.weight_decay;
  tc.huber_delta = a.delta;
  tc.seed = a.seed;
  std::uint64_t model_seed = a.seed;

  const bool resuming = a.resume && fs::exists(ckpt);
  if (resuming) {
    const CheckpointHeader h = read_checkpoint_header(ckpt);
    if (!a.config.empty() && !(h.model == mc)) {
      throw ConfigError("--config differs from the model stored in '" + ckpt.string() + "'");
    }
    mc = h.model;
    const int epochs = given(sub, "--epochs") ? a.epochs : h.train.epochs;
    tc = h.train;
    tc.epochs = epochs;
    model_seed = h.model_seed;
  }
  validate(tc);

  run.options = {{"config", to_json(mc)}, {"train", to_json(tc)}, {"data", a.data},       {"out", a.out},
                 {"loss_csv", csv.string()}, {"resume", a.resume}};
  run.seeds = {{"model", model_seed}, {"train", tc.seed}};
  run.artifacts = {ckpt.string(), csv.string()};

  const std::vector<Sample> train = load_split(a.data, Split::train);
  const std::vector<Sample> val = load_split(a.data, Split::val);

  OutputGuard guard;
  guard.track(ckpt);
  guard.track(csv);
  Model<float> model(mc, model_seed);
  Trainer trainer(model, tc);
  if (resuming) {
    trainer.load_checkpoint(ckpt);
    std::cout << "resuming from epoch " << trainer.completed_epochs() << "\n";
  }
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  trainer.fit(train, val, [&](const EpochLoss& e) {
    trainer.save_checkpoint(ckpt);
    write_file_atomic(csv, loss_history_csv(trainer.history()));
    std::cout << "epoch " << e.epoch << " train_loss " << format_number(e.train_loss) << " val_loss "
              << format_number(e.val_loss) << std::endl;
  });
  if (!fs::exists(ckpt)) {
    trainer.save_checkpoint(ckpt);
    write_file_atomic(csv, loss_history_csv(trainer.history()));
  }
  run.write(sibling(ckpt, ".run.json"));
  guard.commit();
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string ckpt;
  std::string data;
  std::string split = "val";
};

int cmd_evaluate(const EvaluateArgs& a) {
  LoadedModel lm = load_trained_model(a.ckpt);
  const std::vector<Sample> samples = load_split(a.data, parse_split(a.split));
  if (samples.empty()) throw DataError("split '" + a.split + "' is empty");
  const double loss = evaluate(*lm.model, samples, lm.header.train.huber_delta);
  json out = {{"checkpoint", a.ckpt}, {"split", a.split}, {"samples", samples.size()}, {"loss", loss}};
  if (!lm.history.empty()) out["logged_val_loss"] = lm.history.back().val_loss;
  std::cout << out.dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SearchArgs {
  std::string arch;
  int trials = 16;
  int epochs = 5;
  std::string data;
  std::uint64_t seed = 0;
  std::string out;
  bool tiny = false;
  bool paper_scale = false;
  int workers = 1;
  int batch = 4;
  double lr = 1e-3;
  int bench_warmup = 10;
  int bench_repeats = 50;
  std::string history_dir;
};

int cmd_search(SearchArgs a, const CLI::App* sub, RunManifest& run) {
  if (a.paper_scale) {
    if (!given(sub, "--trials")) a.trials = 128;
    if (!given(sub, "--epochs")) a.epochs = 30;
  }
  const Architecture arch = parse_architecture(a.arch);
  const ParamSpace space = param_space(arch, a.tiny);

  SearchOptions opts;
  opts.n_trials = a.trials;
  opts.base_seed = a.seed;
  opts.train.epochs = a.epochs;
  opts.train.batch_size = a.batch;
  opts.train.learning_rate = a.lr;
  opts.workers = a.workers;
  opts.bench_warmup = a.bench_warmup;
  opts.bench_repeats = a.bench_repeats;
  opts.history_dir = a.history_dir;
  opts.on_trial = [](const TrialResult& r) {
    std::cout << "trial " << r.trial << " loss " << format_number(r.loss) << " runtime_ms "
              << format_number(r.runtime_ms) << " params " << r.params;
    if (!r.error.empty()) std::cout << " failed: " << r.error;
    std::cout << std::endl;
  };
  validate(opts.train);

  run.options = {{"arch", architecture_slug(arch)}, {"trials", a.trials},       {"epochs", a.epochs},
                 {"data", a.data},                  {"seed", a.seed},           {"out", a.out},
                 {"tiny", a.tiny},                  {"workers", a.workers},     {"batch", a.batch},
                 {"lr", a.lr},                      {"bench_warmup", a.bench_warmup},
                 {"bench_repeats", a.bench_repeats}, {"history_dir", a.history_dir}};
  run.seeds = {{"base", a.seed}};
  run.artifacts = {a.out};
  if (!a.history_dir.empty()) run.artifacts.push_back(a.history_dir);

  const std::vector<Sample> train = load_split(a.data, Split::train);
  const std::vector<Sample> val = load_split(a.data, Split::val);
  const auto results = run_search(space, train, val, opts, a.out);
  run.write(sibling(a.out, ".run.json"));

  const auto best = select_best(results);
  if (best.empty()) {
    std::cout << "no successful trials\n";
  } else {
    const TrialResult& b = best.begin()->second;
    std::cout << "best " << architecture_name(arch) << ": trial " << b.trial << " loss " << format_number(b.loss)
              << " config " << config_to_json_string(b.config) << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ParetoArgs {
  std::vector<std::string> inputs;
  std::string out_prefix;
};

int cmd_pareto(const ParetoArgs& a, RunManifest& run) {
  std::vector<TrialResult> all;
  for (const auto& in : a.inputs) {
    if (!fs::exists(in)) throw DataError("search results '" + in + "' not found");
    auto rows = read_search_csv(in);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  const auto points = to_pareto_points(all);
  const auto front = relative_metrics(pareto_front(points));
  const fs::path csv = a.out_prefix + ".csv";
  const fs::path svg = a.out_prefix + ".svg";
  run.options = {{"in", a.inputs}, {"out_prefix", a.out_prefix}};
  run.artifacts = {csv.string(), svg.string()};
  if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
  export_report(points, front, csv, svg);
  run.write(a.out_prefix + ".run.json");

  std::cout << all.size() << " trials, " << points.size() << " successful, " << front.size()
            << " on the Pareto front\n";
  for (const auto& p : front) {
    char line[256];
    std::snprintf(line, sizeof(line), "%-16s loss %.6f runtime_ms %.4f rel_loss %.4f rel_runtime %.4f\n",
                  p.config.c_str(), p.loss, p.runtime_ms, p.relative_loss, p.relative_runtime);
    std::cout << line;
  }
  for (const auto& [arch, r] : select_best(all)) {
    std::cout << "best " << architecture_name(arch) << ": trial " << r.trial << " loss " << format_number(r.loss)
              << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string ckpt;
  std::string config;
  int grid = 128;
  int warmup = 10;
  int repeats = 50;
  std::uint64_t seed = 0;
};

int cmd_bench(const BenchArgs& a) {
  std::unique_ptr<Model<float>> model;
  if (!a.ckpt.empty()) {
    model = std::move(load_trained_model(a.ckpt).model);
  } else {
    model = std::make_unique<Model<float>>(load_model_config(a.config), a.seed);
  }
  const BenchReport r = bench_runtime(*model, {1, 1, a.grid, a.grid}, a.warmup, a.repeats);
  const json out = {{"grid", a.grid},
                    {"warmup", r.warmup},
                    {"repeats", r.repeats},
                    {"mean_ms", r.mean_ms},
                    {"median_ms", r.median_ms},
                    {"min_ms", r.min_ms},
                    {"cv", r.cv},
                    {"times_ms", r.times_ms},
                    {"macs", count_macs(model->config(), a.grid, a.grid)}};
  std::cout << out.dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CountArgs {
  std::string config;
  int grid = 128;
  bool paper_scale = false;
};

int cmd_count(CountArgs a, const CLI::App* sub) {
  if (a.paper_scale && !given(sub, "--grid")) a.grid = 1024;
  const ModelConfig c = load_model_config(a.config);
  const json out = {{"architecture", architecture_name(architecture_of(c))},
                    {"grid", a.grid},
                    {"params", count_params(c)},
                    {"macs", count_macs(c, a.grid, a.grid)}};
  std::cout << out.dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string ckpt;
  std::string scene;
  int direction = 0;
  std::string out;
};

int cmd_predict(const PredictArgs& a, RunManifest& run) {
  if (a.direction < 0 || a.direction >= kDirections) {
    throw ConfigError("--dir must lie in [0, " + std::to_string(kDirections - 1) + "]");
  }
  LoadedModel lm = load_trained_model(a.ckpt);
  std::vector<double> height = read_height_file(fs::path(a.scene) / "height.f32");
  const int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(height.size()))));

  GridFields world{g, height, {}};
  for (auto& p : world.uvw) p.assign(height.size(), 0.0);
  const Sample sample = make_sample(world, a.direction, kVMax, fs::path(a.scene).filename().string());
  Tensor<float> pred;
  {
    NoGradGuard no_grad;
    pred = lm.model->forward(sample.input, Mode::eval);
  }
  if (!all_finite(std::as_const(pred).data())) throw NumericError("prediction contains non-finite values");
  const GridFields field = prediction_to_world(pred, std::move(height), a.direction, kVMax);
  const std::string bytes = encode_velocity_u8(field.uvw, kVMax);

  run.options = {{"ckpt", a.ckpt}, {"scene", a.scene}, {"dir", a.direction}, {"out", a.out}};
  run.seeds = {{"model", lm.header.model_seed}};
  run.artifacts = {a.out};
  const fs::path out(a.out);
  OutputGuard guard;
  guard.track(out);
  if (out.extension() == ".png") {
    // Image rows run top to bottom, so +y points up in the picture.
    std::string flipped(bytes.size(), '\0');
    const std::size_t row = static_cast<std::size_t>(g) * 3;
    for (int i = 0; i < g; ++i) bytes.copy(flipped.data() + (g - 1 - i) * row, row, i * row);
    write_png_rgb(out, g, g, flipped);
  } else {
    write_file_atomic(out, bytes);
  }
  run.write(sibling(out, ".run.json"));
  guard.commit();
  std::cout << "wrote " << g << "x" << g << " u,v,w field for direction " << a.direction << " to " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct RepeatArgs {
  std::string config;
  std::string data;
  int seeds = 10;
  int epochs = 30;
  double lr = 1e-3;
  int batch = 4;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_repeat(const RepeatArgs& a, RunManifest& run) {
  const ModelConfig mc = load_model_config(a.config);
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.learning_rate = a.lr;
  tc.batch_size = a.batch;
  tc.seed = a.seed;
  validate(tc);
  const std::vector<Sample> train = load_split(a.data, Split::train);
  const std::vector<Sample> val = load_split(a.data, Split::val);
  const LossSummary s = repeat_train(mc, tc, a.seeds, train, val);

  const json out = {{"architecture", architecture_name(architecture_of(mc))},
                    {"seeds", s.seeds},
                    {"val_losses", s.losses},
                    {"min", s.min},
                    {"median", s.median},
                    {"max", s.max},
                    {"mean", s.mean}};
  if (!a.out.empty()) {
    std::string csv = "seed,val_loss\n";
    for (std::size_t i = 0; i < s.seeds.size(); ++i) {
      csv += std::to_string(s.seeds[i]) + "," + format_number(s.losses[i]) + "\n";
    }
    write_file_atomic(a.out, csv);
    run.options = {{"config", to_json(mc)}, {"train", to_json(tc)}, {"data", a.data}, {"seeds", a.seeds},
                   {"out", a.out}};
    run.seeds = {{"base", a.seed}};
    run.artifacts = {a.out};
    run.write(sibling(a.out, ".run.json"));
  }
  std::cout << out.dump() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"windcnn: CNN surrogates for pedestrian-level urban wind fields"};
  app.set_version_flag("--version", WINDCNN_VERSION);
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic scene/wind dataset");
  gen_cmd->add_option("--scenes", gen.scenes, "Number of scenes (x8 directions)")->capture_default_str();
  gen_cmd->add_option("--grid", gen.grid, "Grid size G (multiple of 64)")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Dataset seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--workers", gen.workers, "Parallel scene workers")->capture_default_str();
  gen_cmd->add_flag("--paper-scale", gen.paper_scale, "163 scenes at 1024x1024 unless overridden");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train one model and write a checkpoint plus loss CSV");
  train_cmd->add_option("--config", tr.config, "Model config JSON (default: Half-U-NeXt, width 32)");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--epochs", tr.epochs)->capture_default_str();
  train_cmd->add_option("--lr", tr.lr)->capture_default_str();
  train_cmd->add_option("--seed", tr.seed, "Weight-init, shuffle and dropout seed")->capture_default_str();
  train_cmd->add_option("--batch", tr.batch)->capture_default_str();
  train_cmd->add_option("--weight-decay", tr.weight_decay)->capture_default_str();
  train_cmd->add_option("--delta", tr.delta, "Huber threshold")->capture_default_str();
  train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
  train_cmd->add_option("--loss-csv", tr.loss_csv, "Loss history path (default: <out>.loss.csv)");
  train_cmd->add_flag("--resume", tr.resume, "Continue from an existing checkpoint at --out");
  bool train_paper_scale = false;
  train_cmd->add_flag("--paper-scale", train_paper_scale, "Accepted for symmetry; defaults are already 30 epochs");

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Mean Huber loss of a checkpoint on a dataset split");
  eval_cmd->add_option("--ckpt", ev.ckpt)->required();
  eval_cmd->add_option("--data", ev.data)->required();
  eval_cmd->add_option("--split", ev.split)->capture_default_str();

  SearchArgs se;
  auto* search_cmd = app.add_subcommand("search", "Random hyperparameter search for one architecture");
  search_cmd->add_option("--arch", se.arch, "half-u-next, half-u-net, u-next or u-net")->required();
  search_cmd->add_option("--trials", se.trials)->capture_default_str();
  search_cmd->add_option("--epochs", se.epochs)->capture_default_str();
  search_cmd->add_option("--data", se.data)->required();
  search_cmd->add_option("--seed", se.seed, "Base seed")->capture_default_str();
  search_cmd->add_option("--out", se.out, "Results CSV (resumed if present)")->required();
  search_cmd->add_flag("--tiny", se.tiny, "Only the narrowest channel option");
  search_cmd->add_flag("--paper-scale", se.paper_scale, "128 trials x 30 epochs unless overridden");
  search_cmd->add_option("--workers", se.workers)->capture_default_str();
  search_cmd->add_option("--batch", se.batch)->capture_default_str();
  search_cmd->add_option("--lr", se.lr)->capture_default_str();
  search_cmd->add_option("--bench-warmup", se.bench_warmup)->capture_default_str();
  search_cmd->add_option("--bench-repeats", se.bench_repeats)->capture_default_str();
  search_cmd->add_option("--history-dir", se.history_dir, "Per-trial loss histories");

  ParetoArgs pa;
  auto* pareto_cmd = app.add_subcommand("pareto", "Pareto front over merged search CSVs");
  pareto_cmd->add_option("--in", pa.inputs, "Search results CSVs")->required()->expected(1, -1);
  pareto_cmd->add_option("--out-prefix", pa.out_prefix, "Writes <prefix>.csv and <prefix>.svg")->required();

  BenchArgs be;
  auto* bench_cmd = app.add_subcommand("bench", "Batch-1 inference latency");
  auto* bench_ckpt = bench_cmd->add_option("--ckpt", be.ckpt);
  auto* bench_cfg = bench_cmd->add_option("--config", be.config);
  bench_ckpt->excludes(bench_cfg);
  bench_cmd->add_option("--grid", be.grid)->capture_default_str();
  bench_cmd->add_option("--warmup", be.warmup)->capture_default_str();
  bench_cmd->add_option("--repeats", be.repeats)->capture_default_str();
  bench_cmd->add_option("--seed", be.seed, "Init seed when benchmarking an untrained --config")
      ->capture_default_str();

  CountArgs co;
  auto* count_cmd = app.add_subcommand("count", "Parameter and multiply-accumulate counts");
  count_cmd->add_option("--config", co.config, "Model config JSON (default: Half-U-NeXt, width 32)");
  count_cmd->add_option("--grid", co.grid)->capture_default_str();
  count_cmd->add_flag("--paper-scale", co.paper_scale, "Count at 1024x1024 unless --grid is given");

  PredictArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "Predict the u,v,w field of one scene and direction");
  predict_cmd->add_option("--ckpt", pr.ckpt)->required();
  predict_cmd->add_option("--scene", pr.scene, "Scene directory holding height.f32")->required();
  predict_cmd->add_option("--dir", pr.direction, "Wind direction index 0..7")->required();
  predict_cmd->add_option("--out", pr.out, "Output .png or raw interleaved .u8")->required();

  RepeatArgs re;
  auto* repeat_cmd = app.add_subcommand("repeat", "Train one config under several seeds and summarize");
  repeat_cmd->add_option("--config", re.config);
  repeat_cmd->add_option("--data", re.data)->required();
  repeat_cmd->add_option("--seeds", re.seeds)->capture_default_str();
  repeat_cmd->add_option("--epochs", re.epochs)->capture_default_str();
  repeat_cmd->add_option("--lr", re.lr)->capture_default_str();
  repeat_cmd->add_option("--batch", re.batch)->capture_default_str();
  repeat_cmd->add_option("--seed", re.seed, "First seed")->capture_default_str();
  repeat_cmd->add_option("--out", re.out, "Optional seed,val_loss CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "windcnn: " << e.what() << "\n";
    return kExitUsage;
  }

  RunManifest run;
  run.argv.assign(argv, argv + argc);
  try {
    if (gen_cmd->parsed()) return run.command = "gen-data", cmd_gen_data(gen, gen_cmd, run);
    if (train_cmd->parsed()) return run.command = "train", cmd_train(tr, train_cmd, run);
    if (eval_cmd->parsed()) return cmd_evaluate(ev);
    if (search_cmd->parsed()) return run.command = "search", cmd_search(se, search_cmd, run);
    if (pareto_cmd->parsed()) return run.command = "pareto", cmd_pareto(pa, run);
    if (bench_cmd->parsed()) return cmd_bench(be);
    if (count_cmd->parsed()) return cmd_count(co, count_cmd);
    if (predict_cmd->parsed()) return run.command = "predict", cmd_predict(pr, run);
    if (repeat_cmd->parsed()) return run.command = "repeat", cmd_repeat(re, run);
  } catch (const ConfigError& e) {
    std::cerr << "windcnn: config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "windcnn: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "windcnn: numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "windcnn: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace windcnn::tools
