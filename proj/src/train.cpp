#include "windcnn/train.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <utility>

#include "windcnn/csv.hpp"
#include "windcnn/errors.hpp"

namespace windcnn {

namespace fs = std::filesystem;

void validate(const TrainConfig& c) {
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) {
    throw ConfigError("learning_rate must be a finite value >= 0");
  }
  if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(c.huber_delta > 0.0)) throw ConfigError("huber_delta must be > 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw ConfigError("betas must lie in [0, 1)");
  }
  if (!(c.eps > 0.0)) throw ConfigError("eps must be > 0");
  if (!(c.weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return nlohmann::json{{"learning_rate", c.learning_rate}, {"betas", {c.beta1, c.beta2}},
                        {"eps", c.eps},                     {"weight_decay", c.weight_decay},
                        {"epochs", c.epochs},               {"batch_size", c.batch_size},
                        {"huber_delta", c.huber_delta},     {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc) {
  try {
    TrainConfig c;
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    if (doc.contains("betas")) {
      c.beta1 = doc.at("betas").at(0).get<double>();
      c.beta2 = doc.at("betas").at(1).get<double>();
    }
    c.eps = doc.value("eps", c.eps);
    c.weight_decay = doc.value("weight_decay", c.weight_decay);
    c.epochs = doc.value("epochs", c.epochs);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.huber_delta = doc.value("huber_delta", c.huber_delta);
    c.seed = doc.value("seed", c.seed);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed train config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Loss

template <typename T>
Tensor<T> huber_loss(const Tensor<T>& prediction, const Tensor<T>& target, double delta) {
  if (!(prediction.shape() == target.shape())) {
    throw ShapeError("huber_loss: prediction " + prediction.shape().str() + " vs target " + target.shape().str());
  }
  if (!(delta > 0.0)) throw ConfigError("huber_loss: delta must be > 0");
  const T* p = prediction.ptr();
  const T* t = target.ptr();
  const auto n = static_cast<std::size_t>(prediction.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    const double a = std::abs(e);
    acc += a <= delta ? 0.5 * e * e : delta * (a - 0.5 * delta);
  }
  const double mean = n ? acc / static_cast<double>(n) : 0.0;
  return make_result<T>(Shape{1, 1, 1, 1}, std::vector<T>{static_cast<T>(mean)}, {&prediction, &target},
                        [delta, n](detail::TensorNode<T>& self) {
                          const auto& pn = *self.parents[0];
                          const auto& tn = *self.parents[1];
                          const double scale = static_cast<double>(self.grad[0]) / static_cast<double>(n);
                          std::vector<T> g(n);
                          for (std::size_t i = 0; i < n; ++i) {
                            const double e = static_cast<double>(pn.data[i]) - static_cast<double>(tn.data[i]);
                            g[i] = static_cast<T>(scale * std::clamp(e, -delta, delta));
                          }
                          if (self.parents[0]->requires_grad) {
                            auto& d = self.parents[0]->ensure_grad();
                            for (std::size_t i = 0; i < n; ++i) d[i] += g[i];
                          }
                          if (self.parents[1]->requires_grad) {
                            auto& d = self.parents[1]->ensure_grad();
                            for (std::size_t i = 0; i < n; ++i) d[i] -= g[i];
                          }
                        });
}

template Tensor<float> huber_loss(const Tensor<float>&, const Tensor<float>&, double);
template Tensor<double> huber_loss(const Tensor<double>&, const Tensor<double>&, double);

double huber_value(std::span<const float> prediction, std::span<const float> target, double delta) {
  if (prediction.size() != target.size()) throw ShapeError("huber_value: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double e = static_cast<double>(prediction[i]) - static_cast<double>(target[i]);
    const double a = std::abs(e);
    acc += a <= delta ? 0.5 * e * e : delta * (a - 0.5 * delta);
  }
  return prediction.empty() ? 0.0 : acc / static_cast<double>(prediction.size());
}

// ---------------------------------------------------------------------------
// Optimizer

template <typename T>
AdamW<T>::AdamW(const ParamRegistry<T>& registry, AdamWOptions options)
    : params_(registry.params()), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), T{0});
    v_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), T{0});
  }
}

template <typename T>
void AdamW<T>::step() {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    const auto g = std::as_const(p.tensor).grad();
    const auto bad = std::find_if(g.begin(), g.end(), [](T x) { return !std::isfinite(x); });
    if (bad != g.end()) {
      throw NumericError("AdamW: non-finite gradient in parameter '" + p.name + "' at element " +
                         std::to_string(bad - g.begin()) + "; step rejected");
    }
  }
  ++step_;
  const double lr = options_.learning_rate;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor<T> w = params_[k].tensor;
    const double decay = params_[k].decay ? lr * options_.weight_decay : 0.0;
    const bool has_grad = w.has_grad();
    const std::span<const T> grad = has_grad ? std::as_const(w).grad() : std::span<const T>{};
    auto data = w.data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = has_grad ? static_cast<double>(grad[i]) : 0.0;
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / c1;
      const double v_hat = vi / c2;
      const double wi = static_cast<double>(data[i]);
      data[i] = static_cast<T>(wi - lr * m_hat / (std::sqrt(v_hat) + options_.eps) - decay * wi);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

// ---------------------------------------------------------------------------
// Evaluation

void stack_batch(const std::vector<const Sample*>& batch, Tensor<float>& inputs, Tensor<float>& targets) {
  if (batch.empty()) throw DataError("empty batch");
  const Shape in = batch.front()->input.shape();
  const Shape out = batch.front()->target.shape();
  const auto b = static_cast<std::int64_t>(batch.size());
  inputs = Tensor<float>({b, in.c, in.h, in.w});
  targets = Tensor<float>({b, out.c, out.h, out.w});
  for (std::size_t k = 0; k < batch.size(); ++k) {
    if (!(batch[k]->input.shape() == in) || !(batch[k]->target.shape() == out)) {
      throw ShapeError("batch samples differ in shape: " + batch[k]->input.shape().str() + " vs " + in.str());
    }
    std::copy(batch[k]->input.data().begin(), batch[k]->input.data().end(),
              inputs.ptr() + static_cast<std::int64_t>(k) * in.numel());
    std::copy(batch[k]->target.data().begin(), batch[k]->target.data().end(),
              targets.ptr() + static_cast<std::int64_t>(k) * out.numel());
  }
}

namespace {

double sorted_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

}  // namespace

double evaluate(Model<float>& model, const std::vector<Sample>& samples, double delta) {
  if (samples.empty()) throw DataError("evaluate: empty split");
  NoGradGuard no_grad;
  std::vector<double> losses;
  losses.reserve(samples.size());
  for (const Sample& s : samples) {
    const Tensor<float> pred = model.forward(s.input, Mode::eval);
    losses.push_back(huber_value(pred.data(), s.target.data(), delta));
  }
  return sorted_mean(std::move(losses));
}

std::array<double, 3> channel_means(const std::vector<Sample>& samples) {
  if (samples.empty()) throw DataError("channel_means: empty split");
  std::array<double, 3> sums{0.0, 0.0, 0.0};
  std::int64_t count = 0;
  for (const Sample& s : samples) {
    const auto plane = static_cast<std::size_t>(s.target.shape().plane());
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < plane; ++p) sums[c] += s.target.data()[c * plane + p];
    count += static_cast<std::int64_t>(plane);
  }
  for (double& v : sums) v /= static_cast<double>(count);
  return sums;
}

double constant_predictor_loss(const std::array<double, 3>& means, const std::vector<Sample>& samples,
                               double delta) {
  if (samples.empty()) throw DataError("constant_predictor_loss: empty split");
  std::vector<double> losses;
  for (const Sample& s : samples) {
    const auto plane = static_cast<std::size_t>(s.target.shape().plane());
    std::vector<float> pred(s.target.data().size());
    for (std::size_t c = 0; c < 3; ++c)
      std::fill_n(pred.begin() + static_cast<std::ptrdiff_t>(c * plane), plane, static_cast<float>(means[c]));
    losses.push_back(huber_value(pred, s.target.data(), delta));
  }
  return sorted_mean(std::move(losses));
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

AdamWOptions adam_options(const TrainConfig& c) {
  return AdamWOptions{c.learning_rate, c.beta1, c.beta2, c.eps, c.weight_decay};
}

}  // namespace

Trainer::Trainer(Model<float>& model, TrainConfig config)
    : model_(model),
      config_(config),
      optimizer_(model.params(), adam_options(config)),
      shuffle_rng_(config.seed, "shuffle") {
  validate(config_);
}

EpochLoss Trainer::run_epoch(const std::vector<Sample>& train, const std::vector<Sample>& val) {
  if (train.empty()) throw DataError("train: empty training split");
  const int epoch = completed_epochs();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle_rng_.shuffle(order.begin(), order.end());

  double weighted = 0.0;
  const auto batch = static_cast<std::size_t>(config_.batch_size);
  Tensor<float> inputs, targets;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t end = std::min(order.size(), start + batch);
    std::vector<const Sample*> members;
    for (std::size_t k = start; k < end; ++k) members.push_back(&train[order[k]]);
    stack_batch(members, inputs, targets);

    model_.params().zero_grad();
    const Tensor<float> loss = huber_loss(model_.forward(inputs, Mode::train), targets, config_.huber_delta);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "train: non-finite loss at epoch " << epoch << ", batch " << start / batch << " (samples";
      for (const Sample* s : members) msg << ' ' << s->scene << "/d" << s->direction;
      msg << ")";
      throw NumericError(msg.str());
    }
    loss.backward();
    optimizer_.step();
    weighted += value * static_cast<double>(end - start);
  }

  EpochLoss row;
  row.epoch = epoch;
  row.train_loss = weighted / static_cast<double>(train.size());
  row.val_loss = val.empty() ? std::numeric_limits<double>::quiet_NaN() : evaluate(model_, val, config_.huber_delta);
  history_.push_back(row);
  return row;
}

std::vector<EpochLoss> Trainer::fit(const std::vector<Sample>& train, const std::vector<Sample>& val,
                                    const EpochCallback& on_epoch) {
  if (train.empty()) throw DataError("train: empty training split");
  while (completed_epochs() < config_.epochs) {
    const EpochLoss row = run_epoch(train, val);
    if (on_epoch) on_epoch(row);
  }
  return history_;
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  template <typename U>
  void le(U value) {
    using Bits = std::conditional_t<sizeof(U) == 8, std::uint64_t, std::uint32_t>;
    const auto bits = std::bit_cast<Bits>(value);
    for (std::size_t b = 0; b < sizeof(U); ++b) out_.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
  }
  void str(const std::string& s) {
    le<std::uint64_t>(s.size());
    out_ += s;
  }
  void floats(std::span<const float> values) {
    for (float v : values) le(v);
  }
  const std::string& data() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string data, std::string source) : in_(std::move(data)), source_(std::move(source)) {}
  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  template <typename U>
  U le() {
    using Bits = std::conditional_t<sizeof(U) == 8, std::uint64_t, std::uint32_t>;
    need(sizeof(U));
    Bits bits = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) {
      bits |= static_cast<Bits>(static_cast<unsigned char>(in_[pos_ + b])) << (8 * b);
    }
    pos_ += sizeof(U);
    return std::bit_cast<U>(bits);
  }
  std::string str() {
    const auto n = le<std::uint64_t>();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void floats(std::span<float> values) {
    for (float& v : values) v = le<float>();
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw DataError("checkpoint '" + source_ + "' is truncated");
  }
  std::string in_;
  std::string source_;
  std::size_t pos_ = 0;
};

CheckpointHeader read_header(Reader& r, const std::string& source) {
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw DataError("'" + source + "' is not a windcnn checkpoint (bad magic)");
  }
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint '" + source + "' has format version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("checkpoint '" + source + "' has a corrupt config block: " + e.what());
  }
  CheckpointHeader h;
  h.model = config_from_json(doc.at("model"));
  h.train = train_config_from_json(doc.at("train"));
  h.model_seed = doc.at("model_seed").get<std::uint64_t>();
  h.epoch = r.le<std::int32_t>();
  return h;
}

void write_named(Writer& w, const std::string& name, const Tensor<float>& t) {
  w.str(name);
  const Shape s = t.shape();
  w.le<std::int64_t>(s.n);
  w.le<std::int64_t>(s.c);
  w.le<std::int64_t>(s.h);
  w.le<std::int64_t>(s.w);
  w.floats(t.data());
}

void read_named(Reader& r, const std::string& expected_name, Tensor<float> t, const std::string& source) {
  const std::string name = r.str();
  Shape s;
  s.n = r.le<std::int64_t>();
  s.c = r.le<std::int64_t>();
  s.h = r.le<std::int64_t>();
  s.w = r.le<std::int64_t>();
  if (name != expected_name || !(s == t.shape())) {
    throw DataError("checkpoint '" + source + "': expected tensor '" + expected_name + "' " + t.shape().str() +
                    ", found '" + name + "' " + s.str());
  }
  r.floats(t.data());
}

}  // namespace

void Trainer::save_checkpoint(const fs::path& path) const {
  Writer w;
  w.bytes(kCheckpointMagic, 8);
  w.le<std::uint32_t>(kCheckpointVersion);
  const nlohmann::json doc{
      {"model", to_json(model_.config())}, {"train", to_json(config_)}, {"model_seed", model_.seed()}};
  w.str(doc.dump());
  w.le<std::int32_t>(completed_epochs());

  const auto& params = model_.params().params();
  const auto& buffers = model_.params().buffers();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) write_named(w, p.name, p.tensor);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(buffers.size()));
  for (const auto& b : buffers) write_named(w, b.name, b.tensor);

  w.le<std::int64_t>(optimizer_.step_count());
  for (std::size_t k = 0; k < params.size(); ++k) {
    w.floats(optimizer_.first_moments()[k]);
    w.floats(optimizer_.second_moments()[k]);
  }
  w.str(shuffle_rng_.state());
  w.str(model_.dropout_rng().state());
  w.le<std::uint32_t>(static_cast<std::uint32_t>(history_.size()));
  for (const auto& row : history_) {
    w.le<std::int32_t>(row.epoch);
    w.le<double>(row.train_loss);
    w.le<double>(row.val_loss);
  }
  write_file_atomic(path, w.data());
}

void Trainer::load_checkpoint(const fs::path& path) {
  const std::string source = path.string();
  Reader r(read_file(path), source);
  const CheckpointHeader h = read_header(r, source);
  if (!(h.model == model_.config())) {
    throw DataError("checkpoint '" + source + "' was written for a different model config");
  }
  const auto& params = model_.params().params();
  const auto& buffers = model_.params().buffers();
  if (r.le<std::uint32_t>() != params.size()) throw DataError("checkpoint '" + source + "': parameter count mismatch");
  for (const auto& p : params) read_named(r, p.name, p.tensor, source);
  if (r.le<std::uint32_t>() != buffers.size()) throw DataError("checkpoint '" + source + "': buffer count mismatch");
  for (const auto& b : buffers) read_named(r, b.name, b.tensor, source);

  config_ = h.train;
  optimizer_ = AdamW<float>(model_.params(), adam_options(config_));
  optimizer_.set_step_count(r.le<std::int64_t>());
  for (std::size_t k = 0; k < params.size(); ++k) {
    r.floats(optimizer_.first_moments()[k]);
    r.floats(optimizer_.second_moments()[k]);
  }
  shuffle_rng_.set_state(r.str());
  model_.dropout_rng().set_state(r.str());
  const auto rows = r.le<std::uint32_t>();
  history_.clear();
  for (std::uint32_t k = 0; k < rows; ++k) {
    EpochLoss row;
    row.epoch = r.le<std::int32_t>();
    row.train_loss = r.le<double>();
    row.val_loss = r.le<double>();
    history_.push_back(row);
  }
  if (!r.done()) throw DataError("checkpoint '" + source + "' has trailing bytes");
  if (static_cast<int>(history_.size()) != h.epoch) throw DataError("checkpoint '" + source + "': epoch mismatch");
}

CheckpointHeader read_checkpoint_header(const fs::path& path) {
  Reader r(read_file(path), path.string());
  return read_header(r, path.string());
}

// ---------------------------------------------------------------------------
// Reporting


void append_loss_csv(const fs::path& path, const EpochLoss& row) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot open '" + path.string() + "' for appending");
  if (fresh) out << "epoch,train_loss,val_loss\n";
  out << row.epoch << ',' << format_number(row.train_loss) << ',' << format_number(row.val_loss) << '\n';
}

std::string loss_history_csv(const std::vector<EpochLoss>& history) {
  std::string out = "epoch,train_loss,val_loss\n";
  for (const auto& e : history) {
    out += std::to_string(e.epoch) + ',' + format_number(e.train_loss) + ',' + format_number(e.val_loss) + '\n';
  }
  return out;
}

LossSummary summarize(std::vector<std::uint64_t> seeds, std::vector<double> losses) {
  if (losses.empty()) throw ConfigError("summarize: no losses");
  LossSummary s;
  s.seeds = std::move(seeds);
  s.losses = std::move(losses);
  std::vector<double> sorted = s.losses;
  std::sort(sorted.begin(), sorted.end());
  s.min = sorted.front();
  s.max = sorted.back();
  const std::size_t n = sorted.size();
  s.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  return s;
}

LossSummary repeat_train(const ModelConfig& model_config, const TrainConfig& train_config, int n_seeds,
                         const std::vector<Sample>& train, const std::vector<Sample>& val) {
  if (n_seeds < 2) throw ConfigError("repeat_train: n_seeds must be >= 2");
  if (val.empty()) throw DataError("repeat_train: empty validation split");
  std::vector<std::uint64_t> seeds;
  std::vector<double> losses;
  for (int k = 0; k < n_seeds; ++k) {
    TrainConfig tc = train_config;
    tc.seed = train_config.seed + static_cast<std::uint64_t>(k);
    Model<float> model(model_config, tc.seed);
    Trainer trainer(model, tc);
    const auto history = trainer.fit(train, val);
    seeds.push_back(tc.seed);
    losses.push_back(history.back().val_loss);
  }
  return summarize(std::move(seeds), std::move(losses));
}

}  // namespace windcnn
