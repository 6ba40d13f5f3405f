#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "windcnn/analysis.hpp"
#include "windcnn/counting.hpp"
#include "windcnn/data.hpp"
#include "windcnn/errors.hpp"
#include "windcnn/model.hpp"
#include "windcnn/search.hpp"
#include "windcnn/train.hpp"

namespace py = pybind11;
using namespace windcnn;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Configs cross the boundary as JSON text; the Python side wraps them in dicts.
ModelConfig parse_config(const std::string& json) { return config_from_json_string(json); }

Tensor<float> to_tensor(const FloatArray& a) {
  if (a.ndim() != 4) throw ShapeError("expected a 4-d array (N, C, H, W), got " + std::to_string(a.ndim()) + " dims");
  const Shape shape{a.shape(0), a.shape(1), a.shape(2), a.shape(3)};
  return Tensor<float>(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor<float>& t) {
  const Shape s = t.shape();
  FloatArray out({s.n, s.c, s.h, s.w});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

DoubleArray square(const std::vector<double>& v, int grid) {
  DoubleArray out({grid, grid});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Scene scene_from_array(const DoubleArray& height, double extent) {
  if (height.ndim() != 2 || height.shape(0) != height.shape(1)) throw ShapeError("height must be a square 2-d array");
  Scene s = empty_scene(static_cast<int>(height.shape(0)), extent);
  std::copy(height.data(), height.data() + height.size(), s.height.begin());
  return s;
}

class PyModel {
 public:
  PyModel(const std::string& config, std::uint64_t seed) : model_(parse_config(config), seed) {}

  FloatArray forward(const FloatArray& x, bool train) {
    const Tensor<float> input = to_tensor(x);
    NoGradGuard guard;
    return to_array(model_.forward(input, train ? Mode::train : Mode::eval));
  }
  std::int64_t num_params() const { return enumerate_params(model_); }
  std::string config() const { return config_to_json_string(model_.config()); }

  py::list fit(const std::string& data_root, int epochs, double lr, int batch, std::uint64_t seed) {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.learning_rate = lr;
    tc.batch_size = batch;
    tc.seed = seed;
    const Dataset data = load_dataset(data_root);
    std::vector<EpochLoss> history;
    {
      py::gil_scoped_release release;
      Trainer trainer(model_, tc);
      history = trainer.fit(data.train, data.val);
    }
    py::list out;
    for (const auto& e : history) out.append(py::make_tuple(e.epoch, e.train_loss, e.val_loss));
    return out;
  }

  double evaluate(const std::string& data_root, const std::string& split, double delta) {
    const Split s = split == "train" ? Split::train : split == "test" ? Split::test : Split::val;
    return windcnn::evaluate(model_, load_split(data_root, s), delta);
  }

  py::dict bench(int grid, int warmup, int repeats) {
    const BenchReport r = bench_runtime(model_, {1, 1, grid, grid}, warmup, repeats);
    py::dict d;
    d["mean_ms"] = r.mean_ms;
    d["median_ms"] = r.median_ms;
    d["min_ms"] = r.min_ms;
    d["cv"] = r.cv;
    d["repeats"] = r.repeats;
    return d;
  }

 private:
  Model<float> model_;
};

py::list front_to_list(const std::vector<ParetoPoint>& front) {
  py::list out;
  for (const auto& p : front) {
    py::dict d;
    d["name"] = p.config;
    d["loss"] = p.loss;
    d["runtime_ms"] = p.runtime_ms;
    d["relative_loss"] = p.relative_loss;
    d["relative_runtime"] = p.relative_runtime;
    out.append(d);
  }
  return out;
}

std::vector<ParetoPoint> points_from(const std::vector<std::tuple<std::string, double, double>>& pts) {
  std::vector<ParetoPoint> out;
  for (const auto& [name, loss, runtime] : pts) {
    ParetoPoint p;
    p.config = name;
    p.loss = loss;
    p.runtime_ms = runtime;
    out.push_back(p);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_windcnn, m) {
  m.doc() = "Bindings for the windcnn C++ core";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("validate_config", [](const std::string& c) { return config_to_json_string(parse_config(c)); });
  m.def("count_params", [](const std::string& c) { return count_params(parse_config(c)); });
  m.def("count_macs", [](const std::string& c, std::int64_t h, std::int64_t w) { return count_macs(parse_config(c), h, w); });

  m.def("sample_config",
        [](const std::string& arch, std::uint64_t seed, bool tiny) {
          Rng rng(seed, "config");
          return config_to_json_string(sample_config(param_space(parse_architecture(arch), tiny), rng));
        });

  py::class_<PyModel>(m, "_Model")
      .def(py::init<const std::string&, std::uint64_t>())
      .def("forward", &PyModel::forward)
      .def("num_params", &PyModel::num_params)
      .def("config", &PyModel::config)
      .def("fit", &PyModel::fit)
      .def("evaluate", &PyModel::evaluate)
      .def("bench", &PyModel::bench);

  m.def("pareto_front", [](const std::vector<std::tuple<std::string, double, double>>& pts, bool relative) {
    auto front = pareto_front(points_from(pts));
    if (relative) front = relative_metrics(std::move(front));
    return front_to_list(front);
  });

  m.def("generate_scene", [](std::uint64_t seed, int grid) {
    const Scene s = generate_scene(seed, grid);
    return square(s.height, s.grid);
  });
  m.def("wind_oracle", [](const DoubleArray& height, int direction, double extent) {
    const Scene s = scene_from_array(height, extent);
    WindField f;
    {
      py::gil_scoped_release release;
      f = wind_oracle(s, direction);
    }
    return py::make_tuple(square(f.u, f.grid), square(f.v, f.grid), square(f.w, f.grid));
  });
  m.def("quantize", [](double v, double vmax) { return quantize(v, vmax); });
  m.def("dequantize", [](int q, double vmax) { return dequantize(static_cast<std::uint8_t>(q), vmax); });
  m.def("build_dataset", [](const std::filesystem::path& root, int scenes, int grid, std::uint64_t seed, int workers) {
    BuildOptions opts;
    opts.workers = workers;
    py::gil_scoped_release release;
    return static_cast<std::int64_t>(build_dataset(root, scenes, grid, seed, opts).sample_count());
  });
}
