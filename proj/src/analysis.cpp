#include "windcnn/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "windcnn/csv.hpp"
#include "windcnn/data.hpp"
#include "windcnn/errors.hpp"

namespace windcnn {

bool dominates(const ParetoPoint& p, const ParetoPoint& q) {
  const bool no_worse = p.loss <= q.loss && p.runtime_ms <= q.runtime_ms;
  const bool better = p.loss < q.loss || p.runtime_ms < q.runtime_ms;
  return no_worse && better;
}

std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points) {
  for (const auto& p : points) {
    if (!std::isfinite(p.loss) || !std::isfinite(p.runtime_ms) || p.loss <= 0.0 || p.runtime_ms <= 0.0) {
      throw std::invalid_argument("pareto_front: objectives must be finite and positive ('" + p.config + "')");
    }
  }
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].loss != points[b].loss) return points[a].loss < points[b].loss;
    return points[a].runtime_ms < points[b].runtime_ms;
  });

  // In ascending-loss order a point survives iff it is strictly faster than
  // everything kept so far. Equal-loss followers are at best duplicates.
  std::vector<ParetoPoint> front;
  for (std::size_t i : order) {
    const ParetoPoint& p = points[i];
    if (front.empty() || p.runtime_ms < front.back().runtime_ms) front.push_back(p);
  }
  return front;
}

double round_decimals(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(value * scale) / scale;
}

std::vector<ParetoPoint> relative_metrics(std::vector<ParetoPoint> front) {
  if (front.empty()) return front;
  const auto base = std::min_element(front.begin(), front.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    if (a.loss != b.loss) return a.loss < b.loss;
    return a.runtime_ms < b.runtime_ms;
  });
  const double loss0 = base->loss;
  const double runtime0 = base->runtime_ms;
  for (auto& p : front) {
    p.relative_loss = p.loss / loss0;
    p.relative_runtime = p.runtime_ms / runtime0;
  }
  return front;
}

BenchReport make_bench_report(int warmup, std::vector<double> times_ms) {
  if (times_ms.empty()) throw std::invalid_argument("bench report needs at least one timing");
  BenchReport r;
  r.warmup = warmup;
  r.repeats = static_cast<int>(times_ms.size());
  r.times_ms = std::move(times_ms);
  std::vector<double> sorted = r.times_ms;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  r.min_ms = sorted.front();
  r.median_ms = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  r.mean_ms = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double t : sorted) ss += (t - r.mean_ms) * (t - r.mean_ms);
  const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  r.cv = r.mean_ms > 0.0 ? sd / r.mean_ms : 0.0;
  return r;
}

BenchReport bench_runtime(Model<float>& model, const std::array<int, 4>& input_shape, int warmup, int repeats) {
  if (repeats < 5) throw ConfigError("bench repeats must be >= 5");
  if (warmup < 0) throw ConfigError("bench warmup must be >= 0");
  const Tensor<float> input(Shape{input_shape[0], input_shape[1], input_shape[2], input_shape[3]});
  NoGradGuard no_grad;
  for (int i = 0; i < warmup; ++i) model.forward(input, Mode::eval);
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(repeats));
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor<float> out = model.forward(input, Mode::eval);
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return make_bench_report(warmup, std::move(times));
}

// ---------------------------------------------------------------------------
// Report files

namespace {

std::string fixed4(double v) {
  if (!std::isfinite(v)) return format_number(v);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

BlockType parse_block_display(const std::string& s) {
  if (s == display_name(BlockType::convnext)) return BlockType::convnext;
  if (s == display_name(BlockType::unet)) return BlockType::unet;
  throw DataError("unknown block type '" + s + "'");
}

DecoderType parse_decoder_display(const std::string& s) {
  if (s == display_name(DecoderType::half_unet)) return DecoderType::half_unet;
  if (s == display_name(DecoderType::unet)) return DecoderType::unet;
  throw DataError("unknown decoder type '" + s + "'");
}

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::int64_t parse_int(const std::string& s) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw DataError("");
    return v;
  } catch (const std::exception&) {
    throw DataError("not an integer: '" + s + "'");
  }
}

}  // namespace

std::string report_csv(const std::vector<ParetoPoint>& front) {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& p : front) {
    out += csv_field(p.config) + ',' + format_number(p.loss) + ',' + format_number(p.runtime_ms) + ',' +
           fixed4(p.relative_loss) + ',' + fixed4(p.relative_runtime) + ',' +
           csv_field(display_name(p.block_type)) + ',' + csv_field(display_name(p.decoder_type)) + ',' +
           std::to_string(p.params) + ',' + std::to_string(p.macs) + '\n';
  }
  return out;
}

std::vector<ParetoPoint> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != split_csv_line(kReportHeader)) {
    throw DataError("report CSV header mismatch");
  }
  std::vector<ParetoPoint> points;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 9) throw DataError("report CSV row has " + std::to_string(f.size()) + " fields, expected 9");
    ParetoPoint p;
    p.config = f[0];
    p.loss = parse_number(f[1]);
    p.runtime_ms = parse_number(f[2]);
    p.relative_loss = parse_number(f[3]);
    p.relative_runtime = parse_number(f[4]);
    p.block_type = parse_block_display(f[5]);
    p.decoder_type = parse_decoder_display(f[6]);
    p.params = parse_int(f[7]);
    p.macs = parse_int(f[8]);
    points.push_back(std::move(p));
  }
  return points;
}

std::string pareto_svg(const std::vector<ParetoPoint>& all, const std::vector<ParetoPoint>& front) {
  constexpr double width = 640, height = 480, left = 70, right = 20, top = 20, bottom = 50;
  const double pw = width - left - right;
  const double ph = height - top - bottom;

  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!all.empty()) {
    auto [xmin, xmax] = std::minmax_element(all.begin(), all.end(), [](auto& a, auto& b) {
      return a.runtime_ms < b.runtime_ms;
    });
    auto [ymin, ymax] = std::minmax_element(all.begin(), all.end(), [](auto& a, auto& b) { return a.loss < b.loss; });
    x0 = xmin->runtime_ms, x1 = xmax->runtime_ms, y0 = ymin->loss, y1 = ymax->loss;
    const double px = x1 > x0 ? 0.05 * (x1 - x0) : 0.05 * std::max(std::abs(x0), 1e-12);
    const double py = y1 > y0 ? 0.05 * (y1 - y0) : 0.05 * std::max(std::abs(y0), 1e-12);
    x0 -= px, x1 += px, y0 -= py, y1 += py;
  }
  auto sx = [&](double v) { return left + (v - x0) / (x1 - x0) * pw; };
  auto sy = [&](double v) { return top + (1.0 - (v - y0) / (y1 - y0)) * ph; };
  char buf[256];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };
  auto label = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return std::string(buf);
  };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = x0 + (x1 - x0) * k / 4.0;
    const double fy = y0 + (y1 - y0) * k / 4.0;
    s << "<text x=\"" << num(sx(fx)) << "\" y=\"" << num(top + ph + 18)
      << "\" font-size=\"11\" text-anchor=\"middle\">" << (all.empty() ? "" : label(fx)) << "</text>\n";
    s << "<text x=\"" << num(left - 6) << "\" y=\"" << num(sy(fy) + 4)
      << "\" font-size=\"11\" text-anchor=\"end\">" << (all.empty() ? "" : label(fy)) << "</text>\n";
  }
  s << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(height - 10)
    << "\" font-size=\"13\" text-anchor=\"middle\">Runtime (ms)</text>\n";
  s << "<text x=\"16\" y=\"" << num(top + ph / 2) << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << num(top + ph / 2) << ")\">Huber loss</text>\n";
  if (all.empty()) {
    s << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(top + ph / 2)
      << "\" font-size=\"14\" text-anchor=\"middle\" fill=\"gray\">no trials</text>\n";
  }
  for (const auto& p : all) {
    s << "<circle cx=\"" << num(sx(p.runtime_ms)) << "\" cy=\"" << num(sy(p.loss))
      << "\" r=\"3\" fill=\"#9aa5b1\"/>\n";
  }
  if (!front.empty()) {
    std::vector<ParetoPoint> ordered = front;
    std::sort(ordered.begin(), ordered.end(), [](auto& a, auto& b) { return a.runtime_ms < b.runtime_ms; });
    s << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < ordered.size(); ++i) {
      s << (i ? " " : "") << num(sx(ordered[i].runtime_ms)) << ',' << num(sy(ordered[i].loss));
    }
    s << "\"/>\n";
    for (const auto& p : ordered) {
      s << "<circle cx=\"" << num(sx(p.runtime_ms)) << "\" cy=\"" << num(sy(p.loss))
        << "\" r=\"4.5\" fill=\"#c0392b\"><title>" << xml_escape(p.config) << "</title></circle>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

void export_report(const std::vector<ParetoPoint>& all, const std::vector<ParetoPoint>& front,
                   const std::filesystem::path& csv_path, const std::filesystem::path& svg_path) {
  write_file_atomic(csv_path, report_csv(front));
  write_file_atomic(svg_path, pareto_svg(all, front));
}

}  // namespace windcnn
