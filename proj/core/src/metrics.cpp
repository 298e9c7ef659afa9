#include "blgcn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "blgcn/errors.hpp"

namespace blgcn {

ClassificationReport compute_metrics(std::span<const int> predicted, std::span<const int> truth,
                                     int classes, std::span<const double> weights) {
  if (predicted.empty()) throw ContractError("compute_metrics: empty input");
  if (predicted.size() != truth.size()) {
    throw DimensionError("compute_metrics: " + std::to_string(predicted.size()) +
                         " predictions for " + std::to_string(truth.size()) + " labels");
  }
  if (!weights.empty() && weights.size() != truth.size()) {
    throw DimensionError("compute_metrics: weight count does not match label count");
  }
  if (classes < 1) throw ContractError("compute_metrics: classes must be >= 1");

  const auto c = static_cast<std::size_t>(classes);
  ClassificationReport r;
  r.classes = classes;
  r.confusion = Matrix(c, c);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 1 || t > classes || p < 1 || p > classes) {
      throw ContractError("compute_metrics: label outside 1.." + std::to_string(classes) +
                          " at position " + std::to_string(i));
    }
    const double w = weights.empty() ? 1.0 : weights[i];
    if (!(w >= 0.0)) throw ContractError("compute_metrics: weights must be non-negative");
    r.confusion(static_cast<std::size_t>(t - 1), static_cast<std::size_t>(p - 1)) += w;
  }

  std::vector<double> row(c, 0.0), col(c, 0.0);
  double total = 0.0, trace = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      row[i] += r.confusion(i, j);
      col[j] += r.confusion(i, j);
    }
    trace += r.confusion(i, i);
  }
  for (double v : row) total += v;
  if (!(total > 0.0)) throw ContractError("compute_metrics: total weight is zero");

  r.per_class.assign(c, 0.0);
  r.present.assign(c, false);
  double aa_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < c; ++i) {
    if (row[i] > 0.0) {
      r.present[i] = true;
      r.per_class[i] = r.confusion(i, i) / row[i];
      aa_sum += r.per_class[i];
      ++present;
    }
  }
  r.oa = trace / total;
  r.aa = aa_sum / static_cast<double>(present);

  double pe = 0.0;
  for (std::size_t i = 0; i < c; ++i) pe += row[i] * col[i];
  pe /= total * total;
  if (pe >= 1.0) {
    r.kappa = r.oa >= 1.0 ? 1.0 : 0.0;
  } else {
    r.kappa = (r.oa - pe) / (1.0 - pe);
  }
  return r;
}

MetricSummary summarize(std::span<const double> values) {
  MetricSummary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

TrialSummary aggregate_trials(std::span<const ClassificationReport> reports) {
  if (reports.empty()) throw ContractError("aggregate_trials: need at least one report");
  TrialSummary s;
  s.n = reports.size();
  s.classes = reports.front().classes;
  for (const auto& r : reports) {
    if (r.classes != s.classes) throw DimensionError("aggregate_trials: class counts differ");
  }

  // Order-independent: sort each metric's values before summing so a
  // permuted trial list yields bit-identical output.
  auto collect = [&](auto get) {
    std::vector<double> v;
    for (const auto& r : reports) get(r, v);
    std::sort(v.begin(), v.end());
    return v;
  };
  s.oa = summarize(collect([](const ClassificationReport& r, auto& v) { v.push_back(r.oa); }));
  s.aa = summarize(collect([](const ClassificationReport& r, auto& v) { v.push_back(r.aa); }));
  s.kappa =
      summarize(collect([](const ClassificationReport& r, auto& v) { v.push_back(r.kappa); }));
  for (int c = 0; c < s.classes; ++c) {
    const auto i = static_cast<std::size_t>(c);
    const auto v = collect([i](const ClassificationReport& r, auto& out) {
      if (r.present[i]) out.push_back(r.per_class[i]);
    });
    s.per_class.push_back(summarize(v));
    s.per_class_n.push_back(v.size());
  }
  return s;
}

namespace {

std::string cell(const MetricSummary& m) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * m.mean << "±" << 100.0 * m.std;
  return os.str();
}

}  // namespace

void write_report(std::ostream& out, const TrialSummary& summary,
                  std::span<const std::string> class_names) {
  std::vector<std::pair<std::string, std::string>> rows;
  for (int c = 0; c < summary.classes; ++c) {
    const auto i = static_cast<std::size_t>(c);
    std::string name = i < class_names.size() ? class_names[i] : "class " + std::to_string(c + 1);
    rows.emplace_back(std::move(name), summary.per_class_n[i] == 0 ? "-" : cell(summary.per_class[i]));
  }
  const std::size_t split = rows.size();
  rows.emplace_back("OA", cell(summary.oa));
  rows.emplace_back("AA", cell(summary.aa));
  rows.emplace_back("Kappa", cell(summary.kappa));

  std::size_t name_w = 5, value_w = 0;
  for (const auto& [n, v] : rows) {
    name_w = std::max(name_w, n.size());
    // "±" is two bytes in UTF-8 but one column wide.
    value_w = std::max(value_w, v.size() - (v.find("±") != std::string::npos ? 1 : 0));
  }
  const std::string header = "trials " + std::to_string(summary.n);
  auto rule = [&] { out << std::string(name_w + 3 + value_w, '-') << '\n'; };

  out << std::left << std::setw(static_cast<int>(name_w)) << "Class" << " | " << header << '\n';
  rule();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (r == split) rule();
    const auto& [n, v] = rows[r];
    const std::size_t cols = v.size() - (v.find("±") != std::string::npos ? 1 : 0);
    out << std::left << std::setw(static_cast<int>(name_w)) << n << " | "
        << std::string(value_w - cols, ' ') << v << '\n';
  }
}

std::string format_report(const TrialSummary& summary, std::span<const std::string> class_names) {
  std::ostringstream os;
  write_report(os, summary, class_names);
  return os.str();
}

std::vector<Rgb> default_palette(int classes) {
  static constexpr Rgb kColors[] = {
      {230, 25, 75},  {60, 180, 75},   {255, 225, 25}, {0, 130, 200},
      {245, 130, 48}, {145, 30, 180},  {70, 240, 240}, {240, 50, 230},
      {210, 245, 60}, {250, 190, 212}, {0, 128, 128},  {220, 190, 255},
      {170, 110, 40}, {255, 250, 200}, {128, 0, 0},    {170, 255, 195},
  };
  std::vector<Rgb> p{{0, 0, 0}};
  for (int c = 0; c < classes; ++c) p.push_back(kColors[static_cast<std::size_t>(c) % 16]);
  return p;
}

std::vector<std::uint8_t> render_map(const NodeMap& map, std::span<const int> predictions,
                                     std::span<const Rgb> palette) {
  if (map.node.size() != map.height * map.width) {
    throw DimensionError("render_map: node map size does not match its dimensions");
  }
  const std::string header =
      "P6\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(header.size() + 3 * map.node.size());
  for (int n : map.node) {
    Rgb color{0, 0, 0};
    if (n >= 0) {
      const auto j = static_cast<std::size_t>(n);
      if (j >= predictions.size()) {
        throw ContractError("render_map: no prediction for node " + std::to_string(n));
      }
      const int cls = predictions[j];
      if (cls < 0 || static_cast<std::size_t>(cls) >= palette.size()) {
        throw ContractError("render_map: class " + std::to_string(cls) + " has no palette entry");
      }
      color = palette[static_cast<std::size_t>(cls)];
    }
    bytes.insert(bytes.end(), color.begin(), color.end());
  }
  return bytes;
}

void emit_map(const NodeMap& map, std::span<const int> predictions, std::span<const Rgb> palette,
              const std::filesystem::path& path) {
  const auto bytes = render_map(map, predictions, palette);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace blgcn
