#include "confpred/report.hpp"

#include <algorithm>
#include <cmath>

#include "confpred/error.hpp"

namespace confpred {

bool PredictionsFile::all_labeled() const {
  return std::none_of(labels.begin(), labels.end(), [](int y) { return y == kNoLabel; });
}

std::string format_label_set(const PredictionSet& set) {
  std::string out = "{";
  for (std::size_t i = 0; i < set.labels.size(); ++i) {
    if (i > 0) out += ' ';
    out += std::to_string(set.labels[i]);
  }
  out += '}';
  return out;
}

std::string predictions_to_csv(const EmbeddingSet& examples, const std::vector<PValueRow>& rows, double epsilon,
                               const Provenance* provenance) {
  if (examples.size() != rows.size()) throw ValidationError("predictions: example and row counts differ");
  const std::size_t classes = rows.empty() ? examples.num_classes() : rows.front().num_classes();
  std::string out;
  if (provenance) out += provenance->comment_block();
  out += "# epsilon=" + format_double(epsilon) + "\n";
  out += "id,label";
  for (std::size_t c = 0; c < classes; ++c) out += ",p" + std::to_string(c);
  for (std::size_t c = 0; c < classes; ++c) out += ",alpha" + std::to_string(c);
  out += ",set,top1\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& ex = examples[i];
    const auto& row = rows[i];
    out += ex.id + ",";
    if (ex.label != kNoLabel) out += std::to_string(ex.label);
    for (double p : row.p) out += "," + format_double(p);
    for (double a : row.alpha) out += "," + format_double(a);
    out += "," + format_label_set(prediction_set(row.p, epsilon));
    out += "," + std::to_string(top1(row.p, row.alpha)) + "\n";
  }
  return out;
}

PredictionsFile parse_predictions(std::string_view text) {
  PredictionsFile file;
  std::optional<std::size_t> classes;
  std::size_t line_no = 0;
  for (std::string_view line : split_fields(text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_fields(line, ',');
    const std::string where = "predictions line " + std::to_string(line_no);
    if (!classes) {
      if (fields.size() < 6 || (fields.size() - 4) % 2 != 0 || fields[0] != "id" || fields[1] != "label") {
        throw ValidationError(where + ": unexpected header");
      }
      classes = (fields.size() - 4) / 2;
      for (std::size_t c = 0; c < *classes; ++c) {
        if (fields[2 + c] != "p" + std::to_string(c) || fields[2 + *classes + c] != "alpha" + std::to_string(c)) {
          throw ValidationError(where + ": unexpected header");
        }
      }
      continue;
    }
    if (fields.size() != 4 + 2 * *classes) throw ValidationError(where + ": wrong number of fields");
    file.ids.emplace_back(fields[0]);
    if (trim(fields[1]).empty()) {
      file.labels.push_back(kNoLabel);
    } else {
      const auto y = parse_int(fields[1], where + " label");
      if (y < 0 || static_cast<std::size_t>(y) >= *classes) throw ValidationError(where + ": label out of range");
      file.labels.push_back(static_cast<int>(y));
    }
    PValueRow row;
    for (std::size_t c = 0; c < *classes; ++c) row.p.push_back(parse_double(fields[2 + c], where + " p-value"));
    for (std::size_t c = 0; c < *classes; ++c) {
      row.alpha.push_back(parse_double(fields[2 + *classes + c], where + " score"));
    }
    file.rows.push_back(std::move(row));
  }
  if (!classes) throw ValidationError("predictions file is missing its header");
  return file;
}

PredictionsFile load_predictions(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return parse_predictions(text);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 64, kRight = 160, kTop = 40, kBottom = 56;
constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string xml_escape(std::string_view text) {
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

std::string num(double v) { return format_fixed(v, 2); }

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::string open_svg(std::string_view title) {
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         xml_escape(title) + "</text>\n";
  return out;
}

std::string axes(const Frame& f, std::string_view xlabel, std::string_view ylabel, bool x_ticks) {
  std::string out;
  const double xa = f.px(f.x0), xb = f.px(f.x1), ya = f.py(f.y0), yb = f.py(f.y1);
  out += "<g stroke=\"black\" stroke-width=\"1\">\n";
  out += "<line x1=\"" + num(xa) + "\" y1=\"" + num(ya) + "\" x2=\"" + num(xb) + "\" y2=\"" + num(ya) + "\"/>\n";
  out += "<line x1=\"" + num(xa) + "\" y1=\"" + num(ya) + "\" x2=\"" + num(xa) + "\" y2=\"" + num(yb) + "\"/>\n";
  out += "</g>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = f.y0 + (f.y1 - f.y0) * i / 5.0;
    out += "<text x=\"" + num(xa - 6) + "\" y=\"" + num(f.py(y) + 4) + "\" text-anchor=\"end\">" + num(y) + "</text>\n";
    if (x_ticks) {
      const double x = f.x0 + (f.x1 - f.x0) * i / 5.0;
      out += "<text x=\"" + num(f.px(x)) + "\" y=\"" + num(ya + 16) + "\" text-anchor=\"middle\">" + num(x) + "</text>\n";
    }
  }
  out += "<text x=\"" + num((xa + xb) / 2) + "\" y=\"" + num(kHeight - 14) + "\" text-anchor=\"middle\">" +
         xml_escape(xlabel) + "</text>\n";
  out += "<text x=\"16\" y=\"" + num((ya + yb) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         num((ya + yb) / 2) + ")\">" + xml_escape(ylabel) + "</text>\n";
  return out;
}

}  // namespace

std::string coverage_chart_svg(const std::vector<ChartSeries>& series, std::string_view title) {
  double x0 = 1.0, x1 = 0.0, y0 = 1.0;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ValidationError("chart series " + s.name + " has mismatched x/y");
    for (double x : s.x) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
    }
    for (double y : s.y) y0 = std::min(y0, y);
  }
  if (!(x1 > x0)) {
    x0 = 0.0;
    x1 = 1.0;
  }
  y0 = std::min(y0, 1.0 - x1);
  y0 = std::max(0.0, std::floor(y0 * 10.0) / 10.0);
  const Frame f{x0, x1, y0, 1.0};

  std::string out = open_svg(title);
  out += axes(f, "significance level (epsilon)", "coverage", true);
  // 1 - eps reference
  out += "<line class=\"reference\" x1=\"" + num(f.px(x0)) + "\" y1=\"" + num(f.py(1.0 - x0)) + "\" x2=\"" +
         num(f.px(x1)) + "\" y2=\"" + num(f.py(1.0 - x1)) +
         "\" stroke=\"black\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    out += "<polyline class=\"run\" fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t j = 0; j < s.x.size(); ++j) {
      if (j > 0) out += ' ';
      out += num(f.px(s.x[j])) + "," + num(f.py(s.y[j]));
    }
    out += "\"/>\n";
    const double ly = kTop + 16.0 * static_cast<double>(i + 1);
    out += "<line x1=\"" + num(kWidth - kRight + 12) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" +
           num(kWidth - kRight + 32) + "\" y2=\"" + num(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + num(kWidth - kRight + 36) + "\" y=\"" + num(ly) + "\">" + xml_escape(s.name) + "</text>\n";
  }
  const double ly = kTop + 16.0 * static_cast<double>(series.size() + 1);
  out += "<text x=\"" + num(kWidth - kRight + 36) + "\" y=\"" + num(ly) + "\">1 - epsilon</text>\n";
  out += "</svg>\n";
  return out;
}

std::string efficiency_chart_svg(const std::vector<std::pair<std::string, double>>& bars, std::string_view title) {
  const Frame f{0.0, 1.0, 0.0, 1.0};
  std::string out = open_svg(title);
  out += axes(f, "run", "correct efficiency", false);
  const double plot_w = kWidth - kLeft - kRight;
  const double slot = bars.empty() ? plot_w : plot_w / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double v = std::clamp(bars[i].second, 0.0, 1.0);
    const double x = kLeft + slot * static_cast<double>(i) + slot * 0.15;
    const double w = slot * 0.7;
    out += "<rect class=\"bar\" x=\"" + num(x) + "\" y=\"" + num(f.py(v)) + "\" width=\"" + num(w) +
           "\" height=\"" + num(f.py(0.0) - f.py(v)) + "\" fill=\"" + kPalette[i % std::size(kPalette)] + "\"/>\n";
    out += "<text x=\"" + num(x + w / 2) + "\" y=\"" + num(f.py(v) - 4) + "\" text-anchor=\"middle\">" +
           format_fixed(bars[i].second, 3) + "</text>\n";
    out += "<text x=\"" + num(x + w / 2) + "\" y=\"" + num(f.py(0.0) + 16) + "\" text-anchor=\"middle\">" +
           xml_escape(bars[i].first) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace confpred
