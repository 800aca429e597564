#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "mirig/harness.hpp"

namespace mirig::harness {

namespace {

constexpr const char* kCsvHeader =
    "config_id,scenario,k_tr,strength,pairing,task,acc,mi_train_bits,mi_bits,k_est,"
    "bound_bits,entropy_bits,status";

std::string fmt_num(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// --- minimal deterministic SVG ---------------------------------------------

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"};

struct XY {
  double x, y;
};
struct Series {
  std::string name;
  std::vector<XY> pts;
};

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&')
      out += "&amp;";
    else if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else
      out += c;
  }
  return out;
}

void svg_text(std::string& svg, double x, double y, const std::string& s, int size = 12,
              const char* anchor = "start", const char* fill = "#333") {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%.1f\" font-size=\"%d\" font-family=\"sans-serif\" "
                "text-anchor=\"%s\" fill=\"%s\">",
                x, y, size, anchor, fill);
  svg += buf;
  svg += svg_escape(s) + "</text>\n";
}

// Line/scatter plot with numeric axes.  NaN points are skipped.
std::string svg_xy_plot(const std::string& title, const std::string& xlabel,
                        const std::string& ylabel, const std::vector<Series>& series) {
  const double W = 640, H = 420, L = 64, R = 150, T = 44, B = 52;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (const auto& p : s.pts) {
      if (std::isnan(p.x) || std::isnan(p.y)) continue;
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax - xmin < 1e-12) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax - ymin < 1e-12) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  double xpad = 0.05 * (xmax - xmin), ypad = 0.08 * (ymax - ymin);
  xmin -= xpad;
  xmax += xpad;
  ymin -= ypad;
  ymax += ypad;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::string svg;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "viewBox=\"0 0 %.0f %.0f\">\n<rect width=\"%.0f\" height=\"%.0f\" "
                "fill=\"white\"/>\n",
                W, H, W, H, W, H);
  svg += buf;
  svg_text(svg, W / 2, 24, title, 15, "middle", "#111");
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#888\"/>\n", L,
                H - B, W - R, H - B);
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#888\"/>\n", L, T,
                L, H - B);
  svg += buf;
  for (int t = 0; t <= 4; ++t) {
    double vx = xmin + (xmax - xmin) * t / 4.0;
    double vy = ymin + (ymax - ymin) * t / 4.0;
    char num[32];
    std::snprintf(num, sizeof(num), "%.3g", vx);
    svg_text(svg, px(vx), H - B + 18, num, 11, "middle");
    std::snprintf(num, sizeof(num), "%.3g", vy);
    svg_text(svg, L - 8, py(vy) + 4, num, 11, "end");
  }
  svg_text(svg, (L + W - R) / 2, H - 14, xlabel, 12, "middle");
  std::snprintf(buf, sizeof(buf),
                "<text x=\"16\" y=\"%.1f\" font-size=\"12\" font-family=\"sans-serif\" "
                "text-anchor=\"middle\" fill=\"#333\" transform=\"rotate(-90 16 %.1f)\">",
                (T + H - B) / 2, (T + H - B) / 2);
  svg += buf;
  svg += svg_escape(ylabel) + "</text>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const char* color = kPalette[si % 5];
    std::string pts;
    for (const auto& p : series[si].pts) {
      if (std::isnan(p.x) || std::isnan(p.y)) continue;
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(p.x), py(p.y));
      pts += buf;
    }
    if (!pts.empty()) {
      svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
             "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
      for (const auto& p : series[si].pts) {
        if (std::isnan(p.x) || std::isnan(p.y)) continue;
        std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n",
                      px(p.x), py(p.y), color);
        svg += buf;
      }
    }
    double ly = T + 16.0 * double(si);
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" "
                  "stroke-width=\"2\"/>\n",
                  W - R + 10, ly, W - R + 34, ly, color);
    svg += buf;
    svg_text(svg, W - R + 40, ly + 4, series[si].name, 11);
  }
  svg += "</svg>\n";
  return svg;
}

void svg_heatmap(const std::string& title, const std::vector<std::string>& row_labels,
                 const std::vector<std::string>& col_labels,
                 const std::vector<std::vector<double>>& values, double y0, std::string& svg) {
  const double cell = 74, L = 110, T = y0 + 54;
  char buf[256];
  svg_text(svg, L + cell * double(col_labels.size()) / 2, y0 + 24, title, 14, "middle", "#111");
  double vmin = 1e300, vmax = -1e300;
  for (const auto& row : values)
    for (double v : row)
      if (!std::isnan(v)) {
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
      }
  if (vmin > vmax) {
    vmin = 0;
    vmax = 1;
  }
  if (vmax - vmin < 1e-12) vmax = vmin + 1;
  for (size_t c = 0; c < col_labels.size(); ++c)
    svg_text(svg, L + cell * (double(c) + 0.5), T - 8, col_labels[c], 11, "middle");
  for (size_t r = 0; r < values.size(); ++r) {
    svg_text(svg, L - 8, T + cell * (double(r) + 0.55), row_labels[r], 11, "end");
    for (size_t c = 0; c < values[r].size(); ++c) {
      double v = values[r][c];
      double t = std::isnan(v) ? 0.0 : (v - vmin) / (vmax - vmin);
      int rr = int(255 + t * (31 - 255)), gg = int(255 + t * (119 - 255)),
          bb = int(255 + t * (180 - 255));
      std::snprintf(buf, sizeof(buf),
                    "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" "
                    "fill=\"rgb(%d,%d,%d)\" stroke=\"#ccc\"/>\n",
                    L + cell * double(c), T + cell * double(r), cell, cell, rr, gg, bb);
      svg += buf;
      char num[32];
      if (std::isnan(v))
        std::snprintf(num, sizeof(num), "-");
      else
        std::snprintf(num, sizeof(num), "%.3f", v);
      svg_text(svg, L + cell * (double(c) + 0.5), T + cell * (double(r) + 0.55), num, 11,
               "middle", t > 0.6 ? "#fff" : "#222");
    }
  }
}

std::string svg_bars(const std::string& title, const std::vector<std::string>& labels,
                     const std::vector<double>& values) {
  const double W = 640, H = 420, L = 64, R = 24, T = 44, B = 110;
  double vmax = 0.0;
  for (double v : values)
    if (!std::isnan(v)) vmax = std::max(vmax, v);
  if (vmax <= 0) vmax = 1;
  vmax *= 1.1;
  std::string svg;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "viewBox=\"0 0 %.0f %.0f\">\n<rect width=\"%.0f\" height=\"%.0f\" "
                "fill=\"white\"/>\n",
                W, H, W, H, W, H);
  svg += buf;
  svg_text(svg, W / 2, 24, title, 15, "middle", "#111");
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#888\"/>\n", L,
                H - B, W - R, H - B);
  svg += buf;
  double span = W - L - R;
  double bw = span / double(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    double v = std::isnan(values[i]) ? 0.0 : values[i];
    double h = v / vmax * (H - T - B);
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"%s\"/>\n",
                  L + bw * double(i) + bw * 0.15, H - B - h, bw * 0.7, h, kPalette[i % 5]);
    svg += buf;
    char num[32];
    std::snprintf(num, sizeof(num), "%.3f", values[i]);
    svg_text(svg, L + bw * (double(i) + 0.5), H - B - h - 6, num, 11, "middle");
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\" font-family=\"sans-serif\" "
                  "text-anchor=\"end\" fill=\"#333\" transform=\"rotate(-40 %.1f %.1f)\">",
                  L + bw * (double(i) + 0.5), H - B + 14, L + bw * (double(i) + 0.5), H - B + 14);
    svg += buf;
    svg += svg_escape(labels[i]) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<double> unique_sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

double mean_where(const RunReport& rep, const std::function<bool(const CellRow&)>& pred,
                  double CellRow::* field) {
  double s = 0.0;
  int n = 0;
  for (const auto& r : rep.rows)
    if (pred(r) && !std::isnan(r.*field)) {
      s += r.*field;
      ++n;
    }
  return n ? s / n : std::numeric_limits<double>::quiet_NaN();
}

std::string render_plot(const RunReport& rep) {
  if (rep.scenario == "batch_size") {
    std::vector<double> ks;
    for (const auto& r : rep.rows) ks.push_back(double(r.k_tr));
    ks = unique_sorted(ks);
    Series h{"H(C)", {}}, tr{"in-training MI", {}}, post{"post-training MI", {}},
        acc{"probe acc x6", {}};
    for (double k : ks) {
      auto pick = [&](const CellRow& r) { return double(r.k_tr) == k; };
      double hb = mean_where(rep, pick, &CellRow::entropy_bits);
      h.pts.push_back({k, hb});
      tr.pts.push_back({k, mean_where(rep, pick, &CellRow::mi_train_bits)});
      post.pts.push_back({k, mean_where(rep, pick, &CellRow::mi_bits)});
      acc.pts.push_back({k, 6.0 * mean_where(rep, pick, &CellRow::acc)});
    }
    return svg_xy_plot("Batch-size sweep: information is pinned, not batch-limited",
                       "training batch size K", "bits", {h, tr, post, acc});
  }
  if (rep.scenario == "infomin") {
    std::vector<std::string> tasks = {"color", "digit", "position", "all"};
    std::vector<Series> series;
    for (const auto& t : tasks) {
      Series s{t + " acc", {}};
      std::vector<double> strengths;
      for (const auto& r : rep.rows)
        if (r.task == t) strengths.push_back(r.strength);
      for (double st : unique_sorted(strengths)) {
        auto pick = [&](const CellRow& r) { return r.task == t && r.strength == st; };
        s.pts.push_back(
            {mean_where(rep, pick, &CellRow::mi_bits), mean_where(rep, pick, &CellRow::acc)});
      }
      std::sort(s.pts.begin(), s.pts.end(), [](const XY& a, const XY& b) { return a.x < b.x; });
      series.push_back(std::move(s));
    }
    return svg_xy_plot("Augmentation-strength sweep: accuracy vs estimated information",
                       "estimated MI (bits)", "probe accuracy", series);
  }
  if (rep.scenario == "task_grid") {
    std::vector<std::string> tasks = {"color", "digit", "position", "all"};
    std::vector<std::vector<double>> acc(4, std::vector<double>(4)), mi(4, std::vector<double>(4));
    for (size_t r = 0; r < 4; ++r)
      for (size_t c = 0; c < 4; ++c) {
        std::string train_pair = "same_class(" + tasks[r] + ")";
        auto pick = [&](const CellRow& row) {
          return row.pairing == train_pair && row.task == tasks[c];
        };
        acc[r][c] = mean_where(rep, pick, &CellRow::acc);
        mi[r][c] = mean_where(rep, pick, &CellRow::mi_bits);
      }
    std::string svg;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"560\" height=\"800\" "
                  "viewBox=\"0 0 560 800\">\n<rect width=\"560\" height=\"800\" "
                  "fill=\"white\"/>\n");
    svg += buf;
    svg_heatmap("Probe accuracy (rows: training pairing, cols: probe task)", tasks, tasks, acc,
                10, svg);
    svg_heatmap("Post-training MI bits (cols: estimation task)", tasks, tasks, mi, 400, svg);
    svg += "</svg>\n";
    return svg;
  }
  // negsample
  std::vector<std::string> labels;
  std::vector<double> accs;
  for (const auto& r : rep.rows) {
    size_t plus = r.pairing.find("+neg(");
    labels.push_back(plus == std::string::npos
                         ? "baseline"
                         : r.pairing.substr(plus + 5, r.pairing.size() - plus - 6));
    accs.push_back(r.acc);
  }
  return svg_bars("Negative-set sweep: probe accuracy per negative source", labels, accs);
}

}  // namespace

bool rows_equal(const CellRow& a, const CellRow& b) {
  auto deq = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
  return a.config_id == b.config_id && a.scenario == b.scenario && a.k_tr == b.k_tr &&
         deq(a.strength, b.strength) && a.pairing == b.pairing && a.task == b.task &&
         deq(a.acc, b.acc) && deq(a.mi_train_bits, b.mi_train_bits) && deq(a.mi_bits, b.mi_bits) &&
         a.k_est == b.k_est && deq(a.bound_bits, b.bound_bits) &&
         deq(a.entropy_bits, b.entropy_bits) && a.status == b.status;
}

std::vector<std::string> emit_report(const RunReport& report, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  std::string csv = std::string(kCsvHeader) + "\n";
  for (const auto& r : report.rows) {
    csv += csv_field(r.config_id) + "," + csv_field(r.scenario) + "," + std::to_string(r.k_tr) +
           "," + fmt_num(r.strength) + "," + csv_field(r.pairing) + "," + csv_field(r.task) + "," +
           fmt_num(r.acc) + "," + fmt_num(r.mi_train_bits) + "," + fmt_num(r.mi_bits) + "," +
           std::to_string(r.k_est) + "," + fmt_num(r.bound_bits) + "," + fmt_num(r.entropy_bits) +
           "," + csv_field(r.status) + "\n";
  }

  nlohmann::ordered_json j;
  j["version"] = kVersion;
  j["scenario"] = report.scenario;
  j["provenance"] = report.provenance;
  j["invalid"] = report.invalid;
  j["metadata"] = report.metadata;
  j["correlations"] = report.correlations;
  j["findings"] = report.findings;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    nlohmann::ordered_json row;
    row["config_id"] = r.config_id;
    row["scenario"] = r.scenario;
    row["k_tr"] = r.k_tr;
    row["strength"] = r.strength;
    row["pairing"] = r.pairing;
    row["task"] = r.task;
    row["acc"] = r.acc;
    row["mi_train_bits"] = r.mi_train_bits;
    row["mi_bits"] = r.mi_bits;
    row["k_est"] = r.k_est;
    row["bound_bits"] = r.bound_bits;
    row["entropy_bits"] = r.entropy_bits;
    row["status"] = r.status;
    j["rows"].push_back(std::move(row));
  }

  std::string svg = render_plot(report);

  std::vector<std::string> paths = {out_dir + "/results.csv", out_dir + "/report.json",
                                    out_dir + "/plot.svg"};
  const std::string contents[] = {csv, j.dump(2) + "\n", svg};
  for (int i = 0; i < 3; ++i) {
    std::ofstream out(paths[size_t(i)], std::ios::binary);
    if (!out) throw std::runtime_error("emit_report: cannot write " + paths[size_t(i)]);
    out << contents[i];
  }
  return paths;
}

std::vector<CellRow> parse_results_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("parse_results_csv: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c == '\n') {
      fields.push_back(cur);
      cur.clear();
      records.push_back(fields);
      fields.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (!cur.empty() || !fields.empty()) {
    fields.push_back(cur);
    records.push_back(fields);
  }
  if (records.empty()) throw std::runtime_error("parse_results_csv: empty file");
  {
    std::string header;
    for (size_t i = 0; i < records[0].size(); ++i) {
      if (i) header += ",";
      header += records[0][i];
    }
    if (header != kCsvHeader)
      throw std::runtime_error("parse_results_csv: unexpected header '" + header + "'");
  }
  auto to_d = [](const std::string& s) {
    return s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::strtod(s.c_str(), nullptr);
  };
  std::vector<CellRow> rows;
  for (size_t i = 1; i < records.size(); ++i) {
    const auto& f = records[i];
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != 13)
      throw std::runtime_error("parse_results_csv: row " + std::to_string(i) + " has " +
                               std::to_string(f.size()) + " fields");
    CellRow r;
    r.config_id = f[0];
    r.scenario = f[1];
    r.k_tr = int(std::strtol(f[2].c_str(), nullptr, 10));
    r.strength = to_d(f[3]);
    r.pairing = f[4];
    r.task = f[5];
    r.acc = to_d(f[6]);
    r.mi_train_bits = to_d(f[7]);
    r.mi_bits = to_d(f[8]);
    r.k_est = int(std::strtol(f[9].c_str(), nullptr, 10));
    r.bound_bits = to_d(f[10]);
    r.entropy_bits = to_d(f[11]);
    r.status = f[12];
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace mirig::harness
