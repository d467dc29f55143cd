#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "gsc/experiment.hpp"
#include "gsc/matrix_io.hpp"

namespace fs = std::filesystem;

namespace gsc {

namespace {

const char* kPalette[] = {"#d62728", "#2ca02c", "#1f77b4", "#9467bd", "#ff7f0e",
                          "#17becf", "#8c564b", "#e377c2", "#7f7f7f"};

struct Series {
  std::string method;
  std::vector<double> eps, acc;
};

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

void render_chart(const std::string& path, const std::vector<Series>& series,
                  const std::vector<std::string>& warnings) {
  const double width = 640, height = 420;
  const double left = 60, right = 20, top = 36, bottom = 70;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  double max_eps = 0.0;
  for (const auto& s : series) {
    for (double e : s.eps) max_eps = std::max(max_eps, e);
  }
  if (max_eps <= 0.0) max_eps = 1.0;

  const auto x_of = [&](double e) { return left + plot_w * (e / max_eps); };
  const auto y_of = [&](double a) { return top + plot_h * (1.0 - a); };

  std::ofstream os(path);
  if (!os) throw FormatError("cannot open for writing: " + path, 0);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\" "
        "font-family=\"sans-serif\">accuracy vs epsilon (IFGSM)</text>\n";

  // axes
  os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
     << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
     << top + plot_h << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double a = t / 5.0;
    os << "<line x1=\"" << left - 4 << "\" y1=\"" << y_of(a) << "\" x2=\"" << left << "\" y2=\""
       << y_of(a) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << y_of(a) + 4
       << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << a
       << "</text>\n";
    const double e = max_eps * t / 5.0;
    os << "<line x1=\"" << x_of(e) << "\" y1=\"" << top + plot_h << "\" x2=\"" << x_of(e)
       << "\" y2=\"" << top + plot_h + 4 << "\" stroke=\"black\"/>\n";
    std::ostringstream lbl;
    lbl.precision(3);
    lbl << e;
    os << "<text x=\"" << x_of(e) << "\" y=\"" << top + plot_h + 18
       << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << lbl.str()
       << "</text>\n";
  }
  os << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << top + plot_h + 34
     << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">epsilon</text>\n";
  os << "<text x=\"16\" y=\"" << top + plot_h / 2
     << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" "
        "transform=\"rotate(-90 16 "
     << top + plot_h / 2 << ")\">accuracy</text>\n";

  // series
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
    if (!s.eps.empty()) {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
      for (std::size_t p = 0; p < s.eps.size(); ++p) {
        os << x_of(s.eps[p]) << ',' << y_of(s.acc[p]) << ' ';
      }
      os << "\"/>\n";
      for (std::size_t p = 0; p < s.eps.size(); ++p) {
        os << "<circle cx=\"" << x_of(s.eps[p]) << "\" cy=\"" << y_of(s.acc[p])
           << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
      }
    }
    // legend
    const double ly = top + 14 + 16 * static_cast<double>(i);
    os << "<line x1=\"" << left + plot_w - 150 << "\" y1=\"" << ly << "\" x2=\""
       << left + plot_w - 130 << "\" y2=\"" << ly << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + plot_w - 124 << "\" y=\"" << ly + 4
       << "\" font-size=\"11\" font-family=\"sans-serif\">" << svg_escape(s.method) << "</text>\n";
  }

  // footer warnings
  double wy = height - 28;
  for (const auto& w : warnings) {
    os << "<text x=\"" << left << "\" y=\"" << wy
       << "\" font-size=\"10\" fill=\"#b00\" font-family=\"sans-serif\">warning: "
       << svg_escape(w) << "</text>\n";
    wy += 12;
  }
  os << "</svg>\n";
}

}  // namespace

int emit_report(const std::string& artifact_dir) {
  std::vector<Series> series;
  std::vector<std::string> warnings;
  std::vector<fs::path> files;
  if (fs::exists(artifact_dir)) {
    for (const auto& entry : fs::directory_iterator(artifact_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("sweep_", 0) == 0 && entry.path().extension() == ".csv")
        files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto rows = read_sweep_csv(f.string());
    Series s;
    s.method = f.stem().string().substr(6);
    for (const auto& r : rows) {
      s.eps.push_back(r.epsilon);
      s.acc.push_back(r.accuracy);
    }
    if (s.eps.empty()) warnings.push_back("series " + s.method + " has no rows");
    series.push_back(std::move(s));
  }
  if (series.empty()) warnings.push_back("no sweep CSVs found");
  render_chart(artifact_dir + "/report.svg", series, warnings);

  // group statistics in the attack-free table layout
  const std::string stats_csv = artifact_dir + "/group_stats.csv";
  if (fs::exists(stats_csv)) {
    std::ifstream is(stats_csv);
    std::string line;
    std::getline(is, line);
    std::ofstream txt(artifact_dir + "/group_stats.txt");
    txt << "Method              Inactive Groups  Mean Grp. Acc.  Found Grp. Combs.\n";
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string method, inactive, acc, combos;
      std::getline(ss, method, ',');
      std::getline(ss, inactive, ',');
      std::getline(ss, acc, ',');
      std::getline(ss, combos, ',');
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%-20s %14.1f%% %14.1f%% %17.1f%%\n", method.c_str(),
                    100.0 * std::stod(inactive), 100.0 * std::stod(acc),
                    100.0 * std::stod(combos));
      txt << buf;
    }
  }
  return kExitOk;
}

}  // namespace gsc
