#include "firn/report.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "firn/binary_io.hpp"
#include "firn/error.hpp"
#include "firn/key_value.hpp"
#include "firn/random.hpp"

namespace firn {

std::vector<ContinuousCurve> load_curves(const std::filesystem::path& predictions_csv, std::uint64_t seed) {
  std::ifstream in(predictions_csv);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + predictions_csv.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("segment_id,node,year,truth,prediction", 0) != 0)
    throw Error(ErrorKind::Format, predictions_csv.string() + ": unexpected header");
  std::map<int, ContinuousCurve> by_year;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, node, year, truth, pred;
    if (!std::getline(fields, id, ',') || !std::getline(fields, node, ',') || !std::getline(fields, year, ',') ||
        !std::getline(fields, truth, ',') || !std::getline(fields, pred))
      throw Error(ErrorKind::Format, predictions_csv.string() + ":" + std::to_string(line_no) + ": malformed row");
    auto& c = by_year[std::stoi(year)];
    c.year = std::stoi(year);
    c.truth.push_back(std::stod(truth));
    c.prediction.push_back(std::stod(pred));
  }
  std::vector<ContinuousCurve> out;
  for (auto& [year, curve] : by_year) {
    std::vector<std::size_t> order(curve.truth.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed({seed, static_cast<std::uint64_t>(year)}));
    rng.shuffle(order);
    ContinuousCurve shuffled;
    shuffled.year = year;
    for (auto i : order) {
      shuffled.truth.push_back(curve.truth[i]);
      shuffled.prediction.push_back(curve.prediction[i]);
    }
    out.push_back(std::move(shuffled));
  }
  return out;
}

std::string curve_csv(const ContinuousCurve& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "index,truth,prediction\n";
  for (std::size_t i = 0; i < curve.truth.size(); ++i) out << i << ',' << curve.truth[i] << ',' << curve.prediction[i] << '\n';
  return out.str();
}

std::string curve_svg(const ContinuousCurve& curve, const std::string& title) {
  constexpr double width = 960, height = 360, left = 60, right = 20, top = 40, bottom = 40;
  double lo = 0.0, hi = 1.0;
  if (!curve.truth.empty()) {
    const auto [tmin, tmax] = std::minmax_element(curve.truth.begin(), curve.truth.end());
    const auto [pmin, pmax] = std::minmax_element(curve.prediction.begin(), curve.prediction.end());
    lo = std::min(*tmin, *pmin);
    hi = std::max(*tmax, *pmax);
    if (hi <= lo) hi = lo + 1.0;
  }
  const auto n = std::max<std::size_t>(curve.truth.size(), 2);
  auto x = [&](std::size_t i) { return left + (width - left - right) * static_cast<double>(i) / static_cast<double>(n - 1); };
  auto y = [&](double v) { return top + (height - top - bottom) * (1.0 - (v - lo) / (hi - lo)); };
  auto polyline = [&](const std::vector<double>& v, const char* colour) {
    std::ostringstream s;
    s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"0.6\" points=\"";
    char buf[48];
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", x(i), y(v[i]));
      s << buf;
    }
    s << "\"/>\n";
    return s.str();
  };

  std::ostringstream svg;
  char buf[256];
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf), "<text x=\"%.0f\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">%s</text>\n",
                left, title.c_str());
  svg << buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.0f\" y1=\"%.0f\" x2=\"%.0f\" y2=\"%.0f\" stroke=\"black\"/>\n"
                "<line x1=\"%.0f\" y1=\"%.0f\" x2=\"%.0f\" y2=\"%.0f\" stroke=\"black\"/>\n",
                left, top, left, height - bottom, left, height - bottom, width - right, height - bottom);
  svg << buf;
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.0f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">%.1f</text>\n",
                  left - 6, y(v) + 3, v);
    svg << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.0f\" y=\"%.0f\" font-family=\"sans-serif\" font-size=\"11\">node index (shuffled)</text>\n"
                "<text x=\"14\" y=\"%.0f\" font-family=\"sans-serif\" font-size=\"11\" transform=\"rotate(-90 14 %.0f)\">thickness (px)</text>\n",
                width / 2 - 60, height - 10, height / 2 + 40, height / 2 + 40);
  svg << buf;
  svg << polyline(curve.truth, "#1f77b4");
  svg << polyline(curve.prediction, "#ff7f0e");
  svg << "<text x=\"" << width - 200 << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#1f77b4\">truth</text>\n";
  svg << "<text x=\"" << width - 140 << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#ff7f0e\">predicted</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::filesystem::path> render_trial_report(const std::filesystem::path& trial_json,
                                                       const std::filesystem::path& out_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(trial_json));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, trial_json.string() + ": " + e.what());
  }
  if (!j.contains("predictions") || !j["predictions"].is_string())
    throw Error(ErrorKind::Format, trial_json.string() + ": no predictions file recorded");
  const auto csv = trial_json.parent_path() / j["predictions"].get<std::string>();
  const auto seed = j.value("seed", std::uint64_t{0});
  const auto model = j.value("model", std::string("model"));
  const auto trial = j.value("trial", 0);
  const auto stem = trial_json.stem().string();

  std::vector<std::filesystem::path> written;
  for (const auto& curve : load_curves(csv, seed)) {
    const auto base = out_dir / (stem + "_" + std::to_string(curve.year));
    const auto title = model + " trial " + std::to_string(trial) + ": continuous predicted thickness, " +
                       std::to_string(curve.year);
    write_file_atomic(base.string() + ".csv", curve_csv(curve));
    write_file_atomic(base.string() + ".svg", curve_svg(curve, title));
    written.push_back(base.string() + ".csv");
    written.push_back(base.string() + ".svg");
  }
  return written;
}

}  // namespace firn
