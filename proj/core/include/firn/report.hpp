#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace firn {

/// One target year's truth/prediction pairs in plotting order.
struct ContinuousCurve {
  int year = 0;
  std::vector<double> truth;
  std::vector<double> prediction;
};

/// Reads a trial's predictions CSV and shuffles node order with `seed`, so the
/// x axis is an unsorted node index as in the experiment plots.
std::vector<ContinuousCurve> load_curves(const std::filesystem::path& predictions_csv, std::uint64_t seed);

std::string curve_csv(const ContinuousCurve& curve);
std::string curve_svg(const ContinuousCurve& curve, const std::string& title);

/// Emits `<stem>_<year>.csv` and `<stem>_<year>.svg` per target year into
/// `out_dir`; returns the written paths.
std::vector<std::filesystem::path> render_trial_report(const std::filesystem::path& trial_json,
                                                       const std::filesystem::path& out_dir);

}  // namespace firn
