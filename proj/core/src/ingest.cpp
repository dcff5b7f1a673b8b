#include "firn/ingest.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "firn/binary_io.hpp"
#include "firn/error.hpp"
#include "firn/random.hpp"

namespace firn {

IndexGrid extract_layer_tops(const Mask& mask) {
  const auto rows = mask.rows();
  const auto cols = mask.cols();
  if (cols == 0) throw Error(ErrorKind::EmptyColumn, "mask has no columns");

  std::vector<std::vector<std::int32_t>> tops(static_cast<std::size_t>(cols));
  for (Eigen::Index c = 0; c < cols; ++c) {
    bool inside = false;
    for (Eigen::Index r = 0; r < rows; ++r) {
      const bool white = mask(r, c) != 0;
      if (white && !inside) tops[c].push_back(static_cast<std::int32_t>(r));
      inside = white;
    }
    if (tops[c].empty())
      throw Error(ErrorKind::EmptyColumn, "column " + std::to_string(c) + " has no white pixel");
  }

  const auto layers = tops.front().size();
  for (Eigen::Index c = 1; c < cols; ++c) {
    if (tops[c].size() != layers) {
      throw Error(ErrorKind::ColumnCountMismatch,
                  "column 0 has " + std::to_string(layers) + " layer tops but column " +
                      std::to_string(c) + " has " + std::to_string(tops[c].size()));
    }
  }

  IndexGrid out(static_cast<Eigen::Index>(layers), cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (std::size_t l = 0; l < layers; ++l) out(static_cast<Eigen::Index>(l), c) = tops[c][l];
  return out;
}

IndexGrid compute_thicknesses(const IndexGrid& layer_tops) {
  if (layer_tops.rows() < 2) return IndexGrid(0, layer_tops.cols());
  IndexGrid out = layer_tops.bottomRows(layer_tops.rows() - 1) - layer_tops.topRows(layer_tops.rows() - 1);
  for (Eigen::Index t = 0; t < out.rows(); ++t) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      if (out(t, c) <= 0) {
        throw Error(ErrorKind::NonMonotonicTops,
                    "layer tops " + std::to_string(t) + " and " + std::to_string(t + 1) + " in column " +
                        std::to_string(c) + " are " + std::to_string(layer_tops(t, c)) + " and " +
                        std::to_string(layer_tops(t + 1, c)));
      }
    }
  }
  return out;
}

void validate(const SegmentRecord& record) {
  const auto cols = static_cast<std::size_t>(record.columns());
  if (record.latitudes.size() != cols || record.longitudes.size() != cols) {
    throw Error(ErrorKind::InvalidRecord, record.segment_id + ": geolocation has " +
                                              std::to_string(record.latitudes.size()) + " rows for " +
                                              std::to_string(cols) + " columns");
  }
  for (std::size_t c = 0; c < cols; ++c) {
    const double lat = record.latitudes[c];
    const double lon = record.longitudes[c];
    if (!(lat >= -90.0 && lat <= 90.0) || !(lon >= -180.0 && lon <= 180.0)) {
      throw Error(ErrorKind::InvalidRecord, record.segment_id + ": column " + std::to_string(c) +
                                                " has invalid coordinate (" + std::to_string(lat) +
                                                ", " + std::to_string(lon) + ")");
    }
  }
  if (record.layers() < 1) throw Error(ErrorKind::InvalidRecord, record.segment_id + ": no layer tops");
  (void)compute_thicknesses(record.layer_tops);
}

ThicknessRecord to_thickness_record(const SegmentRecord& record) {
  validate(record);
  ThicknessRecord out;
  out.segment_id = record.segment_id;
  out.latitudes = record.latitudes;
  out.longitudes = record.longitudes;
  out.thickness = compute_thicknesses(record.layer_tops);
  out.year_labels.resize(static_cast<std::size_t>(out.thickness.rows()));
  for (std::size_t t = 0; t < out.year_labels.size(); ++t)
    out.year_labels[t] = record.surface_year - 1 - static_cast<int>(t);
  out.surface_row.assign(record.layer_tops.row(0).begin(), record.layer_tops.row(0).end());
  return out;
}

SegmentRecord to_segment_record(const ThicknessRecord& record) {
  SegmentRecord out;
  out.segment_id = record.segment_id;
  out.latitudes = record.latitudes;
  out.longitudes = record.longitudes;
  out.surface_year = record.year_labels.empty() ? 2012 : record.year_labels.front() + 1;
  const auto cols = record.thickness.cols();
  if (static_cast<Eigen::Index>(record.surface_row.size()) != cols)
    throw Error(ErrorKind::InvalidRecord, record.segment_id + ": surface row width mismatch");
  out.layer_tops.resize(record.thickness.rows() + 1, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    out.layer_tops(0, c) = record.surface_row[static_cast<std::size_t>(c)];
    for (Eigen::Index t = 0; t < record.thickness.rows(); ++t)
      out.layer_tops(t + 1, c) = out.layer_tops(t, c) + record.thickness(t, c);
  }
  return out;
}

std::vector<ThicknessRecord> filter_usable(std::span<const ThicknessRecord> records, int min_layers) {
  std::vector<ThicknessRecord> out;
  for (const auto& r : records)
    if (r.usable(min_layers)) out.push_back(r);
  return out;
}

std::vector<SplitPlan> make_splits(std::span<const std::string> ids, std::uint64_t seed, int n_trials,
                                   double train_fraction) {
  if (ids.size() < 2) throw Error(ErrorKind::Config, "need at least 2 records to split");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error(ErrorKind::Config, "train fraction must lie in (0, 1)");
  const auto n = ids.size();
  // The epsilon keeps products like 0.8 * 5 from landing just under an integer.
  auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

  std::vector<SplitPlan> plans;
  for (int trial = 0; trial < n_trials; ++trial) {
    SplitPlan plan;
    plan.trial_index = trial;
    plan.seed = derive_seed({seed, static_cast<std::uint64_t>(trial), 0x53504c4954ULL});
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(plan.seed);
    rng.shuffle(order);
    for (std::size_t i = 0; i < n; ++i)
      (i < n_train ? plan.train_ids : plan.test_ids).push_back(ids[order[i]]);
    plans.push_back(std::move(plan));
  }
  return plans;
}

std::vector<SplitPlan> make_splits(std::span<const ThicknessRecord> records, std::uint64_t seed, int n_trials,
                                   double train_fraction) {
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(r.segment_id);
  return make_splits(std::span<const std::string>(ids), seed, n_trials, train_fraction);
}

namespace {

constexpr std::string_view kDatasetMagic = "FRDS";

}  // namespace

std::vector<std::uint8_t> encode_dataset(std::span<const SegmentRecord> records) {
  ByteWriter w;
  w.put_magic(kDatasetMagic);
  w.put(kDatasetVersion);
  w.put(static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    w.put_string(r.segment_id);
    w.put(static_cast<std::int32_t>(r.surface_year));
    w.put(static_cast<std::uint32_t>(r.columns()));
    w.put(static_cast<std::uint32_t>(r.layers()));
    for (double v : r.latitudes) w.put(v);
    for (double v : r.longitudes) w.put(v);
    for (Eigen::Index t = 0; t < r.layer_tops.rows(); ++t)
      for (Eigen::Index c = 0; c < r.layer_tops.cols(); ++c) w.put(r.layer_tops(t, c));
  }
  return std::move(w).bytes();
}

std::vector<SegmentRecord> decode_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  in.expect_magic(kDatasetMagic);
  const auto version = in.get<std::uint32_t>();
  if (version != kDatasetVersion)
    throw Error(ErrorKind::Format, "unsupported dataset version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>();
  std::vector<SegmentRecord> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    SegmentRecord r;
    r.segment_id = in.get_string();
    r.surface_year = in.get<std::int32_t>();
    const auto cols = in.get<std::uint32_t>();
    const auto layers = in.get<std::uint32_t>();
    if (static_cast<std::uint64_t>(cols) * (layers + 4) * 4 > in.remaining())
      throw Error(ErrorKind::Format, "record '" + r.segment_id + "' exceeds file size");
    r.latitudes.resize(cols);
    r.longitudes.resize(cols);
    for (auto& v : r.latitudes) v = in.get<double>();
    for (auto& v : r.longitudes) v = in.get<double>();
    r.layer_tops.resize(layers, cols);
    for (std::uint32_t t = 0; t < layers; ++t)
      for (std::uint32_t c = 0; c < cols; ++c) r.layer_tops(t, c) = in.get<std::int32_t>();
    out.push_back(std::move(r));
  }
  if (!in.at_end()) throw Error(ErrorKind::Format, "trailing bytes after last record");
  return out;
}

void save_dataset(const std::filesystem::path& path, std::span<const SegmentRecord> records) {
  write_file_atomic(path, encode_dataset(records));
}

void save_dataset(const std::filesystem::path& path, std::span<const ThicknessRecord> records) {
  std::vector<SegmentRecord> segments;
  segments.reserve(records.size());
  for (const auto& r : records) segments.push_back(to_segment_record(r));
  save_dataset(path, std::span<const SegmentRecord>(segments));
}

std::vector<SegmentRecord> load_dataset(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_dataset(bytes);
}

std::vector<ThicknessRecord> load_thickness_dataset(const std::filesystem::path& path) {
  std::vector<ThicknessRecord> out;
  for (const auto& s : load_dataset(path)) out.push_back(to_thickness_record(s));
  return out;
}

void read_geolocation(const std::filesystem::path& path, std::vector<double>& latitudes,
                      std::vector<double>& longitudes) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  latitudes.clear();
  longitudes.clear();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    double lat = 0.0, lon = 0.0;
    if (!(fields >> lat)) continue;
    if (!(fields >> lon))
      throw Error(ErrorKind::Format, path.string() + ":" + std::to_string(line_no) + ": expected 'lat lon'");
    latitudes.push_back(lat);
    longitudes.push_back(lon);
  }
}

namespace {

class PnmTokenizer {
 public:
  explicit PnmTokenizer(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  int next_int() {
    skip_space();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_]))
      throw Error(ErrorKind::Format, "malformed netpbm header");
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) v = v * 10 + (bytes_[pos_++] - '0');
    return static_cast<int>(v);
  }

  /// Plain PBM pixels may be packed without separators.
  int next_bit() {
    skip_space();
    if (pos_ >= bytes_.size()) throw Error(ErrorKind::Format, "truncated PBM data");
    const auto ch = bytes_[pos_++];
    if (ch != '0' && ch != '1') throw Error(ErrorKind::Format, "bad PBM pixel");
    return ch - '0';
  }

  void skip_single_space() { ++pos_; }
  std::size_t pos() const { return pos_; }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

Mask read_mask(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 2 || bytes[0] != 'P') throw Error(ErrorKind::Format, path.string() + ": not a netpbm file");
  const char kind = static_cast<char>(bytes[1]);
  PnmTokenizer tok(bytes);
  const int width = tok.next_int();
  const int height = tok.next_int();
  const int maxval = (kind == '2' || kind == '5') ? tok.next_int() : 1;
  if (width <= 0 || height <= 0 || maxval <= 0) throw Error(ErrorKind::Format, path.string() + ": bad dimensions");

  Mask mask = Mask::Zero(height, width);
  switch (kind) {
    case '1':
      for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) mask(r, c) = tok.next_bit() == 0 ? 1 : 0;
      break;
    case '2':
      for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) mask(r, c) = 2 * tok.next_int() > maxval ? 1 : 0;
      break;
    case '4': {
      tok.skip_single_space();
      const std::size_t stride = (static_cast<std::size_t>(width) + 7) / 8;
      std::size_t base = tok.pos();
      if (bytes.size() < base + stride * static_cast<std::size_t>(height))
        throw Error(ErrorKind::Format, path.string() + ": truncated PBM raster");
      for (int r = 0; r < height; ++r, base += stride)
        for (int c = 0; c < width; ++c) {
          const int bit = (bytes[base + c / 8] >> (7 - c % 8)) & 1;
          mask(r, c) = bit == 0 ? 1 : 0;
        }
      break;
    }
    case '5': {
      tok.skip_single_space();
      const std::size_t sample = maxval > 255 ? 2 : 1;
      std::size_t p = tok.pos();
      if (bytes.size() < p + sample * static_cast<std::size_t>(width) * height)
        throw Error(ErrorKind::Format, path.string() + ": truncated PGM raster");
      for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c, p += sample) {
          const int v = sample == 2 ? (bytes[p] << 8) | bytes[p + 1] : bytes[p];
          mask(r, c) = 2 * v > maxval ? 1 : 0;
        }
      break;
    }
    default:
      throw Error(ErrorKind::Format, path.string() + ": unsupported netpbm type P" + std::string(1, kind));
  }
  return mask;
}

IngestSummary ingest_directory(const std::filesystem::path& mask_dir, const std::filesystem::path& geo_dir,
                               int min_layers, int surface_year) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(mask_dir)) throw Error(ErrorKind::Io, "mask directory not found: " + mask_dir.string());
  if (!fs::is_directory(geo_dir)) throw Error(ErrorKind::Io, "geolocation directory not found: " + geo_dir.string());

  std::vector<fs::path> masks;
  for (const auto& entry : fs::directory_iterator(mask_dir)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".pgm" || ext == ".pbm")) masks.push_back(entry.path());
  }
  std::sort(masks.begin(), masks.end());

  IngestSummary summary;
  for (const auto& mask_path : masks) {
    const auto id = mask_path.stem().string();
    try {
      fs::path geo = geo_dir / (id + ".txt");
      if (!fs::exists(geo)) geo = geo_dir / (id + ".csv");
      if (!fs::exists(geo)) throw Error(ErrorKind::Io, "no geolocation table");

      SegmentRecord record;
      record.segment_id = id;
      record.surface_year = surface_year;
      read_geolocation(geo, record.latitudes, record.longitudes);
      record.layer_tops = extract_layer_tops(read_mask(mask_path));
      validate(record);
      if (record.layers() < min_layers) {
        ++summary.filtered_out;
        continue;
      }
      summary.accepted.push_back(std::move(record));
    } catch (const Error& e) {
      spdlog::warn("rejecting segment {}: {}", id, e.what());
      summary.rejected.push_back(id + ": " + e.what());
    }
  }
  return summary;
}

}  // namespace firn
