#include "firn/checkpoint.hpp"

#include "firn/binary_io.hpp"
#include "firn/error.hpp"

namespace firn {

namespace {

constexpr std::string_view kCheckpointMagic = "FRCK";

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Parameters& params) {
  const auto& c = params.config;
  ByteWriter w;
  w.put_magic(kCheckpointMagic);
  w.put(kCheckpointVersion);
  w.put_string(to_string(c.kind));
  for (int v : {c.in_channels, c.hidden, c.dense, c.outputs, c.cheb_order, c.steps}) w.put(static_cast<std::int32_t>(v));
  w.put(static_cast<std::uint8_t>(c.stacked ? 1 : 0));
  w.put(c.dropout);
  w.put(c.target_mean);
  w.put(c.target_scale);
  std::uint32_t count = 0;
  params.for_each([&](const std::string&, const Matrix&) { ++count; });
  w.put(count);
  params.for_each([&](const std::string& name, const Matrix& m) {
    w.put_string(name);
    w.put(std::uint32_t{2});
    w.put(static_cast<std::uint32_t>(m.rows()));
    w.put(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) w.put(m(i, j));
  });
  return std::move(w).bytes();
}

Parameters decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  in.expect_magic(kCheckpointMagic);
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::Format, "unsupported checkpoint version " + std::to_string(version));
  ModelConfig c;
  c.kind = parse_model_kind(in.get_string());
  c.in_channels = in.get<std::int32_t>();
  c.hidden = in.get<std::int32_t>();
  c.dense = in.get<std::int32_t>();
  c.outputs = in.get<std::int32_t>();
  c.cheb_order = in.get<std::int32_t>();
  c.steps = in.get<std::int32_t>();
  c.stacked = in.get<std::uint8_t>() != 0;
  c.dropout = in.get<double>();
  c.target_mean = in.get<double>();
  c.target_scale = in.get<double>();

  Parameters p = initialize_parameters(c, 0);
  const auto count = in.get<std::uint32_t>();
  std::uint32_t seen = 0;
  p.for_each([&](const std::string& name, Matrix& m) {
    if (seen++ >= count) throw Error(ErrorKind::Format, "checkpoint is missing tensor " + name);
    const auto stored = in.get_string();
    if (stored != name) throw Error(ErrorKind::Format, "expected tensor " + name + ", found " + stored);
    const auto rank = in.get<std::uint32_t>();
    const auto rows = in.get<std::uint32_t>();
    const auto cols = in.get<std::uint32_t>();
    if (rank != 2 || rows != m.rows() || cols != m.cols())
      throw Error(ErrorKind::Format, "tensor " + name + " has shape " + std::to_string(rows) + "x" +
                                         std::to_string(cols) + ", expected " + std::to_string(m.rows()) + "x" +
                                         std::to_string(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = in.get<double>();
  });
  if (seen != count || !in.at_end()) throw Error(ErrorKind::Format, "unexpected extra checkpoint content");
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const Parameters& params) {
  write_file_atomic(path, encode_checkpoint(params));
}

Parameters load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

std::uint64_t parameter_hash(const Parameters& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : encode_checkpoint(params)) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace firn
