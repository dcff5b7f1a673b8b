#include "firn/key_value.hpp"

#include <cstdio>
#include <fstream>

namespace firn {

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueReader::KeyValueReader(const std::string& text, std::string context) : context_(std::move(context)) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::Config, context_ + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorKind::Config, context_ + ":" + std::to_string(line_no) + ": empty key");
    if (values_.contains(key))
      throw Error(ErrorKind::Config, context_ + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    values_[key] = trim(line.substr(eq + 1));
  }
}

void KeyValueReader::finish() const {
  for (const auto& [key, value] : values_)
    if (!used_.contains(key)) throw Error(ErrorKind::Config, context_ + ": unknown key '" + key + "'");
}

void KeyValueWriter::add(const std::string& key, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  add(key, std::string(buf));
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace firn
