#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>

#include "firn/error.hpp"

namespace firn {

std::string read_text_file(const std::filesystem::path& path);

/// Flat "key = value" text; '#' starts a comment. Keys a caller never asks
/// for are rejected by finish().
class KeyValueReader {
 public:
  KeyValueReader(const std::string& text, std::string context);

  bool has(const std::string& key) const { return values_.contains(key); }

  template <typename T>
  bool read(const std::string& key, T& out) {
    auto it = values_.find(key);
    if (it == values_.end()) return false;
    used_.insert(key);
    out = convert<T>(key, it->second);
    return true;
  }

  void finish() const;

 private:
  template <typename T>
  T convert(const std::string& key, const std::string& raw) const {
    if constexpr (std::is_same_v<T, std::string>) {
      return raw;
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
      return std::filesystem::path(raw);
    } else if constexpr (std::is_same_v<T, bool>) {
      if (raw == "true" || raw == "1" || raw == "yes") return true;
      if (raw == "false" || raw == "0" || raw == "no") return false;
      throw Error(ErrorKind::Config, context_ + ": '" + key + "' expects true/false, got '" + raw + "'");
    } else {
      std::istringstream in(raw);
      T v{};
      if (!(in >> v) || !(in >> std::ws).eof())
        throw Error(ErrorKind::Config, context_ + ": '" + key + "' has invalid value '" + raw + "'");
      return v;
    }
  }

  std::string context_;
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

class KeyValueWriter {
 public:
  void add(const std::string& key, const std::string& value) { out_ << key << " = " << value << '\n'; }
  void add(const std::string& key, const char* value) { add(key, std::string(value)); }
  void add(const std::string& key, bool value) { add(key, std::string(value ? "true" : "false")); }
  void add(const std::string& key, double value);
  template <typename T>
    requires std::is_integral_v<T>
  void add(const std::string& key, T value) {
    add(key, std::to_string(value));
  }

  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

/// 64-bit FNV-1a, used for provenance hashes.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace firn
