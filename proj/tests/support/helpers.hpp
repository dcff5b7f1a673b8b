#pragma once

#include <doctest.h>

#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "firn/error.hpp"
#include "firn/types.hpp"

namespace firn::testing {

/// Runs `fn` and checks that it throws firn::Error of the given kind.
inline void require_error(ErrorKind kind, const std::function<void()>& fn) {
  bool thrown = false;
  try {
    fn();
  } catch (const Error& e) {
    thrown = true;
    CHECK_MESSAGE(e.kind() == kind, e.what());
  }
  CHECK_MESSAGE(thrown, "expected ", std::string(to_string(kind)));
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(gen);
  return m;
}

/// Symmetric nonnegative adjacency with zero diagonal.
inline Matrix random_adjacency(Eigen::Index n, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix a = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) a(i, j) = a(j, i) = u(gen);
  return a;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("firn_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace firn::testing
