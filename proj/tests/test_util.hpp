#ifndef TNESI_TEST_UTIL_HPP
#define TNESI_TEST_UTIL_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "tnesi/core.hpp"
#include "tnesi/data.hpp"

namespace tnesi::test {

// Observation with random positive raw input, normalized by hand.
inline Vector random_observation(Index D, double A, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 10.0);
  Vector raw(D);
  for (Index d = 0; d < D; ++d) raw(d) = u(rng);
  raw(0) += 1.0;
  Vector y(D);
  const double total = raw.sum();
  for (Index d = 0; d < D; ++d) y(d) = (A - static_cast<double>(D)) * raw(d) / total + 1.0;
  return y;
}

inline RowMatrix random_observations(Index N, Index D, double A, Rng& rng) {
  RowMatrix Y(N, D);
  for (Index n = 0; n < N; ++n) Y.row(n) = random_observation(D, A, rng).transpose();
  return Y;
}

// Positive rows summing to A, spread wide enough that joints differ.
inline RowMatrix random_weight_rows(Index C, Index D, double A, Rng& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  RowMatrix W(C, D);
  for (Index c = 0; c < C; ++c) {
    for (Index d = 0; d < D; ++d) W(c, d) = u(rng) * u(rng);
    W.row(c) *= A / W.row(c).sum();
  }
  return W;
}

inline BottomWeights random_bottom(Index C, Index D, double A, Rng& rng) {
  return BottomWeights(random_weight_rows(C, D, A, rng), A);
}

inline TopWeights random_top(Index K, Index C, Rng& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  RowMatrix R(K, C);
  for (Index k = 0; k < K; ++k) {
    for (Index c = 0; c < C; ++c) R(k, c) = u(rng);
    R.row(k) /= R.row(k).sum();
  }
  return TopWeights(std::move(R));
}

inline Dataset unlabeled_dataset(RowMatrix Y, int K, double A) {
  std::vector<std::optional<int>> labels(static_cast<std::size_t>(Y.rows()));
  return Dataset(std::move(Y), std::move(labels), K, A);
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("tnesi_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace tnesi::test

#endif  // TNESI_TEST_UTIL_HPP
