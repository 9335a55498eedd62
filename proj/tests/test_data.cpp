#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "test_util.hpp"
#include "tnesi/data.hpp"

using namespace tnesi;

namespace {

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<unsigned char>(v >> shift));
}

std::vector<unsigned char> idx_images(const std::vector<std::vector<unsigned char>>& images, std::uint32_t rows,
                                      std::uint32_t cols, std::uint32_t magic = 0x803) {
  std::vector<unsigned char> out;
  put_be32(out, magic);
  put_be32(out, static_cast<std::uint32_t>(images.size()));
  put_be32(out, rows);
  put_be32(out, cols);
  for (const auto& img : images) out.insert(out.end(), img.begin(), img.end());
  return out;
}

std::vector<unsigned char> idx_labels(const std::vector<unsigned char>& labels, std::uint32_t magic = 0x801) {
  std::vector<unsigned char> out;
  put_be32(out, magic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

DataError::Kind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.kind();
  }
  FAIL("no DataError thrown");
  return DataError::Kind::Io;
}

Dataset balanced(int K, int per_class) {
  RawDataset raw;
  raw.pixels = RowMatrix::Ones(K * per_class, 3);
  for (int n = 0; n < K * per_class; ++n) {
    raw.pixels(n, n % 3) += n;
    raw.labels.push_back(n % K);
  }
  return preprocess(raw, 10.0, K);
}

}  // namespace

TEST_CASE("golden two-image IDX file") {
  test::TempDir dir("idx");
  // Hand-written bytes: magic 0x00000803, 2 images, 2 rows, 3 cols.
  const std::vector<unsigned char> images = {
      0x00, 0x00, 0x08, 0x03, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x03,
      0,    255,  7,    128,  1,    2,    9,    8,    7,    6,    5,    4};
  const std::vector<unsigned char> labels = {0x00, 0x00, 0x08, 0x01, 0x00, 0x00, 0x00, 0x02, 7, 3};
  test::write_bytes(dir.file("img"), images);
  test::write_bytes(dir.file("lbl"), labels);

  const RawDataset raw = load_idx(dir.file("img"), dir.file("lbl"));
  CHECK(raw.size() == 2);
  CHECK(raw.dim() == 6);
  CHECK(raw.rows == 2);
  CHECK(raw.cols == 3);
  const double expected[2][6] = {{0, 255, 7, 128, 1, 2}, {9, 8, 7, 6, 5, 4}};
  for (int n = 0; n < 2; ++n)
    for (int d = 0; d < 6; ++d) CHECK(raw.pixels(n, d) == expected[n][d]);
  CHECK(raw.labels == std::vector<int>{7, 3});
}

TEST_CASE("IDX round trip through the test writer") {
  test::TempDir dir("idx");
  Rng rng(5);
  std::vector<std::vector<unsigned char>> imgs(13, std::vector<unsigned char>(20));
  std::vector<unsigned char> lbls;
  for (auto& img : imgs) {
    for (auto& b : img) b = static_cast<unsigned char>(rng() & 0xff);
    lbls.push_back(static_cast<unsigned char>(rng() % 10));
  }
  test::write_bytes(dir.file("img"), idx_images(imgs, 4, 5));
  test::write_bytes(dir.file("lbl"), idx_labels(lbls));
  const RawDataset raw = load_idx(dir.file("img"), dir.file("lbl"));
  REQUIRE(raw.size() == 13);
  for (Index n = 0; n < 13; ++n) {
    for (Index d = 0; d < 20; ++d) CHECK(raw.pixels(n, d) == imgs[n][d]);
    CHECK(raw.labels[n] == lbls[n]);
  }
}

TEST_CASE("IDX errors are distinct") {
  test::TempDir dir("idx");
  const std::vector<std::vector<unsigned char>> imgs(2, std::vector<unsigned char>(4, 1));
  test::write_bytes(dir.file("img"), idx_images(imgs, 2, 2));
  test::write_bytes(dir.file("lbl"), idx_labels({1, 2}));
  test::write_bytes(dir.file("lbl3"), idx_labels({1, 2, 3}));
  test::write_bytes(dir.file("badimg"), idx_images(imgs, 2, 2, 0x801));
  test::write_bytes(dir.file("badlbl"), idx_labels({1, 2}, 0x803));
  auto truncated = idx_images(imgs, 2, 2);
  truncated.pop_back();
  test::write_bytes(dir.file("short"), truncated);
  test::write_bytes(dir.file("header"), {0x00, 0x00, 0x08});
  auto short_labels = idx_labels({1, 2});
  short_labels.pop_back();
  test::write_bytes(dir.file("shortlbl"), short_labels);

  CHECK_NOTHROW(load_idx(dir.file("img"), dir.file("lbl")));
  CHECK(kind_of([&] { load_idx(dir.file("badimg"), dir.file("lbl")); }) == DataError::Kind::BadMagic);
  CHECK(kind_of([&] { load_idx(dir.file("img"), dir.file("badlbl")); }) == DataError::Kind::BadMagic);
  CHECK(kind_of([&] { load_idx(dir.file("short"), dir.file("lbl")); }) == DataError::Kind::Truncated);
  CHECK(kind_of([&] { load_idx(dir.file("header"), dir.file("lbl")); }) == DataError::Kind::Truncated);
  CHECK(kind_of([&] { load_idx(dir.file("img"), dir.file("shortlbl")); }) == DataError::Kind::Truncated);
  CHECK(kind_of([&] { load_idx(dir.file("img"), dir.file("lbl3")); }) == DataError::Kind::CountMismatch);
  CHECK(kind_of([&] { load_idx(dir.file("nope"), dir.file("lbl")); }) == DataError::Kind::Io);
}

TEST_CASE("MNIST files have the documented sizes" * doctest::skip(std::getenv("TNESI_MNIST_DIR") == nullptr)) {
  const std::filesystem::path dir = std::getenv("TNESI_MNIST_DIR");
  if (!std::filesystem::exists(dir / "train-images-idx3-ubyte")) return;
  const RawDataset train = load_idx((dir / "train-images-idx3-ubyte").string(), (dir / "train-labels-idx1-ubyte").string());
  CHECK(train.size() == 60000);
  CHECK(train.dim() == 784);
  const RawDataset test = load_idx((dir / "t10k-images-idx3-ubyte").string(), (dir / "t10k-labels-idx1-ubyte").string());
  CHECK(test.size() == 10000);
  CHECK(test.dim() == 784);
  const Dataset y = preprocess(test, 900.0, 10);
  CHECK(y.labeled_count() == 10000);
  for (Index n = 0; n < y.size(); n += 97) CHECK(std::abs(y.observation(n).sum() - 900.0) < 1e-9 * 900.0);
}

TEST_CASE("CSV round trip and errors") {
  test::TempDir dir("csv");
  RawDataset raw;
  raw.pixels.resize(3, 4);
  raw.pixels << 1, 2, 3, 4, 0.1, 0.2, 0.30000000000000004, 1e-300, 5, 0, 0, 1;
  raw.labels = {2, -1, 0};
  write_csv(dir.file("a.csv"), raw);
  const RawDataset back = load_csv(dir.file("a.csv"));
  CHECK(back.pixels == raw.pixels);
  CHECK(back.labels == raw.labels);

  {
    std::ofstream(dir.file("hdr.csv")) << "lbl,p0\n1,2\n";
    std::ofstream(dir.file("cols.csv")) << "label,p0,p1\n1,2\n";
    std::ofstream(dir.file("num.csv")) << "label,p0,p1\n1,2,x\n";
    std::ofstream(dir.file("lab.csv")) << "label,p0,p1\n1.5,2,3\n";
    std::ofstream(dir.file("crlf.csv")) << "label,p0,p1\r\n1,2,3\r\n";
  }
  CHECK(kind_of([&] { load_csv(dir.file("hdr.csv")); }) == DataError::Kind::Format);
  CHECK(kind_of([&] { load_csv(dir.file("cols.csv")); }) == DataError::Kind::Format);
  CHECK(kind_of([&] { load_csv(dir.file("num.csv")); }) == DataError::Kind::Format);
  CHECK(kind_of([&] { load_csv(dir.file("lab.csv")); }) == DataError::Kind::Labels);
  CHECK(load_csv(dir.file("crlf.csv")).pixels(0, 1) == 3.0);
}

TEST_CASE("preprocess normalizes every example") {
  RawDataset raw;
  raw.pixels = RowMatrix::Constant(2, 784, 17.0);
  raw.pixels(1, 5) = 200.0;
  raw.labels = {1, -1};
  const Dataset data = preprocess(raw, 900.0, 10);
  CHECK(data.size() == 2);
  CHECK((data.observation(0).array() - 900.0 / 784).abs().maxCoeff() < 1e-12);
  for (Index n = 0; n < 2; ++n) {
    CHECK(std::abs(data.observation(n).sum() - 900.0) < 1e-9 * 900.0);
    CHECK(data.observation(n).minCoeff() >= 1.0);
  }
  CHECK(data.label(0) == 1);
  CHECK_FALSE(data.label(1).has_value());
  CHECK(data.labeled_count() == 1);
  CHECK(data.log_factorial(1) == doctest::Approx([&] {
          double s = 0;
          for (Index d = 0; d < 784; ++d) s += std::lgamma(data.observation(1)(d) + 1.0);
          return s;
        }()));

  raw.pixels.row(1).setZero();
  CHECK_THROWS_WITH_AS(preprocess(raw, 900.0, 10), "example 1: degenerate input: zero total mass", DataError);
  raw.pixels.row(1).setOnes();
  raw.labels = {1, 10};
  CHECK_THROWS_AS(preprocess(raw, 900.0, 10), DataError);
  CHECK_THROWS_AS(preprocess(raw, 700.0, 11), ConfigError);
}

TEST_CASE("Dataset accessors") {
  Rng rng(2);
  const RowMatrix Y = test::random_observations(5, 4, 10.0, rng);
  const Dataset data(Y, {0, std::nullopt, 2, std::nullopt, 1}, 3, 10.0);
  CHECK(data.dim() == 4);
  CHECK(data.classes() == 3);
  CHECK((data.mean() - Y.colwise().mean().transpose()).cwiseAbs().maxCoeff() < 1e-15);
  const LabeledExample ex = data.example(2);
  CHECK(ex.label == 2);
  CHECK(ex.y.values() == Y.row(2).transpose());
  const Dataset again = Dataset::from_examples({data.example(0), data.example(1)}, 3);
  CHECK(again.size() == 2);
  CHECK(again.observation(1) == Y.row(1));
  CHECK_THROWS_AS(Dataset(Y, {0, 1}, 3, 10.0), DataError);
  CHECK_THROWS_AS(Dataset(Y, {0, 1, 3, 0, 0}, 3, 10.0), DataError);
  RowMatrix bad = Y;
  bad(0, 0) = 0.5;
  CHECK_THROWS_AS(Dataset(bad, std::vector<std::optional<int>>(5), 3, 10.0), DataError);
}

TEST_CASE("subsample_labels") {
  const Dataset data = balanced(10, 30);
  const Dataset a = subsample_labels(data, 10, 7);
  const Dataset b = subsample_labels(data, 10, 7);
  const Dataset c = subsample_labels(data, 10, 8);
  CHECK(a.labeled_count() == 100);
  CHECK(a.labels() == b.labels());
  CHECK(a.labels() != c.labels());
  std::map<int, int> per_class;
  for (Index n = 0; n < a.size(); ++n) {
    if (a.label(n)) {
      ++per_class[*a.label(n)];
      CHECK(*a.label(n) == *data.label(n));
    }
    CHECK(a.observation(n) == data.observation(n));
  }
  for (int k = 0; k < 10; ++k) CHECK(per_class[k] == 10);

  CHECK(subsample_labels(data, 30, 1).labels() == data.labels());
  CHECK(subsample_labels(data, 0, 1).labeled_count() == 0);
  CHECK_THROWS_AS(subsample_labels(data, 31, 1), DataError);
}

TEST_CASE("subsample_labels is uniform within a class") {
  const Dataset data = balanced(2, 6);
  std::vector<int> hits(12, 0);
  const int runs = 6000;
  for (int s = 0; s < runs; ++s) {
    const Dataset d = subsample_labels(data, 2, static_cast<std::uint64_t>(s));
    for (Index n = 0; n < 12; ++n) hits[n] += d.label(n).has_value();
  }
  // Each example is kept with probability 1/3.
  for (int h : hits) CHECK(std::abs(h / static_cast<double>(runs) - 1.0 / 3) < 0.03);
}

TEST_CASE("synthetic Poisson mixture") {
  Rng rng(3);
  const PoissonMixture m = make_poisson_mixture(8, 16, 160.0, rng);
  CHECK(m.clusters() == 8);
  for (Index c = 0; c < 8; ++c) CHECK(m.rates.row(c).sum() == doctest::Approx(160.0));
  CHECK((m.rates.array() > 0).all());
  const RowMatrix rows = m.normalized_rows(50.0);
  for (Index c = 0; c < 8; ++c) CHECK(rows.row(c).sum() == doctest::Approx(50.0));

  const RawDataset raw = sample_poisson_mixture(m, 4000, rng);
  CHECK(raw.size() == 4000);
  std::vector<Index> count(8, 0);
  RowMatrix sums = RowMatrix::Zero(8, 16);
  for (Index n = 0; n < raw.size(); ++n) {
    const int l = raw.labels[n];
    REQUIRE(l >= 0);
    REQUIRE(l < 8);
    ++count[l];
    sums.row(l) += raw.pixels.row(n);
    CHECK(raw.pixels.row(n).sum() > 0);
    CHECK((raw.pixels.row(n).array() == raw.pixels.row(n).array().round()).all());
  }
  for (Index c = 0; c < 8; ++c) {
    CHECK(count[c] > 350);
    const Eigen::RowVectorXd mean = sums.row(c) / static_cast<double>(count[c]);
    CHECK((mean - m.rates.row(c)).cwiseAbs().sum() / m.rates.row(c).sum() < 0.05);
  }
  Rng r1(9), r2(9);
  CHECK(make_poisson_mixture(3, 5, 10, r1).rates == make_poisson_mixture(3, 5, 10, r2).rates);
}
