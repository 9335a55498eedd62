#include "tnesi/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tnesi/inference.hpp"

namespace tnesi {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::ifstream open_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Kind::Io, "cannot open " + path);
  return in;
}

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4))
    throw DataError(DataError::Kind::Truncated, "truncated IDX header in " + path);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

std::vector<unsigned char> read_payload(std::istream& in, std::size_t n, const std::string& path) {
  std::vector<unsigned char> buf(n);
  if (n > 0 && !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n)))
    throw DataError(DataError::Kind::Truncated,
                    "truncated IDX payload in " + path + ": expected " + std::to_string(n) + " bytes");
  return buf;
}

std::string hex(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

double parse_double(std::string_view field, const std::string& path, std::size_t line) {
  double v = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  while (first < last && *first == ' ') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw DataError(DataError::Kind::Format, path + ":" + std::to_string(line) + ": bad number \"" +
                                                 std::string(field) + "\"");
  return v;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? line.size() - start : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(RowMatrix observations, std::vector<std::optional<int>> labels, int K, double A)
    : labels_(std::move(labels)), K_(K), A_(A) {
  if (K_ <= 0) throw ConfigError("K must be positive");
  if (static_cast<Index>(labels_.size()) != observations.rows())
    throw DataError(DataError::Kind::Labels, "label count does not match example count");
  Vector lf(observations.rows());
  for (Index n = 0; n < observations.rows(); ++n) {
    const auto row = observations.row(n);
    if (!row.allFinite() || (row.array() < 1.0).any() ||
        std::abs(row.sum() - A) > kObservationTolerance * std::max(A, 1.0))
      throw DataError(DataError::Kind::Format,
                      "example " + std::to_string(n) + " is not a normalized observation");
    lf(n) = log_factorial_sum(row);
  }
  y_ = std::make_shared<const RowMatrix>(std::move(observations));
  log_factorials_ = std::make_shared<const Vector>(std::move(lf));
  check_labels();
}

Dataset::Dataset(std::shared_ptr<const RowMatrix> y, std::shared_ptr<const Vector> log_factorials,
                 std::vector<std::optional<int>> labels, int K, double A)
    : y_(std::move(y)), log_factorials_(std::move(log_factorials)), labels_(std::move(labels)), K_(K), A_(A) {
  if (static_cast<Index>(labels_.size()) != y_->rows())
    throw DataError(DataError::Kind::Labels, "label count does not match example count");
  check_labels();
}

void Dataset::check_labels() const {
  for (std::size_t n = 0; n < labels_.size(); ++n) {
    if (labels_[n] && (*labels_[n] < 0 || *labels_[n] >= K_))
      throw DataError(DataError::Kind::Labels,
                      "label of example " + std::to_string(n) + " is outside [0, K)");
  }
}

Dataset Dataset::from_examples(const std::vector<LabeledExample>& examples, int K) {
  if (examples.empty()) throw DataError(DataError::Kind::Format, "no examples");
  const Index D = examples.front().y.dim();
  const double A = examples.front().y.mass();
  RowMatrix Y(static_cast<Index>(examples.size()), D);
  std::vector<std::optional<int>> labels;
  labels.reserve(examples.size());
  for (std::size_t n = 0; n < examples.size(); ++n) {
    if (examples[n].y.dim() != D || examples[n].y.mass() != A)
      throw DataError(DataError::Kind::Format, "examples disagree on D or A");
    Y.row(static_cast<Index>(n)) = examples[n].y.values().transpose();
    labels.push_back(examples[n].label);
  }
  return Dataset(std::move(Y), std::move(labels), K, A);
}

LabeledExample Dataset::example(Index n) const {
  return {Observation::from_normalized(observation(n).transpose(), A_), label(n)};
}

Index Dataset::labeled_count() const {
  return std::count_if(labels_.begin(), labels_.end(), [](const auto& l) { return l.has_value(); });
}

Vector Dataset::mean() const { return y_->colwise().mean().transpose(); }

Dataset Dataset::with_labels(std::vector<std::optional<int>> labels) const {
  return Dataset(y_, log_factorials_, std::move(labels), K_, A_);
}

// ---------------------------------------------------------------------------
// IDX

RawDataset read_idx_images(const std::string& path) {
  auto in = open_binary(path);
  const auto magic = read_be32(in, path);
  if (magic != kImageMagic)
    throw DataError(DataError::Kind::BadMagic,
                    "bad IDX image magic " + hex(magic) + " in " + path + " (expected 0x803)");
  const auto count = read_be32(in, path);
  const auto rows = read_be32(in, path);
  const auto cols = read_be32(in, path);
  const std::size_t D = std::size_t{rows} * cols;
  const auto bytes = read_payload(in, std::size_t{count} * D, path);

  RawDataset raw;
  raw.rows = rows;
  raw.cols = cols;
  raw.pixels.resize(count, static_cast<Index>(D));
  for (std::size_t i = 0; i < bytes.size(); ++i) raw.pixels.data()[i] = bytes[i];
  raw.labels.assign(count, -1);
  return raw;
}

std::vector<int> read_idx_labels(const std::string& path) {
  auto in = open_binary(path);
  const auto magic = read_be32(in, path);
  if (magic != kLabelMagic)
    throw DataError(DataError::Kind::BadMagic,
                    "bad IDX label magic " + hex(magic) + " in " + path + " (expected 0x801)");
  const auto count = read_be32(in, path);
  const auto bytes = read_payload(in, count, path);
  return {bytes.begin(), bytes.end()};
}

RawDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  auto raw = read_idx_images(images_path);
  auto labels = read_idx_labels(labels_path);
  if (static_cast<Index>(labels.size()) != raw.size())
    throw DataError(DataError::Kind::CountMismatch,
                    "image count " + std::to_string(raw.size()) + " does not match label count " +
                        std::to_string(labels.size()));
  raw.labels = std::move(labels);
  return raw;
}

// ---------------------------------------------------------------------------
// CSV

RawDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::Io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(DataError::Kind::Format, path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  if (header.size() < 2 || header[0] != "label")
    throw DataError(DataError::Kind::Format, path + ": header must be label,p0,...");
  const std::size_t D = header.size() - 1;
  for (std::size_t d = 0; d < D; ++d) {
    if (header[d + 1] != "p" + std::to_string(d))
      throw DataError(DataError::Kind::Format, path + ": unexpected header column " + std::string(header[d + 1]));
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != D + 1)
      throw DataError(DataError::Kind::Format,
                      path + ":" + std::to_string(line_no) + ": expected " + std::to_string(D + 1) + " fields");
    const double label = parse_double(fields[0], path, line_no);
    if (label != std::floor(label) || label < -1)
      throw DataError(DataError::Kind::Labels, path + ":" + std::to_string(line_no) + ": bad label");
    labels.push_back(static_cast<int>(label));
    for (std::size_t d = 0; d < D; ++d) values.push_back(parse_double(fields[d + 1], path, line_no));
  }

  RawDataset raw;
  raw.pixels = Eigen::Map<const RowMatrix>(values.data(), static_cast<Index>(labels.size()), static_cast<Index>(D));
  raw.labels = std::move(labels);
  return raw;
}

void write_csv(const std::string& path, const RawDataset& raw) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::Io, "cannot write " + path);
  out << "label";
  for (Index d = 0; d < raw.dim(); ++d) out << ",p" << d;
  out << '\n';
  char buf[64];
  for (Index n = 0; n < raw.size(); ++n) {
    out << raw.labels[static_cast<std::size_t>(n)];
    for (Index d = 0; d < raw.dim(); ++d) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, raw.pixels(n, d));
      out << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Preprocessing

Dataset preprocess(const RawDataset& raw, double A, int K) {
  const Index N = raw.size();
  const Index D = raw.dim();
  if (N == 0) throw DataError(DataError::Kind::Format, "dataset is empty");
  if (!(A > static_cast<double>(D))) throw ConfigError("A must exceed D");
  if (static_cast<Index>(raw.labels.size()) != N)
    throw DataError(DataError::Kind::Labels, "label count does not match example count");

  RowMatrix Y(N, D);
  std::vector<std::optional<int>> labels(static_cast<std::size_t>(N));
  for (Index n = 0; n < N; ++n) {
    try {
      Y.row(n) = normalize_input(raw.pixels.row(n), A).values().transpose();
    } catch (const DataError& e) {
      throw DataError(e.kind(), "example " + std::to_string(n) + ": " + e.what());
    }
    const int l = raw.labels[static_cast<std::size_t>(n)];
    if (l >= 0) labels[static_cast<std::size_t>(n)] = l;
  }
  return Dataset(std::move(Y), std::move(labels), K, A);
}

Dataset subsample_labels(const Dataset& data, int per_class, std::uint64_t seed) {
  if (per_class < 0) throw ConfigError("labels per class must be nonnegative");
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(data.classes()));
  for (Index n = 0; n < data.size(); ++n) {
    if (const auto& l = data.label(n)) by_class[static_cast<std::size_t>(*l)].push_back(n);
  }
  Rng rng(seed);
  std::vector<std::optional<int>> labels(static_cast<std::size_t>(data.size()));
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto& candidates = by_class[k];
    if (static_cast<int>(candidates.size()) < per_class)
      throw DataError(DataError::Kind::Labels,
                      "class " + std::to_string(k) + " has only " + std::to_string(candidates.size()) +
                          " labeled examples, " + std::to_string(per_class) + " requested");
    // Partial Fisher-Yates: the first per_class entries are a uniform sample.
    for (int i = 0; i < per_class; ++i) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), candidates.size() - 1);
      std::swap(candidates[static_cast<std::size_t>(i)], candidates[pick(rng)]);
      labels[static_cast<std::size_t>(candidates[static_cast<std::size_t>(i)])] = static_cast<int>(k);
    }
  }
  return data.with_labels(std::move(labels));
}

// ---------------------------------------------------------------------------
// Synthetic Poisson mixtures

RowMatrix PoissonMixture::normalized_rows(double A) const {
  const double D = static_cast<double>(dim());
  return ((A - D) / mass) * rates.array() + 1.0;
}

PoissonMixture make_poisson_mixture(Index clusters, Index dim, double mass, Rng& rng) {
  if (clusters <= 0 || dim <= 0) throw ConfigError("mixture needs positive clusters and dim");
  if (!(mass > 0.0)) throw ConfigError("mixture mass must be positive");
  std::uniform_real_distribution<double> background(1.0, 2.0);
  const Index hot = std::max<Index>(1, dim / 4);
  std::vector<Index> order(static_cast<std::size_t>(dim));

  PoissonMixture m;
  m.mass = mass;
  m.rates.resize(clusters, dim);
  for (Index c = 0; c < clusters; ++c) {
    for (Index d = 0; d < dim; ++d) m.rates(c, d) = background(rng);
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (Index i = 0; i < hot; ++i) m.rates(c, order[static_cast<std::size_t>(i)]) *= 8.0;
    m.rates.row(c) *= mass / m.rates.row(c).sum();
  }
  return m;
}

RawDataset sample_poisson_mixture(const PoissonMixture& mixture, Index n, Rng& rng) {
  RawDataset raw;
  raw.pixels.resize(n, mixture.dim());
  raw.labels.resize(static_cast<std::size_t>(n));
  std::uniform_int_distribution<Index> component(0, mixture.clusters() - 1);
  for (Index i = 0; i < n; ++i) {
    const Index c = component(rng);
    raw.labels[static_cast<std::size_t>(i)] = static_cast<int>(c);
    do {
      for (Index d = 0; d < mixture.dim(); ++d) {
        std::poisson_distribution<long> draw(mixture.rates(c, d));
        raw.pixels(i, d) = static_cast<double>(draw(rng));
      }
    } while (raw.pixels.row(i).sum() == 0.0);
  }
  return raw;
}

}  // namespace tnesi
