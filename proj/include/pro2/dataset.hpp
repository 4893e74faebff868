#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pro2/error.hpp"
#include "pro2/rng.hpp"

namespace pro2 {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// N x D embeddings with dense integer labels in [0, C).
///
/// Embeddings are held in double precision. The binary file format stores
/// float32, so anything that came from a file (or from `sample_shog`, which
/// rounds its draws) survives a save/load cycle bit-exactly.
class EmbeddingDataset {
public:
  EmbeddingDataset(Matrix embeddings, std::vector<int> labels, int num_classes,
                   std::vector<std::string> class_names = {})
      : embeddings_(std::move(embeddings)),
        labels_(std::move(labels)),
        num_classes_(num_classes),
        class_names_(std::move(class_names)) {
    if (class_names_.empty()) {
      for (int c = 0; c < num_classes_; ++c) class_names_.push_back(std::to_string(c));
    }
    validate();
  }

  const Matrix& embeddings() const noexcept { return embeddings_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  int num_classes() const noexcept { return num_classes_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }

  Eigen::Index size() const noexcept { return embeddings_.rows(); }
  Eigen::Index dim() const noexcept { return embeddings_.cols(); }

  std::vector<Eigen::Index> class_counts() const {
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(num_classes_), 0);
    for (int y : labels_) ++counts[static_cast<std::size_t>(y)];
    return counts;
  }

  /// Rows at `indices`, in the given order.
  EmbeddingDataset select(const std::vector<Eigen::Index>& indices) const {
    Matrix x(static_cast<Eigen::Index>(indices.size()), dim());
    std::vector<int> y;
    y.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = embeddings_.row(indices[i]);
      y.push_back(labels_[static_cast<std::size_t>(indices[i])]);
    }
    return {std::move(x), std::move(y), num_classes_, class_names_};
  }

  /// Same labels, replaced feature matrix (used for projections and scaling).
  EmbeddingDataset with_embeddings(Matrix x) const {
    detail::require(x.rows() == size(), "with_embeddings: row count changed");
    return {std::move(x), labels_, num_classes_, class_names_};
  }

  friend bool operator==(const EmbeddingDataset& a, const EmbeddingDataset& b) {
    return a.num_classes_ == b.num_classes_ && a.labels_ == b.labels_ && a.class_names_ == b.class_names_ &&
           a.embeddings_.rows() == b.embeddings_.rows() && a.embeddings_.cols() == b.embeddings_.cols() &&
           a.embeddings_ == b.embeddings_;
  }

private:
  void validate() const {
    if (num_classes_ < 1) throw ValidationError("num_classes must be positive");
    if (embeddings_.rows() < 1) throw ValidationError("dataset must contain at least one row");
    if (embeddings_.cols() < 1) throw ValidationError("embedding dimension must be positive");
    if (static_cast<Eigen::Index>(labels_.size()) != embeddings_.rows())
      throw ValidationError("label count " + std::to_string(labels_.size()) + " does not match row count " +
                            std::to_string(embeddings_.rows()));
    if (static_cast<int>(class_names_.size()) != num_classes_)
      throw ValidationError("expected " + std::to_string(num_classes_) + " class names");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] < 0 || labels_[i] >= num_classes_)
        throw ValidationError("row " + std::to_string(i) + ": label " + std::to_string(labels_[i]) +
                              " outside [0, " + std::to_string(num_classes_) + ")");
    }
    if (!embeddings_.allFinite()) {
      for (Eigen::Index r = 0; r < embeddings_.rows(); ++r)
        if (!embeddings_.row(r).allFinite())
          throw ValidationError("row " + std::to_string(r) + ": non-finite embedding entry");
    }
  }

  Matrix embeddings_;
  std::vector<int> labels_;
  int num_classes_;
  std::vector<std::string> class_names_;
};

/// How many examples per class go into the training draw.
struct SplitSpec {
  Eigen::Index per_label_count = 1;
  std::uint64_t seed = 0;
};

struct Split {
  EmbeddingDataset train;
  EmbeddingDataset remainder;
};

/// Index sets of a label-balanced draw; both lists are sorted ascending.
struct SplitIndices {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> remainder;
};

/// Chooses `per_label_count` rows of each class uniformly without replacement.
/// Class c draws from its own stream `derive(seed, c)`.
inline SplitIndices balanced_subsample_indices(const EmbeddingDataset& ds, const SplitSpec& spec) {
  detail::require(spec.per_label_count >= 1, "per_label_count must be at least 1");
  const auto C = static_cast<std::size_t>(ds.num_classes());
  std::vector<std::vector<Eigen::Index>> by_class(C);
  for (std::size_t i = 0; i < ds.labels().size(); ++i)
    by_class[static_cast<std::size_t>(ds.labels()[i])].push_back(static_cast<Eigen::Index>(i));

  std::vector<char> chosen(ds.labels().size(), 0);
  for (std::size_t c = 0; c < C; ++c) {
    auto& pool = by_class[c];
    const auto m = static_cast<std::size_t>(spec.per_label_count);
    if (pool.size() < m)
      throw InsufficientDataError("class " + std::to_string(c) + " (" + ds.class_names()[c] + ") has " +
                                      std::to_string(pool.size()) + " examples, need " + std::to_string(m),
                                  static_cast<int>(c));
    // Partial Fisher-Yates: the first m slots end up a uniform sample.
    SplitMix64 rng(derive(spec.seed, c));
    for (std::size_t k = 0; k < m; ++k) {
      const auto j = k + static_cast<std::size_t>(rng.below(pool.size() - k));
      std::swap(pool[k], pool[j]);
      chosen[static_cast<std::size_t>(pool[k])] = 1;
    }
  }

  SplitIndices out;
  for (std::size_t i = 0; i < chosen.size(); ++i)
    (chosen[i] ? out.train : out.remainder).push_back(static_cast<Eigen::Index>(i));
  return out;
}

/// Label-balanced draw; the remainder keeps the original row order.
///
/// Throws InsufficientDataError if a class has fewer than `per_label_count`
/// rows. The remainder may be empty only in the sense that it is not
/// returned as a dataset: if every row is drawn, a ContractError is raised.
inline Split balanced_subsample(const EmbeddingDataset& ds, const SplitSpec& spec) {
  auto idx = balanced_subsample_indices(ds, spec);
  if (idx.remainder.empty()) throw ContractError("balanced_subsample: draw consumes every row, remainder is empty");
  return {ds.select(idx.train), ds.select(idx.remainder)};
}

/// Per-dimension affine standardization fit on one dataset (usually the source).
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(const EmbeddingDataset& ds) {
    const Matrix& x = ds.embeddings();
    Standardizer s;
    s.mean = x.colwise().mean().transpose();
    s.scale.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double var = (x.col(j).array() - s.mean(j)).square().mean();
      const double sd = std::sqrt(var);
      s.scale(j) = sd > 1e-12 ? sd : 1.0;
    }
    return s;
  }

  EmbeddingDataset apply(const EmbeddingDataset& ds) const {
    detail::require(ds.dim() == mean.size(), "Standardizer: dimension mismatch");
    Matrix x = (ds.embeddings().rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
    return ds.with_embeddings(std::move(x));
  }
};

// ---------------------------------------------------------------------------
// Binary format (all integers little-endian):
//   "P2EM" | u32 version=1 | u64 N | u32 D | u32 C
//   | C x (u32 byte length, UTF-8 class name)
//   | N*D float32 row-major embeddings | N u32 labels
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char kDatasetMagic[4] = {'P', '2', 'E', 'M'};
inline constexpr std::uint32_t kDatasetVersion = 1;

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<std::conditional_t<std::is_floating_point_v<T>,
                                                    std::conditional_t<sizeof(T) == 4, std::int32_t, std::int64_t>, T>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

/// Cursor over an in-memory file image.
class ByteReader {
public:
  ByteReader(std::string_view data, std::string path) : data_(data), path_(std::move(path)) {}

  template <typename T>
  T get_le() {
    using U = std::make_unsigned_t<std::conditional_t<std::is_floating_point_v<T>,
                                                      std::conditional_t<sizeof(T) == 4, std::int32_t, std::int64_t>, T>>;
    need(sizeof(U));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      bits |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }

  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  const std::string& path() const noexcept { return path_; }

private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n)
      throw LengthError(path_ + ": truncated payload at byte " + std::to_string(pos_) + " (need " +
                        std::to_string(n) + ", have " + std::to_string(data_.size() - pos_) + ")");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
  std::string path_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace detail

inline std::string encode_binary(const EmbeddingDataset& ds) {
  std::string out;
  out.append(detail::kDatasetMagic, 4);
  detail::put_le<std::uint32_t>(out, detail::kDatasetVersion);
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(ds.size()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.dim()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.num_classes()));
  for (const auto& name : ds.class_names()) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
  }
  out.reserve(out.size() + static_cast<std::size_t>(ds.size() * (ds.dim() * 4 + 4)));
  const Matrix& x = ds.embeddings();
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c) detail::put_le<float>(out, static_cast<float>(x(r, c)));
  for (int y : ds.labels()) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(y));
  return out;
}

inline EmbeddingDataset decode_binary(std::string_view bytes, const std::string& path = "<memory>") {
  detail::ByteReader in(bytes, path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), detail::kDatasetMagic, 4) != 0)
    throw FormatError(path + ": not an embedding file (bad magic)");
  in.bytes(4);
  const auto version = in.get_le<std::uint32_t>();
  if (version != detail::kDatasetVersion)
    throw FormatError(path + ": unsupported embedding file version " + std::to_string(version));
  const auto n = in.get_le<std::uint64_t>();
  const auto d = in.get_le<std::uint32_t>();
  const auto c = in.get_le<std::uint32_t>();
  std::vector<std::string> names;
  for (std::uint32_t k = 0; k < c; ++k) {
    const auto len = in.get_le<std::uint32_t>();
    names.emplace_back(in.bytes(len));
  }
  const std::uint64_t payload = n * d * 4 + n * 4;
  if (d != 0 && n > in.remaining() / (static_cast<std::uint64_t>(d) * 4 + 4))
    throw LengthError(path + ": truncated payload (header promises " + std::to_string(payload) + " bytes, have " +
                      std::to_string(in.remaining()) + ")");
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index col = 0; col < x.cols(); ++col) x(r, col) = static_cast<double>(in.get_le<float>());
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (auto& y : labels) {
    const auto raw = in.get_le<std::uint32_t>();
    if (raw >= c)
      throw ValidationError(path + ": label " + std::to_string(raw) + " outside [0, " + std::to_string(c) + ")");
    y = static_cast<int>(raw);
  }
  if (in.remaining() != 0) throw FormatError(path + ": trailing bytes after labels");
  return {std::move(x), std::move(labels), static_cast<int>(c), std::move(names)};
}

inline void save_binary(const EmbeddingDataset& ds, const std::string& path) {
  detail::write_file(path, encode_binary(ds));
}

inline EmbeddingDataset load_binary(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  return decode_binary(bytes, path);
}

// CSV: header `e0,...,e{D-1},label`, one row per example.

inline std::string encode_csv(const EmbeddingDataset& ds) {
  std::string out;
  for (Eigen::Index j = 0; j < ds.dim(); ++j) out += "e" + std::to_string(j) + ",";
  out += "label\n";
  const Matrix& x = ds.embeddings();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      out += detail::format_double(x(r, j));
      out += ',';
    }
    out += std::to_string(ds.labels()[static_cast<std::size_t>(r)]);
    out += '\n';
  }
  return out;
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& cell : cells) {
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
  }
  return cells;
}

}  // namespace detail

/// Parses CSV text. The class count is one more than the largest label.
inline EmbeddingDataset decode_csv(std::string_view text, const std::string& path = "<memory>") {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    auto line = text.substr(start, pos - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    start = pos + 1;
  }
  if (lines.empty()) throw ParseError(path + ": empty CSV file");

  const auto header = detail::split_commas(lines[0]);
  if (header.size() < 2 || header.back() != "label")
    throw ParseError(path + ": header must be e0,...,e{D-1},label");
  const auto d = static_cast<Eigen::Index>(header.size() - 1);
  for (Eigen::Index j = 0; j < d; ++j)
    if (header[static_cast<std::size_t>(j)] != "e" + std::to_string(j))
      throw ParseError(path + ": header column " + std::to_string(j) + " should be e" + std::to_string(j));
  if (lines.size() < 2) throw ParseError(path + ": no data rows");

  const auto n = static_cast<Eigen::Index>(lines.size() - 1);
  Matrix x(n, d);
  std::vector<int> labels(static_cast<std::size_t>(n));
  int max_label = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto cells = detail::split_commas(lines[static_cast<std::size_t>(r + 1)]);
    if (static_cast<Eigen::Index>(cells.size()) != d + 1)
      throw ParseError(path + ": row " + std::to_string(r) + " has " + std::to_string(cells.size()) +
                       " cells, expected " + std::to_string(d + 1));
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto cell = cells[static_cast<std::size_t>(j)];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
        throw ParseError(path + ": row " + std::to_string(r) + ", column e" + std::to_string(j) +
                         ": not a number: '" + std::string(cell) + "'");
      x(r, j) = v;
    }
    const auto cell = cells.back();
    long long y = 0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), y);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
      throw ParseError(path + ": row " + std::to_string(r) + ": label is not an integer: '" + std::string(cell) + "'");
    if (y < 0 || y > 1'000'000)
      throw ValidationError(path + ": row " + std::to_string(r) + ": label " + std::to_string(y) + " out of range");
    labels[static_cast<std::size_t>(r)] = static_cast<int>(y);
    max_label = std::max(max_label, static_cast<int>(y));
  }
  return {std::move(x), std::move(labels), max_label + 1};
}

inline void save_csv(const EmbeddingDataset& ds, const std::string& path) { detail::write_file(path, encode_csv(ds)); }

inline EmbeddingDataset load_csv(const std::string& path) {
  const std::string text = detail::read_file(path);
  return decode_csv(text, path);
}

/// Dispatches on extension: `.csv` is text, anything else the binary format.
inline EmbeddingDataset load_dataset(const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) return load_csv(path);
  return load_binary(path);
}

}  // namespace pro2
