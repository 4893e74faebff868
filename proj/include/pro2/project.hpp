#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pro2/dataset.hpp"
#include "pro2/error.hpp"
#include "pro2/optim.hpp"
#include "pro2/rng.hpp"

namespace pro2 {

/// d x D matrix of feature directions, ranked by training order (row 0 first).
///
/// Rows of Pro^2 and random bases are mutually orthogonal but not necessarily
/// unit length: the re-orthogonalization keeps the magnitude |R_ii| of each
/// direction. Geometric queries normalize rows first.
class FeatureBasis {
public:
  explicit FeatureBasis(Matrix rows) : rows_(std::move(rows)) {
    if (rows_.rows() < 1 || rows_.cols() < 1) throw ContractError("FeatureBasis: empty basis");
    if (rows_.rows() > rows_.cols())
      throw ContractError("FeatureBasis: rank " + std::to_string(rows_.rows()) + " exceeds dimension " +
                          std::to_string(rows_.cols()));
    if (!rows_.allFinite()) throw DegeneracyError("FeatureBasis: non-finite entries");
    for (Eigen::Index i = 0; i < rows_.rows(); ++i)
      if (!(rows_.row(i).norm() > 1e-12))
        throw DegeneracyError("FeatureBasis: row " + std::to_string(i) + " has zero norm");
  }

  const Matrix& rows() const noexcept { return rows_; }
  Eigen::Index rank() const noexcept { return rows_.rows(); }
  Eigen::Index dim() const noexcept { return rows_.cols(); }

  Matrix normalized_rows() const { return rows_.rowwise().normalized(); }

  /// The first k rows.
  FeatureBasis prefix(Eigen::Index k) const {
    detail::require(k >= 1 && k <= rank(), "FeatureBasis::prefix: k out of range");
    return FeatureBasis(rows_.topRows(k));
  }

  /// max over i != j of |cos(row_i, row_j)|; zero for a single row.
  double max_pairwise_cosine() const {
    const Matrix u = normalized_rows();
    const Matrix gram = u * u.transpose();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < gram.rows(); ++i)
      for (Eigen::Index j = i + 1; j < gram.cols(); ++j) worst = std::max(worst, std::abs(gram(i, j)));
    return worst;
  }

  friend bool operator==(const FeatureBasis& a, const FeatureBasis& b) {
    return a.rows_.rows() == b.rows_.rows() && a.rows_.cols() == b.rows_.cols() && a.rows_ == b.rows_;
  }

private:
  Matrix rows_;
};

enum class ProjectMode { joint, sequential, no_constraint };

inline std::string_view to_string(ProjectMode m) {
  switch (m) {
    case ProjectMode::joint:
      return "joint";
    case ProjectMode::sequential:
      return "sequential";
    case ProjectMode::no_constraint:
      return "nc";
  }
  return "?";
}

inline ProjectMode parse_project_mode(std::string_view s) {
  if (s == "joint") return ProjectMode::joint;
  if (s == "sequential") return ProjectMode::sequential;
  if (s == "nc" || s == "no_constraint") return ProjectMode::no_constraint;
  throw ContractError("unknown projection mode '" + std::string(s) + "'");
}

struct ProjectConfig {
  Eigen::Index d = 1;
  double lr = 0.01;
  double weight_decay = 0.01;
  int max_steps = 100;
  ProjectMode mode = ProjectMode::joint;
  std::uint64_t seed = 0;
  /// Fresh-seed restarts allowed after a rank-deficient re-orthogonalization.
  int max_retries = 3;
};

/// Basis plus the training loss recorded before every step and after the last.
struct ProjectionTrace {
  FeatureBasis basis;
  std::vector<double> loss_history;
  int retries = 0;
};

/// Makes rows mutually orthogonal while keeping row 0's direction.
///
/// Thin QR of rows^T; returns (Q * diag(R))^T. Row i becomes the component of
/// the input row i orthogonal to rows 0..i-1, so its length is |R_ii| and the
/// result does not depend on the sign convention of the factorization.
inline Matrix qr_reorthogonalize(const Matrix& rows) {
  const auto d = rows.rows();
  const auto D = rows.cols();
  detail::require(d >= 1 && d <= D, "qr_reorthogonalize: need 1 <= d <= D");
  Eigen::HouseholderQR<Matrix> qr(rows.transpose());
  const Vector diag = qr.matrixQR().diagonal().head(d);
  for (Eigen::Index i = 0; i < d; ++i)
    if (!(std::abs(diag(i)) > 1e-10))
      throw DegeneracyError("qr_reorthogonalize: row " + std::to_string(i) + " is numerically dependent on earlier rows");
  const Matrix q = qr.householderQ() * Matrix::Identity(D, d);
  return (q * diag.asDiagonal()).transpose();
}

/// d orthonormal rows spanning a uniformly random d-dimensional subspace.
inline FeatureBasis random_orthonormal_basis(Eigen::Index D, Eigen::Index d, std::uint64_t seed) {
  if (d < 1 || d > D)
    throw ContractError("random_orthonormal_basis: need 1 <= d <= D (d=" + std::to_string(d) +
                        ", D=" + std::to_string(D) + ")");
  SplitMix64 rng(seed);
  Matrix g(D, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < D; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix q = qr.householderQ() * Matrix::Identity(D, d);
  return FeatureBasis(q.transpose());
}

/// Unit vector along sigma^{-1} (mu1 - mu0): the linear discriminant direction.
inline Vector lda_direction(const Vector& mu0, const Vector& mu1, const Matrix& sigma) {
  detail::require(mu0.size() == mu1.size() && sigma.rows() == mu0.size() && sigma.cols() == mu0.size(),
                  "lda_direction: dimension mismatch");
  const Vector delta = mu1 - mu0;
  if (!(delta.norm() > 0.0)) throw ContractError("lda_direction: class means are equal");
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw DegeneracyError("lda_direction: covariance is not positive definite");
  // Cholesky pivots bound the smallest eigenvalue from above.
  const Vector pivots = llt.matrixL().toDenseMatrix().diagonal().array().square();
  if (!(pivots.minCoeff() > 1e-10)) throw DegeneracyError("lda_direction: covariance is numerically singular");
  const Vector w = llt.solve(delta);
  return w / w.norm();
}

/// Projected embeddings X * rows^T, labels unchanged.
inline EmbeddingDataset apply_basis(const FeatureBasis& basis, const EmbeddingDataset& ds) {
  if (basis.dim() != ds.dim())
    throw ContractError("apply_basis: basis dimension " + std::to_string(basis.dim()) + " != data dimension " +
                        std::to_string(ds.dim()));
  return ds.with_embeddings(ds.embeddings() * basis.rows().transpose());
}

namespace detail {

/// Linear map W x + b plus, for C > 2, the auxiliary softmax head trained with it.
struct ProjectionParams {
  Matrix weight;  // d x D
  Matrix bias;    // d x 1
  Matrix head;    // d x C (multiclass only)
  Matrix head_bias;  // C x 1
};

inline constexpr std::uint64_t kHeadStream = 0xA5A5'0000'0000'0001ULL;

inline ProjectionParams init_projection(Eigen::Index d, Eigen::Index D, int num_classes, std::uint64_t seed,
                                        Eigen::Index first_row = 0) {
  ProjectionParams p;
  p.weight.resize(d, D);
  p.bias.resize(d, 1);
  const double bound = 1.0 / std::sqrt(static_cast<double>(D));
  for (Eigen::Index i = 0; i < d; ++i) {
    SplitMix64 rng(derive(seed, static_cast<std::uint64_t>(first_row + i)));
    for (Eigen::Index j = 0; j < D; ++j) p.weight(i, j) = rng.uniform(-bound, bound);
    p.bias(i, 0) = rng.uniform(-bound, bound);
  }
  if (num_classes > 2) {
    SplitMix64 rng(derive(seed, kHeadStream, static_cast<std::uint64_t>(first_row)));
    const double hb = 1.0 / std::sqrt(static_cast<double>(d));
    p.head.resize(d, num_classes);
    for (Eigen::Index i = 0; i < p.head.size(); ++i) p.head.data()[i] = rng.uniform(-hb, hb);
    p.head_bias = Matrix::Zero(num_classes, 1);
  }
  return p;
}

/// Loss of the projection objective and gradients for every parameter block.
struct ProjectionGrad {
  double loss = 0.0;
  ProjectionParams grad;
};

inline ProjectionGrad projection_loss(const Matrix& x, std::span<const int> labels, int num_classes,
                                      const ProjectionParams& p) {
  Matrix z = x * p.weight.transpose();
  z.rowwise() += p.bias.col(0).transpose();
  ProjectionGrad out;
  Matrix dz;
  if (num_classes <= 2) {
    auto lv = binary_logistic_loss(z, labels);
    out.loss = lv.value;
    dz = std::move(lv.gradient);
  } else {
    Matrix logits = z * p.head;
    logits.rowwise() += p.head_bias.col(0).transpose();
    auto lv = softmax_xent_loss(logits, labels);
    out.loss = lv.value;
    out.grad.head = z.transpose() * lv.gradient;
    out.grad.head_bias = lv.gradient.colwise().sum().transpose();
    dz = lv.gradient * p.head.transpose();
  }
  out.grad.weight = dz.transpose() * x;
  out.grad.bias = dz.colwise().sum().transpose();
  return out;
}

/// Full-batch AdamW on the projection objective. `constrain` is applied to the
/// weight matrix after every step.
inline std::pair<ProjectionParams, std::vector<double>> descend(const Matrix& x, std::span<const int> labels,
                                                                int num_classes, ProjectionParams p,
                                                                const ProjectConfig& cfg,
                                                                const std::function<void(Matrix&)>& constrain) {
  const AdamHyper hyper{cfg.lr, cfg.weight_decay};
  auto sw = OptimState::zeros(p.weight.rows(), p.weight.cols(), hyper);
  auto sb = OptimState::zeros(p.bias.rows(), 1, hyper);
  OptimState sh, shb;
  if (num_classes > 2) {
    sh = OptimState::zeros(p.head.rows(), p.head.cols(), hyper);
    shb = OptimState::zeros(p.head_bias.rows(), 1, hyper);
  }
  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(cfg.max_steps) + 1);
  for (int step = 0; step < cfg.max_steps; ++step) {
    auto g = projection_loss(x, labels, num_classes, p);
    history.push_back(g.loss);
    adamw_update(p.weight, g.grad.weight, sw);
    adamw_update(p.bias, g.grad.bias, sb);
    if (num_classes > 2) {
      adamw_update(p.head, g.grad.head, sh);
      adamw_update(p.head_bias, g.grad.head_bias, shb);
    }
    if (constrain) constrain(p.weight);
  }
  history.push_back(projection_loss(x, labels, num_classes, p).loss);
  return {std::move(p), std::move(history)};
}

inline void check_projection_inputs(const EmbeddingDataset& source, const ProjectConfig& cfg) {
  if (cfg.d < 1 || cfg.d > source.dim())
    throw ContractError("projection rank d=" + std::to_string(cfg.d) + " must lie in [1, " +
                        std::to_string(source.dim()) + "]");
  detail::require(cfg.max_steps >= 1, "projection max_steps must be positive");
  detail::require(cfg.lr > 0.0 && cfg.weight_decay >= 0.0, "projection lr must be positive, weight decay non-negative");
  if (source.num_classes() < 2) throw ContractError("projection needs at least two classes");
}

inline ProjectionTrace fit_joint(const EmbeddingDataset& source, const ProjectConfig& cfg, std::uint64_t seed,
                                 bool orthogonalize) {
  auto p = init_projection(cfg.d, source.dim(), source.num_classes(), seed);
  std::function<void(Matrix&)> constrain;
  if (orthogonalize) constrain = [](Matrix& w) { w = qr_reorthogonalize(w); };
  auto [fitted, history] = descend(source.embeddings(), source.labels(), source.num_classes(), std::move(p), cfg, constrain);
  return {FeatureBasis(std::move(fitted.weight)), std::move(history), 0};
}

/// Removes from every row of `m` its component in the span of the orthonormal rows `u`.
inline void deflate_rows(Matrix& m, const Matrix& u) {
  if (u.rows() == 0) return;
  m -= (m * u.transpose()) * u;
}

inline ProjectionTrace fit_sequential(const EmbeddingDataset& source, const ProjectConfig& cfg, std::uint64_t seed) {
  const auto D = source.dim();
  Matrix rows(cfg.d, D);
  Matrix unit(0, D);
  std::vector<double> history;
  Matrix x = source.embeddings();
  ProjectConfig single = cfg;
  single.d = 1;
  for (Eigen::Index i = 0; i < cfg.d; ++i) {
    auto p = init_projection(1, D, source.num_classes(), seed, i);
    deflate_rows(p.weight, unit);
    // Twice: the second pass removes the rounding left by the first.
    auto constrain = [&unit](Matrix& w) {
      deflate_rows(w, unit);
      deflate_rows(w, unit);
    };
    auto [fitted, h] = descend(x, source.labels(), source.num_classes(), std::move(p), single, constrain);
    const double norm = fitted.weight.norm();
    if (!(norm > 1e-10)) throw DegeneracyError("sequential projection: row " + std::to_string(i) + " collapsed to zero");
    rows.row(i) = fitted.weight.row(0);
    if (i == 0) history = std::move(h);
    unit.conservativeResize(i + 1, Eigen::NoChange);
    unit.row(i) = fitted.weight.row(0) / norm;
    deflate_rows(x, unit.bottomRows(1));
  }
  return {FeatureBasis(std::move(rows)), std::move(history), 0};
}

}  // namespace detail

/// Trains a feature basis on labelled source data in the mode `cfg.mode`.
///
/// A rank-deficient re-orthogonalization restarts the run from a fresh seed,
/// at most `cfg.max_retries` times. For sequential mode the loss history is
/// that of the first row.
inline ProjectionTrace fit_projection(const EmbeddingDataset& source, const ProjectConfig& cfg) {
  detail::check_projection_inputs(source, cfg);
  for (int attempt = 0;; ++attempt) {
    const std::uint64_t seed = attempt == 0 ? cfg.seed : derive(cfg.seed, 0xDEADull, static_cast<std::uint64_t>(attempt));
    try {
      ProjectionTrace trace = [&] {
        switch (cfg.mode) {
          case ProjectMode::joint:
            return detail::fit_joint(source, cfg, seed, true);
          case ProjectMode::no_constraint:
            return detail::fit_joint(source, cfg, seed, false);
          case ProjectMode::sequential:
            return detail::fit_sequential(source, cfg, seed);
        }
        throw ContractError("unknown projection mode");
      }();
      trace.retries = attempt;
      return trace;
    } catch (const DegeneracyError&) {
      if (attempt >= cfg.max_retries) throw;
    }
  }
}

inline FeatureBasis train_projection(const EmbeddingDataset& source, ProjectConfig cfg) {
  cfg.mode = ProjectMode::joint;
  return fit_projection(source, cfg).basis;
}

inline FeatureBasis train_projection_sequential(const EmbeddingDataset& source, ProjectConfig cfg) {
  cfg.mode = ProjectMode::sequential;
  return fit_projection(source, cfg).basis;
}

inline FeatureBasis train_projection_nc(const EmbeddingDataset& source, ProjectConfig cfg) {
  cfg.mode = ProjectMode::no_constraint;
  return fit_projection(source, cfg).basis;
}

// Basis file: "P2FB" | u32 version=1 | u32 d | u32 D | d*D float64 row-major, little-endian.

namespace detail {
inline constexpr char kBasisMagic[4] = {'P', '2', 'F', 'B'};
inline constexpr std::uint32_t kBasisVersion = 1;
}  // namespace detail

inline std::string encode_basis(const FeatureBasis& basis) {
  std::string out(detail::kBasisMagic, 4);
  detail::put_le<std::uint32_t>(out, detail::kBasisVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(basis.rank()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(basis.dim()));
  for (Eigen::Index i = 0; i < basis.rank(); ++i)
    for (Eigen::Index j = 0; j < basis.dim(); ++j) detail::put_le<double>(out, basis.rows()(i, j));
  return out;
}

inline FeatureBasis decode_basis(std::string_view bytes, const std::string& path = "<memory>") {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), detail::kBasisMagic, 4) != 0)
    throw FormatError(path + ": not a basis file (bad magic)");
  detail::ByteReader in(bytes, path);
  in.bytes(4);
  const auto version = in.get_le<std::uint32_t>();
  if (version != detail::kBasisVersion) throw FormatError(path + ": unsupported basis version " + std::to_string(version));
  const auto d = in.get_le<std::uint32_t>();
  const auto D = in.get_le<std::uint32_t>();
  if (static_cast<std::uint64_t>(d) * D * 8 > in.remaining()) throw LengthError(path + ": truncated basis payload");
  Matrix rows(d, D);
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    for (Eigen::Index j = 0; j < rows.cols(); ++j) rows(i, j) = in.get_le<double>();
  if (in.remaining() != 0) throw FormatError(path + ": trailing bytes after basis");
  return FeatureBasis(std::move(rows));
}

inline void save_basis(const FeatureBasis& basis, const std::string& path) { detail::write_file(path, encode_basis(basis)); }

inline FeatureBasis load_basis(const std::string& path) { return decode_basis(detail::read_file(path), path); }

}  // namespace pro2
