#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pro2/dataset.hpp"
#include "pro2/error.hpp"
#include "pro2/parallel.hpp"
#include "pro2/probe.hpp"
#include "pro2/project.hpp"
#include "pro2/rng.hpp"

namespace pro2 {

enum class Domain { source, target };

/// Shifted homoscedastic Gaussian model: balanced binary labels, class
/// conditionals N(mu_y, Sigma) with Sigma = sigma_source on the source domain
/// and sigma_target on the target domain.
///
/// Construction validates both covariances and caches their Cholesky factors.
class ShogParams {
public:
  ShogParams(Vector mu0, Vector mu1, Matrix sigma_source, Matrix sigma_target)
      : mu0_(std::move(mu0)), mu1_(std::move(mu1)), sigma_source_(std::move(sigma_source)),
        sigma_target_(std::move(sigma_target)) {
    const auto D = mu0_.size();
    if (D < 1 || mu1_.size() != D) throw ContractError("ShogParams: means must share a positive dimension");
    if (!((mu1_ - mu0_).norm() > 0.0)) throw ContractError("ShogParams: class means are equal");
    chol_source_ = factor(sigma_source_, D, "sigma_source");
    chol_target_ = factor(sigma_target_, D, "sigma_target");
  }

  const Vector& mu0() const noexcept { return mu0_; }
  const Vector& mu1() const noexcept { return mu1_; }
  const Matrix& sigma_source() const noexcept { return sigma_source_; }
  const Matrix& sigma_target() const noexcept { return sigma_target_; }
  const Matrix& sigma(Domain which) const noexcept { return which == Domain::source ? sigma_source_ : sigma_target_; }
  /// Lower Cholesky factor of sigma(which).
  const Matrix& cholesky(Domain which) const noexcept { return which == Domain::source ? chol_source_ : chol_target_; }
  Eigen::Index dim() const noexcept { return mu0_.size(); }

  bool same_source(const ShogParams& other) const {
    return mu0_ == other.mu0_ && mu1_ == other.mu1_ && sigma_source_ == other.sigma_source_;
  }

private:
  static Matrix factor(const Matrix& s, Eigen::Index D, const char* name) {
    if (s.rows() != D || s.cols() != D) throw ContractError(std::string("ShogParams: ") + name + " has wrong shape");
    if (!s.allFinite()) throw DegeneracyError(std::string("ShogParams: ") + name + " has non-finite entries");
    const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
    if (!((s - s.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale))
      throw DegeneracyError(std::string("ShogParams: ") + name + " is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues().minCoeff() > 1e-10))
      throw DegeneracyError(std::string("ShogParams: ") + name + " is not positive definite");
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) throw DegeneracyError(std::string("ShogParams: ") + name + " Cholesky failed");
    return llt.matrixL();
  }

  Vector mu0_, mu1_;
  Matrix sigma_source_, sigma_target_;
  Matrix chol_source_, chol_target_;
};

/// n labelled draws from the chosen domain. Labels are fair coin flips; values
/// are rounded to float32 so the sample survives the binary file format.
inline EmbeddingDataset sample_shog(const ShogParams& params, Eigen::Index n, Domain which, std::uint64_t seed) {
  detail::require(n >= 1, "sample_shog: n must be positive");
  const auto D = params.dim();
  const Matrix& L = params.cholesky(which);
  SplitMix64 rng(seed);
  Matrix x(n, D);
  std::vector<int> labels(static_cast<std::size_t>(n));
  Vector z(D);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = static_cast<int>(rng() >> 63);
    for (Eigen::Index j = 0; j < D; ++j) z(j) = rng.normal();
    const Vector row = (y == 1 ? params.mu1() : params.mu0()) + L.triangularView<Eigen::Lower>() * z;
    for (Eigen::Index j = 0; j < D; ++j) x(i, j) = static_cast<double>(static_cast<float>(row(j)));
    labels[static_cast<std::size_t>(i)] = y;
  }
  return {std::move(x), std::move(labels), 2};
}

/// Bayes-optimal linear direction of the chosen domain.
inline Vector bayes_direction(const ShogParams& params, Domain which) {
  return lda_direction(params.mu0(), params.mu1(), params.sigma(which));
}

/// KL(N(., Sigma_S) || N(., Sigma_T)), the class-averaged divergence between
/// domains (the means are shared, so only covariances contribute).
inline double kl_shog(const ShogParams& params) {
  const Matrix& ls = params.cholesky(Domain::source);
  const Matrix& lt = params.cholesky(Domain::target);
  const auto D = static_cast<double>(params.dim());
  // tr(St^-1 Ss) = ||Lt^-1 Ls||_F^2
  const Matrix m = lt.triangularView<Eigen::Lower>().solve(ls);
  const double trace = m.squaredNorm();
  const double logdet_t = 2.0 * lt.diagonal().array().log().sum();
  const double logdet_s = 2.0 * ls.diagonal().array().log().sum();
  return std::max(0.0, 0.5 * (trace - D + logdet_t - logdet_s));
}

/// ||(I - P_k) w|| for every prefix k = 1..d of the basis, P_k the orthogonal
/// projector onto the span of rows 0..k-1.
inline std::vector<double> nullspace_profile(const FeatureBasis& basis, const Vector& w) {
  if (basis.dim() != w.size())
    throw ContractError("nullspace: basis dimension " + std::to_string(basis.dim()) + " != vector dimension " +
                        std::to_string(w.size()));
  // Householder QR of the (normalized) rows: span of the first k columns of Q
  // equals the span of the first k rows.
  const Matrix u = basis.normalized_rows().transpose();
  Eigen::HouseholderQR<Matrix> qr(u);
  const Matrix q = qr.householderQ() * Matrix::Identity(basis.dim(), basis.rank());
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(basis.rank()));
  Vector r = w;
  for (Eigen::Index k = 0; k < basis.rank(); ++k) {
    r -= q.col(k) * q.col(k).dot(r);
    out.push_back(r.norm());
  }
  return out;
}

inline double nullspace_norm(const FeatureBasis& basis, const Vector& w) { return nullspace_profile(basis, w).back(); }

// ---------------------------------------------------------------------------
// Default three-distribution suite
// ---------------------------------------------------------------------------

/// One Givens rotation of the construction, kept for the record.
struct PlaneRotation {
  Eigen::Index i = 0;
  Eigen::Index j = 0;
  double angle = 0.0;
};

struct ShogDistribution {
  std::string name;
  ShogParams params;
  std::vector<PlaneRotation> rotations;
};

namespace detail {

/// Product of `planes` Givens rotations. Each plane pairs a high-variance
/// coordinate (first half of the spectrum) with a low-variance one (second
/// half), no coordinate reused; angles have magnitude in [bound/2, bound].
inline std::pair<Matrix, std::vector<PlaneRotation>> seeded_rotation(Eigen::Index D, int planes, double bound,
                                                                     std::uint64_t seed) {
  SplitMix64 rng(seed);
  const Eigen::Index half = D / 2;
  std::vector<Eigen::Index> hi(static_cast<std::size_t>(half)), lo(static_cast<std::size_t>(D - half));
  for (Eigen::Index k = 0; k < half; ++k) hi[static_cast<std::size_t>(k)] = k;
  for (Eigen::Index k = 0; k < D - half; ++k) lo[static_cast<std::size_t>(k)] = half + k;
  for (auto* v : {&hi, &lo})
    for (std::size_t k = v->size(); k > 1; --k) std::swap((*v)[k - 1], (*v)[static_cast<std::size_t>(rng.below(k))]);

  Matrix r = Matrix::Identity(D, D);
  std::vector<PlaneRotation> record;
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(planes), hi.size());
  for (std::size_t p = 0; p < count; ++p) {
    const double mag = rng.uniform(bound / 2.0, bound);
    const double angle = (rng() >> 63) ? -mag : mag;
    const Eigen::Index i = hi[p], j = lo[p];
    const double c = std::cos(angle), s = std::sin(angle);
    // r <- G r, G the rotation by `angle` in the (i, j) plane.
    const Eigen::RowVectorXd ri = r.row(i), rj = r.row(j);
    r.row(i) = c * ri - s * rj;
    r.row(j) = s * ri + c * rj;
    record.push_back({i, j, angle});
  }
  return {std::move(r), std::move(record)};
}

}  // namespace detail

/// ID, Near-OOD and Far-OOD distributions sharing one source.
///
/// D = 20 by default; mu0 = -mu, mu1 = +mu with mu = 0.75 * 1/sqrt(D);
/// sigma_source = diag(2 * 0.8^i + 0.05). Near-OOD rotates sigma_source by up
/// to pi/8 in 5 planes, Far-OOD by up to pi/2 in 10 planes.
inline std::vector<ShogDistribution> default_shog_suite(std::uint64_t seed, Eigen::Index D = 20) {
  detail::require(D >= 2, "default_shog_suite: dimension must be at least 2");
  const Vector mu = Vector::Constant(D, 0.75 / std::sqrt(static_cast<double>(D)));
  Vector spectrum(D);
  for (Eigen::Index i = 0; i < D; ++i) spectrum(i) = 2.0 * std::pow(0.8, static_cast<double>(i)) + 0.05;
  const Matrix sigma_s = spectrum.asDiagonal();

  auto rotated = [&](int planes, double bound, std::uint64_t stream) {
    auto [r, rec] = detail::seeded_rotation(D, planes, bound, derive(seed, stream));
    Matrix t = r * sigma_s * r.transpose();
    t = 0.5 * (t + t.transpose());
    return std::make_pair(std::move(t), std::move(rec));
  };
  auto [near_t, near_rec] = rotated(5, std::numbers::pi / 8.0, 1);
  auto [far_t, far_rec] = rotated(10, std::numbers::pi / 2.0, 2);

  std::vector<ShogDistribution> suite;
  suite.push_back({"id", ShogParams(-mu, mu, sigma_s, sigma_s), {}});
  suite.push_back({"near_ood", ShogParams(-mu, mu, sigma_s, near_t), std::move(near_rec)});
  suite.push_back({"far_ood", ShogParams(-mu, mu, sigma_s, far_t), std::move(far_rec)});

  const double kl_near = kl_shog(suite[1].params);
  const double kl_far = kl_shog(suite[2].params);
  if (!(kl_far > kl_near && kl_near > 0.0))
    throw DegeneracyError("default_shog_suite: construction failed to order KL (near " + std::to_string(kl_near) +
                          ", far " + std::to_string(kl_far) + ")");
  return suite;
}

// ---------------------------------------------------------------------------
// Bias-variance experiment
// ---------------------------------------------------------------------------

struct ExperimentOptions {
  Eigen::Index n_source = 10000;
  Eigen::Index n_eval = 10000;
  /// Few-shot pool drawn per (distribution, repeat); train and val are
  /// label-balanced draws from it.
  Eigen::Index n_pool = 0;  // 0: 8 * max(sizes), at least 256
  ProjectConfig project{};
  ProbeConfig probe{0.01, 0.01, 500, 1, 0};
  unsigned jobs = 1;
};

struct MeanSe {
  double mean = 0.0;
  std::optional<double> std_error;  // empty with a single repeat
};

struct DistributionReport {
  std::string name;
  double kl = 0.0;
  std::vector<PlaneRotation> rotations;
  /// nullspace[d_index]: mean over repeats of the target Bayes direction's nullspace norm.
  std::vector<double> nullspace;
  /// accuracy[d_index][m_index]
  std::vector<std::vector<MeanSe>> accuracy;
  /// bias[d_index] = mean error at the largest M.
  std::vector<double> bias;
  /// variance[d_index][m_index] = mean error at M minus bias.
  std::vector<std::vector<double>> variance;
};

struct BiasVarianceReport {
  std::vector<Eigen::Index> dims;
  std::vector<Eigen::Index> sizes;
  int repeats = 0;
  std::uint64_t seed = 0;
  ExperimentOptions options;
  std::vector<DistributionReport> distributions;
};

namespace detail {

inline constexpr std::uint64_t kSourceStream = 1;
inline constexpr std::uint64_t kPoolStream = 2;
inline constexpr std::uint64_t kEvalStream = 3;
inline constexpr std::uint64_t kSplitStream = 4;
inline constexpr std::uint64_t kBasisStream = 5;

inline MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std_error = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return out;
}

}  // namespace detail

/// Pro^2 on each distribution: for every repeat, one rank-max(dims) basis is
/// trained on a fresh source sample and its prefixes serve every d (nested
/// spans). For each (distribution, d, M) a probe is trained on M examples per
/// label, early-stopped on another M per label, and scored on a large held-out
/// target sample.
inline BiasVarianceReport run_bias_variance_experiment(const std::vector<ShogDistribution>& suite,
                                                       const std::vector<Eigen::Index>& dims,
                                                       const std::vector<Eigen::Index>& sizes, int repeats,
                                                       std::uint64_t seed, const ExperimentOptions& opts = {}) {
  detail::require(!suite.empty(), "experiment: no distributions");
  detail::require(!dims.empty() && !sizes.empty(), "experiment: dims and sizes must be non-empty");
  detail::require(repeats >= 1, "experiment: repeats must be positive");
  const auto D = suite.front().params.dim();
  for (const auto& dist : suite) detail::require(dist.params.dim() == D, "experiment: distributions differ in dimension");
  for (auto d : dims) detail::require(d >= 1 && d <= D, "experiment: dims must lie in [1, D]");
  for (auto m : sizes) detail::require(m >= 1, "experiment: sizes must be positive");
  const auto d_max = *std::max_element(dims.begin(), dims.end());
  const auto m_max = *std::max_element(sizes.begin(), sizes.end());
  const auto m_max_index = static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  const Eigen::Index n_pool = opts.n_pool > 0 ? opts.n_pool : std::max<Eigen::Index>(256, 8 * m_max);

  const std::size_t nd = suite.size(), nk = dims.size(), nm = sizes.size();
  // acc[r][dist][d][m], null[r][dist][d]
  std::vector<std::vector<std::vector<std::vector<double>>>> acc(
      static_cast<std::size_t>(repeats),
      std::vector<std::vector<std::vector<double>>>(nd, std::vector<std::vector<double>>(nk, std::vector<double>(nm))));
  std::vector<std::vector<std::vector<double>>> null(static_cast<std::size_t>(repeats),
                                                     std::vector<std::vector<double>>(nd, std::vector<double>(nk)));

  parallel_for(static_cast<std::size_t>(repeats), opts.jobs, [&](std::size_t r) {
    const std::uint64_t rseed = derive(seed, r);
    std::vector<std::optional<FeatureBasis>> bases(nd);
    for (std::size_t di = 0; di < nd; ++di) {
      const auto& dist = suite[di];
      for (std::size_t prev = 0; prev < di && !bases[di]; ++prev)
        if (suite[prev].params.same_source(dist.params)) bases[di] = bases[prev];
      if (!bases[di]) {
        const auto source = sample_shog(dist.params, opts.n_source, Domain::source, derive(rseed, detail::kSourceStream, di));
        ProjectConfig pc = opts.project;
        pc.d = d_max;
        pc.mode = ProjectMode::joint;
        pc.seed = derive(rseed, detail::kBasisStream, di);
        bases[di] = fit_projection(source, pc).basis;
      }
      const FeatureBasis& basis = *bases[di];
      const auto profile = nullspace_profile(basis, bayes_direction(dist.params, Domain::target));
      for (std::size_t k = 0; k < nk; ++k) null[r][di][k] = profile[static_cast<std::size_t>(dims[k] - 1)];

      const auto pool = sample_shog(dist.params, n_pool, Domain::target, derive(rseed, detail::kPoolStream, di));
      const auto eval = sample_shog(dist.params, opts.n_eval, Domain::target, derive(rseed, detail::kEvalStream, di));
      for (std::size_t mi = 0; mi < nm; ++mi) {
        const auto split_seed = derive(rseed, detail::kSplitStream, di * nm + mi);
        const auto first = balanced_subsample(pool, {sizes[mi], split_seed});
        const auto second = balanced_subsample(first.remainder, {sizes[mi], derive(split_seed, 1)});
        for (std::size_t k = 0; k < nk; ++k) {
          const auto prefix = basis.prefix(dims[k]);
          const auto fit = train_probe(apply_basis(prefix, first.train), apply_basis(prefix, second.train), opts.probe);
          acc[r][di][k][mi] = evaluate(fit.model, apply_basis(prefix, eval)).overall;
        }
      }
    }
  });

  BiasVarianceReport report;
  report.dims = dims;
  report.sizes = sizes;
  report.repeats = repeats;
  report.seed = seed;
  report.options = opts;
  report.options.n_pool = n_pool;
  for (std::size_t di = 0; di < nd; ++di) {
    DistributionReport dr;
    dr.name = suite[di].name;
    dr.kl = kl_shog(suite[di].params);
    dr.rotations = suite[di].rotations;
    dr.nullspace.resize(nk);
    dr.accuracy.assign(nk, std::vector<MeanSe>(nm));
    dr.bias.resize(nk);
    dr.variance.assign(nk, std::vector<double>(nm));
    for (std::size_t k = 0; k < nk; ++k) {
      double ns = 0.0;
      for (int r = 0; r < repeats; ++r) ns += null[static_cast<std::size_t>(r)][di][k];
      dr.nullspace[k] = ns / repeats;
      for (std::size_t mi = 0; mi < nm; ++mi) {
        std::vector<double> xs;
        for (int r = 0; r < repeats; ++r) xs.push_back(acc[static_cast<std::size_t>(r)][di][k][mi]);
        dr.accuracy[k][mi] = detail::mean_se(xs);
      }
      dr.bias[k] = 1.0 - dr.accuracy[k][m_max_index].mean;
      for (std::size_t mi = 0; mi < nm; ++mi) dr.variance[k][mi] = (1.0 - dr.accuracy[k][mi].mean) - dr.bias[k];
    }
    report.distributions.push_back(std::move(dr));
  }
  return report;
}

}  // namespace pro2
