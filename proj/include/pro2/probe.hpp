#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pro2/dataset.hpp"
#include "pro2/error.hpp"
#include "pro2/optim.hpp"
#include "pro2/parallel.hpp"
#include "pro2/project.hpp"

namespace pro2 {

/// Linear classifier over projected features.
///
/// Binary problems use the single-logit form (d x 1 weights, one bias; predict
/// class 1 when the logit is strictly positive). C > 2 uses d x C weights and
/// argmax, ties going to the lowest class index.
struct ProbeModel {
  Matrix weights;
  Vector bias;
  int num_classes = 2;

  static ProbeModel zeros(Eigen::Index d, int num_classes) {
    const Eigen::Index k = num_classes == 2 ? 1 : num_classes;
    return {Matrix::Zero(d, k), Vector::Zero(k), num_classes};
  }

  Matrix logits(const Matrix& x) const {
    Matrix z = x * weights;
    z.rowwise() += bias.transpose();
    return z;
  }

  std::vector<int> predict(const Matrix& x) const {
    const Matrix z = logits(x);
    std::vector<int> out(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      if (num_classes == 2) {
        out[static_cast<std::size_t>(i)] = z(i, 0) > 0.0 ? 1 : 0;
      } else {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < z.cols(); ++c)
          if (z(i, c) > z(i, best)) best = c;
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
      }
    }
    return out;
  }
};

struct ProbeConfig {
  double lr = 0.01;
  double l2_weight = 0.01;
  int max_steps = 500;
  int eval_every = 1;
  std::uint64_t seed = 0;
};

struct Accuracy {
  double overall = 0.0;
  /// NaN for classes absent from the evaluated data.
  std::vector<double> per_class;
};

inline Accuracy evaluate(const ProbeModel& model, const EmbeddingDataset& ds) {
  if (ds.dim() != model.weights.rows())
    throw ContractError("evaluate: model expects " + std::to_string(model.weights.rows()) + " features, data has " +
                        std::to_string(ds.dim()));
  detail::require(ds.size() > 0, "evaluate: empty dataset");
  const auto pred = model.predict(ds.embeddings());
  const auto C = static_cast<std::size_t>(std::max(ds.num_classes(), model.num_classes));
  std::vector<double> hits(C, 0.0), totals(C, 0.0);
  double correct = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto y = static_cast<std::size_t>(ds.labels()[i]);
    totals[y] += 1.0;
    if (pred[i] == ds.labels()[i]) {
      hits[y] += 1.0;
      correct += 1.0;
    }
  }
  Accuracy acc;
  acc.overall = correct / static_cast<double>(pred.size());
  acc.per_class.resize(C);
  for (std::size_t c = 0; c < C; ++c)
    acc.per_class[c] = totals[c] > 0 ? hits[c] / totals[c] : std::numeric_limits<double>::quiet_NaN();
  return acc;
}

struct ProbeFit {
  ProbeModel model;
  double best_val_accuracy = 0.0;
  int best_step = 0;
  double final_val_accuracy = 0.0;
};

/// Full-batch AdamW on the logistic (C = 2) or softmax loss from zero weights,
/// keeping the snapshot with the best validation accuracy. The zero model at
/// step 0 is a candidate; the earliest step wins ties.
inline ProbeFit train_probe(const EmbeddingDataset& train, const EmbeddingDataset& val, const ProbeConfig& cfg) {
  if (train.dim() != val.dim())
    throw ContractError("train_probe: train has " + std::to_string(train.dim()) + " features, val has " +
                        std::to_string(val.dim()));
  if (train.num_classes() != val.num_classes()) throw ContractError("train_probe: train and val class counts differ");
  if (train.num_classes() < 2) throw ContractError("train_probe: need at least two classes");
  detail::require(cfg.lr > 0.0 && cfg.l2_weight >= 0.0, "train_probe: lr must be positive, l2 non-negative");
  detail::require(cfg.max_steps >= 0 && cfg.eval_every >= 1, "train_probe: bad step settings");

  const int C = train.num_classes();
  const Matrix& x = train.embeddings();
  ProbeModel model = ProbeModel::zeros(train.dim(), C);
  Matrix bias = model.bias;
  const AdamHyper hyper{cfg.lr, cfg.l2_weight};
  auto sw = OptimState::zeros(model.weights.rows(), model.weights.cols(), hyper);
  auto sb = OptimState::zeros(bias.rows(), 1, hyper);

  ProbeFit fit{model, evaluate(model, val).overall, 0, 0.0};
  fit.final_val_accuracy = fit.best_val_accuracy;
  for (int step = 1; step <= cfg.max_steps; ++step) {
    Matrix z = x * model.weights;
    z.rowwise() += bias.col(0).transpose();
    const LossValue lv = C == 2 ? binary_logistic_loss(z, train.labels()) : softmax_xent_loss(z, train.labels());
    const Matrix gw = x.transpose() * lv.gradient;
    const Matrix gb = lv.gradient.colwise().sum().transpose();
    adamw_update(model.weights, gw, sw);
    adamw_update(bias, gb, sb);
    model.bias = bias.col(0);
    if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
      const double acc = evaluate(model, val).overall;
      fit.final_val_accuracy = acc;
      if (acc > fit.best_val_accuracy) {
        fit.best_val_accuracy = acc;
        fit.best_step = step;
        fit.model = model;
      }
    }
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Hyperparameter sweep
// ---------------------------------------------------------------------------

enum class Method { pro2, pro2_seq, pro2_nc, random, full_probe };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::pro2:
      return "pro2";
    case Method::pro2_seq:
      return "pro2_seq";
    case Method::pro2_nc:
      return "pro2_nc";
    case Method::random:
      return "random";
    case Method::full_probe:
      return "full_probe";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : {Method::pro2, Method::pro2_seq, Method::pro2_nc, Method::random, Method::full_probe})
    if (s == to_string(m)) return m;
  throw ContractError("unknown method '" + std::string(s) + "'");
}

struct SweepGrid {
  std::vector<double> lrs{0.1, 0.01, 0.001};
  std::vector<double> l2s{0.1, 0.01, 0.001};
  std::vector<Eigen::Index> dims{1, 4, 16, 64, 256, 1024};

  /// Dimensions clipped to at most D, duplicates dropped, order kept.
  std::vector<Eigen::Index> resolved_dims(Eigen::Index D, Method method) const {
    if (method == Method::full_probe) return {D};
    std::vector<Eigen::Index> out;
    for (auto d : dims) {
      const auto c = std::min(d, D);
      if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    }
    return out;
  }
};

struct SweepOptions {
  /// Projection settings; `d`, `mode` and `seed` are filled in per cell.
  ProjectConfig project{};
  int probe_max_steps = 500;
  int probe_eval_every = 1;
  unsigned jobs = 1;
  bool record_timing = false;
};

struct SweepCell {
  Method method = Method::pro2;
  Eigen::Index d = 0;
  double lr = 0.0;
  double l2 = 0.0;
  std::uint64_t seed = 0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  std::vector<double> per_class_acc;
  std::optional<double> wall_ms;
};

struct MethodSweep {
  Method method = Method::pro2;
  std::vector<SweepCell> cells;
  std::size_t selected = 0;

  const SweepCell& selected_cell() const { return cells.at(selected); }
};

struct SweepReport {
  std::vector<MethodSweep> methods;
};

/// The feature basis a sweep cell probes on.
inline FeatureBasis build_basis(Method method, const EmbeddingDataset& source, Eigen::Index d, std::uint64_t seed,
                                const ProjectConfig& base = {}) {
  ProjectConfig cfg = base;
  cfg.d = d;
  cfg.seed = seed;
  switch (method) {
    case Method::pro2:
      cfg.mode = ProjectMode::joint;
      return fit_projection(source, cfg).basis;
    case Method::pro2_seq:
      cfg.mode = ProjectMode::sequential;
      return fit_projection(source, cfg).basis;
    case Method::pro2_nc:
      cfg.mode = ProjectMode::no_constraint;
      return fit_projection(source, cfg).basis;
    case Method::random:
      return random_orthonormal_basis(source.dim(), d, seed);
    case Method::full_probe:
      return FeatureBasis(Matrix::Identity(source.dim(), source.dim()));
  }
  throw ContractError("unknown method");
}

/// Probe one (basis, lr, l2) configuration and score it on val and test.
inline SweepCell run_cell(const FeatureBasis& basis, const EmbeddingDataset& train, const EmbeddingDataset& val,
                          const EmbeddingDataset& test, double lr, double l2, std::uint64_t seed,
                          const SweepOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  ProbeConfig pc{lr, l2, opts.probe_max_steps, opts.probe_eval_every, seed};
  const auto fit = train_probe(apply_basis(basis, train), apply_basis(basis, val), pc);
  const auto test_acc = evaluate(fit.model, apply_basis(basis, test));
  SweepCell cell;
  cell.d = basis.rank();
  cell.lr = lr;
  cell.l2 = l2;
  cell.seed = seed;
  cell.val_acc = fit.best_val_accuracy;
  cell.test_acc = test_acc.overall;
  cell.per_class_acc = test_acc.per_class;
  if (opts.record_timing)
    cell.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return cell;
}

/// Every (d, lr, l2) cell of the grid for one method. The selected cell is the
/// one with the highest validation accuracy, first in grid order on ties.
inline MethodSweep sweep(const EmbeddingDataset& source, const EmbeddingDataset& target_train,
                         const EmbeddingDataset& target_val, const EmbeddingDataset& target_test,
                         const SweepGrid& grid, Method method, std::uint64_t seed, const SweepOptions& opts = {}) {
  const auto D = source.dim();
  for (const auto* ds : {&target_train, &target_val, &target_test})
    if (ds->dim() != D)
      throw ContractError("sweep: target dimension " + std::to_string(ds->dim()) + " != source dimension " +
                          std::to_string(D));
  detail::require(!grid.lrs.empty() && !grid.l2s.empty() && !grid.dims.empty(), "sweep: grid lists must be non-empty");
  for (auto d : grid.dims) detail::require(d >= 1, "sweep: dimensions must be positive");

  const auto dims = grid.resolved_dims(D, method);
  std::vector<std::optional<FeatureBasis>> bases(dims.size());
  parallel_for(dims.size(), opts.jobs,
               [&](std::size_t i) { bases[i] = build_basis(method, source, dims[i], seed, opts.project); });

  const std::size_t per_dim = grid.lrs.size() * grid.l2s.size();
  MethodSweep out;
  out.method = method;
  out.cells.resize(dims.size() * per_dim);
  parallel_for(out.cells.size(), opts.jobs, [&](std::size_t k) {
    const std::size_t di = k / per_dim;
    const std::size_t li = (k % per_dim) / grid.l2s.size();
    const std::size_t wi = k % grid.l2s.size();
    out.cells[k] = run_cell(*bases[di], target_train, target_val, target_test, grid.lrs[li], grid.l2s[wi], seed, opts);
    out.cells[k].method = method;
  });
  for (std::size_t k = 1; k < out.cells.size(); ++k)
    if (out.cells[k].val_acc > out.cells[out.selected].val_acc) out.selected = k;
  return out;
}

inline SweepReport sweep(const EmbeddingDataset& source, const EmbeddingDataset& target_train,
                         const EmbeddingDataset& target_val, const EmbeddingDataset& target_test,
                         const SweepGrid& grid, const std::vector<Method>& methods, std::uint64_t seed,
                         const SweepOptions& opts = {}) {
  SweepReport report;
  for (Method m : methods) report.methods.push_back(sweep(source, target_train, target_val, target_test, grid, m, seed, opts));
  return report;
}

}  // namespace pro2
