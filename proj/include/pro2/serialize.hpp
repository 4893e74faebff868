#pragma once

// JSON and CSV forms of configs and reports. Column sets of the CSV writers
// are fixed; downstream plotting scripts rely on them.

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"
#include "pro2/dataset.hpp"
#include "pro2/probe.hpp"
#include "pro2/project.hpp"
#include "pro2/shog.hpp"

namespace pro2 {

using Json = nlohmann::ordered_json;

namespace detail {

inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json vector_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Json matrix_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vector_json(m.row(i).transpose()));
  return out;
}

inline Vector vector_from_json(const Json& j, const char* what) {
  if (!j.is_array()) throw ParseError(std::string(what) + ": expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError(std::string(what) + ": non-numeric entry");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Matrix matrix_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw ParseError(std::string(what) + ": expected a non-empty array of rows");
  const auto n = static_cast<Eigen::Index>(j.size());
  Matrix m(n, static_cast<Eigen::Index>(j[0].size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector row = vector_from_json(j[static_cast<std::size_t>(i)], what);
    if (row.size() != m.cols()) throw ParseError(std::string(what) + ": ragged rows");
    m.row(i) = row.transpose();
  }
  return m;
}

inline Json accuracies_json(const std::vector<double>& xs) {
  Json out = Json::array();
  for (double x : xs) out.push_back(number_or_null(x));
  return out;
}

}  // namespace detail

inline Json to_json(const ProjectConfig& c) {
  return Json{{"d", c.d},
              {"lr", c.lr},
              {"weight_decay", c.weight_decay},
              {"max_steps", c.max_steps},
              {"mode", std::string(to_string(c.mode))},
              {"seed", c.seed},
              {"max_retries", c.max_retries}};
}

inline ProjectConfig project_config_from_json(const Json& j) {
  ProjectConfig c;
  c.d = j.at("d").get<Eigen::Index>();
  c.lr = j.at("lr").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.max_steps = j.at("max_steps").get<int>();
  c.mode = parse_project_mode(j.at("mode").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.max_retries = j.value("max_retries", 3);
  return c;
}

inline Json to_json(const ProbeConfig& c) {
  return Json{{"lr", c.lr}, {"l2_weight", c.l2_weight}, {"max_steps", c.max_steps}, {"eval_every", c.eval_every}, {"seed", c.seed}};
}

inline Json to_json(const ProbeModel& m) {
  return Json{{"num_classes", m.num_classes}, {"weights", detail::matrix_json(m.weights)}, {"bias", detail::vector_json(m.bias)}};
}

inline Json to_json(const SweepCell& c) {
  return Json{{"method", std::string(to_string(c.method))},
              {"d", c.d},
              {"lr", c.lr},
              {"l2", c.l2},
              {"seed", c.seed},
              {"val_acc", c.val_acc},
              {"test_acc", c.test_acc},
              {"per_class_acc", detail::accuracies_json(c.per_class_acc)},
              {"wall_ms", c.wall_ms ? Json(*c.wall_ms) : Json(nullptr)}};
}

inline Json to_json(const SweepReport& r) {
  Json methods = Json::array();
  for (const auto& m : r.methods) {
    Json cells = Json::array();
    for (const auto& c : m.cells) cells.push_back(to_json(c));
    methods.push_back(Json{{"method", std::string(to_string(m.method))},
                           {"selected_index", m.selected},
                           {"selected", to_json(m.selected_cell())},
                           {"cells", std::move(cells)}});
  }
  return Json{{"methods", std::move(methods)}};
}

/// One row per cell: method,d,lr,l2,seed,val_acc,test_acc,per_class_acc,wall_ms,selected.
/// per_class_acc is ';'-separated; missing values are empty cells.
inline std::string sweep_csv(const SweepReport& r) {
  using detail::format_double;
  std::string out = "method,d,lr,l2,seed,val_acc,test_acc,per_class_acc,wall_ms,selected\n";
  for (const auto& m : r.methods) {
    for (std::size_t k = 0; k < m.cells.size(); ++k) {
      const auto& c = m.cells[k];
      std::string per;
      for (std::size_t i = 0; i < c.per_class_acc.size(); ++i) {
        if (i) per += ';';
        if (std::isfinite(c.per_class_acc[i])) per += format_double(c.per_class_acc[i]);
      }
      out += std::string(to_string(c.method)) + ',' + std::to_string(c.d) + ',' + format_double(c.lr) + ',' +
             format_double(c.l2) + ',' + std::to_string(c.seed) + ',' + format_double(c.val_acc) + ',' +
             format_double(c.test_acc) + ',' + per + ',' + (c.wall_ms ? format_double(*c.wall_ms) : "") + ',' +
             (k == m.selected ? "1" : "0") + '\n';
    }
  }
  return out;
}

inline Json to_json(const ShogParams& p) {
  return Json{{"mu0", detail::vector_json(p.mu0())},
              {"mu1", detail::vector_json(p.mu1())},
              {"sigma_source", detail::matrix_json(p.sigma_source())},
              {"sigma_target", detail::matrix_json(p.sigma_target())}};
}

inline ShogParams shog_params_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("SHOG params: expected a JSON object");
  for (const char* key : {"mu0", "mu1", "sigma_source", "sigma_target"})
    if (!j.contains(key)) throw ParseError(std::string("SHOG params: missing '") + key + "'");
  return ShogParams(detail::vector_from_json(j["mu0"], "mu0"), detail::vector_from_json(j["mu1"], "mu1"),
                    detail::matrix_from_json(j["sigma_source"], "sigma_source"),
                    detail::matrix_from_json(j["sigma_target"], "sigma_target"));
}

inline Json rotations_json(const std::vector<PlaneRotation>& rotations) {
  Json out = Json::array();
  for (const auto& r : rotations) out.push_back(Json{{"i", r.i}, {"j", r.j}, {"angle", r.angle}});
  return out;
}

inline Json to_json(const std::vector<ShogDistribution>& suite) {
  Json out = Json::array();
  for (const auto& d : suite)
    out.push_back(Json{{"name", d.name},
                       {"kl", kl_shog(d.params)},
                       {"rotations", rotations_json(d.rotations)},
                       {"params", to_json(d.params)}});
  return out;
}

inline Json to_json(const BiasVarianceReport& r) {
  Json dists = Json::array();
  for (const auto& d : r.distributions) {
    Json acc = Json::array(), var = Json::array();
    for (std::size_t k = 0; k < r.dims.size(); ++k) {
      for (std::size_t m = 0; m < r.sizes.size(); ++m) {
        const auto& a = d.accuracy[k][m];
        acc.push_back(Json{{"d", r.dims[k]},
                           {"M", r.sizes[m]},
                           {"mean_acc", a.mean},
                           {"stderr", a.std_error ? Json(*a.std_error) : Json(nullptr)}});
        var.push_back(Json{{"d", r.dims[k]}, {"M", r.sizes[m]}, {"variance", d.variance[k][m]}});
      }
    }
    Json ns = Json::array(), bias = Json::array();
    for (std::size_t k = 0; k < r.dims.size(); ++k) {
      ns.push_back(Json{{"d", r.dims[k]}, {"norm", d.nullspace[k]}});
      bias.push_back(Json{{"d", r.dims[k]}, {"bias", d.bias[k]}});
    }
    dists.push_back(Json{{"name", d.name},
                         {"kl", d.kl},
                         {"rotations", rotations_json(d.rotations)},
                         {"nullspace", std::move(ns)},
                         {"bias", std::move(bias)},
                         {"accuracy", std::move(acc)},
                         {"variance", std::move(var)}});
  }
  const auto& o = r.options;
  return Json{{"dims", r.dims},
              {"sizes", r.sizes},
              {"repeats", r.repeats},
              {"seed", r.seed},
              {"options",
               Json{{"n_source", o.n_source}, {"n_eval", o.n_eval}, {"n_pool", o.n_pool},
                    {"project", to_json(o.project)}, {"probe", to_json(o.probe)}}},
              {"distributions", std::move(dists)}};
}

/// Columns: distribution,d,norm
inline std::string nullspace_csv(const BiasVarianceReport& r) {
  std::string out = "distribution,d,norm\n";
  for (const auto& d : r.distributions)
    for (std::size_t k = 0; k < r.dims.size(); ++k)
      out += d.name + ',' + std::to_string(r.dims[k]) + ',' + detail::format_double(d.nullspace[k]) + '\n';
  return out;
}

/// Columns: distribution,d,M,mean_acc,stderr (stderr empty with one repeat).
inline std::string accuracy_csv(const BiasVarianceReport& r) {
  std::string out = "distribution,d,M,mean_acc,stderr\n";
  for (const auto& d : r.distributions)
    for (std::size_t k = 0; k < r.dims.size(); ++k)
      for (std::size_t m = 0; m < r.sizes.size(); ++m) {
        const auto& a = d.accuracy[k][m];
        out += d.name + ',' + std::to_string(r.dims[k]) + ',' + std::to_string(r.sizes[m]) + ',' +
               detail::format_double(a.mean) + ',' + (a.std_error ? detail::format_double(*a.std_error) : "") + '\n';
      }
  return out;
}

}  // namespace pro2
