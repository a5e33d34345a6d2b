#pragma once

#include "sympsteer/core.hpp"
#include "sympsteer/errors.hpp"
#include "sympsteer/franks.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace sympsteer {

/// Numerical knobs a problem file may set; command-line flags override them.
struct SpecOptions {
  int steps = defaults::steps;
  int depth = 3;
  double tol_steer = defaults::tol_steer;
  double tol_rank = defaults::tol_rank;
  double gap_tol = defaults::gap_tol;
  std::uint64_t seed = 0;
};

/// A problem description: curvature path on the unit interval, support
/// window clearances, avoided intervals, numerical options.
struct SystemSpec {
  int m;
  double horizon;  // pinned to 1 (the machinery runs on the normalized clock)
  CurvaturePath curvature;
  double tau;
  double delta;
  std::vector<std::pair<double, double>> avoided;
  SpecOptions options;

  SynthesisOptions synthesis_options() const {
    SynthesisOptions opts;
    opts.steps = options.steps;
    opts.tol_steer = options.tol_steer;
    opts.gap_tol = options.gap_tol;
    return opts;
  }
};

namespace detail {

inline const YAML::Node require_key(const YAML::Node& node, const std::string& key,
                                    const std::string& where) {
  const YAML::Node child = node[key];
  if (!child) throw SpecFileError("spec: missing key '" + key + "' in " + where);
  return child;
}

template <typename T>
T as_or_die(const YAML::Node& node, const std::string& what) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw SpecFileError("spec: " + what + " has the wrong type");
  }
}

inline Matrix parse_matrix(const YAML::Node& node, int m, const std::string& what) {
  if (!node.IsSequence() || static_cast<int>(node.size()) != m)
    throw SpecFileError("spec: " + what + " must be a list of " + std::to_string(m) + " rows");
  Matrix out(m, m);
  for (int r = 0; r < m; ++r) {
    const YAML::Node row = node[r];
    if (!row.IsSequence() || static_cast<int>(row.size()) != m)
      throw SpecFileError("spec: " + what + " row " + std::to_string(r) + " must have " +
                          std::to_string(m) + " entries");
    for (int c = 0; c < m; ++c) out(r, c) = as_or_die<double>(row[c], what + " entry");
  }
  return out;
}

inline Vector parse_vector(const YAML::Node& node, int m, const std::string& what) {
  if (!node.IsSequence() || static_cast<int>(node.size()) != m)
    throw SpecFileError("spec: " + what + " must be a list of " + std::to_string(m) +
                        " numbers");
  Vector out(m);
  for (int i = 0; i < m; ++i) out(i) = as_or_die<double>(node[i], what + " entry");
  return out;
}

inline CurvaturePath parse_curvature(const YAML::Node& node, int m) {
  const std::string preset =
      as_or_die<std::string>(require_key(node, "preset", "curvature"), "curvature.preset");
  int grid = defaults::grid_points;
  if (node["grid"]) {
    grid = as_or_die<int>(node["grid"], "curvature.grid");
    if (grid < 1) throw SpecFileError("spec: curvature.grid must be positive");
  }
  try {
    if (preset == "constant")
      return CurvaturePath::constant(
          parse_matrix(require_key(node, "matrix", "curvature"), m, "curvature.matrix"), grid);
    if (preset == "diagonal-affine")
      return CurvaturePath::diagonal_affine(
          parse_vector(require_key(node, "offset", "curvature"), m, "curvature.offset"),
          parse_vector(require_key(node, "slope", "curvature"), m, "curvature.slope"), grid);
    if (preset == "sampled") {
      const YAML::Node samples = require_key(node, "samples", "curvature");
      if (!samples.IsSequence() || samples.size() < 2)
        throw SpecFileError("spec: curvature.samples must list at least 2 matrices");
      std::vector<Matrix> k;
      k.reserve(samples.size());
      for (std::size_t j = 0; j < samples.size(); ++j)
        k.push_back(parse_matrix(samples[j], m,
                                 "curvature.samples[" + std::to_string(j) + "]"));
      std::vector<Matrix> k_dot;
      if (node["k_dot"]) {
        const YAML::Node kd = node["k_dot"];
        if (!kd.IsSequence() || kd.size() != samples.size())
          throw SpecFileError("spec: curvature.k_dot must match curvature.samples in length");
        for (std::size_t j = 0; j < kd.size(); ++j)
          k_dot.push_back(parse_matrix(kd[j], m,
                                       "curvature.k_dot[" + std::to_string(j) + "]"));
      }
      return CurvaturePath::sampled(std::move(k), std::move(k_dot));
    }
  } catch (const InvalidCurvatureError& e) {
    throw SpecFileError(std::string("spec: invalid curvature (") + e.what() + ")");
  }
  throw SpecFileError("spec: unknown curvature preset '" + preset +
                      "' (expected constant, diagonal-affine, or sampled)");
}

inline SpecOptions parse_options(const YAML::Node& node) {
  SpecOptions opts;
  if (!node) return opts;
  if (node["steps"]) {
    opts.steps = as_or_die<int>(node["steps"], "options.steps");
    if (opts.steps < 2) throw SpecFileError("spec: options.steps must be at least 2");
  }
  if (node["depth"]) {
    opts.depth = as_or_die<int>(node["depth"], "options.depth");
    if (opts.depth < 1) throw SpecFileError("spec: options.depth must be positive");
  }
  if (node["tol_steer"]) {
    opts.tol_steer = as_or_die<double>(node["tol_steer"], "options.tol_steer");
    if (!(opts.tol_steer > 0.0)) throw SpecFileError("spec: options.tol_steer must be positive");
  }
  if (node["tol_rank"]) {
    opts.tol_rank = as_or_die<double>(node["tol_rank"], "options.tol_rank");
    if (!(opts.tol_rank > 0.0)) throw SpecFileError("spec: options.tol_rank must be positive");
  }
  if (node["gap_tol"]) {
    opts.gap_tol = as_or_die<double>(node["gap_tol"], "options.gap_tol");
    if (!(opts.gap_tol > 0.0)) throw SpecFileError("spec: options.gap_tol must be positive");
  }
  if (node["seed"]) opts.seed = as_or_die<std::uint64_t>(node["seed"], "options.seed");
  return opts;
}

}  // namespace detail

inline SystemSpec parse_system_spec(const YAML::Node& root) {
  if (!root.IsMap()) throw SpecFileError("spec: document root must be a mapping");
  const int m = detail::as_or_die<int>(detail::require_key(root, "m", "document root"), "m");
  if (m < 1) throw SpecFileError("spec: m must be at least 1");
  const double horizon =
      detail::as_or_die<double>(detail::require_key(root, "T", "document root"), "T");
  if (std::abs(horizon - 1.0) > 1e-12)
    throw SpecFileError("spec: T must be 1 (curvature paths run on the normalized clock)");

  CurvaturePath curvature =
      detail::parse_curvature(detail::require_key(root, "curvature", "document root"), m);

  const YAML::Node window = detail::require_key(root, "window", "document root");
  const double tau =
      detail::as_or_die<double>(detail::require_key(window, "tau", "window"), "window.tau");
  const double delta =
      detail::as_or_die<double>(detail::require_key(window, "delta", "window"), "window.delta");
  try {
    perturbation_window(tau, delta);
  } catch (const DimensionError& e) {
    throw SpecFileError(std::string("spec: invalid window (") + e.what() + ")");
  }

  std::vector<std::pair<double, double>> avoided;
  if (root["avoided"]) {
    const YAML::Node list = root["avoided"];
    if (!list.IsSequence()) throw SpecFileError("spec: avoided must be a list");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const YAML::Node item = list[i];
      if (!item.IsMap())
        throw SpecFileError("spec: avoided[" + std::to_string(i) + "] must be {t, rho}");
      const double t = detail::as_or_die<double>(
          detail::require_key(item, "t", "avoided entry"), "avoided.t");
      const double rho = detail::as_or_die<double>(
          detail::require_key(item, "rho", "avoided entry"), "avoided.rho");
      if (!(rho > 0.0)) throw SpecFileError("spec: avoided half-widths must be positive");
      if (!(t > 0.0 && t < horizon))
        throw SpecFileError("spec: avoided centers must lie inside (0, T)");
      avoided.emplace_back(t, rho);
    }
  }

  return SystemSpec{m,   horizon, std::move(curvature), tau, delta, std::move(avoided),
                    detail::parse_options(root["options"])};
}

inline SystemSpec parse_system_spec(const std::string& text) {
  try {
    return parse_system_spec(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw SpecFileError(std::string("spec: parse failure (") + e.what() + ")");
  }
}

inline SystemSpec load_system_spec(const std::string& path) {
  try {
    return parse_system_spec(YAML::LoadFile(path));
  } catch (const YAML::BadFile&) {
    throw SpecFileError("spec: cannot read '" + path + "'");
  } catch (const YAML::Exception& e) {
    throw SpecFileError(std::string("spec: parse failure (") + e.what() + ")");
  }
}

}  // namespace sympsteer
