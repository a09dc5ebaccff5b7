#pragma once

#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>

#include "json.hpp"

#include "ncpose/pose.hpp"
#include "ncpose/presets.hpp"
#include "ncpose/types.hpp"

namespace ncpose {

using nlohmann::json;

namespace detail {

// Strict schema guard: every present key must be known, every required key
// present.
inline void check_keys(const json& j,
                       std::initializer_list<const char*> required,
                       std::initializer_list<const char*> optional,
                       const std::string& ctx) {
  if (!j.is_object())
    throw std::invalid_argument(ctx + ": expected a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : required)
      if (item.key() == k) known = true;
    for (const char* k : optional)
      if (item.key() == k) known = true;
    if (!known)
      throw std::invalid_argument(ctx + ": unknown key '" + item.key() + "'");
  }
  for (const char* k : required)
    if (!j.contains(k))
      throw std::invalid_argument(ctx + ": missing key '" + std::string(k) +
                                  "'");
}

inline double get_num(const json& j, const std::string& ctx) {
  if (!j.is_number())
    throw std::invalid_argument(ctx + ": expected a number");
  return j.get<double>();
}

inline int get_int(const json& j, const std::string& ctx) {
  if (!j.is_number_integer())
    throw std::invalid_argument(ctx + ": expected an integer");
  return j.get<int>();
}

inline Vec3<double> get_vec3(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 3)
    throw std::invalid_argument(ctx + ": expected an array of 3 numbers");
  return Vec3<double>(get_num(j[0], ctx), get_num(j[1], ctx),
                      get_num(j[2], ctx));
}

inline Vec2<double> get_vec2(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 2)
    throw std::invalid_argument(ctx + ": expected an array of 2 numbers");
  return Vec2<double>(get_num(j[0], ctx), get_num(j[1], ctx));
}

}  // namespace detail

inline QuadricMirror<double> mirror_from_json(const json& j) {
  detail::check_keys(j, {"A", "B", "C", "cop"}, {}, "mirror");
  QuadricMirror<double> m;
  m.A = detail::get_num(j.at("A"), "mirror.A");
  m.B = detail::get_num(j.at("B"), "mirror.B");
  m.C = detail::get_num(j.at("C"), "mirror.C");
  m.cop = detail::get_vec3(j.at("cop"), "mirror.cop");
  return m;
}

inline json mirror_to_json(const QuadricMirror<double>& m) {
  return json{{"A", m.A},
              {"B", m.B},
              {"C", m.C},
              {"cop", {m.cop.x(), m.cop.y(), m.cop.z()}}};
}

// Accepts an object holding exactly one of "preset" (name) or "mirror"
// (inline parameters).
inline QuadricMirror<double> resolve_mirror(const json& j,
                                            const std::string& ctx) {
  const bool has_preset = j.contains("preset");
  const bool has_mirror = j.contains("mirror");
  if (has_preset == has_mirror)
    throw std::invalid_argument(ctx +
                                ": give exactly one of 'preset' or 'mirror'");
  if (has_preset) {
    if (!j.at("preset").is_string())
      throw std::invalid_argument(ctx + ": 'preset' must be a string");
    return preset_mirror<double>(j.at("preset").get<std::string>());
  }
  return mirror_from_json(j.at("mirror"));
}

inline SolverOptions solver_options_from_json(const json& j) {
  detail::check_keys(j, {},
                     {"tol_f", "tol_c", "max_outer", "max_inner", "fd_step",
                      "smoothing_eps", "theta_seeds"},
                     "solver");
  SolverOptions o;
  if (j.contains("tol_f")) o.tol_f = detail::get_num(j.at("tol_f"), "tol_f");
  if (j.contains("tol_c")) o.tol_c = detail::get_num(j.at("tol_c"), "tol_c");
  if (j.contains("max_outer"))
    o.max_outer = detail::get_int(j.at("max_outer"), "max_outer");
  if (j.contains("max_inner"))
    o.max_inner = detail::get_int(j.at("max_inner"), "max_inner");
  if (j.contains("fd_step"))
    o.fd_step = detail::get_num(j.at("fd_step"), "fd_step");
  if (j.contains("smoothing_eps"))
    o.smoothing_eps = detail::get_num(j.at("smoothing_eps"), "smoothing_eps");
  if (j.contains("theta_seeds"))
    o.theta_seeds = detail::get_int(j.at("theta_seeds"), "theta_seeds");
  return o;
}

inline json solver_options_to_json(const SolverOptions& o) {
  return json{{"tol_f", o.tol_f},
              {"tol_c", o.tol_c},
              {"max_outer", o.max_outer},
              {"max_inner", o.max_inner},
              {"fd_step", o.fd_step},
              {"smoothing_eps", o.smoothing_eps},
              {"theta_seeds", o.theta_seeds}};
}

struct ProblemFile {
  PoseProblem<double> problem;
  std::optional<PlanarPose<double>> truth;
};

// Problem file schema:
//   { "preset"|"mirror": ..., "z_offset"?: num,
//     "lines": [ { "q": [3], "d": [3], "mirror_points": [[3], ...],
//                  "pixels"?: [[2], ...] } ],
//     "truth"?: { "theta_deg": num, "t_x": num, "t_y": num } }
inline ProblemFile problem_from_json(const json& j) {
  detail::check_keys(j, {"lines"}, {"preset", "mirror", "z_offset", "truth"},
                     "problem");
  ProblemFile out;
  out.problem.mirror = resolve_mirror(j, "problem");
  out.problem.z_offset =
      j.contains("z_offset")
          ? detail::get_num(j.at("z_offset"), "problem.z_offset")
          : 0.0;

  const json& lines = j.at("lines");
  if (!lines.is_array())
    throw std::invalid_argument("problem.lines: expected an array");
  for (const auto& lj : lines) {
    detail::check_keys(lj, {"q", "d", "mirror_points"}, {"pixels"},
                       "problem.lines[]");
    LineObservation<double> obs;
    obs.line_world = Line3D<double>(detail::get_vec3(lj.at("q"), "line.q"),
                                    detail::get_vec3(lj.at("d"), "line.d"));
    const json& pts = lj.at("mirror_points");
    if (!pts.is_array() || pts.empty())
      throw std::invalid_argument(
          "problem.lines[].mirror_points: expected a non-empty array");
    for (const auto& pj : pts)
      obs.mirror_points.push_back(detail::get_vec3(pj, "mirror_points[]"));
    if (lj.contains("pixels")) {
      const json& px = lj.at("pixels");
      if (!px.is_array() || px.size() != pts.size())
        throw std::invalid_argument(
            "problem.lines[].pixels: must match mirror_points in length");
      for (const auto& uj : px)
        obs.pixels.push_back(detail::get_vec2(uj, "pixels[]"));
    }
    out.problem.observations.push_back(std::move(obs));
  }

  if (j.contains("truth")) {
    const json& tj = j.at("truth");
    detail::check_keys(tj, {"theta_deg", "t_x", "t_y"}, {}, "problem.truth");
    PlanarPose<double> truth;
    truth.theta =
        detail::get_num(tj.at("theta_deg"), "truth.theta_deg") * EIGEN_PI /
        180.0;
    truth.t_x = detail::get_num(tj.at("t_x"), "truth.t_x");
    truth.t_y = detail::get_num(tj.at("t_y"), "truth.t_y");
    truth.z_offset = out.problem.z_offset;
    out.truth = truth;
  }
  return out;
}

inline json problem_to_json(const PoseProblem<double>& p,
                            const std::optional<PlanarPose<double>>& truth =
                                std::nullopt) {
  json lines = json::array();
  for (const auto& obs : p.observations) {
    json lj;
    lj["q"] = {obs.line_world.q.x(), obs.line_world.q.y(),
               obs.line_world.q.z()};
    lj["d"] = {obs.line_world.d.x(), obs.line_world.d.y(),
               obs.line_world.d.z()};
    json pts = json::array();
    for (const auto& m : obs.mirror_points) pts.push_back({m.x(), m.y(), m.z()});
    lj["mirror_points"] = pts;
    if (!obs.pixels.empty()) {
      json px = json::array();
      for (const auto& u : obs.pixels) px.push_back({u.x(), u.y()});
      lj["pixels"] = px;
    }
    lines.push_back(lj);
  }
  json j;
  j["mirror"] = mirror_to_json(p.mirror);
  j["z_offset"] = p.z_offset;
  j["lines"] = lines;
  if (truth) {
    j["truth"] = json{{"theta_deg", truth->theta * 180.0 / EIGEN_PI},
                      {"t_x", truth->t_x},
                      {"t_y", truth->t_y}};
  }
  return j;
}

inline json estimate_to_json(const PoseEstimate<double>& est) {
  return json{{"theta_deg", est.pose.theta * 180.0 / EIGEN_PI},
              {"theta_rad", est.pose.theta},
              {"t_x", est.pose.t_x},
              {"t_y", est.pose.t_y},
              {"z_offset", est.pose.z_offset},
              {"objective", est.objective_value},
              {"g1_violation", est.g1_violation},
              {"g2_violation", est.g2_violation},
              {"iterations", est.iterations},
              {"converged", est.converged}};
}

inline json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return j;
}

}  // namespace ncpose
