#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ncpose/line_curve.hpp"
#include "ncpose/pose.hpp"
#include "ncpose/presets.hpp"
#include "ncpose/reflection.hpp"
#include "ncpose/types.hpp"

namespace ncpose {

enum class SweepKind { none, pixel, world, nlines };

inline std::string to_string(SweepKind k) {
  switch (k) {
    case SweepKind::pixel: return "pixel";
    case SweepKind::world: return "world";
    case SweepKind::nlines: return "nlines";
    default: return "none";
  }
}

inline SweepKind parse_sweep_kind(const std::string& s) {
  if (s == "pixel") return SweepKind::pixel;
  if (s == "world") return SweepKind::world;
  if (s == "nlines") return SweepKind::nlines;
  if (s == "none") return SweepKind::none;
  throw std::invalid_argument("unknown noise kind: " + s);
}

struct BenchConfig {
  std::string preset{"spheric"};
  QuadricMirror<double> mirror{};
  PinholeCamera<double> camera{};
  SweepKind sweep{SweepKind::pixel};
  std::vector<double> sigma_list{0, 2, 4, 6, 8, 10};
  std::vector<int> nlines_list{4, 8, 12, 16, 20};
  int n_lines{20};
  int m_points{5};
  int trials{100};
  std::uint64_t seed{2024};
  int threads{1};
  std::string output_path{};  // empty: no files written
  SolverOptions solver{};
};

inline BenchConfig default_bench_config(const std::string& preset) {
  BenchConfig cfg;
  cfg.preset = preset;
  cfg.mirror = preset_mirror<double>(preset);
  cfg.camera = default_camera(cfg.mirror);
  return cfg;
}

struct TrialResult {
  int trial_id{0};
  std::string preset{};
  double sigma{0};
  int n_lines{0};
  int m_points{0};
  double rot_err_deg{0};
  double trans_err_cm{0};
  double objective{0};
  double g1_violation{0};
  double g2_violation{0};
  bool converged{false};
  double wall_ms{0};
  int dropped_points{0};  // bookkeeping only, not serialized
};

struct SweepSummary {
  std::string preset{};
  std::string noise{};
  double sigma{0};
  int n_lines{0};
  int trials{0};
  double rot_med_deg{0}, rot_q1_deg{0}, rot_q3_deg{0};
  double trans_med_cm{0}, trans_q1_cm{0}, trans_q3_cm{0};
  double converged_rate{0};
};

struct BenchOutput {
  std::vector<TrialResult> trials;
  std::vector<SweepSummary> summary;
  int total_dropped_points{0};
};

inline constexpr double kBenchLambdaSpan = 60.0;

namespace detail {

inline Mat3<double> random_rotation(std::mt19937_64& rng) {
  // Shoemake's uniform quaternion from three uniforms.
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double u1 = u01(rng), u2 = u01(rng), u3 = u01(rng);
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double t2 = 2.0 * EIGEN_PI * u2, t3 = 2.0 * EIGEN_PI * u3;
  const Eigen::Quaterniond q(b * std::cos(t3), a * std::sin(t2),
                             a * std::cos(t2), b * std::sin(t3));
  return q.toRotationMatrix();
}

// Random line: a canonical template (point 40 cm out on the x-axis,
// direction along x) under a uniform random rotation of each part plus a
// uniform offset in [-30, 30]^3.
inline Line3D<double> draw_candidate_line(std::mt19937_64& rng) {
  const Mat3<double> r_point = random_rotation(rng);
  const Mat3<double> r_dir = random_rotation(rng);
  std::uniform_real_distribution<double> ubox(-30.0, 30.0);
  const Vec3<double> offset(ubox(rng), ubox(rng), ubox(rng));
  const Vec3<double> q = r_point * Vec3<double>(40.0, 0.0, 0.0) + offset;
  const Vec3<double> d = r_dir * Vec3<double>(1.0, 0.0, 0.0);
  return Line3D<double>(q, d);
}

struct ScanHit {
  double lambda{0};
  Vec3<double> m{Vec3<double>::Zero()};
};

inline std::optional<Vec3<double>> nearest_projection(
    const Vec3<double>& p, const QuadricMirror<double>& mirror) {
  try {
    const auto fp = forward_project(p, mirror);
    if (!fp.solutions.empty()) return fp.solutions.front().m;
  } catch (const std::invalid_argument&) {
    // p at the cop or on the mirror: no usable projection at this lambda.
  }
  return std::nullopt;
}

// Samples the line at k evenly spaced lambdas in [-span, span] and records
// the mirror image where one exists. A coarse prescan rejects lines that
// never see the mirror; in between periodic full multistarts the solution is
// tracked by Newton continuation from the previous lambda. Aborts early when
// the remaining samples cannot reach min_hits.
inline std::vector<ScanHit> scan_line_hits(const Line3D<double>& line,
                                           const QuadricMirror<double>& mirror,
                                           int k, double span, int min_hits) {
  std::vector<ScanHit> hits;
  std::optional<Vec3<double>> track;

  int prescan_hits = 0;
  for (const double lam : {0.0, -0.5 * span, 0.5 * span}) {
    if (auto m = nearest_projection(line.point_at(lam), mirror)) {
      ++prescan_hits;
      track = *m;
    }
  }
  if (prescan_hits == 0) return hits;

  for (int i = 0; i < k; ++i) {
    if (static_cast<int>(hits.size()) + (k - i) < min_hits) break;
    const double lam = -span + 2.0 * span * i / (k - 1);
    const Vec3<double> p = line.point_at(lam);
    std::optional<Vec3<double>> m;
    const bool want_full = !track || (i % 5 == 0);
    if (!want_full) {
      if (auto pol = polish_reflection(mirror, p, *track)) m = pol->m;
    }
    if (!m) m = nearest_projection(p, mirror);
    if (m) {
      hits.push_back({lam, *m});
      track = *m;
    }
  }
  return hits;
}

struct DatasetGen {
  PoseProblem<double> problem;
  int dropped_points{0};
};

// Full trial dataset: lines drawn from rng_gen until each sees the mirror at
// >= m_points scan lambdas under the truth pose, then m_points evenly spread
// valid samples are reflected and projected to pixels. world_sigma > 0
// jitters the 3D samples (rng_noise) before reflection, redrawing the jitter
// up to 10 times when the perturbed point loses its reflection; persistent
// failures drop the point. Generation and noise use separate streams so
// datasets stay paired across noise levels.
inline DatasetGen generate_dataset_impl(
    const QuadricMirror<double>& mirror, const PinholeCamera<double>& camera,
    const PlanarPose<double>& truth, int n_lines, int m_points,
    double world_sigma, std::mt19937_64& rng_gen, std::mt19937_64& rng_noise) {
  const int k = std::max(13, 2 * m_points + 1);

  DatasetGen out;
  out.problem.mirror = mirror;
  out.problem.z_offset = truth.z_offset;
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (int li = 0; li < n_lines; ++li) {
    bool accepted = false;
    for (int attempt = 0; attempt < 100 && !accepted; ++attempt) {
      const Line3D<double> world = draw_candidate_line(rng_gen);
      const Line3D<double> cam_line = transform_line(world, truth);
      const auto hits =
          scan_line_hits(cam_line, mirror, k, kBenchLambdaSpan, m_points);
      const int v = static_cast<int>(hits.size());
      if (v < m_points) continue;

      LineObservation<double> obs;
      obs.line_world = world;
      for (int s = 0; s < m_points; ++s) {
        const int idx =
            (m_points == 1)
                ? v / 2
                : static_cast<int>(
                      std::lround(double(s) * (v - 1) / (m_points - 1)));
        const ScanHit& hit = hits[idx];
        std::optional<Vec3<double>> m = hit.m;
        if (world_sigma > 0.0) {
          const Vec3<double> p0 = cam_line.point_at(hit.lambda);
          m.reset();
          for (int redraw = 0; redraw < 10 && !m; ++redraw) {
            const Vec3<double> p_noisy =
                p0 + world_sigma * Vec3<double>(gauss(rng_noise),
                                                gauss(rng_noise),
                                                gauss(rng_noise));
            if (auto pol = polish_reflection(mirror, p_noisy, hit.m))
              m = pol->m;
            else
              m = nearest_projection(p_noisy, mirror);
          }
          if (!m) {
            ++out.dropped_points;
            continue;
          }
        }
        try {
          obs.pixels.push_back(project_to_pixel(*m, camera));
          obs.mirror_points.push_back(*m);
        } catch (const BehindCamera&) {
          ++out.dropped_points;
        }
      }
      if (obs.mirror_points.empty()) continue;
      out.problem.observations.push_back(std::move(obs));
      accepted = true;
    }
    if (!accepted)
      throw GenerationExhausted(
          "generate_dataset: no valid line after 100 resamples");
  }
  return out;
}

inline double quantile_r7(std::vector<double> v, double p) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(h);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (v[hi] - v[lo]) * (h - lo);
}

inline std::string fmt_g10(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

// Strips the trailing wall_ms column from every row of a trial CSV; wall
// clock is the one legitimately nondeterministic column.
inline std::string csv_without_wall(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    const auto pos = line.rfind(',');
    out += (pos == std::string::npos) ? line : line.substr(0, pos);
    out += '\n';
  }
  return out;
}

}  // namespace detail

// Random world lines that each see the mirror at >= m_required scan lambdas
// under the identity pose. Throws GenerationExhausted after 100 rejected
// candidates for any slot.
inline std::vector<Line3D<double>> random_lines(
    int n, std::mt19937_64& rng, const QuadricMirror<double>& mirror,
    int m_required = 5) {
  if (n < 0) throw std::invalid_argument("random_lines: n < 0");
  const int k = std::max(13, 2 * m_required + 1);
  std::vector<Line3D<double>> lines;
  lines.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      const Line3D<double> cand = detail::draw_candidate_line(rng);
      const auto hits = detail::scan_line_hits(cand, mirror, k,
                                               kBenchLambdaSpan, m_required);
      if (static_cast<int>(hits.size()) >= m_required) {
        lines.push_back(cand);
        ok = true;
      }
    }
    if (!ok)
      throw GenerationExhausted("random_lines: no valid line after 100 "
                                "resamples");
  }
  return lines;
}

// Noiseless dataset for one trial of cfg under the given truth pose.
inline PoseProblem<double> generate_dataset(const BenchConfig& cfg,
                                            const PlanarPose<double>& truth,
                                            std::mt19937_64& rng) {
  std::mt19937_64 rng_noise(rng());
  return detail::generate_dataset_impl(cfg.mirror, cfg.camera, truth,
                                       cfg.n_lines, cfg.m_points, 0.0, rng,
                                       rng_noise)
      .problem;
}

// Isotropic Gaussian jitter of a 3D point list (sigma in cm).
inline std::vector<Vec3<double>> add_world_noise(
    const std::vector<Vec3<double>>& points, double sigma,
    std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Vec3<double>> out;
  out.reserve(points.size());
  for (const auto& p : points)
    out.push_back(p + sigma * Vec3<double>(gauss(rng), gauss(rng),
                                           gauss(rng)));
  return out;
}

// Measurement noise in the image: each mirror point is projected, the pixel
// perturbed by N(0, sigma_px^2) per axis, and lifted back onto the mirror.
// A perturbed pixel whose ray misses the visible cap is redrawn up to 10
// times, then dropped (count accumulated into *dropped when given).
inline PoseProblem<double> add_pixel_noise(const PoseProblem<double>& in,
                                           const PinholeCamera<double>& camera,
                                           double sigma_px,
                                           std::mt19937_64& rng,
                                           int* dropped = nullptr) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  PoseProblem<double> out;
  out.mirror = in.mirror;
  out.z_offset = in.z_offset;
  for (const auto& obs : in.observations) {
    LineObservation<double> noisy;
    noisy.line_world = obs.line_world;
    for (const auto& m : obs.mirror_points) {
      Vec2<double> u0;
      try {
        u0 = project_to_pixel(m, camera);
      } catch (const BehindCamera&) {
        if (dropped) ++*dropped;
        continue;
      }
      bool kept = false;
      const int max_draws = sigma_px > 0.0 ? 10 : 1;
      for (int redraw = 0; redraw < max_draws && !kept; ++redraw) {
        Vec2<double> u = u0;
        if (sigma_px > 0.0)
          u += sigma_px * Vec2<double>(gauss(rng), gauss(rng));
        try {
          noisy.mirror_points.push_back(backproject_pixel(u, camera,
                                                          in.mirror));
          noisy.pixels.push_back(u);
          kept = true;
        } catch (const NoIntersection&) {
        }
      }
      if (!kept && dropped) ++*dropped;
    }
    if (!noisy.mirror_points.empty()) out.observations.push_back(noisy);
  }
  return out;
}

namespace detail {

struct SweepPoint {
  double sigma{0};
  int n_lines{0};
};

inline TrialResult run_one_trial(const BenchConfig& cfg, const SweepPoint& sp,
                                 int trial) {
  const auto t0 = std::chrono::steady_clock::now();

  // One base stream per trial id: the truth pose and the derived generation
  // seed are identical at every sweep point, so trials are paired across
  // noise levels and line counts.
  std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(trial));
  std::uniform_real_distribution<double> uang(-EIGEN_PI, EIGEN_PI);
  std::uniform_real_distribution<double> ut(-50.0, 50.0);
  PlanarPose<double> truth;
  truth.theta = uang(rng);
  truth.t_x = ut(rng);
  truth.t_y = ut(rng);
  truth.z_offset = 0.0;
  std::mt19937_64 rng_gen(rng());
  std::mt19937_64 rng_noise(rng());

  const double world_sigma =
      (cfg.sweep == SweepKind::world || cfg.sweep == SweepKind::nlines)
          ? sp.sigma
          : 0.0;
  auto gen = generate_dataset_impl(cfg.mirror, cfg.camera, truth, sp.n_lines,
                                   cfg.m_points, world_sigma, rng_gen,
                                   rng_noise);
  PoseProblem<double> problem = std::move(gen.problem);
  int dropped = gen.dropped_points;
  if (cfg.sweep == SweepKind::pixel)
    problem = add_pixel_noise(problem, cfg.camera, sp.sigma, rng_noise,
                              &dropped);

  TrialResult r;
  r.trial_id = trial;
  r.preset = cfg.preset;
  r.sigma = sp.sigma;
  r.n_lines = sp.n_lines;
  r.m_points = cfg.m_points;
  r.dropped_points = dropped;

  PlanarPose<double> init;
  init.z_offset = truth.z_offset;
  try {
    const PoseEstimate<double> est =
        estimate_pose(problem, init, cfg.solver);
    const auto [rot_err, trans_err] = pose_error(est.pose, truth);
    r.rot_err_deg = rot_err;
    r.trans_err_cm = trans_err;
    r.objective = est.objective_value;
    r.g1_violation = est.g1_violation;
    r.g2_violation = est.g2_violation;
    r.converged = est.converged;
  } catch (const IllPosed&) {
    // Too many dropped points to pose the problem; record the trial as a
    // failure at the initial guess rather than aborting the sweep.
    const auto [rot_err, trans_err] = pose_error(init, truth);
    r.rot_err_deg = rot_err;
    r.trans_err_cm = trans_err;
    r.objective = kSentinelResidual;
    r.converged = false;
  }
  r.wall_ms = std::chrono::duration<double, std::milli>(
                  std::chrono::steady_clock::now() - t0)
                  .count();
  return r;
}

}  // namespace detail

inline std::string trial_csv_header() {
  return "trial_id,preset,sigma,n_lines,m_points,rot_err_deg,trans_err_cm,"
         "objective,g1_violation,g2_violation,converged,wall_ms";
}

inline std::string summary_csv_header() {
  return "preset,noise,sigma,n_lines,trials,rot_med_deg,rot_q1_deg,"
         "rot_q3_deg,trans_med_cm,trans_q1_cm,trans_q3_cm,converged_rate";
}

inline std::string trial_csv_string(const std::vector<TrialResult>& trials) {
  std::string out = trial_csv_header() + "\n";
  char wall[40];
  for (const auto& t : trials) {
    std::snprintf(wall, sizeof wall, "%.3f", t.wall_ms);
    out += std::to_string(t.trial_id) + "," + t.preset + "," +
           detail::fmt_g10(t.sigma) + "," + std::to_string(t.n_lines) + "," +
           std::to_string(t.m_points) + "," + detail::fmt_g10(t.rot_err_deg) +
           "," + detail::fmt_g10(t.trans_err_cm) + "," +
           detail::fmt_g10(t.objective) + "," +
           detail::fmt_g10(t.g1_violation) + "," +
           detail::fmt_g10(t.g2_violation) + "," +
           (t.converged ? "1" : "0") + "," + wall + "\n";
  }
  return out;
}

inline std::string summary_csv_string(
    const std::vector<SweepSummary>& summary) {
  std::string out = summary_csv_header() + "\n";
  for (const auto& s : summary) {
    out += s.preset + "," + s.noise + "," + detail::fmt_g10(s.sigma) + "," +
           std::to_string(s.n_lines) + "," + std::to_string(s.trials) + "," +
           detail::fmt_g10(s.rot_med_deg) + "," +
           detail::fmt_g10(s.rot_q1_deg) + "," +
           detail::fmt_g10(s.rot_q3_deg) + "," +
           detail::fmt_g10(s.trans_med_cm) + "," +
           detail::fmt_g10(s.trans_q1_cm) + "," +
           detail::fmt_g10(s.trans_q3_cm) + "," +
           detail::fmt_g10(s.converged_rate) + "\n";
  }
  return out;
}

inline std::string summary_path_for(const std::string& trial_path) {
  const std::string suffix = ".csv";
  if (trial_path.size() > suffix.size() &&
      trial_path.compare(trial_path.size() - suffix.size(), suffix.size(),
                         suffix) == 0)
    return trial_path.substr(0, trial_path.size() - suffix.size()) +
           "_summary.csv";
  return trial_path + "_summary.csv";
}

// Runs the full sweep of cfg: every sweep point x trials, deterministic per
// (seed, trial_id) regardless of thread count (only wall_ms varies). Writes
// the trial CSV to cfg.output_path and the per-sweep-point summary next to
// it when output_path is non-empty.
inline BenchOutput run_benchmark(const BenchConfig& cfg) {
  if (cfg.trials <= 0) throw std::invalid_argument("bench: trials must be > 0");
  if (cfg.threads <= 0)
    throw std::invalid_argument("bench: threads must be > 0");
  if (cfg.m_points < 1)
    throw std::invalid_argument("bench: m_points must be >= 1");

  std::vector<detail::SweepPoint> sweep;
  switch (cfg.sweep) {
    case SweepKind::pixel:
    case SweepKind::world: {
      if (cfg.sigma_list.empty())
        throw std::invalid_argument("bench: empty sigma list");
      if (cfg.n_lines < 2)
        throw std::invalid_argument("bench: n_lines must be >= 2");
      for (const double s : cfg.sigma_list) {
        if (s < 0.0) throw std::invalid_argument("bench: sigma < 0");
        sweep.push_back({s, cfg.n_lines});
      }
      break;
    }
    case SweepKind::nlines: {
      if (cfg.nlines_list.empty())
        throw std::invalid_argument("bench: empty n_lines list");
      const double s = cfg.sigma_list.empty() ? 5.0 : cfg.sigma_list.front();
      if (s < 0.0) throw std::invalid_argument("bench: sigma < 0");
      for (const int n : cfg.nlines_list) {
        if (n < 2) throw std::invalid_argument("bench: n_lines must be >= 2");
        sweep.push_back({s, n});
      }
      break;
    }
    case SweepKind::none: {
      if (cfg.n_lines < 2)
        throw std::invalid_argument("bench: n_lines must be >= 2");
      sweep.push_back({0.0, cfg.n_lines});
      break;
    }
  }

  const std::size_t jobs = sweep.size() * static_cast<std::size_t>(cfg.trials);
  std::vector<TrialResult> results(jobs);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= jobs || abort.load()) return;
      const auto& sp = sweep[idx / static_cast<std::size_t>(cfg.trials)];
      const int trial = static_cast<int>(idx % cfg.trials);
      try {
        results[idx] = detail::run_one_trial(cfg, sp, trial);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        abort.store(true);
        return;
      }
    }
  };

  const int n_threads =
      static_cast<int>(std::min<std::size_t>(cfg.threads, jobs));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  BenchOutput out;
  out.trials = std::move(results);
  for (const auto& t : out.trials) out.total_dropped_points += t.dropped_points;

  for (std::size_t s = 0; s < sweep.size(); ++s) {
    std::vector<double> rot, trans;
    int conv = 0;
    for (int t = 0; t < cfg.trials; ++t) {
      const auto& r =
          out.trials[s * static_cast<std::size_t>(cfg.trials) +
                     static_cast<std::size_t>(t)];
      rot.push_back(r.rot_err_deg);
      trans.push_back(r.trans_err_cm);
      conv += r.converged ? 1 : 0;
    }
    SweepSummary sum;
    sum.preset = cfg.preset;
    sum.noise = to_string(cfg.sweep);
    sum.sigma = sweep[s].sigma;
    sum.n_lines = sweep[s].n_lines;
    sum.trials = cfg.trials;
    sum.rot_med_deg = detail::quantile_r7(rot, 0.5);
    sum.rot_q1_deg = detail::quantile_r7(rot, 0.25);
    sum.rot_q3_deg = detail::quantile_r7(rot, 0.75);
    sum.trans_med_cm = detail::quantile_r7(trans, 0.5);
    sum.trans_q1_cm = detail::quantile_r7(trans, 0.25);
    sum.trans_q3_cm = detail::quantile_r7(trans, 0.75);
    sum.converged_rate = double(conv) / double(cfg.trials);
    out.summary.push_back(sum);
  }

  if (!cfg.output_path.empty()) {
    std::ofstream f(cfg.output_path);
    if (!f) throw std::runtime_error("bench: cannot open " + cfg.output_path);
    f << trial_csv_string(out.trials);
    const std::string spath = summary_path_for(cfg.output_path);
    std::ofstream g(spath);
    if (!g) throw std::runtime_error("bench: cannot open " + spath);
    g << summary_csv_string(out.summary);
  }
  return out;
}

}  // namespace ncpose
