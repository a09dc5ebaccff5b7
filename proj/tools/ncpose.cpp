// Command-line front end: analytic line projection onto quadric mirrors,
// planar pose estimation from line observations, and the synthetic
// benchmark sweeps.
//
// Exit codes: 0 success/converged; 2 degenerate line (project-line);
// 3 estimate did not converge; 4 malformed input; 5 bench config invalid or
// dataset generation exhausted.

#include "CLI11.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ncpose/bench.hpp"
#include "ncpose/io.hpp"
#include "ncpose/line_curve.hpp"
#include "ncpose/pose.hpp"
#include "ncpose/presets.hpp"
#include "ncpose/reflection.hpp"

namespace {

constexpr const char* kPresetHelp =
    "mirror preset: hyperbolic, parabolic, or spheric";

ncpose::QuadricMirror<double> resolve_mirror_args(
    const std::string& preset, const std::string& mirror_path) {
  if (!mirror_path.empty())
    return ncpose::mirror_from_json(ncpose::load_json_file(mirror_path));
  return ncpose::preset_mirror<double>(preset);
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

struct ProjectLineArgs {
  std::string preset{"spheric"};
  std::string mirror_path{};
  std::vector<double> q{0, 0, 0};
  std::vector<double> d{1, 0, 0};
  int n{100};
  double lambda_min{-60.0};
  double lambda_max{60.0};
  std::string out{};
};

int run_project_line(const ProjectLineArgs& a) {
  const auto mirror = resolve_mirror_args(a.preset, a.mirror_path);
  const ncpose::Line3D<double> line(
      ncpose::Vec3<double>(a.q[0], a.q[1], a.q[2]),
      ncpose::Vec3<double>(a.d[0], a.d[1], a.d[2]));
  const auto curve = ncpose::curve_coefficients(line, mirror);
  const auto sampled =
      ncpose::sample_curve(line, mirror, a.n, a.lambda_min, a.lambda_max);

  std::string csv = "line_id,lambda,m_x,m_y,m_z,gamma_residual\n";
  for (std::size_t i = 0; i < sampled.points.size(); ++i) {
    const auto& m = sampled.points[i];
    csv += "0," + fmt(sampled.lambdas[i]) + "," + fmt(m.x()) + "," +
           fmt(m.y()) + "," + fmt(m.z()) + "," + fmt(sampled.residuals[i]) +
           "\n";
  }
  // Overlay: oracle projections of 10 evenly spaced line points, membership
  // checked against the same curve (line_id 1).
  constexpr int kOverlay = 10;
  for (int i = 0; i < kOverlay; ++i) {
    const double lam =
        a.lambda_min +
        (a.lambda_max - a.lambda_min) * (i + 0.5) / double(kOverlay);
    try {
      const auto fp = ncpose::forward_project(line.point_at(lam), mirror);
      if (fp.solutions.empty()) continue;
      const auto& m = fp.solutions.front().m;
      const double res = ncpose::curve_point_residual(curve, mirror, m);
      csv += "1," + fmt(lam) + "," + fmt(m.x()) + "," + fmt(m.y()) + "," +
             fmt(m.z()) + "," + fmt(res) + "\n";
    } catch (const std::invalid_argument&) {
      // Point at the cop or on the mirror: no overlay row at this lambda.
    }
  }

  if (a.out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream f(a.out);
    if (!f) throw std::runtime_error("cannot open " + a.out);
    f << csv;
  }
  if (sampled.skipped > 0)
    std::cerr << "note: " << sampled.skipped
              << " lambda samples had no visible reflection\n";
  return 0;
}

struct EstimateArgs {
  std::string problem_path{};
  std::string solver_path{};
  std::vector<double> init{0, 0, 0};  // theta_deg, t_x, t_y
};

int run_estimate(const EstimateArgs& a) {
  const auto file = ncpose::problem_from_json(
      ncpose::load_json_file(a.problem_path));
  ncpose::SolverOptions opts;
  if (!a.solver_path.empty())
    opts = ncpose::solver_options_from_json(
        ncpose::load_json_file(a.solver_path));

  ncpose::PlanarPose<double> init;
  init.theta = a.init[0] * EIGEN_PI / 180.0;
  init.t_x = a.init[1];
  init.t_y = a.init[2];
  init.z_offset = file.problem.z_offset;

  const auto est = ncpose::estimate_pose(file.problem, init, opts);
  ncpose::json j = ncpose::estimate_to_json(est);
  if (file.truth) {
    const auto [rot_err, trans_err] =
        ncpose::pose_error(est.pose, *file.truth);
    j["rot_err_deg"] = rot_err;
    j["trans_err_cm"] = trans_err;
  }
  std::cout << j.dump(2) << "\n";
  return est.converged ? 0 : 3;
}

struct BenchArgs {
  std::string preset{"spheric"};
  std::string noise{"pixel"};
  std::vector<double> sigmas{};
  std::vector<int> nlines{4, 8, 12, 16, 20};
  int n{20};
  int m{5};
  int trials{100};
  std::uint64_t seed{2024};
  int threads{1};
  std::string out{"bench.csv"};
  std::string profile{};
};

int run_bench(BenchArgs a, const CLI::App* sub) {
  // Profiles fill anything the user did not set explicitly.
  if (!a.profile.empty()) {
    const bool fig5 = a.profile == "fig5";
    if (!sub->count("--noise")) a.noise = fig5 ? "world" : "pixel";
    if (!sub->count("--m")) a.m = fig5 ? 10 : 5;
    if (!sub->count("--n")) a.n = 20;
    if (!sub->count("--sigmas") && fig5) a.sigmas = {0, 5, 10};
  }
  auto cfg = ncpose::default_bench_config(a.preset);
  cfg.sweep = ncpose::parse_sweep_kind(a.noise);
  if (!a.sigmas.empty()) {
    cfg.sigma_list = a.sigmas;
  } else if (cfg.sweep == ncpose::SweepKind::world) {
    cfg.sigma_list = {0, 5, 10};
  } else if (cfg.sweep == ncpose::SweepKind::nlines) {
    cfg.sigma_list = {5};
  }
  cfg.nlines_list = a.nlines;
  cfg.n_lines = a.n;
  cfg.m_points = a.m;
  cfg.trials = a.trials;
  cfg.seed = a.seed;
  cfg.threads = a.threads;
  cfg.output_path = a.out;

  const auto out = ncpose::run_benchmark(cfg);
  std::cout << ncpose::summary_csv_string(out.summary);
  std::cout << "trials: " << cfg.output_path
            << "\nsummary: " << ncpose::summary_path_for(cfg.output_path)
            << "\ndropped points: " << out.total_dropped_points << "\n";
  return 0;
}

std::string bench_config_echo(const BenchArgs& a) {
  std::string s = "preset=" + a.preset + " noise=" + a.noise + " sigmas=";
  for (std::size_t i = 0; i < a.sigmas.size(); ++i)
    s += (i ? "," : "") + fmt(a.sigmas[i]);
  s += " n=" + std::to_string(a.n) + " m=" + std::to_string(a.m) +
       " trials=" + std::to_string(a.trials) +
       " seed=" + std::to_string(a.seed) +
       " threads=" + std::to_string(a.threads);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "ncpose: line projection onto rotationally symmetric quadric mirrors "
      "(presets: hyperbolic, parabolic, spheric), planar pose estimation, "
      "and synthetic benchmarks"};
  app.require_subcommand(1);

  ProjectLineArgs pa;
  auto* proj = app.add_subcommand(
      "project-line",
      "sample the analytic mirror image of a 3D line as CSV (line_id 0: "
      "curve samples; line_id 1: oracle overlay points)");
  proj->add_option("--preset", pa.preset, kPresetHelp);
  proj->add_option("--mirror", pa.mirror_path,
                   "JSON file with mirror {A,B,C,cop} (overrides --preset)");
  proj->add_option("--q", pa.q, "line point (3 floats, cm)")
      ->expected(3)
      ->required();
  proj->add_option("--d", pa.d, "line direction (3 floats)")
      ->expected(3)
      ->required();
  proj->add_option("--n", pa.n, "number of lambda samples (default 100)");
  proj->add_option("--lambda-min", pa.lambda_min, "lambda range start (cm)");
  proj->add_option("--lambda-max", pa.lambda_max, "lambda range end (cm)");
  proj->add_option("--out", pa.out, "output CSV path (default: stdout)");

  EstimateArgs ea;
  auto* est = app.add_subcommand(
      "estimate", "estimate the planar pose from a JSON problem file");
  est->add_option("--problem", ea.problem_path, "problem JSON path")
      ->required();
  est->add_option("--solver", ea.solver_path, "solver options JSON path");
  est->add_option("--init", ea.init,
                  "initial guess: theta_deg t_x t_y (default 0 0 0)")
      ->expected(3);

  BenchArgs ba;
  auto* ben = app.add_subcommand(
      "bench", "run the synthetic Monte Carlo benchmark sweeps");
  ben->add_option("--preset", ba.preset, kPresetHelp);
  ben->add_option("--noise", ba.noise,
                  "sweep kind: pixel, world, nlines, or none");
  ben->add_option("--sigmas", ba.sigmas,
                  "noise levels (px for pixel, cm for world; nlines mode "
                  "uses the first entry)")
      ->delimiter(',');
  ben->add_option("--nlines", ba.nlines,
                  "line counts for --noise nlines (default 4,8,12,16,20)")
      ->delimiter(',');
  ben->add_option("--n", ba.n, "lines per trial (default 20)");
  ben->add_option("--m", ba.m, "mirror points per line (default 5)");
  ben->add_option("--trials", ba.trials, "trials per sweep point");
  ben->add_option("--seed", ba.seed,
                  "base RNG seed (env NCPOSE_SEED overrides)");
  ben->add_option("--threads", ba.threads, "worker threads (default 1)");
  ben->add_option("--out", ba.out, "trial CSV path (default bench.csv)");
  ben->add_option("--profile", ba.profile,
                  "fig4 (pixel noise, M=5) or fig5 (world noise, M=10)")
      ->check(CLI::IsMember({"fig4", "fig5"}));

  CLI11_PARSE(app, argc, argv);

  if (const char* env_seed = std::getenv("NCPOSE_SEED")) {
    try {
      ba.seed = std::stoull(env_seed);
    } catch (const std::exception&) {
      std::cerr << "error: NCPOSE_SEED is not an integer\n";
      return 4;
    }
  }

  try {
    if (proj->parsed()) {
      try {
        return run_project_line(pa);
      } catch (const ncpose::DegenerateLine& e) {
        std::cerr << "DegenerateLine: " << e.what() << "\n";
        return 2;
      }
    }
    if (est->parsed()) {
      try {
        return run_estimate(ea);
      } catch (const ncpose::IllPosed& e) {
        std::cerr << "IllPosed: " << e.what() << "\n";
        return 4;
      }
    }
    if (ben->parsed()) {
      try {
        return run_bench(ba, ben);
      } catch (const ncpose::GenerationExhausted& e) {
        std::cerr << "GenerationExhausted: " << e.what() << "\n  config: "
                  << bench_config_echo(ba) << "\n";
        return 5;
      } catch (const std::invalid_argument& e) {
        std::cerr << "invalid config: " << e.what() << "\n  config: "
                  << bench_config_echo(ba) << "\n";
        return 5;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
