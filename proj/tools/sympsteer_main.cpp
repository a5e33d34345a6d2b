// Command-line front end: analyze | steer | verify | sweep over YAML problem
// files. Reports go to stdout as JSON with sorted keys and no volatile fields
// (timing is stderr only), so identical invocations produce identical bytes.

#include "sympsteer/controllability.hpp"
#include "sympsteer/franks.hpp"
#include "sympsteer/run_report.hpp"
#include "sympsteer/spec_file.hpp"
#include "sympsteer/version.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace {

using namespace sympsteer;

// Exit codes. 1 is reserved for unclassified failures, 2 for unreadable or
// invalid inputs; the remaining codes separate the mathematically distinct
// failure modes so scripts can branch on them.
constexpr int kExitSchema = 2;
constexpr int kExitNotControllable = 3;
constexpr int kExitNoConvergence = 4;
constexpr int kExitAvoidance = 5;
constexpr int kExitResidual = 6;
constexpr int kExitSweepHole = 7;

enum class TolTarget { rank, steer };

struct CommonFlags {
  std::string spec_path;
  std::string out_prefix;
  std::string window_arg;               // "tau,delta"
  std::vector<std::string> avoid_args;  // "t:rho", appended to the file's list
  std::optional<int> steps;
  std::optional<int> depth;
  std::optional<double> tol;
  std::optional<std::uint64_t> seed;
};

double parse_number(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw SpecFileError("cannot parse '" + text + "' as a number in " + what);
  }
}

std::vector<double> split_numbers(const std::string& list, char sep, const std::string& what) {
  if (list.empty() || list.back() == sep)
    throw SpecFileError(what + " must be a '" + std::string(1, sep) + "'-separated number list");
  std::vector<double> out;
  std::istringstream in(list);
  std::string cell;
  while (std::getline(in, cell, sep)) out.push_back(parse_number(cell, what));
  return out;
}

void apply_flags(SystemSpec& spec, const CommonFlags& f, TolTarget tol_target) {
  if (f.steps) {
    if (*f.steps < 2) throw SpecFileError("--steps must be at least 2");
    spec.options.steps = *f.steps;
  }
  if (f.depth) {
    if (*f.depth < 1) throw SpecFileError("--depth must be positive");
    spec.options.depth = *f.depth;
  }
  if (f.seed) spec.options.seed = *f.seed;
  if (f.tol) {
    if (!(*f.tol > 0.0)) throw SpecFileError("--tol must be positive");
    (tol_target == TolTarget::rank ? spec.options.tol_rank : spec.options.tol_steer) = *f.tol;
  }
  if (!f.window_arg.empty()) {
    const std::vector<double> parts = split_numbers(f.window_arg, ',', "--window");
    if (parts.size() != 2) throw SpecFileError("--window expects 'tau,delta'");
    try {
      perturbation_window(parts[0], parts[1]);
    } catch (const DimensionError& e) {
      throw SpecFileError(std::string("--window: ") + e.what());
    }
    spec.tau = parts[0];
    spec.delta = parts[1];
  }
  for (const std::string& arg : f.avoid_args) {
    const std::vector<double> parts = split_numbers(arg, ':', "--avoid");
    if (parts.size() != 2) throw SpecFileError("--avoid expects 't:rho'");
    if (!(parts[1] > 0.0)) throw SpecFileError("--avoid: half-width must be positive");
    if (!(parts[0] > 0.0 && parts[0] < spec.horizon))
      throw SpecFileError("--avoid: center must lie inside (0, T)");
    spec.avoided.emplace_back(parts[0], parts[1]);
  }
}

Json make_report(const std::string& verb, const std::vector<std::string>& argv_echo,
                 const SystemSpec& spec,
                 const std::vector<std::pair<std::string, std::string>>& inputs) {
  Json j;
  j["command"] = verb;
  j["version"] = version_string;
  Json args = Json::array();
  for (const std::string& a : argv_echo) args.push_back(a);
  j["argv"] = std::move(args);
  Json in = Json::object();
  for (const auto& [name, path] : inputs) {
    Json one;
    one["path"] = path;
    one["digest"] = digest_file(path);
    in[name] = std::move(one);
  }
  j["inputs"] = std::move(in);
  j["m"] = spec.m;
  Json opts;
  opts["steps"] = spec.options.steps;
  opts["depth"] = spec.options.depth;
  opts["tol_steer"] = spec.options.tol_steer;
  opts["tol_rank"] = spec.options.tol_rank;
  opts["gap_tol"] = spec.options.gap_tol;
  opts["seed"] = spec.options.seed;
  j["options"] = std::move(opts);
  const Interval w = perturbation_window(spec.tau, spec.delta);
  Json win;
  win["tau"] = spec.tau;
  win["delta"] = spec.delta;
  win["lo"] = w.lo;
  win["hi"] = w.hi;
  j["window"] = std::move(win);
  Json av = Json::array();
  for (const auto& [t, rho] : spec.avoided) {
    Json one;
    one["t"] = t;
    one["rho"] = rho;
    av.push_back(std::move(one));
  }
  j["avoided"] = std::move(av);
  return j;
}

void emit(const Json& report, const std::string& out_prefix) {
  const std::string text = report_to_string(report);
  std::fputs(text.c_str(), stdout);
  std::fflush(stdout);
  if (!out_prefix.empty()) write_text_file(out_prefix + ".json", text);
}

int cmd_analyze(const CommonFlags& f, const std::vector<std::string>& argv_echo) {
  SystemSpec spec = load_system_spec(f.spec_path);
  apply_flags(spec, f, TolTarget::rank);

  const BilinearSystem sys = jacobi_system(spec.curvature);
  const Interval window = perturbation_window(spec.tau, spec.delta);
  const Support region = BumpWindow(window, detail::to_notches(spec.avoided)).support();

  std::vector<double> times;
  for (int j = 0; j <= spec.options.steps; ++j) {
    const double t = static_cast<double>(j) / static_cast<double>(spec.options.steps);
    if (region.contains(t)) times.push_back(t);
  }

  RankReport rank;
  rank.required = spec.m * (2 * spec.m + 1);
  if (!times.empty()) rank = scan_times(sys, times, spec.options.depth, spec.options.tol_rank);
  const ContrerasReport gap = contreras_check(spec.curvature, region, spec.options.gap_tol);

  const SymplecticMatrix x0(Matrix::Identity(2 * spec.m, 2 * spec.m));
  const Trajectory base =
      propagate(sys, x0, ControlSignal::zero(sys.k(), spec.horizon, spec.options.steps),
                spec.options.steps);

  Json report = make_report("analyze", argv_echo, spec, {{"spec", f.spec_path}});
  Json rk;
  rk["required"] = rank.required;
  rk["achieved"] = rank.achieved;
  rk["controllable"] = rank.controllable;
  rk["best_time"] = rank.best_time;
  Json sv = Json::array();
  for (int i = 0; i < rank.singular_values.size(); ++i) sv.push_back(rank.singular_values(i));
  rk["singular_values"] = std::move(sv);
  report["rank"] = std::move(rk);
  report["contreras"] = contreras_to_json(gap);
  report["endpoint"] = matrix_to_json(base.endpoint());
  report["endpoint_defect"] = symplectic_defect(base.endpoint());
  if (!f.out_prefix.empty()) {
    write_matrix_file(f.out_prefix + ".endpoint.txt", base.endpoint());
    Json outs;
    outs["endpoint"] = f.out_prefix + ".endpoint.txt";
    outs["report"] = f.out_prefix + ".json";
    report["outputs"] = std::move(outs);
  }
  emit(report, f.out_prefix);
  return rank.controllable ? 0 : kExitNotControllable;
}

int cmd_steer(const CommonFlags& f, const std::string& target_path,
              const std::vector<std::string>& argv_echo) {
  SystemSpec spec = load_system_spec(f.spec_path);
  apply_flags(spec, f, TolTarget::steer);

  const Matrix target_mat = read_matrix_file(target_path);
  if (target_mat.rows() != 2 * spec.m || target_mat.cols() != 2 * spec.m)
    throw SpecFileError("target '" + target_path + "': expected a " +
                        std::to_string(2 * spec.m) + "x" + std::to_string(2 * spec.m) +
                        " matrix");
  SymplecticMatrix target = [&] {
    try {
      return SymplecticMatrix(target_mat);
    } catch (const NotSymplecticError& e) {
      throw SpecFileError("target '" + target_path + "': " + e.what());
    }
  }();

  const PerturbationPlan plan = synthesize(spec.curvature, target, spec.tau, spec.delta,
                                           spec.avoided, spec.synthesis_options());

  Json report =
      make_report("steer", argv_echo, spec, {{"spec", f.spec_path}, {"target", target_path}});
  Json st;
  st["residual"] = plan.residual;
  st["iterations"] = plan.iterations;
  Json norms;
  for (int k = 0; k < 5; ++k)
    norms["C" + std::to_string(k)] = plan.norms[static_cast<std::size_t>(k)];
  st["norms"] = std::move(norms);
  st["radius_warning"] = plan.radius_warning;
  st["target_defect"] = symplectic_defect(plan.target.value());
  st["achieved_defect"] = symplectic_defect(plan.achieved.value());
  report["steer"] = std::move(st);
  report["contreras"] = contreras_to_json(plan.contreras);
  if (!f.out_prefix.empty()) {
    write_control_csv(f.out_prefix + ".csv", plan.u, spec.m);
    Json outs;
    outs["control_csv"] = f.out_prefix + ".csv";
    outs["report"] = f.out_prefix + ".json";
    report["outputs"] = std::move(outs);
  }
  emit(report, f.out_prefix);
  return 0;
}

int cmd_verify(const CommonFlags& f, const std::string& control_path,
               const std::string& target_path, const std::vector<std::string>& argv_echo) {
  SystemSpec spec = load_system_spec(f.spec_path);
  apply_flags(spec, f, TolTarget::steer);
  const double tolerance = spec.options.tol_steer;

  const ControlSignal u = read_control_csv(control_path, spec.m);
  if (std::abs(u.horizon() - spec.horizon) > 1e-9)
    throw SpecFileError("control CSV '" + control_path + "': horizon " + num_str(u.horizon()) +
                        " does not match T = " + num_str(spec.horizon));
  const Matrix target_mat = read_matrix_file(target_path);
  if (target_mat.rows() != 2 * spec.m || target_mat.cols() != 2 * spec.m)
    throw SpecFileError("target '" + target_path + "': expected a " +
                        std::to_string(2 * spec.m) + "x" + std::to_string(2 * spec.m) +
                        " matrix");

  const BilinearSystem sys = jacobi_system(spec.curvature);
  const SymplecticMatrix x0(Matrix::Identity(2 * spec.m, 2 * spec.m));
  double residual = std::numeric_limits<double>::infinity();
  double max_defect = std::numeric_limits<double>::infinity();
  bool blew_up = false;
  try {
    // The CSV's own grid drives the propagation, so the check covers the
    // artifact as written, not a resampling of it.
    const Trajectory traj = propagate(sys, x0, u, u.grid());
    residual = (traj.endpoint() - target_mat).norm();
    max_defect = traj.max_defect();
  } catch (const BlowUpError& e) {
    blew_up = true;
    max_defect = e.defect;
  }
  const bool pass = !blew_up && residual <= tolerance;

  Json report = make_report("verify", argv_echo, spec,
                            {{"spec", f.spec_path},
                             {"control", control_path},
                             {"target", target_path}});
  Json v;
  v["residual"] = finite_or_null(residual);
  v["max_defect"] = finite_or_null(max_defect);
  v["tolerance"] = tolerance;
  v["grid"] = u.grid();
  v["blew_up"] = blew_up;
  v["pass"] = pass;
  report["verify"] = std::move(v);
  if (!f.out_prefix.empty()) {
    Json outs;
    outs["report"] = f.out_prefix + ".json";
    report["outputs"] = std::move(outs);
  }
  emit(report, f.out_prefix);
  return pass ? 0 : kExitResidual;
}

int cmd_sweep(const CommonFlags& f, const std::string& radii_arg, int samples,
              const std::vector<std::string>& argv_echo) {
  SystemSpec spec = load_system_spec(f.spec_path);
  apply_flags(spec, f, TolTarget::steer);

  std::vector<double> radii{1e-4, 1e-3, 1e-2};
  if (!radii_arg.empty()) radii = split_numbers(radii_arg, ',', "--radii");
  if (samples < 1) throw SpecFileError("--samples must be positive");
  if (!spec.avoided.empty())
    std::fprintf(stderr, "sympsteer sweep: avoided intervals are ignored by the radius sweep\n");

  const FranksSweep sweep =
      estimate_franks_constant(spec.curvature, spec.tau, spec.delta, radii, samples,
                               spec.options.seed, spec.synthesis_options());

  bool hole = false;
  Json per = Json::array();
  for (std::size_t ri = 0; ri < sweep.radii.size(); ++ri) {
    int solved = 0;
    double worst_ratio = 0.0;
    double max_c2 = 0.0;
    for (int si = 0; si < sweep.samples_per_radius; ++si) {
      const FranksSample& row =
          sweep.rows[ri * static_cast<std::size_t>(sweep.samples_per_radius) +
                     static_cast<std::size_t>(si)];
      if (!row.solved) continue;
      ++solved;
      worst_ratio = std::max(worst_ratio, row.ratio);
      max_c2 = std::max(max_c2, row.norm_c2);
    }
    if (solved == 0) hole = true;
    Json one;
    one["radius"] = sweep.radii[ri];
    one["solved"] = solved;
    one["samples"] = sweep.samples_per_radius;
    one["max_norm_C2"] = max_c2;
    one["worst_ratio"] = worst_ratio;
    per.push_back(std::move(one));
  }

  Json report = make_report("sweep", argv_echo, spec, {{"spec", f.spec_path}});
  Json sw;
  sw["k_est"] = sweep.k_est;
  sw["slope"] = finite_or_null(sweep.slope);
  sw["r_est"] = sweep.r_est;
  sw["seed"] = sweep.seed;
  sw["samples_per_radius"] = sweep.samples_per_radius;
  Json rr = Json::array();
  for (double r : sweep.radii) rr.push_back(r);
  sw["radii"] = std::move(rr);
  sw["per_radius"] = std::move(per);
  report["sweep"] = std::move(sw);
  if (!f.out_prefix.empty()) {
    write_sweep_csv(f.out_prefix + ".csv", sweep);
    Json outs;
    outs["table_csv"] = f.out_prefix + ".csv";
    outs["report"] = f.out_prefix + ".json";
    report["outputs"] = std::move(outs);
  }
  emit(report, f.out_prefix);
  return hole ? kExitSweepHole : 0;
}

int fail(int code, const char* what) {
  std::fprintf(stderr, "sympsteer: %s\n", what);
  return code;
}

int classify(const std::function<int()>& run) {
  try {
    return run();
  } catch (const SpecFileError& e) {
    return fail(kExitSchema, e.what());
  } catch (const DimensionError& e) {
    return fail(kExitSchema, e.what());
  } catch (const InvalidTargetError& e) {
    return fail(kExitSchema, e.what());
  } catch (const InvalidCurvatureError& e) {
    return fail(kExitSchema, e.what());
  } catch (const GridError& e) {
    return fail(kExitSchema, e.what());
  } catch (const NotSymplecticError& e) {
    return fail(kExitSchema, e.what());
  } catch (const ContrerasFailError& e) {
    return fail(kExitNotControllable, e.what());
  } catch (const DegenerateInputError& e) {
    return fail(kExitNotControllable, e.what());
  } catch (const NoConvergenceError& e) {
    return fail(kExitNoConvergence, e.what());
  } catch (const BlowUpError& e) {
    return fail(kExitNoConvergence, e.what());
  } catch (const AvoidanceInfeasibleError& e) {
    return fail(kExitAvoidance, e.what());
  } catch (const BasisDegenerateError& e) {
    return fail(kExitAvoidance, e.what());
  } catch (const Error& e) {
    return fail(1, e.what());
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> argv_echo(argv, argv + argc);

  CLI::App app{"steering synthesis for the linearized return map of a closed geodesic"};
  app.require_subcommand(1);

  CommonFlags fa, fs, fv, fw;
  std::string steer_target, verify_control, verify_target, radii_arg;
  int samples = 10;

  const auto add_common = [](CLI::App* sub, CommonFlags& f, bool with_depth) {
    sub->add_option("--spec", f.spec_path, "problem file (YAML)")->required();
    sub->add_option("--out", f.out_prefix, "artifact path prefix");
    sub->add_option("--steps", f.steps, "propagation grid steps");
    if (with_depth) sub->add_option("--depth", f.depth, "bracket depth");
    sub->add_option("--tol", f.tol, "override the decisive tolerance");
    sub->add_option("--seed", f.seed, "override the sampling seed");
    sub->add_option("--window", f.window_arg, "override the window as 'tau,delta'");
    sub->add_option("--avoid", f.avoid_args, "extra avoided interval 't:rho' (repeatable)");
  };

  CLI::App* analyze =
      app.add_subcommand("analyze", "rank and spectral-gap analysis of the control family");
  add_common(analyze, fa, true);

  CLI::App* steer = app.add_subcommand("steer", "synthesize a control reaching a target");
  add_common(steer, fs, false);
  steer->add_option("--target", steer_target, "target matrix file")->required();

  CLI::App* verify =
      app.add_subcommand("verify", "re-propagate a control CSV and check the endpoint");
  add_common(verify, fv, false);
  verify->add_option("--control", verify_control, "control CSV to verify")->required();
  verify->add_option("--target", verify_target, "target matrix file")->required();

  CLI::App* sweep = app.add_subcommand("sweep", "norm-to-distance sweep over target radii");
  add_common(sweep, fw, false);
  sweep->add_option("--radii", radii_arg, "comma-separated radii (ascending)");
  sweep->add_option("--samples", samples, "samples per radius");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitSchema;
  }

  std::function<int()> run;
  const char* verb = "";
  if (analyze->parsed()) {
    verb = "analyze";
    run = [&] { return cmd_analyze(fa, argv_echo); };
  } else if (steer->parsed()) {
    verb = "steer";
    run = [&] { return cmd_steer(fs, steer_target, argv_echo); };
  } else if (verify->parsed()) {
    verb = "verify";
    run = [&] { return cmd_verify(fv, verify_control, verify_target, argv_echo); };
  } else {
    verb = "sweep";
    run = [&] { return cmd_sweep(fw, radii_arg, samples, argv_echo); };
  }

  const auto start = std::chrono::steady_clock::now();
  const int rc = classify(run);
  const auto elapsed =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  std::fprintf(stderr, "sympsteer %s: %lld ms\n", verb,
               static_cast<long long>(elapsed.count()));
  return rc;
}
