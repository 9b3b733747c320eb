#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "pfbv/config.hpp"
#include "pfbv/driver.hpp"
#include "pfbv/errors.hpp"
#include "pfbv/mesh.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace pfbv {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string experiment_name(Experiment e) {
  switch (e) {
    case Experiment::CT: return "ct";
    case Experiment::LShape: return "lshape";
    case Experiment::ZeroDim: return "zerodim";
    case Experiment::Custom: return "custom";
  }
  return "?";
}

namespace {

Experiment parse_experiment(const std::string& s) {
  if (s == "ct") return Experiment::CT;
  if (s == "lshape") return Experiment::LShape;
  if (s == "zerodim") return Experiment::ZeroDim;
  if (s == "custom") return Experiment::Custom;
  throw ConfigError("experiment.name: unknown experiment '" + s + "'");
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const char* b = v.data();
  const char* e = v.data() + v.size();
  while (b < e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(e[-1]))) --e;
  auto r = std::from_chars(b, e, x);
  if (r.ec != std::errc() || r.ptr != e) throw ConfigError(key + ": invalid number '" + v + "'");
  return x;
}

int to_int(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  if (x != std::floor(x) || std::abs(x) > 2e9) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::string norm_name(const NormSpec& n) { return n.name(); }

}  // namespace

RunConfig preset_config(Experiment e) {
  RunConfig c;
  c.experiment = e;
  switch (e) {
    case Experiment::CT:
    case Experiment::Custom:
      c.material = MaterialModel{100.0, 0.3, 1e-4, 1.0, 0.025, 1.0, 0.0, EnergyPreset::AT};
      c.scheme.rho = 0.005;
      c.scheme.norm = {NormKind::LalphaNodal, 4.0};
      c.mesh = MeshSettings{};
      c.load.u_max = 0.3;
      if (e == Experiment::Custom) c.mesh.notch = "none";
      break;
    case Experiment::LShape:
      c.material = MaterialModel{25840.0, 0.18, 1e-4, 6.5e-4, 10.0, 1.0, 0.0, EnergyPreset::AT};
      c.scheme.rho = 0.08658;
      c.scheme.norm = {NormKind::LalphaNodal, 4.0};
      c.scheme.T = 8.658;
      c.T_explicit = true;
      c.mesh.leg = 250.0;
      c.mesh.coarse_h = 25.0;
      c.mesh.fine_h = 5.0;
      c.mesh.notch = "none";
      c.load.u_max = 0.3;
      break;
    case Experiment::ZeroDim:
      c.scheme.rho = c.zerodim.rho;
      c.scheme.T = c.zerodim.T;
      c.T_explicit = true;
      c.scheme.norm = {NormKind::LalphaNodal, 2.0};
      c.scheme.tol_am = 1e-12;
      c.material.preset = EnergyPreset::Analysis;
      c.mesh.notch = "none";
      c.load.mode = LoadMode::TractionRamp;
      c.output.vtk = false;
      break;
  }
  return c;
}

double RunConfig::final_time() const {
  if (T_explicit) return scheme.T;
  if (experiment == Experiment::CT || experiment == Experiment::Custom) return 100.0 * scheme.rho;
  return scheme.T;
}

void RunConfig::validate() const {
  material.validate();
  SchemeParams s = scheme;
  s.T = final_time();
  s.validate();
  if (method != "em" && method != "pure_am") throw ConfigError("experiment.method must be em or pure_am");
  if (am_steps < 1) throw ConfigError("experiment.am_steps must be positive");
  if (!(mesh.side > 0.0)) throw ConfigError("mesh.side must be positive");
  if (!(mesh.leg > 0.0)) throw ConfigError("mesh.leg must be positive");
  if (!(mesh.coarse_h > 0.0)) throw ConfigError("mesh.coarse_h must be positive");
  if (!(mesh.fine_h > 0.0) || mesh.fine_h > mesh.coarse_h) throw ConfigError("mesh.fine_h must lie in (0, coarse_h]");
  if (mesh.notch != "slit" && mesh.notch != "damage" && mesh.notch != "none")
    throw ConfigError("mesh.notch must be slit, damage or none");
  if (!(mesh.notch_length > 0.0 && mesh.notch_length < 1.0)) throw ConfigError("mesh.notch_length must lie in (0, 1)");
  if (!std::isfinite(load.u_max)) throw ConfigError("load.u_max must be finite");
  if (!std::isfinite(load.traction_max)) throw ConfigError("load.traction_max must be finite");
  if (experiment == Experiment::LShape && load.mode != LoadMode::DirichletRamp)
    throw ConfigError("load.mode: the L-shape preset supports dirichlet loading only");
  if (output.snapshot_stride < 0) throw ConfigError("output.snapshot_stride must be >= 0");
  if (output.directory.empty()) throw ConfigError("output.directory must not be empty");
  if (experiment == Experiment::ZeroDim) {
    ZeroDimModel m = zerodim;
    m.rho = scheme.rho;
    m.T = final_time();
    m.validate();
  }
}

void apply_override(RunConfig& c, const std::string& key_in, const std::string& v) {
  std::string key = key_in;
  if (key.find('.') == std::string::npos) key = "scheme." + key;
  const auto dot = key.find('.');
  const std::string sec = key.substr(0, dot);
  const std::string k = key.substr(dot + 1);
  auto num = [&] { return to_double(key, v); };
  auto unknown = [&] { throw ConfigError("unknown key '" + key + "'"); };
  if (sec == "experiment") {
    if (k == "name") {
      if (parse_experiment(v) != c.experiment) throw ConfigError("experiment.name must be set before other keys");
    } else if (k == "method") c.method = v;
    else if (k == "am_steps") c.am_steps = to_int(key, v);
    else if (k == "seed") c.seed = static_cast<unsigned>(to_int(key, v));
    else unknown();
  } else if (sec == "material") {
    auto& m = c.material;
    if (k == "young_E") m.young_E = num();
    else if (k == "poisson_nu") m.poisson_nu = num();
    else if (k == "eta") m.eta = num();
    else if (k == "g_c") m.g_c = num();
    else if (k == "theta") m.theta = num();
    else if (k == "kappa_E") m.kappa_E = num();
    else if (k == "kappa_R") m.kappa_R = num();
    else if (k == "preset") {
      if (v == "at") m.preset = EnergyPreset::AT;
      else if (v == "analysis") m.preset = EnergyPreset::Analysis;
      else throw ConfigError("material.preset must be at or analysis");
    } else unknown();
  } else if (sec == "scheme") {
    auto& s = c.scheme;
    if (k == "rho") s.rho = num();
    else if (k == "norm") {
      if (v == "lalpha") s.norm.kind = NormKind::LalphaNodal;
      else if (v == "lalpha_gauss") s.norm.kind = NormKind::LalphaGauss;
      else if (v == "h1") s.norm.kind = NormKind::H1;
      else throw ConfigError("scheme.norm must be lalpha, lalpha_gauss or h1");
    } else if (k == "alpha") s.norm.alpha = num();
    else if (k == "T") {
      s.T = num();
      c.T_explicit = true;
    } else if (k == "tol_am") s.tol_am = num();
    else if (k == "tol_newton") s.tol_newton = num();
    else if (k == "tol_constraint") s.tol_constraint = num();
    else if (k == "max_am_iters") s.max_am_iters = to_int(key, v);
    else if (k == "max_al_iters") s.max_al_iters = to_int(key, v);
    else if (k == "max_newton_iters") s.max_newton_iters = to_int(key, v);
    else if (k == "beta0") s.beta0 = num();
    else if (k == "beta_growth") s.beta_growth = num();
    else unknown();
  } else if (sec == "mesh") {
    auto& m = c.mesh;
    if (k == "side") m.side = num();
    else if (k == "leg") m.leg = num();
    else if (k == "coarse_h") m.coarse_h = num();
    else if (k == "fine_h") m.fine_h = num();
    else if (k == "notch") m.notch = v;
    else if (k == "notch_length") m.notch_length = num();
    else unknown();
  } else if (sec == "load") {
    if (k == "mode") {
      if (v == "dirichlet") c.load.mode = LoadMode::DirichletRamp;
      else if (v == "traction") c.load.mode = LoadMode::TractionRamp;
      else throw ConfigError("load.mode must be dirichlet or traction");
    } else if (k == "u_max") c.load.u_max = num();
    else if (k == "traction_max") c.load.traction_max = num();
    else unknown();
  } else if (sec == "output") {
    if (k == "directory") c.output.directory = v;
    else if (k == "snapshot_stride") c.output.snapshot_stride = to_int(key, v);
    else if (k == "vtk") c.output.vtk = to_bool(key, v);
    else if (k == "jump_snapshots") c.output.jump_snapshots = to_bool(key, v);
    else unknown();
  } else if (sec == "zerodim") {
    auto& z = c.zerodim;
    if (k == "a") z.a = num();
    else if (k == "eta") z.eta = num();
    else if (k == "kappa_E") z.kappa_E = num();
    else if (k == "kappa_R") z.kappa_R = num();
    else if (k == "ell_rate") z.ell_rate = num();
    else if (k == "z0") z.z0 = num();
    else unknown();
  } else {
    throw ConfigError("unknown section '" + sec + "'");
  }
}

RunConfig parse_config(std::istream& is, const std::string& source) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(is, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    std::ostringstream os;
    os << source << ":" << e.line() << ": parse error: " << e.message();
    throw ConfigError(os.str());
  }
  Experiment e = Experiment::CT;
  if (auto name = pt.get_optional<std::string>("experiment.name")) e = parse_experiment(*name);
  RunConfig c = preset_config(e);
  for (const auto& [sec, tree] : pt) {
    if (tree.empty() && !tree.data().empty()) throw ConfigError(source + ": key '" + sec + "' outside of a section");
    for (const auto& [key, val] : tree) {
      try {
        apply_override(c, sec + "." + key, val.data());
      } catch (const ConfigError& err) {
        throw ConfigError(source + ": " + err.what());
      }
    }
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(f, path);
}

std::string RunConfig::manifest_json() const {
  json j;
  j["version"] = kVersion;
  j["experiment"] = {{"name", experiment_name(experiment)}, {"method", method}, {"am_steps", am_steps}, {"seed", seed}};
  j["material"] = {{"young_E", material.young_E}, {"poisson_nu", material.poisson_nu}, {"eta", material.eta},
                   {"g_c", material.g_c},         {"theta", material.theta},           {"kappa_E", material.kappa_E},
                   {"kappa_R", material.kappa_R},
                   {"preset", material.preset == EnergyPreset::AT ? "at" : "analysis"}};
  const double T = final_time();
  j["scheme"] = {{"rho", scheme.rho},
                 {"norm", norm_name(scheme.norm)},
                 {"alpha", scheme.norm.alpha},
                 {"T", T},
                 {"tol_am", scheme.tol_am},
                 {"tol_newton", scheme.tol_newton},
                 {"tol_constraint", scheme.tol_constraint},
                 {"max_am_iters", scheme.max_am_iters},
                 {"max_al_iters", scheme.max_al_iters},
                 {"max_newton_iters", scheme.max_newton_iters},
                 {"beta0", scheme.beta0},
                 {"beta_growth", scheme.beta_growth}};
  j["mesh"] = {{"side", mesh.side},         {"leg", mesh.leg},     {"coarse_h", mesh.coarse_h},
               {"fine_h", mesh.fine_h},     {"notch", mesh.notch}, {"notch_length", mesh.notch_length}};
  j["load"] = {{"mode", load.mode == LoadMode::DirichletRamp ? "dirichlet" : "traction"},
               {"u_max", load.u_max},
               {"traction_max", load.traction_max},
               {"ubar_rate", load.u_max / T},
               {"traction_rate", load.traction_max / T}};
  j["output"] = {{"directory", output.directory},
                 {"snapshot_stride", output.snapshot_stride},
                 {"vtk", output.vtk},
                 {"jump_snapshots", output.jump_snapshots}};
  if (experiment == Experiment::ZeroDim)
    j["zerodim"] = {{"a", zerodim.a},           {"eta", zerodim.eta},   {"kappa_E", zerodim.kappa_E},
                    {"kappa_R", zerodim.kappa_R}, {"ell_rate", zerodim.ell_rate}, {"z0", zerodim.z0}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------

namespace {

struct BuiltFem {
  std::unique_ptr<FemModel> fem;
  Eigen::VectorXd z0;
};

BuiltFem build_fem(const RunConfig& c) {
  const double T = c.final_time();
  LoadProgram load;
  load.mode = c.load.mode;
  load.T = T;
  load.ubar_rate = c.load.u_max / T;
  load.traction_rate = c.load.traction_max / T;
  load.direction = Eigen::Vector2d(0.0, 1.0);
  Mesh mesh;
  if (c.experiment == Experiment::LShape) {
    mesh = build_lshape_mesh(c.mesh.leg, c.mesh.coarse_h, c.mesh.fine_h);
    load.constrain_transverse = false;
  } else {
    CtMeshOptions opts;
    opts.notch = c.mesh.notch == "slit";
    opts.notch_length = c.mesh.notch_length;
    mesh = build_ct_mesh(c.mesh.side, c.mesh.coarse_h, c.mesh.fine_h, opts);
    load.constrain_transverse = true;
  }
  BuiltFem b;
  Eigen::VectorXd z0 = Eigen::VectorXd::Ones(mesh.num_nodes());
  if (c.mesh.notch == "damage" && c.experiment != Experiment::LShape) {
    const double y = 0.5 * c.mesh.side;
    for (int n : nodes_near_segment(mesh, {0.0, y}, {c.mesh.notch_length * c.mesh.side, y}, 0.5 * c.mesh.fine_h))
      z0[n] = 0.0;
  }
  b.fem = std::make_unique<FemModel>(std::move(mesh), c.material, load);
  b.z0 = z0;
  return b;
}

void write_json_file(const fs::path& p, const json& j) {
  std::ofstream f(p);
  f << j.dump(2) << '\n';
}

std::string trace_row(const StepRecord& r) {
  std::ostringstream os;
  os << r.k << ',' << format_double(r.t) << ',' << format_double(r.dt) << ',' << format_double(r.dz_norm_V) << ','
     << r.am_iters << ',' << format_double(r.energy) << ',' << format_double(r.R_inc) << ','
     << format_double(r.reaction) << ',' << format_double(r.dual_distance) << ',' << (r.ball_active ? 1 : 0);
  return os.str();
}

std::string balance_row(const BalanceRow& b) {
  std::ostringstream os;
  os << b.k << ',' << format_double(b.dE) << ',' << format_double(b.R_inc) << ',' << format_double(b.visc) << ','
     << format_double(b.work) << ',' << format_double(b.residual) << ',' << format_double(b.cum_residual);
  return os.str();
}

struct Sinks {
  std::ofstream trace;
  std::ofstream balance;
  double prev_energy = 0.0;
  double cum = 0.0;
  bool started = false;
};

void emit_step(Sinks& sinks, const Trace& tr) {
  const StepRecord& r = tr.records.back();
  if (!sinks.started) {
    sinks.prev_energy = tr.initial_energy;
    sinks.started = true;
  }
  BalanceRow b;
  b.k = r.k;
  b.dE = r.energy - sinks.prev_energy;
  b.R_inc = r.R_inc;
  b.visc = r.dz_norm_V * r.dual_distance;
  b.work = r.work;
  b.residual = b.dE + b.R_inc + b.visc - b.work;
  sinks.cum += b.residual;
  b.cum_residual = sinks.cum;
  sinks.prev_energy = r.energy;
  sinks.trace << trace_row(r) << '\n' << std::flush;
  sinks.balance << balance_row(b) << '\n' << std::flush;
}

int zero_dim_verification(const RunConfig& c, const ZeroDimModel& m, const Trace& tr, json& summary) {
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double h = 1e-4;
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double t = U(rng) * m.T;
    const double u = 4.0 * (U(rng) - 0.5) * std::max(1.0, m.ell(m.T) / (m.a * m.eta));
    const double zp = U(rng);
    const double rho = 0.5 * U(rng);
    const double z = zero_dim_z_step(m, u, zp, rho).z[0];
    worst = std::max(worst, std::abs(z - brute_force_z_step(t, u, zp, rho, m, h)));
  }
  double worst_trace = 0.0;
  for (int k = 0; k <= tr.N(); ++k) {
    const auto& cur = tr.snapshots.at(k);
    const auto& prev = tr.snapshots.at(k - 1);
    const double zo = brute_force_z_step(tr.records[k].t, cur.u[0], prev.z[0], tr.rho(), m, h);
    worst_trace = std::max(worst_trace, std::abs(zo - cur.z[0]));
  }
  summary["oracle_random_max_error"] = worst;
  summary["oracle_trace_max_error"] = worst_trace;
  const bool ok = worst <= 2 * h && worst_trace <= 2 * h;
  summary["oracle_pass"] = ok;
  return ok ? 0 : 2;
}

}  // namespace

int execute(const RunConfig& cfg, std::ostream& log) {
  const fs::path dir(cfg.output.directory);
  json manifest = json::parse(cfg.manifest_json());
  try {
    cfg.validate();
    fs::create_directories(dir);
    manifest["status"] = "running";
    write_json_file(dir / "manifest.json", manifest);

    SchemeParams params = cfg.scheme;
    params.T = cfg.final_time();
    Sinks sinks;
    sinks.trace.open(dir / "trace.csv");
    sinks.balance.open(dir / "balance.csv");
    if (!sinks.trace || !sinks.balance) throw ConfigError("cannot write to " + dir.string());
    sinks.trace << kTraceHeader << '\n';
    sinks.balance << kBalanceHeader << '\n';

    RunOptions opts;
    opts.snapshots.stride = cfg.output.snapshot_stride;
    opts.snapshots.jump_onsets = cfg.output.jump_snapshots;
    const FemModel* fem_ptr = nullptr;
    const double tol_time = params.tol_time;
    opts.on_step = [&](const Trace& tr, const State& s) {
      emit_step(sinks, tr);
      const StepRecord& r = tr.records.back();
      if (r.k % 50 == 0 || r.t == params.T)
        log << "step " << r.k << " t=" << r.t << " dt=" << r.dt << " dz=" << r.dz_norm_V << " am=" << r.am_iters
            << (std::isnan(r.reaction) ? std::string() : " F=" + format_double(r.reaction)) << '\n';
      if (fem_ptr && cfg.output.vtk) {
        const bool onset = cfg.output.jump_snapshots && r.dt <= tol_time &&
                           (tr.records.size() < 2 || tr.records[tr.records.size() - 2].dt > tol_time);
        const bool stride = cfg.output.snapshot_stride > 0 && r.k % cfg.output.snapshot_stride == 0;
        if (onset || stride || r.t == params.T) {
          std::ostringstream name;
          name << "fields_" << std::setw(6) << std::setfill('0') << r.k << ".vtk";
          std::ofstream f(dir / name.str());
          std::vector<double> z(s.z.data(), s.z.data() + s.z.size());
          std::vector<double> u(s.u.data(), s.u.data() + s.u.size());
          write_vtk(f, fem_ptr->mesh(), {{"z", 1, &z}, {"u", 2, &u}}, "step " + std::to_string(r.k));
        }
      }
    };

    Trace trace;
    json summary;
    int status = 0;
    double area = 1.0;
    const auto t_start = std::chrono::steady_clock::now();
    if (cfg.experiment == Experiment::ZeroDim) {
      ZeroDimModel m = cfg.zerodim;
      m.rho = params.rho;
      m.T = params.T;
      if (cfg.method == "pure_am") {
        ZeroDimProblem prob(m);
        opts.snapshots.all = true;
        trace = run_pure_am(prob, params, Eigen::VectorXd::Constant(1, m.z0), cfg.am_steps, opts);
      } else {
        trace = run_zero_dim(m, params, opts);
        status = zero_dim_verification(cfg, m, trace, summary);
      }
    } else {
      BuiltFem b = build_fem(cfg);
      fem_ptr = b.fem.get();
      area = b.fem->weights().sum();
      log << "mesh: " << b.fem->mesh().num_elements() << " elements, " << b.fem->num_nodes() << " nodes\n";
      if (cfg.output.vtk) {
        std::ofstream f(dir / "mesh.vtk");
        write_vtk(f, b.fem->mesh(), {});
      }
      if (cfg.method == "pure_am") trace = run_pure_am(*b.fem, params, b.z0, cfg.am_steps, opts);
      else trace = run(*b.fem, params, b.z0, opts);
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    const auto inv = check_trace_invariants(trace);
    // the Newton tolerance bounds the residual per unit weight; its dual norm grows with the domain size
    const double q = params.norm.kind == NormKind::H1 ? 2.0 : params.norm.alpha;
    const double dist_tol = 10.0 * params.tol_newton * std::pow(area, 1.0 - 1.0 / q);
    const auto comp = complementarity_check(trace, params.tol_time, dist_tol);
    summary["N"] = trace.N();
    summary["S_rho"] = trace.S();
    summary["invariant_violations"] = inv.size();
    summary["complementarity_violations"] = comp.size();
    summary["dual_tolerance"] = dist_tol;
    summary["cumulative_residual"] = energy_balance(trace).cumulative();
    summary["balance_exact"] = trace.mode == LoadMode::TractionRamp;
    summary["wall_seconds"] = seconds;
    manifest["summary"] = summary;
    manifest["status"] = status == 0 ? "ok" : "verification failed";
    write_json_file(dir / "manifest.json", manifest);
    log << "finished: N=" << trace.N() << " S_rho=" << trace.S() << " invariant violations=" << inv.size()
        << " complementarity violations=" << comp.size() << '\n';
    return status;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    try {
      manifest["status"] = std::string("failed: ") + e.what();
      if (fs::exists(dir)) write_json_file(dir / "manifest.json", manifest);
    } catch (...) {
    }
    return 1;
  }
}

int sweep(const RunConfig& cfg, const std::string& key, const std::vector<std::string>& values, std::ostream& log) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<RunConfig> runs;
  for (const auto& v : values) {
    RunConfig c = cfg;
    apply_override(c, key, v);
    const std::string leaf = key.substr(key.find('.') == std::string::npos ? 0 : key.find('.') + 1);
    c.output.directory = (fs::path(cfg.output.directory) / (leaf + "_" + v)).string();
    c.validate();
    runs.push_back(c);
  }
  int threads = 1;
  if (const char* env = std::getenv("PFBV_THREADS")) threads = std::max(1, std::atoi(env));
  threads = std::min<int>(threads, static_cast<int>(runs.size()));
  std::vector<int> status(runs.size(), 0);
  std::mutex m;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(m);
        if (next >= runs.size()) return;
        i = next++;
      }
      fs::create_directories(runs[i].output.directory);
      std::ofstream runlog(fs::path(runs[i].output.directory) / "run.log");
      status[i] = execute(runs[i], runlog);
      std::lock_guard<std::mutex> lock(m);
      log << runs[i].output.directory << ": " << (status[i] == 0 ? "ok" : "failed") << '\n';
    }
  };
  std::vector<std::thread> pool;
  for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return *std::max_element(status.begin(), status.end());
}

namespace {

std::vector<std::vector<std::string>> read_csv(const fs::path& p, std::string& header) {
  std::ifstream f(p);
  if (!f) throw ConfigError("cannot read " + p.string());
  std::getline(f, header);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    rows.push_back(cols);
  }
  return rows;
}

double cell_value(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return kInfinity;
  if (s == "-inf") return -kInfinity;
  return to_double("csv", s);
}

}  // namespace

int verify(const std::string& dir_s, std::ostream& log) {
  const fs::path dir(dir_s);
  std::ifstream mf(dir / "manifest.json");
  if (!mf) {
    log << "error: no manifest.json in " << dir_s << '\n';
    return 1;
  }
  const json man = json::parse(mf);
  const double rho = man["scheme"]["rho"].get<double>();
  const double T = man["scheme"]["T"].get<double>();
  const double tol_newton = man["scheme"]["tol_newton"].get<double>();
  const double dist_tol = man["summary"].value("dual_tolerance", 10 * tol_newton);
  const bool pure = man["experiment"]["method"].get<std::string>() == "pure_am";
  const bool dirichlet = man["load"]["mode"].get<std::string>() == "dirichlet";
  const double ubar_rate = man["load"]["ubar_rate"].get<double>();
  int failures = 0;
  auto fail = [&](const std::string& what) {
    ++failures;
    log << "FAIL " << what << '\n';
  };

  std::string header;
  const auto rows = read_csv(dir / "trace.csv", header);
  if (header != kTraceHeader) fail("trace.csv header");
  if (rows.empty()) {
    fail("trace.csv is empty");
    return 1;
  }
  struct R {
    double t, dt, dz, energy, R, F, dist;
  };
  std::vector<R> rs;
  for (const auto& c : rows) {
    if (c.size() != 10) {
      fail("trace.csv row width");
      return 1;
    }
    rs.push_back({cell_value(c[1]), cell_value(c[2]), cell_value(c[3]), cell_value(c[5]), cell_value(c[6]),
                  cell_value(c[7]), cell_value(c[8])});
  }
  for (std::size_t k = 0; k < rs.size(); ++k) {
    const auto& r = rs[k];
    if (r.dt < 0.0 || (!pure && r.dt > rho * (1 + 1e-9))) fail("dt range at step " + std::to_string(k));
    if (!pure && r.dz > rho * (1 + 1e-6)) fail("ball radius at step " + std::to_string(k));
    if (k > 0 && r.t < rs[k - 1].t) fail("time order at step " + std::to_string(k));
    if (k > 0 && r.dt > 1e-10 && rs[k - 1].dist > dist_tol) fail("complementarity at step " + std::to_string(k));
    if (!pure && k + 1 < rs.size()) {
      const double v = (rs[k + 1].dt + r.dz) / rho;
      const bool last = k + 2 == rs.size();
      if ((!last && std::abs(v - 1.0) > 1e-8) || (last && v > 1.0 + 1e-8))
        fail("normalization at step " + std::to_string(k + 1));
    }
  }
  if (rs.back().t != T) fail("final time differs from T");

  std::string bh;
  const auto brows = read_csv(dir / "balance.csv", bh);
  if (bh != kBalanceHeader) fail("balance.csv header");
  if (brows.size() != rows.size()) fail("balance.csv row count");
  double cum = 0.0;
  for (std::size_t k = 0; k < std::min(brows.size(), rs.size()); ++k) {
    const auto& b = brows[k];
    const double dE = cell_value(b[1]), Rinc = cell_value(b[2]), visc = cell_value(b[3]), work = cell_value(b[4]),
                 res = cell_value(b[5]), cres = cell_value(b[6]);
    const double scale = 1.0 + std::abs(dE) + std::abs(work) + std::abs(rs[k].energy);
    auto close = [&](double a, double c) { return std::abs(a - c) <= 1e-9 * scale; };
    if (k > 0 && !close(dE, rs[k].energy - rs[k - 1].energy)) fail("balance dE at step " + std::to_string(k));
    if (!close(Rinc, rs[k].R)) fail("balance R_inc at step " + std::to_string(k));
    if (!close(visc, rs[k].dz * rs[k].dist)) fail("balance visc at step " + std::to_string(k));
    if (dirichlet && k > 0) {
      const double w = 0.5 * (rs[k].F + rs[k - 1].F) * ubar_rate * (rs[k].t - rs[k - 1].t);
      if (!close(work, w)) fail("balance work at step " + std::to_string(k));
    }
    if (!close(res, dE + Rinc + visc - work)) fail("balance residual at step " + std::to_string(k));
    cum += res;
    if (!close(cres, cum)) fail("balance cumulative residual at step " + std::to_string(k));
  }
  log << "verified " << rows.size() << " steps in " << dir_s << ": " << (failures ? "FAIL" : "PASS") << " ("
      << failures << " problems)\n";
  return failures ? 1 : 0;
}

}  // namespace pfbv
