#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pfbv/model.hpp"
#include "pfbv/zerodim.hpp"

namespace pfbv {

enum class Experiment { CT, LShape, ZeroDim, Custom };

struct MeshSettings {
  double side = 1.0;   // ct / custom square
  double leg = 250.0;  // lshape
  double coarse_h = 0.05;
  double fine_h = 0.0125;
  std::string notch = "slit";  // slit | damage | none
  double notch_length = 0.5;
};

struct LoadSettings {
  LoadMode mode = LoadMode::DirichletRamp;
  double u_max = 0.3;
  double traction_max = 1.0;
};

struct OutputSettings {
  std::string directory = "out";
  int snapshot_stride = 10;
  bool vtk = true;
  bool jump_snapshots = true;
};

struct RunConfig {
  Experiment experiment = Experiment::CT;
  std::string method = "em";  // em | pure_am
  int am_steps = 100;
  unsigned seed = 1;
  MaterialModel material;
  SchemeParams scheme;
  bool T_explicit = false;
  MeshSettings mesh;
  LoadSettings load;
  OutputSettings output;
  ZeroDimModel zerodim;

  /// Validates every field; throws ConfigError naming the offending one.
  void validate() const;
  /// Final time implied by the preset and overrides.
  double final_time() const;
  std::string manifest_json() const;
};

std::string experiment_name(Experiment e);
RunConfig preset_config(Experiment e);

/// Parses INI text; errors carry the source name and line number.
RunConfig parse_config(std::istream& is, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);
/// Sets "section.key" (or a bare scheme key such as "rho") to a textual value.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

/// Runs one experiment and writes trace.csv, balance.csv, VTK snapshots and manifest.json.
int execute(const RunConfig& cfg, std::ostream& log);
/// One run per value, each in <directory>/<key>_<value>; parallel over PFBV_THREADS threads.
int sweep(const RunConfig& cfg, const std::string& key, const std::vector<std::string>& values, std::ostream& log);
/// Re-checks stored artifacts of a run directory.
int verify(const std::string& dir, std::ostream& log);

/// Shortest round-trip decimal representation.
std::string format_double(double x);

inline constexpr const char* kTraceHeader = "k,t,dt,dz_norm_V,am_iters,energy,R_inc,reaction,dual_distance,ball_active";
inline constexpr const char* kBalanceHeader = "k,dE,R_inc,visc,work,residual,cum_residual";
inline constexpr const char* kVersion = "pfbv 1.0.0";

}  // namespace pfbv
