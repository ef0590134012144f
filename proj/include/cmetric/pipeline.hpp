#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "cmetric/collocation.hpp"
#include "cmetric/common.hpp"
#include "cmetric/cpa.hpp"
#include "cmetric/dynsys.hpp"
#include "cmetric/kernel.hpp"
#include "cmetric/mesh.hpp"
#include "cmetric/recovery.hpp"
#include "cmetric/verify.hpp"

namespace cmetric {

namespace fs = std::filesystem;

enum class Mode { Relaxed, Strict };

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitNumerical = 3,
  kExitCapsExhausted = 4,
};

struct CollocationConfig {
  std::string grid = "hexagonal";
  double spacing = 0.0;
  std::optional<Box> box;
  std::optional<fs::path> region_polygon;
  double region_scale = 1.0;
  std::vector<HalfSpace> halfspaces;
  /// Explicit point list; replaces the lattice when set.
  std::optional<fs::path> points_csv;
  /// Probe points per axis for the fill-distance estimate (0 = skip).
  int fill_probe = 0;
};

struct TriangulationConfig {
  Box box;
  std::optional<double> rho;
  std::optional<std::vector<long>> vertices_per_axis;
  double d = 0.0;
  std::size_t max_vertices = kDefaultMaxVertices;
};

struct PipelineConfig {
  fs::path base_dir;
  SystemModel system;
  int kernel_k = 4;
  double kernel_c = 0.9;
  CollocationConfig collocation;
  TriangulationConfig triangulation;
  VerificationConfig verification;
  SymMatrix C;
  bool cross_system = false;
  std::optional<fs::path> recovery_path;
  SolveOptions solve;
  Mode mode = Mode::Relaxed;
  double collocation_factor = 2.0;
  double triangulation_factor = 8.0;
  int max_collocation_refinements = 2;
  int max_triangulation_refinements = 1;
  int threads = 1;
  fs::path out_dir = "out";
};

namespace internal {

inline const toml::table* subtable(const toml::table& root, const char* key) {
  const toml::node* node = root.get(key);
  if (!node) return nullptr;
  if (!node->is_table()) throw ConfigError(std::string("config: [") + key + "] must be a table");
  return node->as_table();
}

inline double to_double(const toml::node& node, const std::string& what) {
  if (auto v = node.value<double>()) return *v;
  throw ConfigError("config: " + what + " must be a number");
}

template <class T>
T required(const toml::table& t, const char* key, const std::string& section) {
  const toml::node* node = t.get(key);
  if (!node) throw ConfigError("config: missing " + section + "." + key);
  if constexpr (std::is_same_v<T, double>) {
    return to_double(*node, section + "." + key);
  } else {
    if (auto v = node->value<T>()) return *v;
    throw ConfigError("config: " + section + "." + key + " has the wrong type");
  }
}

template <class T>
T optional_value(const toml::table* t, const char* key, T fallback, const std::string& section) {
  if (!t || !t->get(key)) return fallback;
  return required<T>(*t, key, section);
}

inline std::vector<double> number_array(const toml::node& node, const std::string& what) {
  const toml::array* arr = node.as_array();
  if (!arr) throw ConfigError("config: " + what + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& el : *arr) out.push_back(to_double(el, what));
  return out;
}

inline Vec vec_from(const std::vector<double>& v) {
  Vec out(static_cast<int>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<int>(i)] = v[i];
  return out;
}

inline Mat matrix_from(const toml::node& node, const std::string& what) {
  const toml::array* rows = node.as_array();
  if (!rows || rows->empty()) throw ConfigError("config: " + what + " must be a nested array");
  const int n = static_cast<int>(rows->size());
  if (n > kMaxDim) throw ConfigError("config: " + what + " dimension exceeds the supported maximum");
  Mat M(n, n);
  for (int i = 0; i < n; ++i) {
    const std::vector<double> r = number_array((*rows)[i], what);
    if (static_cast<int>(r.size()) != n) throw ConfigError("config: " + what + " must be square");
    for (int j = 0; j < n; ++j) M(i, j) = r[j];
  }
  return M;
}

inline Box box_from(const toml::table& t, const std::string& section, int n) {
  const toml::node* lo = t.get("lo");
  const toml::node* hi = t.get("hi");
  if (!lo || !hi) throw ConfigError("config: " + section + " needs lo and hi");
  const Vec l = vec_from(number_array(*lo, section + ".lo"));
  const Vec h = vec_from(number_array(*hi, section + ".hi"));
  if (l.size() != n || h.size() != n) {
    throw ConfigError("config: " + section + " box has the wrong dimension");
  }
  try {
    return Box(l, h);
  } catch (const InputError& e) {
    throw ConfigError("config: " + section + ": " + e.what());
  }
}

inline SystemModel system_from(const toml::table& t) {
  const std::string name = required<std::string>(t, "name", "system");
  if (name == "vanderpol") return vanderpol();
  if (name == "speed_control") {
    const double kd = optional_value<double>(&t, "kd", 1.0, "system");
    const double g = optional_value<double>(&t, "g", 6.0, "system");
    const double eps = optional_value<double>(&t, "eps", 0.0, "system");
    if (kd == 0.0) throw ConfigError("config: system.kd must be nonzero");
    return speed_control_perturbed(kd, g, eps);
  }
  if (name == "linear") {
    const toml::node* a = t.get("matrix");
    if (!a) throw ConfigError("config: linear system needs system.matrix");
    return linear_system(matrix_from(*a, "system.matrix"));
  }
  if (name == "polynomial") {
    const int n = static_cast<int>(required<int64_t>(t, "n", "system"));
    if (n < 1 || n > kMaxDim) throw ConfigError("config: system.n out of range");
    const toml::array* comps = t.get_as<toml::array>("f");
    if (!comps || static_cast<int>(comps->size()) != n) {
      throw ConfigError("config: system.f must list one term array per component");
    }
    std::vector<std::vector<PolynomialTerm>> components;
    for (const auto& comp : *comps) {
      const toml::array* terms = comp.as_array();
      if (!terms) throw ConfigError("config: system.f entries must be arrays of terms");
      std::vector<PolynomialTerm> list;
      for (const auto& term : *terms) {
        const toml::table* tt = term.as_table();
        if (!tt) throw ConfigError("config: polynomial terms are tables {coefficient, exponents}");
        PolynomialTerm p;
        p.coefficient = required<double>(*tt, "coefficient", "system.f");
        const toml::node* ex = tt->get("exponents");
        if (!ex) throw ConfigError("config: polynomial term without exponents");
        for (double e : number_array(*ex, "system.f.exponents")) {
          if (e != std::floor(e)) throw ConfigError("config: exponents must be integers");
          p.exponents.push_back(static_cast<int>(e));
        }
        list.push_back(std::move(p));
      }
      components.push_back(std::move(list));
    }
    const std::string label = optional_value<std::string>(&t, "label", "polynomial", "system");
    try {
      return polynomial_system(label, n, std::move(components));
    } catch (const InputError& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  throw ConfigError("config: unknown system '" + name + "'");
}

inline fs::path resolve_path(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace internal

/// Parses a TOML pipeline configuration. Relative paths inside the file are
/// resolved against the file's directory. Throws ConfigError.
inline PipelineConfig load_config(const fs::path& path) {
  using namespace internal;
  if (!fs::exists(path)) throw ConfigError("config file '" + path.string() + "' not found");
  toml::table root;
  try {
    root = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config '" << path.string() << "': " << e.description() << " at " << e.source().begin;
    throw ConfigError(msg.str());
  }
  PipelineConfig cfg;
  cfg.base_dir = path.parent_path();

  const toml::table* sys = subtable(root, "system");
  if (!sys) throw ConfigError("config: missing [system]");
  cfg.system = system_from(*sys);
  const int n = cfg.system.n;

  const toml::table* ker = subtable(root, "kernel");
  cfg.kernel_k = static_cast<int>(optional_value<int64_t>(ker, "k", 4, "kernel"));
  cfg.kernel_c = optional_value<double>(ker, "c", 0.9, "kernel");
  build_wendland(n, cfg.kernel_k, cfg.kernel_c);

  const toml::table* col = subtable(root, "collocation");
  if (!col) throw ConfigError("config: missing [collocation]");
  auto& cc = cfg.collocation;
  cc.grid = optional_value<std::string>(col, "grid", "hexagonal", "collocation");
  if (cc.grid != "hexagonal" && cc.grid != "rectangular") {
    throw ConfigError("config: collocation.grid must be hexagonal or rectangular");
  }
  if (col->get("points_csv")) {
    cc.points_csv = resolve_path(cfg.base_dir, required<std::string>(*col, "points_csv", "collocation"));
  } else {
    cc.spacing = required<double>(*col, "spacing", "collocation");
    if (!(cc.spacing > 0.0)) throw ConfigError("config: collocation.spacing must be positive");
  }
  if (col->get("lo") || col->get("hi")) cc.box = box_from(*col, "collocation", n);
  if (col->get("region_polygon")) {
    cc.region_polygon =
        resolve_path(cfg.base_dir, required<std::string>(*col, "region_polygon", "collocation"));
    if (n != 2) throw ConfigError("config: region_polygon requires n = 2");
  }
  cc.region_scale = optional_value<double>(col, "region_scale", 1.0, "collocation");
  if (!(cc.region_scale > 0.0)) throw ConfigError("config: collocation.region_scale must be positive");
  if (const toml::array* hs = col->get_as<toml::array>("halfspaces")) {
    for (const auto& h : *hs) {
      const toml::table* ht = h.as_table();
      if (!ht || !ht->get("a")) throw ConfigError("config: halfspaces are tables {a, b}");
      HalfSpace half{vec_from(number_array(*ht->get("a"), "collocation.halfspaces.a")),
                     required<double>(*ht, "b", "collocation.halfspaces")};
      if (half.a.size() != n) throw ConfigError("config: halfspace normal has the wrong dimension");
      cc.halfspaces.push_back(std::move(half));
    }
  }
  cc.fill_probe = static_cast<int>(optional_value<int64_t>(col, "fill_probe", 0, "collocation"));
  if (cc.fill_probe == 1 || cc.fill_probe < 0) throw ConfigError("config: collocation.fill_probe must be 0 or >= 2");
  if (!cc.points_csv && !cc.box && !cc.region_polygon) {
    throw ConfigError("config: collocation needs lo/hi or region_polygon");
  }

  const toml::table* tri = subtable(root, "triangulation");
  if (!tri) throw ConfigError("config: missing [triangulation]");
  auto& tc = cfg.triangulation;
  tc.box = box_from(*tri, "triangulation", n);
  if (tri->get("rho")) {
    tc.rho = required<double>(*tri, "rho", "triangulation");
    if (!(*tc.rho > 0.0)) throw ConfigError("config: triangulation.rho must be positive");
  }
  if (const toml::node* vpa = tri->get("vertices_per_axis")) {
    std::vector<long> counts;
    for (double v : number_array(*vpa, "triangulation.vertices_per_axis")) {
      if (v < 2 || v != std::floor(v)) throw ConfigError("config: vertices_per_axis entries must be integers >= 2");
      counts.push_back(static_cast<long>(v));
    }
    if (static_cast<int>(counts.size()) != n) throw ConfigError("config: vertices_per_axis needs n entries");
    tc.vertices_per_axis = counts;
  }
  if (tc.rho.has_value() == tc.vertices_per_axis.has_value()) {
    throw ConfigError("config: triangulation needs exactly one of rho and vertices_per_axis");
  }
  tc.d = optional_value<double>(tri, "d", 2.0 * std::sqrt(static_cast<double>(n)), "triangulation");
  if (tc.d < 2.0 * std::sqrt(static_cast<double>(n)) * (1.0 - 1e-12)) {
    throw ConfigError("config: triangulation.d must be at least 2 sqrt(n)");
  }
  tc.max_vertices = static_cast<std::size_t>(
      optional_value<int64_t>(tri, "max_vertices", static_cast<int64_t>(kDefaultMaxVertices), "triangulation"));

  const toml::table* ver = subtable(root, "verification");
  cfg.C = SymMatrix::identity(n);
  if (ver) {
    if (const toml::node* c = ver->get("C")) {
      const Mat M = matrix_from(*c, "verification.C");
      if (M.rows() != n) throw ConfigError("config: verification.C has the wrong dimension");
      if (!(M - M.transpose()).isZero(0.0)) throw ConfigError("config: verification.C must be symmetric");
      cfg.C = SymMatrix::from_upper(M);
    }
    if (ver->get("eps0")) cfg.verification.eps0 = required<double>(*ver, "eps0", "verification");
    const std::string b = optional_value<std::string>(ver, "bounds", "per_simplex", "verification");
    if (b == "per_simplex") {
      cfg.verification.bounds = BoundGranularity::PerSimplex;
    } else if (b == "global") {
      cfg.verification.bounds = BoundGranularity::Global;
    } else {
      throw ConfigError("config: verification.bounds must be per_simplex or global");
    }
    cfg.cross_system = optional_value<bool>(ver, "cross_system", false, "verification");
    if (ver->get("recovery")) {
      cfg.recovery_path = resolve_path(cfg.base_dir, required<std::string>(*ver, "recovery", "verification"));
    }
  }
  if (!(eigen_range(cfg.C).min > 0.0)) throw ConfigError("config: verification.C must be positive definite");
  cfg.verification.C = cfg.C;
  resolve_eps0(cfg.verification, n);

  const toml::table* solve = subtable(root, "solve");
  cfg.solve.jitter = optional_value<double>(solve, "jitter", 0.0, "solve");
  cfg.solve.max_condition = optional_value<double>(solve, "max_condition", 1e18, "solve");
  if (cfg.solve.jitter < 0.0) throw ConfigError("config: solve.jitter must be nonnegative");

  const toml::table* pipe = subtable(root, "pipeline");
  const std::string mode = optional_value<std::string>(pipe, "mode", "relaxed", "pipeline");
  if (mode == "relaxed") {
    cfg.mode = Mode::Relaxed;
  } else if (mode == "strict") {
    cfg.mode = Mode::Strict;
  } else {
    throw ConfigError("config: pipeline.mode must be strict or relaxed");
  }
  cfg.collocation_factor = optional_value<double>(pipe, "collocation_factor", 2.0, "pipeline");
  cfg.triangulation_factor = optional_value<double>(pipe, "triangulation_factor", 8.0, "pipeline");
  if (!(cfg.collocation_factor > 1.0) || !(cfg.triangulation_factor > 1.0)) {
    throw ConfigError("config: refinement factors must exceed 1");
  }
  cfg.max_collocation_refinements =
      static_cast<int>(optional_value<int64_t>(pipe, "max_collocation_refinements", 2, "pipeline"));
  cfg.max_triangulation_refinements =
      static_cast<int>(optional_value<int64_t>(pipe, "max_triangulation_refinements", 1, "pipeline"));
  if (cfg.max_collocation_refinements < 0 || cfg.max_triangulation_refinements < 0) {
    throw ConfigError("config: refinement caps must be nonnegative");
  }
  cfg.threads = static_cast<int>(optional_value<int64_t>(pipe, "threads", 1, "pipeline"));
  if (cfg.threads < 0) throw ConfigError("config: pipeline.threads must be >= 0");

  const toml::table* out = subtable(root, "output");
  cfg.out_dir = resolve_path(cfg.base_dir, optional_value<std::string>(out, "dir", "out", "output"));
  return cfg;
}

/// Timestamped text log, written to run.log at the end of a command.
class RunLog {
 public:
  RunLog() : start_(std::chrono::steady_clock::now()) {}

  void info(const std::string& msg) {
    const double t =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    char stamp[32];
    std::snprintf(stamp, sizeof(stamp), "[%9.3f s] ", t);
    lines_ << stamp << msg << "\n";
  }

  std::string text() const { return lines_.str(); }

  void write(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary);
    out << lines_.str();
  }

 private:
  std::chrono::steady_clock::time_point start_;
  std::ostringstream lines_;
};

inline Box collocation_box(const CollocationConfig& cc) {
  if (cc.box) return *cc.box;
  const Box b = Polygon::from_csv(cc.region_polygon->string()).bounding_box();
  return Box(b.lo * cc.region_scale, b.hi * cc.region_scale);
}

/// Collocation points at the given spacing (ignored for explicit point lists).
inline CollocationSet build_collocation(const PipelineConfig& cfg, double spacing) {
  const auto& cc = cfg.collocation;
  const int n = cfg.system.n;
  if (cc.points_csv) {
    if (!fs::exists(*cc.points_csv)) {
      throw ConfigError("collocation points file '" + cc.points_csv->string() + "' not found");
    }
    CollocationSet set;
    set.points = read_points_csv(cc.points_csv->string());
    if (set.points.empty()) throw ConfigError("collocation points file is empty");
    Vec lo = set.points.front(), hi = lo;
    for (const auto& p : set.points) {
      if (p.size() != n) throw ConfigError("collocation points have the wrong dimension");
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    set.domain = Box(lo, hi);
    return set;
  }
  RegionPredicate pred;
  if (cc.region_polygon) {
    if (!fs::exists(*cc.region_polygon)) {
      throw ConfigError("region polygon '" + cc.region_polygon->string() + "' not found");
    }
    const Polygon poly = Polygon::from_csv(cc.region_polygon->string());
    const double s = cc.region_scale;
    pred = [poly, s](const Vec& p) { return poly.contains(p[0] / s, p[1] / s); };
  }
  if (!cc.halfspaces.empty()) pred = intersect(pred, halfspace_predicate(cc.halfspaces));
  const Box box = collocation_box(cc);
  return cc.grid == "hexagonal" ? hexagonal_grid(box, spacing, pred)
                                : rectangular_grid(box, spacing, pred);
}

/// Triangulation at refinement level `level` (each level divides the mesh
/// width by triangulation_factor).
inline std::shared_ptr<const Triangulation> build_triangulation(const PipelineConfig& cfg,
                                                                int level) {
  const auto& tc = cfg.triangulation;
  const double div = std::pow(cfg.triangulation_factor, level);
  Triangulation tri = [&] {
    if (tc.rho) return standard_triangulation(tc.box, *tc.rho / div, tc.max_vertices, cfg.threads);
    std::vector<long> counts;
    for (long c : *tc.vertices_per_axis) {
      counts.push_back(static_cast<long>(std::llround(static_cast<double>(c - 1) * div)) + 1);
    }
    return standard_triangulation_counts(tc.box, counts, tc.max_vertices, cfg.threads);
  }();
  if (tri.max_degeneracy() > tc.d * (1.0 + 1e-12)) {
    throw ConfigError("triangulation degeneracy " + std::to_string(tri.max_degeneracy()) +
                      " exceeds d = " + std::to_string(tc.d));
  }
  return std::make_shared<const Triangulation>(std::move(tri));
}

struct StageResult {
  std::optional<RecoverySolution> recovery;
  std::optional<CollocationSet> collocation;
  double spacing = 0.0;
  std::optional<double> fill;
  std::shared_ptr<const Triangulation> tri;
  std::optional<CpaMetric> cpa;
  std::optional<VerificationReport> report;
  int collocation_level = 0;
  int triangulation_level = 0;
  int iterations = 0;
};

inline std::string format_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline RecoverySolution run_recovery(const PipelineConfig& cfg, const CollocationSet& set,
                                     RunLog& log) {
  const WendlandKernel ker = build_wendland(cfg.system.n, cfg.kernel_k, cfg.kernel_c);
  RecoveryOptions ro;
  ro.solve = cfg.solve;
  ro.threads = cfg.threads;
  RecoverySolution rec = solve_recovery(cfg.system, ker, set.points, cfg.C, ro);
  log.info("recovery: N = " + std::to_string(set.size()) + ", condition " +
           format_g(rec.gram_condition) + ", residual " + format_g(rec.solve_residual));
  return rec;
}

inline void check_system_match(const PipelineConfig& cfg, const RecoverySolution& rec) {
  if (rec.dim() != cfg.system.n) {
    throw ConfigError("recovery dimension " + std::to_string(rec.dim()) +
                      " does not match the configured system");
  }
  if (rec.system_name() != cfg.system.name && !cfg.cross_system) {
    throw ConfigError("recovery was computed for '" + rec.system_name() +
                      "' but the configuration selects '" + cfg.system.name +
                      "' (set verification.cross_system = true to allow)");
  }
}

inline VerificationReport run_verification(const PipelineConfig& cfg, const CpaMetric& cpa,
                                           RunLog& log) {
  VerificationConfig vc = cfg.verification;
  vc.threads = cfg.threads;
  VerificationReport rep = verify_all(cpa, cfg.system, vc);
  log.info("verification: " + std::to_string(rep.count(rep.pass)) + " / " +
           std::to_string(rep.num_simplices()) + " simplices pass, " +
           std::to_string(rep.failing_vertices_c1().size()) + " vertices fail constraint 1");
  return rep;
}

inline nlohmann::ordered_json summary_json(const PipelineConfig& cfg, const StageResult& r,
                                           const std::string& command, int exit_code) {
  nlohmann::ordered_json j = report_summary(*r.report, *r.tri);
  nlohmann::ordered_json p;
  p["command"] = command;
  p["mode"] = cfg.mode == Mode::Strict ? "strict" : "relaxed";
  p["kernel"] = {{"k", cfg.kernel_k}, {"c", cfg.kernel_c}};
  if (r.collocation) {
    p["collocation"] = {{"points", r.collocation->size()}, {"spacing", r.spacing}};
    if (r.fill) p["collocation"]["fill_distance"] = *r.fill;
  }
  if (r.recovery) {
    p["recovery"] = {{"system", r.recovery->system_name()},
                     {"gram_condition", r.recovery->gram_condition},
                     {"solve_residual", r.recovery->solve_residual}};
  }
  p["triangulation"] = {{"level", r.triangulation_level},
                        {"max_diameter", r.tri->max_diameter()},
                        {"d", cfg.triangulation.d}};
  p["iterations"] = r.iterations;
  p["exit_code"] = exit_code;
  j["pipeline"] = p;
  return j;
}

inline void write_verification_artifacts(const PipelineConfig& cfg, const StageResult& r,
                                         const fs::path& out, const std::string& command,
                                         int exit_code) {
  write_cpa_csv(*r.cpa, (out / "vertices.csv").string(), (out / "simplices.csv").string());
  write_report_vertices_csv(*r.report, *r.tri, (out / "report_vertices.csv").string());
  write_report_simplices_csv(*r.report, (out / "report_simplices.csv").string());
  std::ofstream js(out / "summary.json", std::ios::binary);
  js << summary_json(cfg, r, command, exit_code).dump(2) << "\n";
}

inline void prepare_output(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ConfigError("cannot create output directory '" + out.string() + "'");
}

inline CollocationSet collocation_with_fill(const PipelineConfig& cfg, double spacing,
                                            StageResult& r, RunLog& log) {
  CollocationSet set = build_collocation(cfg, spacing);
  if (cfg.collocation.fill_probe >= 2) {
    r.fill = fill_distance(set, cfg.collocation.fill_probe, cfg.threads);
    log.info("collocation: fill distance " + format_g(*r.fill) + " (probe resolution " +
             format_g(probe_resolution(set, cfg.collocation.fill_probe)) + ")");
  }
  log.info("collocation: " + std::to_string(set.size()) + " points, spacing " + format_g(spacing));
  return set;
}

/// solve: collocation and recovery only. Writes recovery.json,
/// collocation.csv and run.log.
inline int run_solve(const PipelineConfig& cfg, const fs::path& out) {
  RunLog log;
  log.info("solve: system " + cfg.system.name);
  StageResult r;
  r.spacing = cfg.collocation.spacing;
  const CollocationSet set = collocation_with_fill(cfg, r.spacing, r, log);
  prepare_output(out);
  write_points_csv((out / "collocation.csv").string(), set.points);
  try {
    const RecoverySolution rec = run_recovery(cfg, set, log);
    save_recovery(rec, (out / "recovery.json").string());
  } catch (const NumericalError& e) {
    log.info(std::string("numerical failure: ") + e.what());
    log.write(out / "run.log");
    throw;
  }
  log.write(out / "run.log");
  return kExitOk;
}

/// verify: loads a recovery file and runs triangulation, CPA interpolation
/// and verification. Strict mode returns kExitCapsExhausted unless every
/// simplex passes.
inline int run_verify(const PipelineConfig& cfg, const fs::path& out,
                      const std::optional<fs::path>& recovery_override = {}) {
  RunLog log;
  const fs::path rec_path =
      recovery_override.value_or(cfg.recovery_path.value_or(out / "recovery.json"));
  if (!fs::exists(rec_path)) {
    throw ConfigError("recovery file '" + rec_path.string() + "' not found");
  }
  RecoverySolution rec = load_recovery(rec_path.string());
  check_system_match(cfg, rec);
  log.info("verify: recovery " + rec_path.string() + " (" + rec.system_name() + ") against " +
           cfg.system.name);
  StageResult r;
  r.tri = build_triangulation(cfg, 0);
  prepare_output(out);
  log.info("triangulation: " + std::to_string(r.tri->num_vertices()) + " vertices, " +
           std::to_string(r.tri->num_simplices()) + " simplices");
  r.cpa = interpolate_metric(r.tri, rec, cfg.threads);
  r.report = run_verification(cfg, *r.cpa, log);
  r.recovery = std::move(rec);
  r.iterations = 1;
  const bool all = r.report->count(r.report->pass) == r.report->num_simplices();
  const int code = cfg.mode == Mode::Strict && !all ? kExitCapsExhausted : kExitOk;
  write_verification_artifacts(cfg, r, out, "verify", code);
  log.write(out / "run.log");
  return code;
}

/// run: the full pipeline. Relaxed mode is a single pass; strict mode refines
/// the triangulation and then the collocation grid until every simplex
/// passes or the caps are exhausted.
inline int run_pipeline(const PipelineConfig& cfg, const fs::path& out) {
  RunLog log;
  log.info(std::string("run: system ") + cfg.system.name + ", mode " +
           (cfg.mode == Mode::Strict ? "strict" : "relaxed"));
  prepare_output(out);
  StageResult r;
  int code = kExitOk;
  double spacing = cfg.collocation.spacing;
  const int collo_cap = cfg.mode == Mode::Strict ? cfg.max_collocation_refinements : 0;
  const int tri_cap = cfg.mode == Mode::Strict ? cfg.max_triangulation_refinements : 0;
  bool done = false;
  try {
    for (int cl = 0; cl <= collo_cap && !done; ++cl) {
      StageResult cur;
      cur.collocation_level = cl;
      cur.spacing = spacing;
      cur.collocation = collocation_with_fill(cfg, spacing, cur, log);
      cur.recovery = run_recovery(cfg, *cur.collocation, log);
      for (int tl = 0; tl <= tri_cap; ++tl) {
        std::shared_ptr<const Triangulation> tri;
        try {
          tri = build_triangulation(cfg, tl);
        } catch (const ResourceError& e) {
          if (tl == 0) throw;
          log.info(std::string("triangulation refinement skipped: ") + e.what());
          break;
        }
        cur.tri = tri;
        cur.triangulation_level = tl;
        log.info("triangulation: level " + std::to_string(tl) + ", " +
                 std::to_string(tri->num_vertices()) + " vertices, " +
                 std::to_string(tri->num_simplices()) + " simplices");
        cur.cpa = interpolate_metric(tri, *cur.recovery, cfg.threads);
        cur.report = run_verification(cfg, *cur.cpa, log);
        cur.iterations = r.iterations + 1;
        r = std::move(cur);
        cur = StageResult{};
        cur.collocation_level = r.collocation_level;
        cur.spacing = r.spacing;
        cur.collocation = r.collocation;
        cur.recovery = r.recovery;
        cur.fill = r.fill;
        const VerificationReport& rep = *r.report;
        if (cfg.mode == Mode::Relaxed || rep.count(rep.pass) == rep.num_simplices()) {
          done = true;
          break;
        }
        if (!rep.failing_vertices_c1().empty()) {
          log.info("constraint 1 fails at some vertices; refining the collocation grid");
          break;
        }
        log.info("constraint 4 fails on some simplices; refining the triangulation");
      }
      spacing /= cfg.collocation_factor;
    }
  } catch (const NumericalError& e) {
    log.info(std::string("numerical failure: ") + e.what());
    if (!r.report) {
      log.write(out / "run.log");
      throw;
    }
    code = kExitNumerical;
  }
  if (code == kExitOk && !done) {
    log.info("refinement caps exhausted without a full pass");
    code = kExitCapsExhausted;
  }
  save_recovery(*r.recovery, (out / "recovery.json").string());
  if (r.collocation) write_points_csv((out / "collocation.csv").string(), r.collocation->points);
  write_verification_artifacts(cfg, r, out, "run", code);
  log.info("done, exit code " + std::to_string(code));
  log.write(out / "run.log");
  return code;
}

}  // namespace cmetric
