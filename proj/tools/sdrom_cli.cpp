// Command line driver: mesh/snapshot generation, ROM training, error
// studies, site simulation and damage calibration. One JSON config per run;
// flags override config fields. Exit codes: 0 success, 2 usage error,
// 3 non-convergence, 4 numerics failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "sdrom/calibrate.hpp"
#include "sdrom/presets.hpp"
#include "sdrom/rom.hpp"
#include "sdrom/site.hpp"
#include "sdrom/snapshots.hpp"
#include "sdrom/trimesh.hpp"

#ifndef SDROM_VERSION
#define SDROM_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sdrom;

namespace {

constexpr const char* kVersion = SDROM_VERSION;

struct Options {
  json cfg = json::object();
  std::string command;
  std::string out_dir = ".";
  bool dry_run = false;
  std::uint64_t config_hash = 0;
};

std::string hex16(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  return h;
}

void note_written(const fs::path& path) {
  std::cout << "wrote " << path.string() << " (" << fs::file_size(path)
            << " bytes, fnv1a64 " << hex16(file_hash(path)) << ")\n";
}

fs::path out_path(const Options& o, const std::string& name) {
  return fs::path(o.out_dir) / name;
}

// Every emitted CSV starts with a provenance comment naming the tool version
// and the hash of the effective configuration.
template <typename Body>
void write_csv(const Options& o, const fs::path& path, Body&& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
  out << "# sdrom " << kVersion << " config=" << hex16(o.config_hash) << "\n";
  body(out);
  if (!out) throw ConfigError("failed while writing '" + path.string() + "'");
  out.close();
  note_written(path);
}

void check_keys(const json& cfg, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (const auto& item : cfg.items()) {
    const bool known =
        std::any_of(allowed.begin(), allowed.end(),
                    [&](const char* k) { return item.key() == k; });
    if (!known)
      throw ConfigError("unknown config key for " + where + ": " + item.key());
  }
}

template <typename T>
T get_or(const json& cfg, const std::string& key, T def) {
  if (!cfg.contains(key)) return def;
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

const json& require_key(const json& cfg, const std::string& key,
                        const std::string& cmd) {
  if (!cfg.contains(key))
    throw ConfigError(cmd + " needs config key '" + key + "'");
  return cfg.at(key);
}

std::string require_str(const json& cfg, const std::string& key,
                        const std::string& cmd) {
  const json& j = require_key(cfg, key, cmd);
  if (!j.is_string())
    throw ConfigError("config key '" + key + "' must be a string");
  return j.get<std::string>();
}

Eigen::VectorXd to_dvec(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + " must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  Eigen::Index i = 0;
  for (const auto& x : j) {
    if (!x.is_number()) throw ConfigError(what + " must be an array of numbers");
    v[i++] = x.get<double>();
  }
  return v;
}

SamplingPlan parse_plan(const json& cfg, const SamplingPlan& fallback) {
  SamplingPlan plan = fallback;
  if (cfg.contains("plan")) {
    const json& p = cfg.at("plan");
    if (!p.is_object()) throw ConfigError("'plan' must be an object");
    check_keys(p, {"points", "grid", "n_random", "seed"}, "plan");
    plan = {};
    if (p.contains("points"))
      for (const auto& row : p.at("points"))
        plan.points.push_back(to_dvec(row, "plan point"));
    if (p.contains("grid"))
      plan.grid = get_or(p, "grid", std::vector<int>{});
    plan.n_random = get_or(p, "n_random", 0);
    plan.seed = get_or<std::uint64_t>(p, "seed", 0);
  }
  if (cfg.contains("seed"))
    plan.seed = get_or<std::uint64_t>(cfg, "seed", 0);
  return plan;
}

TriMesh load_mesh(const json& cfg, const ProblemPreset& preset) {
  if (cfg.contains("mesh"))
    return read_trimesh(require_str(cfg, "mesh", "mesh source"));
  const int res = get_or(cfg, "resolution", preset.default_resolution);
  return preset.mesh(res);
}

std::string mesh_source(const json& cfg, const ProblemPreset& preset) {
  if (cfg.contains("mesh")) {
    const std::string path = require_str(cfg, "mesh", "mesh source");
    if (!fs::exists(path)) throw ConfigError("cannot open mesh file: " + path);
    return "file " + path;
  }
  const int res = get_or(cfg, "resolution", preset.default_resolution);
  return "generated at resolution " + std::to_string(res);
}

Eigen::VectorXd per_well(const json& j, Eigen::Index n_wells,
                         const std::string& what) {
  if (j.is_number())
    return Eigen::VectorXd::Constant(n_wells, j.get<double>());
  const Eigen::VectorXd v = to_dvec(j, what);
  if (v.size() != n_wells)
    throw ConfigError(what + " needs one value per well (" +
                      std::to_string(n_wells) + "), got " +
                      std::to_string(v.size()));
  return v;
}

// Damage spec: a single number (uniform), a flat array (6 or 6*n_hex), or
// {"base": b, "cracks": [{"hexagon": h, "sextant": s, "level": v}, ...]}.
Eigen::VectorXd parse_damage(const json& j, Eigen::Index n_hex) {
  if (j.is_number()) return Eigen::VectorXd::Constant(6, j.get<double>());
  if (j.is_array()) return to_dvec(j, "damage");
  if (j.is_object()) {
    check_keys(j, {"base", "cracks"}, "damage");
    Eigen::VectorXd d =
        Eigen::VectorXd::Constant(6 * n_hex, get_or(j, "base", 0.0));
    for (const auto& c : j.value("cracks", json::array())) {
      check_keys(c, {"hexagon", "sextant", "level"}, "crack");
      const auto h = get_or<Eigen::Index>(c, "hexagon", -1);
      const auto s = get_or<Eigen::Index>(c, "sextant", -1);
      if (h < 0 || h >= n_hex || s < 0 || s >= 6)
        throw ConfigError("crack location outside the site");
      d[6 * h + s] = get_or(c, "level", 0.0);
    }
    return d;
  }
  throw ConfigError("damage must be a number, an array, or {base, cracks}");
}

Eigen::VectorXd full_damage(const Eigen::VectorXd& d, Eigen::Index n_hex) {
  if (d.size() == 0) return Eigen::VectorXd::Zero(6 * n_hex);
  if (d.size() == 6) return d.replicate(n_hex, 1);
  if (d.size() == 6 * n_hex) return d;
  throw ConfigError("damage must have 6 or 6*n_hex entries");
}

SiteLayout parse_layout(const json& cfg, const std::string& cmd) {
  const json& j = require_key(cfg, "layout", cmd);
  WellRule rule = WellRule::shared_corners;
  if (cfg.contains("well_rule")) {
    const std::string r = require_str(cfg, "well_rule", cmd);
    if (r == "all" || r == "all_corners")
      rule = WellRule::all_corners;
    else if (r != "shared" && r != "shared_corners")
      throw ConfigError("well_rule must be 'shared' or 'all'");
  }
  if (j.is_string() && j.get<std::string>() == "honeymoon") {
    SiteLayout l = honeymoon_layout();
    l.well_rule = rule;
    return l;
  }
  if (j.is_object() && j.contains("grid")) {
    check_keys(j, {"grid"}, "layout");
    const auto g = j.at("grid").get<std::vector<int>>();
    if (g.size() != 2)
      throw ConfigError("layout grid must be [n_cols, n_rows]");
    return grid_layout(g[0], g[1], rule);
  }
  if (j.is_object() && j.contains("cells")) {
    check_keys(j, {"cells"}, "layout");
    SiteLayout l;
    l.well_rule = rule;
    for (const auto& c : j.at("cells")) {
      const auto qr = c.get<std::vector<int>>();
      if (qr.size() != 2) throw ConfigError("layout cells must be [q, r] pairs");
      l.cells.push_back({qr[0], qr[1]});
    }
    return l;
  }
  throw ConfigError("layout must be 'honeymoon', {grid: [c, r]} or {cells: [...]}");
}

SnapshotKind kind_by_name(const std::string& k) {
  if (k == "xi") return SnapshotKind::xi;
  if (k == "zeta") return SnapshotKind::zeta;
  if (k == "t") return SnapshotKind::t;
  if (k == "solution") return SnapshotKind::solution;
  throw ConfigError("unknown snapshot kind: " + k);
}

void require_input_file(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("cannot open '" + path + "'");
}

// Measured production outflows, one row per hexagon: "hexagon,outflow_lps".
// Comment and header lines are skipped; rows may come in any order.
Eigen::VectorXd read_outflow_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::vector<std::pair<long, double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    long h = 0;
    double v = 0.0;
    if (std::sscanf(line.c_str(), "%ld,%lf", &h, &v) != 2) continue;
    if (h < 0) throw FormatError("negative hexagon id in '" + path + "'");
    rows.emplace_back(h, v);
  }
  if (rows.empty())
    throw FormatError("no measurement rows in '" + path + "'");
  long n = 0;
  for (const auto& [h, v] : rows) n = std::max(n, h + 1);
  Eigen::VectorXd out =
      Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  for (const auto& [h, v] : rows) out[h] = v;
  if (out.hasNaN())
    throw FormatError("measurement rows do not cover every hexagon in '" +
                      path + "'");
  return out;
}

// ---------------------------------------------------------------------------
// Commands.

int cmd_mesh(Options& o) {
  check_keys(o.cfg, {"seed", "threads", "out_dir", "preset", "resolution",
                     "output"},
             "mesh");
  const ProblemPreset preset =
      preset_by_name(require_str(o.cfg, "preset", "mesh"));
  const int res = get_or(o.cfg, "resolution", preset.default_resolution);
  const fs::path path = out_path(
      o, get_or<std::string>(o.cfg, "output", preset.name + ".mesh"));
  if (o.dry_run) {
    std::cout << "dry-run: mesh " << preset.name << " at resolution " << res
              << " -> " << path.string() << "\n";
    return 0;
  }
  const TriMesh mesh = preset.mesh(res);
  write_trimesh(mesh, path.string());
  std::cout << "mesh: " << mesh.n_vertices() << " vertices, "
            << mesh.n_triangles() << " triangles, " << mesh.tag_names.size()
            << " boundary tags\n";
  note_written(path);
  return 0;
}

int cmd_snapshot(Options& o) {
  check_keys(o.cfg, {"seed", "threads", "out_dir", "preset", "resolution",
                     "mesh", "plan", "kinds", "per_tag_loads", "prefix"},
             "snapshot");
  const ProblemPreset preset =
      preset_by_name(require_str(o.cfg, "preset", "snapshot"));
  const SamplingPlan plan = parse_plan(o.cfg, preset.plan);
  const auto kinds = get_or<std::vector<std::string>>(
      o.cfg, "kinds", {"xi", "zeta", "t", "solution"});
  for (const auto& k : kinds) (void)kind_by_name(k);
  const bool per_tag = get_or(o.cfg, "per_tag_loads", false);
  const std::string prefix = get_or<std::string>(o.cfg, "prefix", preset.name);
  const std::size_t n_samples = plan_points(plan, preset.family).size();
  const std::string source = mesh_source(o.cfg, preset);
  if (o.dry_run) {
    std::cout << "dry-run: snapshot " << preset.name << ", " << n_samples
              << " samples, mesh " << source << "\n";
    for (const auto& k : kinds)
      std::cout << "dry-run: would write "
                << out_path(o, prefix + "_" + k + ".snap").string() << "\n";
    return 0;
  }
  const TriMesh mesh = load_mesh(o.cfg, preset);
  for (const auto& k : kinds) {
    const SnapshotSet s =
        k == "solution"
            ? build_snapshots(preset.family, preset.material, preset.walls,
                              plan, mesh, per_tag)
            : build_snapshots(kind_by_name(k), preset.family, plan, mesh);
    const fs::path path = out_path(o, prefix + "_" + k + ".snap");
    write_snapshots(path.string(), s);
    std::cout << k << ": " << s.columns.rows() << " x " << s.columns.cols()
              << "\n";
    note_written(path);
  }
  return 0;
}

int cmd_train(Options& o) {
  check_keys(o.cfg,
             {"seed", "threads", "out_dir", "preset", "resolution", "mesh",
              "snapshots", "plan", "r", "cap", "guided", "n_xi", "n_zeta",
              "n_t", "per_tag_loads", "output"},
             "train");
  const ProblemPreset preset =
      preset_by_name(require_str(o.cfg, "preset", "train"));
  TrainOptions topt;
  topt.n_rb = get_or(o.cfg, "r", topt.n_rb);
  topt.cap = get_or(o.cfg, "cap", topt.cap);
  topt.guided = get_or(o.cfg, "guided", topt.guided);
  topt.n_xi = get_or(o.cfg, "n_xi", 0);
  topt.n_zeta = get_or(o.cfg, "n_zeta", 0);
  topt.n_t = get_or(o.cfg, "n_t", 0);
  topt.per_tag_loads = get_or(o.cfg, "per_tag_loads", false);
  const std::string name =
      get_or<std::string>(o.cfg, "output", preset.name + ".rom");
  const fs::path bundle_path = out_path(o, name);
  const fs::path eps_path =
      out_path(o, fs::path(name).stem().string() + "_eps.csv");
  const bool from_containers = o.cfg.contains("snapshots");

  if (o.dry_run) {
    std::cout << "dry-run: train " << preset.name << " r=" << topt.n_rb
              << (topt.guided ? " guided" : " explicit") << ", snapshots ";
    if (from_containers)
      std::cout << "from " << require_str(o.cfg, "snapshots", "train")
                << "_*.snap";
    else
      std::cout << plan_points(parse_plan(o.cfg, preset.plan), preset.family)
                       .size()
                << " samples, mesh " << mesh_source(o.cfg, preset);
    std::cout << " -> " << bundle_path.string() << "\n";
    return 0;
  }

  RomBundle b;
  if (from_containers) {
    const std::string prefix = require_str(o.cfg, "snapshots", "train");
    for (const char* k : {"_xi.snap", "_zeta.snap", "_t.snap",
                          "_solution.snap"})
      require_input_file(prefix + k);
    const TriMesh mesh = load_mesh(o.cfg, preset);
    // The plan is provenance only here; the containers decide the content.
    b = train_rom(preset.family, preset.material, preset.walls,
                  read_snapshots(prefix + "_xi.snap"),
                  read_snapshots(prefix + "_zeta.snap"),
                  read_snapshots(prefix + "_t.snap"),
                  read_snapshots(prefix + "_solution.snap"), mesh, topt,
                  parse_plan(o.cfg, SamplingPlan{}));
  } else {
    const SamplingPlan plan = parse_plan(o.cfg, preset.plan);
    const TriMesh mesh = load_mesh(o.cfg, preset);
    b = train_rom(preset.family, preset.material, preset.walls, plan, mesh,
                  topt);
  }

  write_bundle(bundle_path.string(), b);
  const ModeCountPlan& c = b.provenance.counts;
  std::cout << "modes: r=" << b.r() << " n_xi=" << c.n_xi
            << " n_zeta=" << c.n_zeta << " n_t=" << c.n_t << "\n";
  std::cout << "epsilon: target " << c.target << " achieved " << c.achieved
            << " reached " << (c.reached ? "yes" : "no") << "\n";
  std::cout << "phi blocks: " << b.K_phi.size() << "\n";
  note_written(bundle_path);

  write_csv(o, eps_path, [&](std::ostream& os) {
    os << "field,n,epsilon\n" << std::setprecision(17);
    const auto emit = [&](const char* field, const Eigen::VectorXd& tab) {
      for (Eigen::Index i = 0; i < tab.size(); ++i)
        os << field << ',' << (i + 1) << ',' << tab[i] << '\n';
    };
    emit("solution", b.provenance.eps_solution);
    emit("xi", b.provenance.eps_xi);
    emit("zeta", b.provenance.eps_zeta);
    emit("t", b.provenance.eps_t);
  });
  return 0;
}

int cmd_study(Options& o) {
  check_keys(o.cfg,
             {"seed", "threads", "out_dir", "bundle", "snapshots", "r", "deim",
              "output"},
             "study");
  const std::string bundle_path = require_str(o.cfg, "bundle", "study");
  const std::string snap_path = require_str(o.cfg, "snapshots", "study");
  const auto r_grid = get_or<std::vector<int>>(o.cfg, "r", {});
  if (r_grid.empty()) throw ConfigError("study needs a non-empty r grid");
  const fs::path csv_path =
      out_path(o, get_or<std::string>(o.cfg, "output", "study.csv"));

  // DEIM grid: one [n_xi, n_zeta, n_t] triple or a list of them; without the
  // key the sweep runs at the bundle's trained counts.
  std::vector<std::array<int, 3>> triples;
  if (o.cfg.contains("deim")) {
    const json& d = o.cfg.at("deim");
    if (!d.is_array() || d.empty())
      throw ConfigError("deim must be a [n_xi, n_zeta, n_t] triple or a list of them");
    const json rows = d.front().is_array() ? d : json::array({d});
    for (const auto& row : rows) {
      const auto t = row.get<std::vector<int>>();
      if (t.size() != 3)
        throw ConfigError("each deim entry needs exactly three counts");
      triples.push_back({t[0], t[1], t[2]});
    }
  }

  if (o.dry_run) {
    std::cout << "dry-run: study " << r_grid.size() << " r values x "
              << (triples.empty() ? 1 : triples.size()) << " deim triples -> "
              << csv_path.string() << "\n";
    require_input_file(bundle_path);
    require_input_file(snap_path);
    return 0;
  }

  const RomBundle b = read_bundle(bundle_path);
  const SnapshotSet hifi = read_snapshots(snap_path);
  if (triples.empty())
    triples.push_back(
        {b.deim_xi.n_modes(), b.deim_zeta.n_modes(), b.deim_t.n_modes()});

  write_csv(o, csv_path, [&](std::ostream& os) {
    os << "r,n_xi,n_zeta,n_t,max_rel_L2\n" << std::setprecision(17);
    for (const auto& t : triples)
      for (const int r : r_grid) {
        const RomBundle sb = sub_bundle(b, r, t[0], t[1], t[2]);
        os << r << ',' << t[0] << ',' << t[1] << ',' << t[2] << ','
           << sweep_max_error(sb, hifi) << '\n';
      }
  });
  std::cout << "rows: " << triples.size() * r_grid.size() << "\n";
  return 0;
}

int cmd_site(Options& o) {
  check_keys(o.cfg,
             {"seed", "threads", "out_dir", "bundle", "layout", "well_rule",
              "damage", "well_pressure", "inflow", "output"},
             "site");
  const std::string bundle_path = require_str(o.cfg, "bundle", "site");
  const SiteLayout layout = parse_layout(o.cfg, "site");
  const bool has_p = o.cfg.contains("well_pressure");
  const bool has_i = o.cfg.contains("inflow");
  if (has_p == has_i)
    throw ConfigError("site needs exactly one of well_pressure or inflow");
  const std::string stem = get_or<std::string>(o.cfg, "output", "site");
  const fs::path wells_path = out_path(o, stem + "_wells.csv");
  const fs::path hex_path = out_path(o, stem + "_hexagons.csv");

  if (o.dry_run) {
    std::cout << "dry-run: site with " << layout.cells.size() << " hexagons, "
              << (has_p ? "pressure" : "inflow") << " drive -> "
              << wells_path.string() << ", " << hex_path.string() << "\n";
    require_input_file(bundle_path);
    return 0;
  }

  const RomBundle b = read_bundle(bundle_path);
  const Eigen::VectorXd damage =
      o.cfg.contains("damage")
          ? parse_damage(o.cfg.at("damage"),
                         static_cast<Eigen::Index>(layout.cells.size()))
          : Eigen::VectorXd();
  SiteModel site = build_site(layout, b, damage);
  const auto n_wells = static_cast<Eigen::Index>(site.wells.size());

  SiteSolution sol;
  if (has_p) {
    // Decoupled pressure drive: every well holds its pump pressure and the
    // inflow column reports the realized intake.
    sol.well_pressure =
        per_well(o.cfg.at("well_pressure"), n_wells, "well_pressure");
    sol.coeffs = pressure_state(site, sol.well_pressure);
    sol.outflow = outflows_from_coeffs(site, sol.coeffs);
    set_inflows(site, realized_inflows(site, sol.coeffs));
  } else {
    set_inflows(site, per_well(o.cfg.at("inflow"), n_wells, "inflow"));
    sol = solve_site(site);
  }

  write_csv(o, wells_path,
            [&](std::ostream& os) { write_well_csv(site, sol, os); });
  write_csv(o, hex_path,
            [&](std::ostream& os) { write_hexagon_csv(site, sol, os); });
  std::cout << "site: " << site.hexagons.size() << " hexagons, "
            << site.wells.size() << " wells, " << site.n_dofs() << " dofs\n";
  std::cout << "total outflow: " << sol.outflow.sum() << " l/s\n";
  return 0;
}

int cmd_calibrate(Options& o) {
  check_keys(o.cfg,
             {"seed", "threads", "out_dir", "bundle", "layout", "well_rule",
              "damage", "measurements", "inflow", "synthetic", "eta0",
              "max_halvings", "fd_step", "tolerance", "max_iter", "output"},
             "calibrate");
  const std::string bundle_path = require_str(o.cfg, "bundle", "calibrate");
  const SiteLayout layout = parse_layout(o.cfg, "calibrate");
  const auto n_hex = static_cast<Eigen::Index>(layout.cells.size());
  const bool synthetic = o.cfg.contains("synthetic");
  if (synthetic == o.cfg.contains("measurements"))
    throw ConfigError(
        "calibrate needs either a measurements file or a synthetic block");
  const std::string stem = get_or<std::string>(o.cfg, "output", "calibrate");
  const fs::path iter_path = out_path(o, stem + "_iterations.csv");
  const fs::path damage_path = out_path(o, stem + "_damage.csv");

  CalibrationOptions copt;
  copt.eta0 = get_or(o.cfg, "eta0", copt.eta0);
  copt.max_halvings = get_or(o.cfg, "max_halvings", copt.max_halvings);
  copt.fd_step = get_or(o.cfg, "fd_step", copt.fd_step);
  copt.tolerance = get_or(o.cfg, "tolerance", copt.tolerance);
  copt.max_iter = get_or(o.cfg, "max_iter", copt.max_iter);

  if (o.dry_run) {
    std::cout << "dry-run: calibrate " << n_hex << " hexagons, "
              << (synthetic ? "synthetic" : "measured")
              << " data, tolerance " << copt.tolerance << ", max "
              << copt.max_iter << " iterations -> " << iter_path.string()
              << ", " << damage_path.string() << "\n";
    require_input_file(bundle_path);
    if (!synthetic)
      require_input_file(require_str(o.cfg, "measurements", "calibrate"));
    return 0;
  }

  const RomBundle b = read_bundle(bundle_path);
  const Eigen::VectorXd init =
      o.cfg.contains("damage") ? parse_damage(o.cfg.at("damage"), n_hex)
                               : Eigen::VectorXd();
  SiteModel site = build_site(layout, b, init);
  const auto n_wells = static_cast<Eigen::Index>(site.wells.size());

  MeasurementSet m;
  if (synthetic) {
    const json& s = o.cfg.at("synthetic");
    check_keys(s, {"true_damage", "well_pressure", "inflow", "noise",
                   "noise_seed"},
               "synthetic");
    const Eigen::VectorXd truth =
        parse_damage(require_key(s, "true_damage", "synthetic"), n_hex);
    const double amplitude = get_or(s, "noise", 0.0);
    std::uint64_t seed = get_or<std::uint64_t>(s, "noise_seed", 0);
    if (o.cfg.contains("seed"))
      seed = get_or<std::uint64_t>(o.cfg, "seed", 0);
    const bool sp = s.contains("well_pressure");
    if (sp == s.contains("inflow"))
      throw ConfigError(
          "synthetic needs exactly one of well_pressure or inflow");
    if (sp)
      m = synthesize_measurements_from_pressures(
          site, truth, per_well(s.at("well_pressure"), n_wells, "well_pressure"),
          amplitude, seed);
    else
      m = synthesize_measurements(site, truth,
                                  per_well(s.at("inflow"), n_wells, "inflow"),
                                  amplitude, seed);
    // Synthesis leaves the truth in the site; calibration starts from the
    // configured initial damage.
    const Eigen::VectorXd d0 = full_damage(init, n_hex);
    for (Eigen::Index h = 0; h < n_hex; ++h)
      update_damage(site, static_cast<int>(h), d0.segment(6 * h, 6));
    write_csv(o, out_path(o, stem + "_measurements.csv"),
              [&](std::ostream& os) { write_measurement_csv(m, os); });
  } else {
    m.outflow = read_outflow_csv(require_str(o.cfg, "measurements", "calibrate"));
    m.inflow =
        per_well(require_key(o.cfg, "inflow", "calibrate"), n_wells, "inflow");
  }

  const CalibrationState state = calibrate(site, m, copt);

  write_csv(o, iter_path,
            [&](std::ostream& os) { write_iteration_csv(state, os); });
  write_csv(o, damage_path, [&](std::ostream& os) {
    os << "hexagon,d_1,d_2,d_3,d_4,d_5,d_6\n" << std::setprecision(17);
    for (std::size_t h = 0; h < site.hexagons.size(); ++h) {
      os << h;
      for (int s = 0; s < 6; ++s) os << ',' << site.hexagons[h].damage[s];
      os << '\n';
    }
  });
  std::cout << "initial error: " << state.history.front() << "\n";
  std::cout << "final error: " << state.history.back() << "\n";
  std::cout << "iterations: " << state.iterations << "\n";
  std::cout << "converged: " << (state.converged ? "yes" : "no") << "\n";
  return state.converged ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reduced-basis Stokes-Darcy toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  bool dry = false;
  app.add_option("--config", config_path, "JSON config file")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--threads", threads, "worker thread count (0 = hardware)");
  app.add_flag("--dry-run", dry, "print the run plan and write nothing");
  app.add_option("--out-dir", out_dir, "directory for output files");

  std::string f_preset, f_output, f_prefix, f_bundle;
  int f_res = 0, f_r = 0;
  bool f_guided = true;
  const auto add = [&](const char* name, const char* help) {
    CLI::App* c = app.add_subcommand(name, help);
    c->fallthrough();
    c->add_option("--output", f_output, "output file name or stem");
    return c;
  };
  CLI::App* c_mesh = add("mesh", "write a triangulated preset domain");
  c_mesh->add_option("--preset", f_preset, "problem preset");
  c_mesh->add_option("--resolution", f_res, "mesh generator resolution");
  CLI::App* c_snap = add("snapshot", "build snapshot containers");
  c_snap->add_option("--preset", f_preset, "problem preset");
  c_snap->add_option("--resolution", f_res, "mesh generator resolution");
  c_snap->add_option("--prefix", f_prefix, "container name prefix");
  CLI::App* c_train = add("train", "train a reduced-order bundle");
  c_train->add_option("--preset", f_preset, "problem preset");
  c_train->add_option("--resolution", f_res, "mesh generator resolution");
  c_train->add_option("--r", f_r, "reduced solution dimension");
  c_train->add_flag("--guided,!--explicit", f_guided,
                    "epsilon-guided DEIM mode counts");
  CLI::App* c_study = add("study", "sweep reduced-model error curves");
  c_study->add_option("--bundle", f_bundle, "trained bundle file");
  CLI::App* c_site = add("site", "solve a coupled multi-hexagon site");
  c_site->add_option("--bundle", f_bundle, "trained bundle file");
  CLI::App* c_cal = add("calibrate", "fit sextant damage to measured flows");
  c_cal->add_option("--bundle", f_bundle, "trained bundle file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    Options o;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      try {
        in >> o.cfg;
      } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
      }
      if (!o.cfg.is_object())
        throw ConfigError("config root must be a JSON object");
    }
    CLI::App* sub = app.get_subcommands().front();
    o.command = sub->get_name();
    o.dry_run = dry;
    if (app.count("--seed") > 0) o.cfg["seed"] = seed;
    if (app.count("--threads") > 0) o.cfg["threads"] = threads;
    if (app.count("--out-dir") > 0) o.cfg["out_dir"] = out_dir;
    const auto given = [&](const char* name) {
      const CLI::Option* op = sub->get_option_no_throw(name);
      return op != nullptr && op->count() > 0;
    };
    if (given("--preset")) o.cfg["preset"] = f_preset;
    if (given("--resolution")) o.cfg["resolution"] = f_res;
    if (given("--output")) o.cfg["output"] = f_output;
    if (given("--prefix")) o.cfg["prefix"] = f_prefix;
    if (given("--bundle")) o.cfg["bundle"] = f_bundle;
    if (given("--r")) o.cfg["r"] = f_r;
    if (given("--guided")) o.cfg["guided"] = f_guided;

    o.out_dir = get_or<std::string>(o.cfg, "out_dir", ".");
    const int t = get_or(o.cfg, "threads", 0);
    if (t < 0) throw ConfigError("thread count must be >= 0");
    thread_count() = t;
    o.config_hash = fnv1a64(o.command + "\n" + o.cfg.dump());
    std::cout << "config hash: " << hex16(o.config_hash) << "\n";
    if (!o.dry_run) fs::create_directories(o.out_dir);

    if (sub == c_mesh) return cmd_mesh(o);
    if (sub == c_snap) return cmd_snapshot(o);
    if (sub == c_train) return cmd_train(o);
    if (sub == c_study) return cmd_study(o);
    if (sub == c_site) return cmd_site(o);
    return cmd_calibrate(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const MeasurementError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericsError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const RefinementRequiredError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
