#include "iscc/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <yaml-cpp/yaml.h>

#include "iscc/errors.hpp"

namespace iscc {

namespace {

// ---------------------------------------------------------------------------
// YAML helpers. Every error names the dotted field path and the 1-based line.

struct ParseContext {
  std::map<std::string, int> lines;  // field path -> line, for post-parse validation errors
};

int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

[[noreturn]] void fail(const YAML::Node& n, const std::string& path, const std::string& msg) {
  const int line = line_of(n);
  throw ValidationError(path + (line > 0 ? " (line " + std::to_string(line) + ")" : "") + ": " + msg);
}

void check_keys(const YAML::Node& map, const std::string& path, const std::set<std::string>& allowed) {
  if (!map.IsMap()) fail(map, path.empty() ? "<root>" : path, "expected a mapping");
  for (const auto& kv : map) {
    const std::string key = kv.first.as<std::string>();
    if (!allowed.count(key)) fail(kv.first, path.empty() ? key : path + "." + key, "unknown field");
  }
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

double as_double(const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) fail(n, path, "expected a number");
  try {
    const double v = n.as<double>();
    if (!std::isfinite(v)) fail(n, path, "must be finite");
    return v;
  } catch (const YAML::BadConversion&) {
    fail(n, path, "expected a number, got '" + n.Scalar() + "'");
  }
}

long long as_integer(const YAML::Node& n, const std::string& path) {
  const double v = as_double(n, path);
  if (v != std::floor(v) || std::abs(v) > 9e15) fail(n, path, "expected an integer");
  return static_cast<long long>(v);
}

// Reads map[key] into out when present and remembers its line.
void read_double(const YAML::Node& map, const std::string& path, const std::string& key, double& out,
                 ParseContext& ctx) {
  const YAML::Node n = map[key];
  if (!n) return;
  const std::string p = join(path, key);
  out = as_double(n, p);
  ctx.lines[p] = line_of(n);
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

void read_power(const YAML::Node& map, const std::string& linear_key, const std::string& db_key, double db_offset,
                double& out, const std::string& field, ParseContext& ctx) {
  if (map[linear_key] && map[db_key]) fail(map[db_key], db_key, "conflicts with " + linear_key);
  read_double(map, "", linear_key, out, ctx);
  if (map[db_key]) {
    out = db_to_linear(as_double(map[db_key], db_key) + db_offset);
    ctx.lines[db_key] = line_of(map[db_key]);
  }
  if (ctx.lines.count(db_key)) ctx.lines[field] = ctx.lines[db_key];
}

void read_position(const YAML::Node& map, const std::string& path, Position& p, ParseContext& ctx) {
  read_double(map, path, "x", p.x, ctx);
  read_double(map, path, "y", p.y, ctx);
  read_double(map, path, "z", p.z, ctx);
  if (map["x"]) ctx.lines[path + ".position"] = line_of(map["x"]);
}

void read_user_fields(const YAML::Node& map, const std::string& path, UserParams& u, ParseContext& ctx) {
  read_double(map, path, "tx_power_w", u.tx_power_w, ctx);
  read_double(map, path, "task_bits", u.task_bits, ctx);
  read_double(map, path, "cycles_per_bit", u.cycles_per_bit, ctx);
  read_double(map, path, "f_max_hz", u.f_max_hz, ctx);
  read_double(map, path, "kappa", u.kappa, ctx);
}

void read_options(const YAML::Node& map, ExperimentConfig& cfg, ParseContext& ctx) {
  check_keys(map, "options", {"epsilon", "max_iter", "seed", "randomization_samples", "floor_relaxation", "workers", "ipm"});
  AOOptions& o = cfg.options;
  read_double(map, "options", "epsilon", o.epsilon, ctx);
  read_double(map, "options", "floor_relaxation", o.beam.floor_relaxation, ctx);
  if (map["max_iter"]) o.max_iter = static_cast<int>(as_integer(map["max_iter"], "options.max_iter"));
  if (map["seed"]) {
    const long long s = as_integer(map["seed"], "options.seed");
    if (s < 0) fail(map["seed"], "options.seed", "must be nonnegative");
    o.seed = static_cast<std::uint64_t>(s);
  }
  if (map["randomization_samples"]) {
    o.beam.randomization_samples =
        static_cast<int>(as_integer(map["randomization_samples"], "options.randomization_samples"));
  }
  if (map["workers"]) {
    cfg.workers = static_cast<int>(as_integer(map["workers"], "options.workers"));
    if (cfg.workers < 1) fail(map["workers"], "options.workers", "must be at least 1");
  }
  if (const YAML::Node ipm = map["ipm"]) {
    check_keys(ipm, "options.ipm", {"mu0", "mu_shrink", "newton_tol", "max_outer", "max_newton", "final_gap", "kkt_tol"});
    ipm::BarrierParams& b = o.beam.ipm;
    read_double(ipm, "options.ipm", "mu0", b.mu0, ctx);
    read_double(ipm, "options.ipm", "mu_shrink", b.mu_shrink, ctx);
    read_double(ipm, "options.ipm", "newton_tol", b.newton_tol, ctx);
    read_double(ipm, "options.ipm", "final_gap", b.final_gap, ctx);
    read_double(ipm, "options.ipm", "kkt_tol", b.kkt_tol, ctx);
    if (ipm["max_outer"]) b.max_outer = static_cast<int>(as_integer(ipm["max_outer"], "options.ipm.max_outer"));
    if (ipm["max_newton"]) b.max_newton = static_cast<int>(as_integer(ipm["max_newton"], "options.ipm.max_newton"));
    if (!(b.mu0 > 0.0)) fail(ipm["mu0"], "options.ipm.mu0", "must be positive");
    if (!(b.mu_shrink > 0.0 && b.mu_shrink < 1.0)) fail(ipm["mu_shrink"], "options.ipm.mu_shrink", "must lie in (0, 1)");
    if (b.max_outer < 1 || b.max_newton < 1) fail(ipm, "options.ipm", "iteration limits must be at least 1");
  }
  try {
    o.validate();
  } catch (const ValidationError& e) {
    fail(map, "options", e.what());
  }
}

SweepSpec read_sweep(const YAML::Node& map) {
  check_keys(map, "sweep", {"axis", "values", "schemes", "seeds"});
  SweepSpec s;
  const YAML::Node axis = map["axis"];
  if (!axis) fail(map, "sweep.axis", "is required");
  try {
    s.axis = axis_from_string(axis.as<std::string>());
  } catch (const ValidationError& e) {
    fail(axis, "sweep.axis", e.what());
  }
  const YAML::Node values = map["values"];
  if (!values || !values.IsSequence() || values.size() == 0) fail(map, "sweep.values", "must be a non-empty list");
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::string p = "sweep.values[" + std::to_string(i) + "]";
    const double v = as_double(values[i], p);
    if (!s.values.empty() && !(v > s.values.back())) fail(values[i], p, "values must be strictly increasing");
    if (s.axis == SweepAxis::NUsers && (v != std::floor(v) || v < 1.0)) fail(values[i], p, "user count must be a positive integer");
    s.values.push_back(v);
  }
  if (const YAML::Node schemes = map["schemes"]) {
    if (!schemes.IsSequence() || schemes.size() == 0) fail(schemes, "sweep.schemes", "must be a non-empty list");
    s.schemes.clear();
    for (std::size_t i = 0; i < schemes.size(); ++i) {
      try {
        s.schemes.push_back(scheme_from_string(schemes[i].as<std::string>()));
      } catch (const ValidationError& e) {
        fail(schemes[i], "sweep.schemes[" + std::to_string(i) + "]", e.what());
      }
    }
  }
  if (const YAML::Node seeds = map["seeds"]) {
    if (!seeds.IsSequence() || seeds.size() == 0) fail(seeds, "sweep.seeds", "must be a non-empty list");
    s.seeds.clear();
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const std::string p = "sweep.seeds[" + std::to_string(i) + "]";
      const long long v = as_integer(seeds[i], p);
      if (v < 0) fail(seeds[i], p, "must be nonnegative");
      s.seeds.push_back(static_cast<std::uint64_t>(v));
    }
  }
  return s;
}

ExperimentConfig parse_root(const YAML::Node& root) {
  ExperimentConfig cfg;
  ParseContext ctx;
  if (!root || root.IsNull()) throw ValidationError("<root>: empty scenario document");
  check_keys(root, "",
             {"n_users", "n_tx", "n_rx", "slot_s", "bandwidth_hz", "beta_ref", "beta_ref_db", "noise_w", "sigma2_dbm",
              "target_amp_sq", "target_amp_sq_db", "gamma_min", "gamma_min_db", "alap", "target", "user_defaults",
              "users", "options", "sweep"});
  Scenario& s = cfg.scenario;
  if (root["n_tx"]) s.n_tx = as_integer(root["n_tx"], "n_tx");
  if (root["n_rx"]) s.n_rx = as_integer(root["n_rx"], "n_rx");
  read_double(root, "", "slot_s", s.slot_s, ctx);
  read_double(root, "", "bandwidth_hz", s.bandwidth_hz, ctx);
  read_power(root, "beta_ref", "beta_ref_db", 0.0, s.beta_ref, "beta_ref", ctx);
  read_power(root, "noise_w", "sigma2_dbm", -30.0, s.noise_w, "noise_w", ctx);
  read_power(root, "target_amp_sq", "target_amp_sq_db", 0.0, s.target_amp_sq, "target_amp_sq", ctx);
  read_power(root, "gamma_min", "gamma_min_db", 0.0, s.gamma_min, "gamma_min", ctx);

  if (const YAML::Node a = root["alap"]) {
    check_keys(a, "alap", {"x", "y", "z", "cycles_per_bit", "f_max_hz", "kappa"});
    read_position(a, "alap", s.alap.position, ctx);
    read_double(a, "alap", "cycles_per_bit", s.alap.cycles_per_bit, ctx);
    read_double(a, "alap", "f_max_hz", s.alap.f_max_hz, ctx);
    read_double(a, "alap", "kappa", s.alap.kappa, ctx);
  }
  if (const YAML::Node t = root["target"]) {
    check_keys(t, "target", {"x", "y", "z"});
    read_position(t, "target", s.target, ctx);
  }
  if (const YAML::Node d = root["user_defaults"]) {
    check_keys(d, "user_defaults", {"tx_power_w", "task_bits", "cycles_per_bit", "f_max_hz", "kappa"});
    read_user_fields(d, "user_defaults", cfg.user_prototype, ctx);
  }

  std::size_t n_users = 4;
  if (root["n_users"]) {
    const long long n = as_integer(root["n_users"], "n_users");
    if (n < 1) fail(root["n_users"], "n_users", "must be at least 1");
    n_users = static_cast<std::size_t>(n);
  }
  const YAML::Node users = root["users"];
  if (users) {
    if (!users.IsSequence() || users.size() == 0) fail(users, "users", "must be a non-empty list");
    if (root["n_users"] && users.size() != n_users) {
      fail(users, "users", "has " + std::to_string(users.size()) + " entries but n_users is " + std::to_string(n_users));
    }
    n_users = users.size();
  }
  s.users.clear();
  resize_users(s, n_users, cfg.user_prototype);
  if (users) {
    for (std::size_t m = 0; m < users.size(); ++m) {
      const std::string p = "users[" + std::to_string(m) + "]";
      check_keys(users[m], p, {"x", "y", "z", "tx_power_w", "task_bits", "cycles_per_bit", "f_max_hz", "kappa"});
      read_position(users[m], p, s.users[m].position, ctx);
      read_user_fields(users[m], p, s.users[m], ctx);
    }
  }

  if (const YAML::Node o = root["options"]) read_options(o, cfg, ctx);
  if (const YAML::Node sw = root["sweep"]) cfg.sweep = read_sweep(sw);

  try {
    s.validate();
  } catch (const ValidationError& e) {
    // Re-attach the line of the offending field when we know it.
    const std::string msg = e.what();
    const std::string field = msg.substr(0, msg.find(':'));
    std::string best;
    for (const auto& [path, line] : ctx.lines) {
      if ((field == path || field.rfind(path, 0) == 0 || path.rfind(field, 0) == 0) && path.size() > best.size()) best = path;
    }
    if (best.empty()) throw;
    throw ValidationError(field + " (line " + std::to_string(ctx.lines[best]) + ")" + msg.substr(field.size()));
  }
  return cfg;
}

// ---------------------------------------------------------------------------

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::size_t scheme_rank(const std::string& name) {
  const auto& all = all_schemes();
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (name == to_string(all[i])) return i;
  }
  return all.size();
}

}  // namespace

const char* to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::UserPower: return "user_power";
    case SweepAxis::GammaMin: return "gamma_min";
    case SweepAxis::TaskBits: return "task_bits";
    case SweepAxis::NUsers: return "n_users";
  }
  return "?";
}

SweepAxis axis_from_string(const std::string& name) {
  for (SweepAxis a : {SweepAxis::UserPower, SweepAxis::GammaMin, SweepAxis::TaskBits, SweepAxis::NUsers}) {
    if (name == to_string(a)) return a;
  }
  throw ValidationError("unknown sweep axis '" + name + "' (expected user_power, gamma_min, task_bits or n_users)");
}

ExperimentConfig parse_scenario(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ValidationError("parse error at line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  return parse_root(root);
}

ExperimentConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path + ": cannot open scenario file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

Scenario apply_axis(const Scenario& base, const UserParams& prototype, SweepAxis axis, double value) {
  Scenario s = base;
  switch (axis) {
    case SweepAxis::UserPower:
      for (auto& u : s.users) u.tx_power_w = value;
      break;
    case SweepAxis::TaskBits:
      for (auto& u : s.users) u.task_bits = value;
      break;
    case SweepAxis::GammaMin:
      s.gamma_min = value;
      break;
    case SweepAxis::NUsers:
      if (value < 1.0 || value != std::floor(value)) throw ValidationError("n_users: must be a positive integer");
      resize_users(s, static_cast<std::size_t>(value), prototype);
      break;
  }
  s.validate();
  return s;
}

std::vector<ResultRow> run_sweep(const ExperimentConfig& config) {
  if (!config.sweep) throw ValidationError("sweep: the scenario file has no sweep block");
  const SweepSpec& spec = *config.sweep;
  struct Cell {
    double value;
    SchemeId scheme;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double v : spec.values) {
    for (SchemeId sc : spec.schemes) {
      for (std::uint64_t seed : spec.seeds) cells.push_back({v, sc, seed});
    }
  }
  std::vector<ResultRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& c = cells[i];
      ResultRow& row = rows[i];
      row.axis_value = c.value;
      row.scheme = to_string(c.scheme);
      row.seed = c.seed;
      try {
        const Scenario s = apply_axis(config.scenario, config.user_prototype, spec.axis, c.value);
        AOOptions opts = config.options;
        opts.seed = c.seed;
        const AOResult r = run_scheme(s, c.scheme, opts);
        row.energy = r.energy;
        row.iterations = r.trace.sweeps();
        row.converged = r.trace.status == AOStatus::Converged;
        row.wall_ms = 0.0;
        for (const auto& it : r.trace.iterations) row.wall_ms += it.wall_ms;
      } catch (const ScenarioInfeasible&) {
        row.energy.reset();
        row.converged = false;
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(config.workers, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    const std::size_t ra = scheme_rank(a.scheme);
    const std::size_t rb = scheme_rank(b.scheme);
    if (ra != rb) return ra < rb;
    if (a.axis_value != b.axis_value) return a.axis_value < b.axis_value;
    return a.seed < b.seed;
  });
  return rows;
}

const char* const kCsvHeader =
    "axis,scheme,seed,total_energy_j,e_loc_j,e_tran_j,e_comp_alap_j,e_tran_alap_j,iterations,converged,wall_ms";

std::string format_csv(const std::vector<ResultRow>& rows) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += fmt_num(r.axis_value) + "," + r.scheme + "," + std::to_string(r.seed) + ",";
    if (r.energy) {
      const EnergyBreakdown& e = *r.energy;
      out += fmt_num(e.total) + "," + fmt_num(e.e_loc) + "," + fmt_num(e.e_tran) + "," + fmt_num(e.e_comp_alap) +
             "," + fmt_num(e.e_tran_alap) + ",";
    } else {
      out += ",,,,,";
    }
    out += std::to_string(r.iterations) + "," + (r.converged ? "true" : "false") + "," + fmt_num(r.wall_ms) + "\n";
  }
  return out;
}

std::vector<ResultRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw ValidationError("csv: unexpected header");
  std::vector<ResultRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    if (f.size() != 11) throw ValidationError("csv line " + std::to_string(line_no) + ": expected 11 fields");
    try {
      ResultRow r;
      r.axis_value = std::stod(f[0]);
      r.scheme = f[1];
      r.seed = std::stoull(f[2]);
      if (!f[3].empty()) {
        EnergyBreakdown e;
        e.total = std::stod(f[3]);
        e.e_loc = std::stod(f[4]);
        e.e_tran = std::stod(f[5]);
        e.e_comp_alap = std::stod(f[6]);
        e.e_tran_alap = std::stod(f[7]);
        r.energy = e;
      }
      r.iterations = std::stoi(f[8]);
      r.converged = f[9] == "true";
      r.wall_ms = std::stod(f[10]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ValidationError("csv line " + std::to_string(line_no) + ": malformed number");
    }
  }
  return rows;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << text;
  if (!out) throw std::runtime_error(path + ": write failed");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string scenario_hash(const Scenario& s) {
  std::string dump;
  auto put = [&](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g;", v);
    dump += buf;
  };
  auto put_pos = [&](const Position& p) {
    put(p.x);
    put(p.y);
    put(p.z);
  };
  put(static_cast<double>(s.n_tx));
  put(static_cast<double>(s.n_rx));
  put(s.slot_s);
  put(s.bandwidth_hz);
  put(s.beta_ref);
  put(s.noise_w);
  put(s.target_amp_sq);
  put(s.gamma_min);
  put_pos(s.alap.position);
  put(s.alap.cycles_per_bit);
  put(s.alap.f_max_hz);
  put(s.alap.kappa);
  put_pos(s.target);
  for (const auto& u : s.users) {
    put_pos(u.position);
    put(u.tx_power_w);
    put(u.task_bits);
    put(u.cycles_per_bit);
    put(u.f_max_hz);
    put(u.kappa);
  }
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

std::string format_convergence(const ConvergenceTrace& trace, const Scenario& scenario, const AOOptions& opts) {
  if (trace.iterations.empty()) throw ValidationError("emit_convergence: empty trace");
  std::string out = "# iteration total_energy_j\n";
  for (const auto& it : trace.iterations) out += std::to_string(it.iteration) + " " + fmt_num(it.phi) + "\n";
  out += "# scenario_hash=" + scenario_hash(scenario) + " seed=" + std::to_string(opts.seed) +
         " epsilon=" + fmt_num(opts.epsilon) + " max_iter=" + std::to_string(opts.max_iter) +
         " status=" + to_string(trace.status) + "\n";
  return out;
}

void emit_convergence(const ConvergenceTrace& trace, const Scenario& scenario, const AOOptions& opts,
                      const std::string& path) {
  write_text_file(path, format_convergence(trace, scenario, opts));
}

}  // namespace iscc
