#include "stochmap/scenario.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace stochmap {
namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) { throw ConfigError(where + ": " + what); }

void allow_keys(const json& j, const std::string& where, const std::set<std::string>& keys) {
  if (!j.is_object()) fail(where, "expected an object");
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) fail(where, "unknown key '" + k + "'");
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& where, int lo) {
  if (!j.is_number_integer()) fail(where, "expected an integer");
  long long v = j.get<long long>();
  if (v < lo || v > 100000000) fail(where, "out of range");
  return static_cast<int>(v);
}

double positive(const json& j, const std::string& where) {
  double v = number(j, where);
  if (!(v > 0.0) || !std::isfinite(v)) fail(where, "must be positive");
  return v;
}

cplx complex_value(const json& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) return {j[0].get<double>(), j[1].get<double>()};
  fail(where, "expected a number or [re, im]");
}

Mat operator_term(const json& j, int dim, const std::string& where) {
  if (j.is_string()) {
    try {
      return named_operator(j.get<std::string>(), dim);
    } catch (const std::invalid_argument& e) {
      fail(where, e.what());
    }
  }
  if (j.is_array()) {
    // list of terms, summed
    Mat sum = Mat::Zero(dim, dim);
    for (std::size_t k = 0; k < j.size(); ++k) sum += operator_term(j[k], dim, where + "[" + std::to_string(k) + "]");
    return sum;
  }
  allow_keys(j, where, {"op", "matrix", "scale", "label"});
  cplx scale = j.contains("scale") ? complex_value(j["scale"], where + ".scale") : cplx(1.0);
  if (j.contains("op") == j.contains("matrix")) fail(where, "give exactly one of 'op' or 'matrix'");
  if (j.contains("op")) return scale * operator_term(j["op"], dim, where + ".op");
  const json& m = j["matrix"];
  if (!m.is_array() || static_cast<int>(m.size()) != dim) fail(where, "matrix must have " + std::to_string(dim) + " rows");
  Mat out(dim, dim);
  for (int r = 0; r < dim; ++r) {
    if (!m[r].is_array() || static_cast<int>(m[r].size()) != dim)
      fail(where, "matrix row " + std::to_string(r) + " must have " + std::to_string(dim) + " entries");
    for (int c = 0; c < dim; ++c) out(r, c) = complex_value(m[r][c], where + ".matrix");
  }
  return scale * out;
}

void parse_system(const json& j, ScenarioConfig& cfg) {
  allow_keys(j, "system", {"dimension", "H0", "operators", "quadratic", "fock_boundary", "initial_state"});
  if (!j.contains("dimension")) fail("system", "missing 'dimension'");
  const int d = integer(j["dimension"], "system.dimension", 1);
  Mat h0 = j.contains("H0") ? operator_term(j["H0"], d, "system.H0") : Mat::Zero(d, d);
  if (hermiticity_defect(h0) > 1e-12) fail("system.H0", "not Hermitian");
  if (!j.contains("operators") || !j["operators"].is_array() || j["operators"].empty())
    fail("system", "'operators' must be a non-empty list");
  std::vector<Mat> ops;
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < j["operators"].size(); ++k) {
    const json& o = j["operators"][k];
    std::string where = "system.operators[" + std::to_string(k) + "]";
    Mat f = operator_term(o, d, where);
    if (hermiticity_defect(f) > 1e-12) fail(where, "not Hermitian");
    ops.push_back(f);
    labels.push_back(o.is_object() && o.contains("label") ? o["label"].get<std::string>() : "f" + std::to_string(k));
  }
  std::set<std::string> uniq(labels.begin(), labels.end());
  if (uniq.size() != labels.size()) fail("system.operators", "labels must be distinct");
  cfg.family = OperatorFamily(h0, ops, labels);
  if (j.contains("quadratic")) {
    if (!j["quadratic"].is_boolean()) fail("system.quadratic", "expected true or false");
    cfg.quadratic = j["quadratic"].get<bool>();
  }
  if (j.contains("fock_boundary")) cfg.fock_boundary = integer(j["fock_boundary"], "system.fock_boundary", 0);
  cfg.psi0 = Vec::Zero(d);
  if (!j.contains("initial_state")) {
    cfg.psi0(0) = 1.0;
  } else {
    const json& s = j["initial_state"];
    if (s.is_number_integer()) {
      int k = integer(s, "system.initial_state", 0);
      if (k >= d) fail("system.initial_state", "basis index out of range");
      cfg.psi0(k) = 1.0;
    } else {
      if (!s.is_array() || static_cast<int>(s.size()) != d) fail("system.initial_state", "expected " + std::to_string(d) + " amplitudes");
      for (int k = 0; k < d; ++k) cfg.psi0(k) = complex_value(s[k], "system.initial_state");
      double nrm = cfg.psi0.norm();
      if (!(nrm > 0.0)) fail("system.initial_state", "zero vector");
      cfg.psi0 /= nrm;
    }
  }
}

KernelSpec kernel_spec(const json& j, const std::string& where, const std::string& dir) {
  allow_keys(j, where, {"labels", "type", "amplitude", "correlation_time", "frequency", "file"});
  KernelSpec k;
  std::string type = j.value("type", "exponential");
  if (type == "zero")
    k.type = KernelSpec::Type::Zero;
  else if (type == "white")
    k.type = KernelSpec::Type::White;
  else if (type == "exponential")
    k.type = KernelSpec::Type::Exponential;
  else if (type == "tabulated")
    k.type = KernelSpec::Type::Tabulated;
  else
    fail(where + ".type", "unknown kernel type '" + type + "'");
  if (j.contains("amplitude")) k.amplitude = complex_value(j["amplitude"], where + ".amplitude");
  if (j.contains("correlation_time")) k.correlation_time = positive(j["correlation_time"], where + ".correlation_time");
  if (j.contains("frequency")) k.frequency = number(j["frequency"], where + ".frequency");
  if (k.type == KernelSpec::Type::Tabulated) {
    if (!j.contains("file") || !j["file"].is_string()) fail(where, "tabulated kernel needs 'file'");
    std::filesystem::path p(j["file"].get<std::string>());
    k.file = (p.is_absolute() ? p : std::filesystem::path(dir) / p).string();
  }
  return k;
}

void parse_kernels(const json& j, const std::string& where, int labels, const std::string& dir,
                   std::map<std::pair<int, int>, KernelSpec>& out) {
  if (!j.is_array()) fail(where, "expected a list of kernels");
  for (std::size_t k = 0; k < j.size(); ++k) {
    std::string w = where + "[" + std::to_string(k) + "]";
    std::pair<int, int> ab{0, 0};
    if (j[k].contains("labels")) {
      const json& l = j[k]["labels"];
      if (!l.is_array() || l.size() != 2) fail(w + ".labels", "expected [a, b]");
      ab = {integer(l[0], w + ".labels", 0), integer(l[1], w + ".labels", 0)};
    }
    if (ab.first >= labels || ab.second >= labels) fail(w + ".labels", "label out of range");
    if (ab.first > ab.second) fail(w + ".labels", "give label pairs with a <= b");
    if (out.count(ab)) fail(w, "duplicate label pair");
    out[ab] = kernel_spec(j[k], w, dir);
  }
}

NoiseSpec parse_noise(const json& j, int labels, const std::string& dir) {
  allow_keys(j, "noise", {"mean", "covariance", "pseudo_covariance"});
  NoiseSpec s;
  s.labels = labels;
  if (j.contains("mean")) {
    if (!j["mean"].is_array() || static_cast<int>(j["mean"].size()) != labels)
      fail("noise.mean", "expected one value per operator label");
    for (const auto& v : j["mean"]) s.mean.push_back(complex_value(v, "noise.mean"));
  }
  if (j.contains("covariance")) parse_kernels(j["covariance"], "noise.covariance", labels, dir, s.covariance);
  if (j.contains("pseudo_covariance"))
    parse_kernels(j["pseudo_covariance"], "noise.pseudo_covariance", labels, dir, s.pseudo_covariance);
  return s;
}

EnvironmentConfig parse_environment(const json& j, int labels) {
  allow_keys(j, "environment", {"modes", "couplings"});
  EnvironmentConfig e;
  if (!j.contains("modes") || !j["modes"].is_array() || j["modes"].empty()) fail("environment", "'modes' must be a non-empty list");
  long long dim = 1;
  for (std::size_t k = 0; k < j["modes"].size(); ++k) {
    const json& m = j["modes"][k];
    std::string w = "environment.modes[" + std::to_string(k) + "]";
    allow_keys(m, w, {"frequency", "levels", "temperature"});
    BosonicMode b;
    if (m.contains("frequency")) b.frequency = number(m["frequency"], w + ".frequency");
    if (m.contains("levels")) b.levels = integer(m["levels"], w + ".levels", 1);
    if (m.contains("temperature")) {
      b.temperature = number(m["temperature"], w + ".temperature");
      if (b.temperature < 0.0) fail(w + ".temperature", "must be non-negative");
    }
    dim *= b.levels;
    e.modes.push_back(b);
  }
  if (dim > 4096) fail("environment.modes", "environment dimension " + std::to_string(dim) + " exceeds 4096");
  if (!j.contains("couplings") || !j["couplings"].is_array() || static_cast<int>(j["couplings"].size()) != labels)
    fail("environment.couplings", "expected one row per operator label");
  for (std::size_t a = 0; a < j["couplings"].size(); ++a) {
    const json& row = j["couplings"][a];
    if (!row.is_array() || row.size() != e.modes.size()) fail("environment.couplings", "expected one coupling per mode");
    std::vector<double> r;
    for (const auto& v : row) r.push_back(number(v, "environment.couplings"));
    e.couplings.push_back(r);
  }
  return e;
}

}  // namespace

Mat named_operator(const std::string& name, int dim) {
  if (name == "identity") return Mat::Identity(dim, dim);
  auto need2 = [&]() {
    if (dim != 2) throw std::invalid_argument("operator '" + name + "' needs dimension 2");
  };
  if (name == "sigma_x") return need2(), pauli_x();
  if (name == "sigma_y") return need2(), pauli_y();
  if (name == "sigma_z") return need2(), pauli_z();
  if (name == "sigma_plus") return need2(), Mat(0.5 * (pauli_x() + kI * pauli_y()));
  if (name == "sigma_minus") return need2(), Mat(0.5 * (pauli_x() - kI * pauli_y()));
  Mat a = annihilation(dim);
  if (name == "a") return a;
  if (name == "a_dag") return a.adjoint();
  if (name == "number") return a.adjoint() * a;
  if (name == "x") return (a + a.adjoint()) / std::sqrt(2.0);
  if (name == "p") return (a - a.adjoint()) / (kI * std::sqrt(2.0));
  throw std::invalid_argument("unknown operator '" + name + "'");
}

ScenarioConfig parse_scenario(const std::string& text, const std::string& source_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  try {
    allow_keys(j, "config", {"name", "grid", "system", "environment", "noise", "match_bath", "ensemble", "truncation",
                             "expand", "checks", "output"});
    ScenarioConfig cfg;
    cfg.source_dir = source_dir;
    cfg.name = j.value("name", "scenario");

    if (!j.contains("grid")) fail("config", "missing 'grid'");
    allow_keys(j["grid"], "grid", {"t_max", "n_steps"});
    if (!j["grid"].contains("t_max") || !j["grid"].contains("n_steps")) fail("grid", "needs t_max and n_steps");
    cfg.t_max = positive(j["grid"]["t_max"], "grid.t_max");
    cfg.n_steps = integer(j["grid"]["n_steps"], "grid.n_steps", 1);

    if (!j.contains("system")) fail("config", "missing 'system'");
    parse_system(j["system"], cfg);
    const int L = cfg.labels();

    const bool has_env = j.contains("environment"), has_noise = j.contains("noise"), has_match = j.contains("match_bath");
    if (!has_env && !has_noise) fail("config", "give an 'environment' or a 'noise' block");
    if (has_env && has_noise && !has_match)
      fail("config", "both 'environment' and 'noise' given; add a 'match_bath' directive to say which defines the noise");
    if (has_match && !has_env) fail("match_bath", "requires an 'environment' block");
    if (has_env) cfg.environment = parse_environment(j["environment"], L);
    if (has_noise) cfg.noise = parse_noise(j["noise"], L, source_dir);
    if (has_match) {
      const json& m = j["match_bath"];
      std::string split;
      if (m.is_string()) {
        split = m.get<std::string>();
      } else {
        allow_keys(m, "match_bath", {"split", "scale"});
        split = m.value("split", "circular");
        if (m.contains("scale")) cfg.split_scale = number(m["scale"], "match_bath.scale");
      }
      try {
        cfg.match_bath = parse_bath_split(split);
      } catch (const std::invalid_argument& e) {
        fail("match_bath", e.what());
      }
    }

    if (j.contains("ensemble")) {
      const json& e = j["ensemble"];
      allow_keys(e, "ensemble", {"n_traj", "master_seed", "groups"});
      if (e.contains("n_traj")) cfg.n_traj = integer(e["n_traj"], "ensemble.n_traj", 2);
      if (e.contains("master_seed")) {
        if (!e["master_seed"].is_number_unsigned()) fail("ensemble.master_seed", "expected a non-negative integer");
        cfg.master_seed = e["master_seed"].get<std::uint64_t>();
      }
      if (e.contains("groups")) cfg.groups = integer(e["groups"], "ensemble.groups", 2);
      if (cfg.groups > cfg.n_traj) fail("ensemble.groups", "more groups than trajectories");
    }
    if (j.contains("truncation")) {
      const json& t = j["truncation"];
      allow_keys(t, "truncation", {"cumulant_order", "node_limit", "depth", "kernel_series_eps", "n_max"});
      if (t.contains("cumulant_order")) cfg.cumulant_order = integer(t["cumulant_order"], "truncation.cumulant_order", 1);
      if (cfg.cumulant_order > 4) fail("truncation.cumulant_order", "at most 4");
      if (t.contains("node_limit")) cfg.node_limit = integer(t["node_limit"], "truncation.node_limit", 1);
      if (t.contains("depth")) cfg.depth = integer(t["depth"], "truncation.depth", 0);
      if (cfg.depth > 3) fail("truncation.depth", "at most 3");
      if (t.contains("kernel_series_eps")) cfg.series_eps = number(t["kernel_series_eps"], "truncation.kernel_series_eps");
      if (t.contains("n_max")) cfg.n_max = integer(t["n_max"], "truncation.n_max", 1);
    }
    if (j.contains("expand")) {
      const json& x = j["expand"];
      allow_keys(x, "expand", {"order", "scales"});
      if (x.contains("order")) cfg.expand_order = integer(x["order"], "expand.order", 1);
      if (cfg.expand_order > 4) fail("expand.order", "at most 4");
      if (x.contains("scales")) {
        if (!x["scales"].is_array() || x["scales"].size() < 2) fail("expand.scales", "expected at least two values");
        cfg.expand_scales.clear();
        for (const auto& v : x["scales"]) cfg.expand_scales.push_back(positive(v, "expand.scales"));
      }
    }
    if (j.contains("checks")) {
      allow_keys(j["checks"], "checks", {"dephasing_tolerance"});
      if (j["checks"].contains("dephasing_tolerance"))
        cfg.dephasing_tolerance = positive(j["checks"]["dephasing_tolerance"], "checks.dephasing_tolerance");
    }
    if (j.contains("output")) {
      const json& o = j["output"];
      allow_keys(o, "output", {"directory", "dump_trajectories", "dump_count"});
      if (o.contains("directory")) cfg.out_dir = o["directory"].get<std::string>();
      if (o.contains("dump_trajectories")) cfg.dump_trajectories = o["dump_trajectories"].get<bool>();
      if (o.contains("dump_count")) cfg.dump_count = integer(o["dump_count"], "output.dump_count", 1);
    }
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string dir = std::filesystem::path(path).parent_path().string();
  return parse_scenario(ss.str(), dir.empty() ? "." : dir);
}

}  // namespace stochmap
