#pragma once

#include <algorithm>
#include <complex>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "drqkd/attacks.hpp"
#include "drqkd/errors.hpp"
#include "drqkd/protocol.hpp"

namespace drqkd::cli {

using json = nlohmann::json;
using fock::Complex;

enum class EmitFormat { Json, Csv, Both };

struct SweepSpec {
  std::string axis;
  std::vector<double> grid;
};

struct NamedAttack {
  std::string name;
  attacks::AttackSpec spec;
};

/// Parsed and schema-checked run configuration. Flags override file values.
struct RunConfig {
  Complex alpha{1.0, 0.0};
  std::optional<Complex> alpha1;  // defaults to alpha
  double p1 = 0.5;
  double p2 = 0.5;
  std::optional<int> cutoff;  // defaults to the session policy
  fock::DetectorModel detector;
  double channel_transmittance = 1.0;
  std::optional<protocol::PhysicalSourceParams> physical_source;

  std::optional<attacks::AttackSpec> attack;
  std::string attack_type = "none";

  std::uint64_t trials = 200000;
  std::uint64_t seed = 12345;
  int threads = 1;
  std::string out_dir = "out";
  EmitFormat format = EmitFormat::Both;

  std::optional<SweepSpec> sweep;
  std::vector<NamedAttack> compare;

  Complex alpha1_or_default() const { return alpha1 ? *alpha1 : alpha; }

  /// Largest displacement magnitude any state in the run can carry.
  double max_amplitude() const {
    double m = std::max(std::abs(alpha), std::abs(alpha1_or_default()));
    if (physical_source) m = std::max(m, std::abs(physical_source->effective_alpha()));
    auto consider = [&m](const attacks::AttackSpec& a) {
      if (const auto* ir = std::get_if<attacks::InterceptResend>(&a))
        m = std::max(m, std::abs(ir->alpha_star));
      else if (const auto* sr = std::get_if<attacks::SuperpositionResend>(&a))
        m = std::max(m, std::abs(sr->alpha_prime));
      else if (const auto* up = std::get_if<attacks::UnitaryProbe>(&a))
        m = std::max(m, std::max(std::abs(up->alpha_e), std::abs(up->alpha_1e)));
    };
    if (attack) consider(*attack);
    for (const auto& s : compare) consider(s.spec);
    if (sweep && sweep->axis == "alpha")
      for (double v : sweep->grid) m = std::max(m, std::abs(v));
    return m;
  }

  fock::FockCutoff effective_cutoff() const {
    if (cutoff) return fock::FockCutoff(*cutoff);
    return protocol::session_cutoff(max_amplitude());
  }

  protocol::ProtocolParams to_params() const {
    protocol::ProtocolParams p;
    p.alpha = alpha;
    p.alpha1 = alpha1_or_default();
    p.source = theory::SourceDistribution::from_bit_weights(p1, p2);
    p.cutoff = effective_cutoff();
    p.detectors = {detector, detector, detector, detector};
    p.channel_transmittance = channel_transmittance;
    p.physical_source = physical_source;
    p.validate();
    return p;
  }
};

namespace detail {

inline void require_keys(const json& obj, const char* where, std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* k) { return it.key() == k; }) == allowed.end())
      throw ConfigError(std::string("unknown key '") + it.key() + "' in " + where);
  }
}

inline double get_number(const json& v, const char* what) {
  if (!v.is_number()) throw ConfigError(std::string(what) + ": expected a number");
  return v.get<double>();
}

inline Complex get_complex(const json& v, const char* what) {
  if (v.is_number()) return {v.get<double>(), 0.0};
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
    return {v[0].get<double>(), v[1].get<double>()};
  throw ConfigError(std::string(what) + ": expected a number or [re, im]");
}

inline double get_probability(const json& v, const char* what) {
  const double x = get_number(v, what);
  if (x < 0.0 || x > 1.0) throw ConfigError(std::string(what) + ": outside [0,1]");
  return x;
}

inline attacks::AttackSpec parse_attack(const json& a, Complex default_alpha, std::string* type_out) {
  if (!a.is_object()) throw ConfigError("attack: expected an object");
  if (!a.contains("type") || !a["type"].is_string()) throw ConfigError("attack.type: required string");
  const std::string type = a["type"].get<std::string>();
  if (type_out) *type_out = type;
  if (type == "intercept_resend") {
    require_keys(a, "attack", {"type", "name", "p1_star", "p2_star", "alpha_star"});
    attacks::InterceptResend s;
    s.alpha_star = default_alpha;
    if (a.contains("p1_star")) s.p1_star = get_probability(a["p1_star"], "attack.p1_star");
    if (a.contains("p2_star")) s.p2_star = get_probability(a["p2_star"], "attack.p2_star");
    if (a.contains("alpha_star")) s.alpha_star = get_complex(a["alpha_star"], "attack.alpha_star");
    return s;
  }
  if (type == "superposition_resend") {
    require_keys(a, "attack", {"type", "name", "alpha_prime", "eta_fraction", "decohered"});
    attacks::SuperpositionResend s;
    s.alpha_prime = default_alpha;
    if (a.contains("alpha_prime")) s.alpha_prime = get_complex(a["alpha_prime"], "attack.alpha_prime");
    if (a.contains("eta_fraction")) s.eta_fraction = get_probability(a["eta_fraction"], "attack.eta_fraction");
    if (a.contains("decohered")) {
      if (!a["decohered"].is_boolean()) throw ConfigError("attack.decohered: expected a boolean");
      s.decohered = a["decohered"].get<bool>();
    }
    return s;
  }
  if (type == "beam_split") {
    require_keys(a, "attack", {"type", "name", "t_mag2"});
    double t2 = 1.0;
    if (a.contains("t_mag2")) t2 = get_probability(a["t_mag2"], "attack.t_mag2");
    attacks::BeamSplit s;
    s.t_e = Complex(std::sqrt(t2), 0.0);
    s.r_e = Complex(std::sqrt(1.0 - t2), 0.0);
    return s;
  }
  if (type == "unitary_probe") {
    require_keys(a, "attack", {"type", "name", "alpha_e", "alpha_1e"});
    attacks::UnitaryProbe s;
    s.alpha_e = default_alpha;
    s.alpha_1e = default_alpha;
    if (a.contains("alpha_e")) s.alpha_e = get_complex(a["alpha_e"], "attack.alpha_e");
    if (a.contains("alpha_1e")) s.alpha_1e = get_complex(a["alpha_1e"], "attack.alpha_1e");
    return s;
  }
  throw ConfigError("attack.type: unknown strategy '" + type + "'");
}

}  // namespace detail

inline RunConfig parse_config(const json& root) {
  using detail::get_complex;
  using detail::get_number;
  using detail::get_probability;
  using detail::require_keys;

  if (!root.is_object()) throw ConfigError("config: expected a JSON object");
  require_keys(root, "config",
               {"protocol", "attack", "trials", "seed", "threads", "output", "sweep", "compare"});
  RunConfig cfg;

  if (root.contains("protocol")) {
    const auto& p = root["protocol"];
    if (!p.is_object()) throw ConfigError("protocol: expected an object");
    require_keys(p, "protocol",
                 {"alpha", "alpha1", "source", "cutoff", "detectors", "channel_transmittance",
                  "physical_source"});
    if (p.contains("alpha")) cfg.alpha = get_complex(p["alpha"], "protocol.alpha");
    if (p.contains("alpha1")) cfg.alpha1 = get_complex(p["alpha1"], "protocol.alpha1");
    if (p.contains("source")) {
      const auto& s = p["source"];
      if (!s.is_object()) throw ConfigError("protocol.source: expected an object");
      require_keys(s, "protocol.source", {"p1", "p2"});
      if (s.contains("p1")) cfg.p1 = get_probability(s["p1"], "protocol.source.p1");
      if (s.contains("p2")) cfg.p2 = get_probability(s["p2"], "protocol.source.p2");
    }
    if (p.contains("cutoff")) {
      if (!p["cutoff"].is_number_integer()) throw ConfigError("protocol.cutoff: expected an integer");
      const int c = p["cutoff"].get<int>();
      if (c < 1) throw ConfigError("protocol.cutoff: must be >= 1");
      cfg.cutoff = c;
    }
    if (p.contains("detectors")) {
      const auto& d = p["detectors"];
      if (!d.is_object()) throw ConfigError("protocol.detectors: expected an object");
      require_keys(d, "protocol.detectors", {"efficiency", "dark_count"});
      if (d.contains("efficiency"))
        cfg.detector.efficiency = get_probability(d["efficiency"], "protocol.detectors.efficiency");
      if (d.contains("dark_count"))
        cfg.detector.dark_count = get_probability(d["dark_count"], "protocol.detectors.dark_count");
    }
    if (p.contains("channel_transmittance")) {
      cfg.channel_transmittance = get_number(p["channel_transmittance"], "protocol.channel_transmittance");
      if (cfg.channel_transmittance <= 0.0 || cfg.channel_transmittance > 1.0)
        throw ConfigError("protocol.channel_transmittance: outside (0,1]");
    }
    if (p.contains("physical_source")) {
      const auto& ps = p["physical_source"];
      if (!ps.is_object()) throw ConfigError("protocol.physical_source: expected an object");
      require_keys(ps, "protocol.physical_source", {"eta", "r_mag2", "pump"});
      protocol::PhysicalSourceParams phys;
      double r2 = 1.0;
      if (ps.contains("eta")) phys.prep_efficiency = get_probability(ps["eta"], "physical_source.eta");
      if (ps.contains("r_mag2")) r2 = get_probability(ps["r_mag2"], "physical_source.r_mag2");
      if (ps.contains("pump")) phys.pump_amplitude = get_complex(ps["pump"], "physical_source.pump");
      phys.mix_r = Complex(std::sqrt(r2), 0.0);
      phys.mix_t = Complex(std::sqrt(1.0 - r2), 0.0);
      cfg.physical_source = phys;
    }
  }

  if (root.contains("attack") && !root["attack"].is_null())
    cfg.attack = detail::parse_attack(root["attack"], cfg.alpha, &cfg.attack_type);

  if (root.contains("trials")) {
    if (!root["trials"].is_number_integer() || root["trials"].get<long long>() < 1)
      throw ConfigError("trials: expected a positive integer");
    cfg.trials = root["trials"].get<std::uint64_t>();
  }
  if (root.contains("seed")) {
    if (!root["seed"].is_number_integer()) throw ConfigError("seed: expected an integer");
    cfg.seed = root["seed"].get<std::uint64_t>();
  }
  if (root.contains("threads")) {
    if (!root["threads"].is_number_integer() || root["threads"].get<int>() < 1)
      throw ConfigError("threads: expected a positive integer");
    cfg.threads = root["threads"].get<int>();
  }
  if (root.contains("output")) {
    const auto& o = root["output"];
    if (!o.is_object()) throw ConfigError("output: expected an object");
    require_keys(o, "output", {"dir", "format"});
    if (o.contains("dir")) {
      if (!o["dir"].is_string()) throw ConfigError("output.dir: expected a string");
      cfg.out_dir = o["dir"].get<std::string>();
    }
    if (o.contains("format")) {
      if (!o["format"].is_string()) throw ConfigError("output.format: expected a string");
      const std::string f = o["format"].get<std::string>();
      if (f == "json") cfg.format = EmitFormat::Json;
      else if (f == "csv") cfg.format = EmitFormat::Csv;
      else if (f == "both") cfg.format = EmitFormat::Both;
      else throw ConfigError("output.format: expected json, csv or both");
    }
  }
  if (root.contains("sweep")) {
    const auto& s = root["sweep"];
    if (!s.is_object()) throw ConfigError("sweep: expected an object");
    require_keys(s, "sweep", {"axis", "grid"});
    if (!s.contains("axis") || !s["axis"].is_string()) throw ConfigError("sweep.axis: required string");
    SweepSpec sweep;
    sweep.axis = s["axis"].get<std::string>();
    static const char* axes[] = {"alpha", "channel_transmittance", "eta_fraction", "t_mag2", "p1_star"};
    if (std::find_if(std::begin(axes), std::end(axes),
                     [&](const char* a) { return sweep.axis == a; }) == std::end(axes))
      throw ConfigError("sweep.axis: unknown axis '" + sweep.axis + "'");
    if (!s.contains("grid") || !s["grid"].is_array() || s["grid"].empty())
      throw ConfigError("sweep.grid: required non-empty array");
    for (const auto& v : s["grid"]) sweep.grid.push_back(detail::get_number(v, "sweep.grid"));
    cfg.sweep = sweep;
  }
  if (root.contains("compare")) {
    const auto& c = root["compare"];
    if (!c.is_object()) throw ConfigError("compare: expected an object");
    require_keys(c, "compare", {"strategies"});
    if (!c.contains("strategies") || !c["strategies"].is_array() || c["strategies"].empty())
      throw ConfigError("compare.strategies: required non-empty array");
    for (const auto& s : c["strategies"]) {
      NamedAttack na;
      std::string type;
      na.spec = detail::parse_attack(s, cfg.alpha, &type);
      na.name = s.contains("name") && s["name"].is_string() ? s["name"].get<std::string>() : type;
      cfg.compare.push_back(std::move(na));
    }
  }

  if (cfg.attack) attacks::validate(*cfg.attack);
  for (const auto& s : cfg.compare) attacks::validate(s.spec);
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse_config(root);
}

namespace detail {

inline json complex_json(Complex c) {
  if (c.imag() == 0.0) return json(c.real());
  return json::array({c.real(), c.imag()});
}

}  // namespace detail

/// Canonical echo of the effective configuration (defaults resolved).
inline json echo_config(const RunConfig& cfg) {
  json p;
  p["alpha"] = detail::complex_json(cfg.alpha);
  p["alpha1"] = detail::complex_json(cfg.alpha1_or_default());
  p["source"] = {{"p1", cfg.p1}, {"p2", cfg.p2}};
  p["cutoff"] = cfg.effective_cutoff().n_max();
  p["detectors"] = {{"efficiency", cfg.detector.efficiency}, {"dark_count", cfg.detector.dark_count}};
  p["channel_transmittance"] = cfg.channel_transmittance;
  if (cfg.physical_source) {
    p["physical_source"] = {{"eta", cfg.physical_source->prep_efficiency},
                            {"r_mag2", std::norm(cfg.physical_source->mix_r)},
                            {"pump", detail::complex_json(cfg.physical_source->pump_amplitude)}};
  }
  json a;
  if (cfg.attack) {
    a["type"] = cfg.attack_type;
    if (const auto* ir = std::get_if<attacks::InterceptResend>(&*cfg.attack)) {
      a["p1_star"] = ir->p1_star;
      a["p2_star"] = ir->p2_star;
      a["alpha_star"] = detail::complex_json(ir->alpha_star);
    } else if (const auto* sr = std::get_if<attacks::SuperpositionResend>(&*cfg.attack)) {
      a["alpha_prime"] = detail::complex_json(sr->alpha_prime);
      a["eta_fraction"] = sr->eta_fraction;
      a["decohered"] = sr->decohered;
    } else if (const auto* bs = std::get_if<attacks::BeamSplit>(&*cfg.attack)) {
      a["t_mag2"] = std::norm(bs->t_e);
    } else if (const auto* up = std::get_if<attacks::UnitaryProbe>(&*cfg.attack)) {
      a["alpha_e"] = detail::complex_json(up->alpha_e);
      a["alpha_1e"] = detail::complex_json(up->alpha_1e);
    }
  }
  json root;
  root["protocol"] = p;
  if (!a.is_null()) root["attack"] = a;
  // threads, output paths and formats are execution knobs, not experiment
  // parameters; leaving them out keeps emitted files byte-identical across
  // worker counts.
  root["trials"] = cfg.trials;
  root["seed"] = cfg.seed;
  return root;
}

}  // namespace drqkd::cli
