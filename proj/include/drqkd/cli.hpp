#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "drqkd/config.hpp"
#include "drqkd/oracle.hpp"
#include "drqkd/session.hpp"
#include "drqkd/theory.hpp"
#include "drqkd/version.hpp"

namespace drqkd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitSchema = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitValidation = 4;

namespace detail {

inline const char* label_token(protocol::CarrierLabel l) {
  switch (l) {
    case protocol::CarrierLabel::Bit0: return "bit0";
    case protocol::CarrierLabel::Disguised0: return "disguised0";
    case protocol::CarrierLabel::Bit1: return "bit1";
    case protocol::CarrierLabel::Disguised1: return "disguised1";
  }
  return "?";
}

inline const char* outcome_token(protocol::Outcome o) {
  switch (o) {
    case protocol::Outcome::Bit0: return "bit0";
    case protocol::Outcome::Bit1: return "bit1";
    case protocol::Outcome::Inconclusive: return "inconclusive";
  }
  return "?";
}

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

/// Ideal expectation folded with linear channel loss: the surviving-photon
/// branch carries attenuated displacements, everything else is inconclusive.
inline theory::OutputDistribution expected_with_loss(const theory::SourceDistribution& source,
                                                     Complex alpha, Complex alpha1, double t) {
  const double b0 = source.p1() * t * (1.0 - theory::p_zero(alpha * std::sqrt(t))) / 4.0;
  const double b1 = source.p2() * t * (1.0 - theory::p_zero(alpha1 * std::sqrt(t))) / 4.0;
  return theory::OutputDistribution::from_bits(b0, b1);
}

struct EffectiveSource {
  theory::SourceDistribution source;
  Complex alpha;
  Complex alpha1;
};

inline EffectiveSource effective_source(const RunConfig& cfg) {
  if (cfg.physical_source) {
    const Complex a = cfg.physical_source->effective_alpha();
    return {cfg.physical_source->implied_source(), a, a};
  }
  return {theory::SourceDistribution::from_bit_weights(cfg.p1, cfg.p2), cfg.alpha,
          cfg.alpha1_or_default()};
}

inline json attack_theory(const RunConfig& cfg, const EffectiveSource& eff) {
  json t;
  if (!cfg.attack) return t;
  const auto& src = eff.source;
  if (const auto* a = std::get_if<attacks::InterceptResend>(&*cfg.attack)) {
    const auto side1 = theory::intercept_resend_prediction(src, a->p1_star);
    const theory::SourceDistribution swapped(src.p2(), src.p2_prime(), src.p1(), src.p1_prime());
    const auto side2 = theory::intercept_resend_prediction(swapped, a->p2_star);
    t["type"] = "intercept_resend";
    t["p_bit0"] = side1.p_bit0;
    t["p_bit1"] = side2.p_bit0;
    t["p_disguised"] = side1.p_disguised + side2.p_disguised;
    t["validity_p_zero_star"] = theory::p_zero(a->alpha_star);
  } else if (const auto* a = std::get_if<attacks::SuperpositionResend>(&*cfg.attack)) {
    const auto s1 = theory::superposition_resend_prediction(src.p1(), a->alpha_prime, a->eta_fraction,
                                                            a->decohered);
    const auto s2 = theory::superposition_resend_prediction(src.p2(), a->alpha_prime, a->eta_fraction,
                                                            a->decohered);
    t["type"] = "superposition_resend";
    t["p_bit0"] = s1.dist.p_bit0;
    t["p_bit1"] = s2.dist.p_bit0;
    t["eve_information"] = s1.eve_information;
    t["decohered"] = a->decohered;
  } else if (const auto* a = std::get_if<attacks::BeamSplit>(&*cfg.attack)) {
    const double t2 = std::norm(a->t_e);
    const auto b1 = theory::beam_split_prediction(src.p1(), eff.alpha, t2);
    const auto b2 = theory::beam_split_prediction(src.p2(), eff.alpha1, t2);
    t["type"] = "beam_split";
    t["p_bit0"] = b1.dist.p_bit0;
    t["p_bit1"] = b2.dist.p_bit0;
    t["p_vac"] = b1.p_vac;
    t["eve_information"] = b1.eve_information;
  } else if (const auto* a = std::get_if<attacks::UnitaryProbe>(&*cfg.attack)) {
    t["type"] = "unitary_probe";
    try {
      const auto ov = theory::probe_overlaps(eff.alpha, a->alpha_e, a->alpha_1e);
      t["overlaps"] = {{"e1_e3", complex_json(ov.e1_e3)},
                       {"e1_e4", complex_json(ov.e1_e4)},
                       {"e3_e2", complex_json(ov.e3_e2)},
                       {"e4_e2", complex_json(ov.e4_e2)}};
      t["overlaps_physical"] = ov.physical();
    } catch (const DegenerateDenominator&) {
      t["overlaps"] = nullptr;
      t["overlaps_degenerate"] = true;
    }
  }
  return t;
}

inline json theory_block(const RunConfig& cfg) {
  const auto eff = effective_source(cfg);
  const auto expected =
      expected_with_loss(eff.source, eff.alpha, eff.alpha1, cfg.channel_transmittance);
  json t;
  t["p_zero"] = theory::p_zero(eff.alpha);
  t["conditional_bit_prob"] = theory::conditional_bit_prob(eff.alpha);
  t["p_bit0"] = expected.p_bit0;
  t["p_bit1"] = expected.p_bit1;
  t["p_inconclusive"] = expected.p_inconclusive;
  const double w1 = eff.source.p1() * theory::conditional_bit_prob(eff.alpha);
  const double w2 = eff.source.p2() * theory::conditional_bit_prob(eff.alpha1);
  if (w1 > 0.0 && w2 > 0.0) t["mutual_information_sifted"] = theory::mutual_information(w1, w2);
  const json atk = attack_theory(cfg, eff);
  if (!atk.is_null()) t["attack"] = atk;
  return t;
}

inline json stats_json(const protocol::SessionStats& s) {
  return {{"p_bit0", s.empirical.p_bit0},
          {"p_bit1", s.empirical.p_bit1},
          {"p_inconclusive", s.empirical.p_inconclusive},
          {"p_disguised", s.disguised_prob},
          {"mismatch", s.mismatch_rate},
          {"eve_fraction", s.eve_fraction}};
}

inline json check_json(const protocol::ComponentCheck& c) {
  return {{"expected", c.expected}, {"observed", c.observed}, {"z", c.z}, {"pass", c.pass}};
}

inline const char* verdict_token(protocol::Verdict v) {
  switch (v) {
    case protocol::Verdict::Pass: return "pass";
    case protocol::Verdict::Fail: return "fail";
    case protocol::Verdict::InsufficientData: return "insufficient-data";
  }
  return "?";
}

inline json verdicts_json(const protocol::TheoryVerdict& v) {
  return {{"p_bit0", check_json(v.bit0)},
          {"p_bit1", check_json(v.bit1)},
          {"p_inconclusive", check_json(v.inconclusive)},
          {"disguised", check_json(v.disguised)},
          {"overall", verdict_token(v.verdict)}};
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open output file: " + path.string());
  out << content;
  if (!out) throw Error("write failed: " + path.string());
}

inline std::string trials_csv(std::span<const protocol::TrialRecord> records) {
  std::string csv = "index,sent,d1,d2,d3,d4,outcome,eve_bit\n";
  csv.reserve(csv.size() + records.size() * 32);
  char line[96];
  for (const auto& r : records) {
    std::snprintf(line, sizeof(line), "%llu,%s,%d,%d,%d,%d,%s,%s\n",
                  static_cast<unsigned long long>(r.index), label_token(r.sent), r.pattern.d1 ? 1 : 0,
                  r.pattern.d2 ? 1 : 0, r.pattern.d3 ? 1 : 0, r.pattern.d4 ? 1 : 0,
                  outcome_token(r.outcome),
                  r.eve_knowledge ? (*r.eve_knowledge ? "1" : "0") : "");
    csv += line;
  }
  return csv;
}

struct RunOutput {
  protocol::SessionResult session;
  theory::OutputDistribution expected{0.0, 0.0, 1.0};
  protocol::TheoryVerdict verdict;
  json summary;
  double wall_seconds = 0.0;
};

inline RunOutput execute(const RunConfig& cfg) {
  const auto params = cfg.to_params();
  const auto t0 = std::chrono::steady_clock::now();
  RunOutput out;
  out.session = protocol::run_session(params, cfg.attack, cfg.trials, cfg.seed, cfg.threads);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto eff = effective_source(cfg);
  out.expected = expected_with_loss(eff.source, eff.alpha, eff.alpha1, cfg.channel_transmittance);
  out.verdict = protocol::compare_to_theory(out.session.stats, out.expected, cfg.trials);

  out.summary["config"] = echo_config(cfg);
  out.summary["stats"] = stats_json(out.session.stats);
  out.summary["theory"] = theory_block(cfg);
  out.summary["verdicts"] = verdicts_json(out.verdict);
  out.summary["meta"] = {{"version", drqkd::version}, {"seed", cfg.seed}, {"trials", cfg.trials}};
  return out;
}

inline void emit_session_files(const RunConfig& cfg, const RunOutput& out) {
  std::filesystem::create_directories(cfg.out_dir);
  const std::filesystem::path dir(cfg.out_dir);
  if (cfg.format != EmitFormat::Csv) write_file(dir / "summary.json", out.summary.dump(2) + "\n");
  if (cfg.format != EmitFormat::Json) write_file(dir / "trials.csv", trials_csv(out.session.records));
}

inline void print_indicators(std::ostream& os, const RunOutput& out) {
  const auto& s = out.session.stats;
  os << "output distribution   bit0=" << num(s.empirical.p_bit0) << "  bit1=" << num(s.empirical.p_bit1)
     << "  inconclusive=" << num(s.empirical.p_inconclusive) << "\n"
     << "  expected            bit0=" << num(out.expected.p_bit0) << "  bit1=" << num(out.expected.p_bit1)
     << "  inconclusive=" << num(out.expected.p_inconclusive) << "\n"
     << "disguised probability " << num(s.disguised_prob) << "\n"
     << "mismatch rate         " << num(s.mismatch_rate) << "\n";
  if (s.eve_fraction > 0.0) os << "eve fraction          " << num(s.eve_fraction) << "\n";
  os << "wall clock            " << num(out.wall_seconds) << " s\n";
}

struct OracleCheck {
  std::string name;
  double metric;
  double bound;
  bool pass;
};

/// Fast independent cross-checks of the Fock engine against the
/// matrix-exponential oracle and the closed-form receiver branches.
inline std::vector<OracleCheck> oracle_checks() {
  std::vector<OracleCheck> checks;
  auto add = [&](const std::string& name, double metric, double bound) {
    checks.push_back({name, metric, bound, metric <= bound});
  };

  {
    double worst = 0.0;
    const fock::FockCutoff c(30);
    for (int n : {0, 1}) {
      for (Complex a : {Complex(0.6, 0.0), Complex(1.0, 0.0), Complex(1.3, 0.4)}) {
        const auto closed = fock::displaced_fock_amplitudes(n, a, c);
        const auto brute = oracle::displaced_amplitudes(n, a, 30);
        for (int m = 0; m <= 30; ++m)
          worst = std::max(worst, std::abs(closed[static_cast<std::size_t>(m)] - brute[static_cast<std::size_t>(m)]));
      }
    }
    add("displaced amplitudes vs generator exponential", worst, 1e-8);
  }
  {
    const fock::FockCutoff c(18);
    const Complex a(0.8, 0.0);
    const auto in = protocol::dual_rail_state(1, a, 0, Complex(0.0, 0.8), c);
    const auto engine = fock::apply_beam_splitter(in, 0, 1, fock::BeamSplitterSpec::balanced());
    const auto brute = oracle::apply_beam_splitter(in, M_PI / 4.0, M_PI / 2.0);
    double worst = 0.0;
    const auto ve = engine.amplitudes();
    const auto vb = brute.amplitudes();
    for (std::size_t i = 0; i < ve.size(); ++i) worst = std::max(worst, std::abs(ve[i] - vb[i]));
    add("beam splitter vs generator exponential", worst, 1e-8);
    add("beam splitter norm drift", std::abs(engine.norm() - in.norm()), 1e-6);
  }
  {
    const fock::FockCutoff c(21);
    const Complex a(1.0, 0.0);
    const auto carrier = protocol::make_carrier(protocol::CarrierLabel::Bit0, a, a, c);
    const auto out = fock::apply_beam_splitter(carrier, 0, 1, fock::BeamSplitterSpec::balanced());
    const Complex s2a = Complex(0.0, std::sqrt(2.0));
    const double s = 1.0 / std::sqrt(2.0);
    const auto closed = fock::superpose({{Complex(s, 0.0), protocol::dual_rail_state(1, 0.0, 0, s2a, c)},
                                         {Complex(0.0, s), protocol::dual_rail_state(0, 0.0, 1, s2a, c)}});
    add("receiver mixer closed-form infidelity", 1.0 - std::norm(fock::inner_product(closed, out)), 1e-6);
  }
  {
    const fock::FockCutoff c(21);
    double worst = 0.0;
    for (int k = 0; k < 16; ++k) {
      const double theta = 2.0 * M_PI * static_cast<double>(k) / 16.0;
      const auto coh = fock::displaced_fock_state(0, Complex(1.0, 0.0), c);
      const auto photon = fock::displaced_fock_state(1, Complex(1.0, 0.0), c);
      worst = std::max(worst, std::abs(fock::quadrature_mean(coh, 0, theta) -
                                       fock::quadrature_mean(photon, 0, theta)));
    }
    add("quadrature indistinguishability", worst, 1e-8);
  }
  return checks;
}

}  // namespace detail

/// simulate: run the seeded session, emit summary + per-trial records, print
/// the three eavesdropping indicators.
inline int cmd_simulate(const RunConfig& cfg, std::ostream& os) {
  auto out = detail::execute(cfg);
  detail::emit_session_files(cfg, out);
  detail::print_indicators(os, out);
  return kExitOk;
}

/// validate: session + binomial tests against the closed forms + engine
/// cross-checks. Exit 0 only when everything passes.
inline int cmd_validate(const RunConfig& cfg, std::ostream& os) {
  auto out = detail::execute(cfg);
  detail::emit_session_files(cfg, out);
  detail::print_indicators(os, out);

  os << "\nindicator checks (3-sigma binomial):\n";
  auto line = [&](const char* name, const protocol::ComponentCheck& c) {
    os << "  " << name << ": observed=" << detail::num(c.observed) << " expected=" << detail::num(c.expected)
       << " z=" << detail::num(c.z) << " -> " << (c.pass ? "pass" : "FAIL") << "\n";
  };
  line("p_bit0", out.verdict.bit0);
  line("p_bit1", out.verdict.bit1);
  line("p_inconclusive", out.verdict.inconclusive);
  line("disguised", out.verdict.disguised);

  os << "engine cross-checks:\n";
  bool oracles_ok = true;
  for (const auto& c : detail::oracle_checks()) {
    oracles_ok = oracles_ok && c.pass;
    os << "  " << c.name << ": " << detail::num(c.metric) << " (bound " << detail::num(c.bound) << ") -> "
       << (c.pass ? "pass" : "FAIL") << "\n";
  }

  os << "verdict: " << detail::verdict_token(out.verdict.verdict) << "\n";
  return (out.verdict.overall_pass() && oracles_ok) ? kExitOk : kExitValidation;
}

/// sweep: one session per grid point along the chosen axis, empirical and
/// theoretical columns side by side.
inline int cmd_sweep(const RunConfig& cfg, std::ostream& os) {
  if (!cfg.sweep) throw ConfigError("sweep: missing sweep block in config");
  const auto& sw = *cfg.sweep;

  // Axis prerequisites are schema-level errors, raised before any output.
  if (sw.axis == "eta_fraction" &&
      !(cfg.attack && std::holds_alternative<attacks::SuperpositionResend>(*cfg.attack)))
    throw ConfigError("sweep.axis eta_fraction requires a superposition_resend attack");
  if (sw.axis == "t_mag2" && !(cfg.attack && std::holds_alternative<attacks::BeamSplit>(*cfg.attack)))
    throw ConfigError("sweep.axis t_mag2 requires a beam_split attack");
  if (sw.axis == "p1_star" &&
      !(cfg.attack && std::holds_alternative<attacks::InterceptResend>(*cfg.attack)))
    throw ConfigError("sweep.axis p1_star requires an intercept_resend attack");
  if (sw.axis == "channel_transmittance")
    for (double v : sw.grid)
      if (v <= 0.0 || v > 1.0) throw ConfigError("sweep.grid: channel_transmittance outside (0,1]");
  if (sw.axis == "eta_fraction" || sw.axis == "t_mag2" || sw.axis == "p1_star")
    for (double v : sw.grid)
      if (v < 0.0 || v > 1.0) throw ConfigError("sweep.grid: value outside [0,1]");

  std::string csv =
      "axis,value,trials,emp_p_bit0,emp_p_bit1,emp_p_inconclusive,emp_p_disguised,emp_mismatch,"
      "emp_eve_fraction,th_p_bit0,th_p_bit1,th_p_inconclusive,th_p_disguised,th_eve_info\n";

  for (const double v : sw.grid) {
    RunConfig point = cfg;
    point.sweep.reset();
    if (sw.axis == "alpha") {
      point.alpha = Complex(v, 0.0);
      point.alpha1.reset();
    } else if (sw.axis == "channel_transmittance") {
      point.channel_transmittance = v;
    } else if (sw.axis == "eta_fraction") {
      std::get<attacks::SuperpositionResend>(*point.attack).eta_fraction = v;
    } else if (sw.axis == "t_mag2") {
      auto& bs = std::get<attacks::BeamSplit>(*point.attack);
      bs.t_e = Complex(std::sqrt(v), 0.0);
      bs.r_e = Complex(std::sqrt(1.0 - v), 0.0);
    } else if (sw.axis == "p1_star") {
      std::get<attacks::InterceptResend>(*point.attack).p1_star = v;
    }

    auto out = detail::execute(point);
    const auto eff = detail::effective_source(point);
    const json atk = detail::attack_theory(point, eff);
    theory::OutputDistribution th = out.expected;
    double th_pd = 0.0;
    std::string th_eve;
    if (!atk.is_null() && atk.contains("p_bit0")) {
      th = theory::OutputDistribution::from_bits(atk["p_bit0"].get<double>(), atk["p_bit1"].get<double>());
      if (atk.contains("p_disguised")) th_pd = atk["p_disguised"].get<double>();
      if (atk.contains("eve_information")) th_eve = detail::num(atk["eve_information"].get<double>());
    }
    const auto& s = out.session.stats;
    csv += sw.axis + "," + detail::num(v) + "," + std::to_string(point.trials) + "," +
           detail::num(s.empirical.p_bit0) + "," + detail::num(s.empirical.p_bit1) + "," +
           detail::num(s.empirical.p_inconclusive) + "," + detail::num(s.disguised_prob) + "," +
           detail::num(s.mismatch_rate) + "," + detail::num(s.eve_fraction) + "," +
           detail::num(th.p_bit0) + "," + detail::num(th.p_bit1) + "," + detail::num(th.p_inconclusive) +
           "," + detail::num(th_pd) + "," + th_eve + "\n";
    os << "sweep " << sw.axis << "=" << detail::num(v) << "  p_bit0=" << detail::num(s.empirical.p_bit0)
       << " (theory " << detail::num(th.p_bit0) << ")\n";
  }

  std::filesystem::create_directories(cfg.out_dir);
  detail::write_file(std::filesystem::path(cfg.out_dir) / "sweep.csv", csv);
  return kExitOk;
}

/// attack-compare: one session per strategy; detection indicators, z-scores
/// and Eve's information, empirical and closed-form.
inline int cmd_attack_compare(const RunConfig& cfg, std::ostream& os) {
  if (cfg.compare.empty()) throw ConfigError("attack-compare: missing compare.strategies in config");

  json rows = json::array();
  std::string csv =
      "name,type,detected,max_abs_z,emp_p_bit0,th_p_bit0,emp_p_disguised,th_p_disguised,"
      "emp_eve_fraction,emp_eve_silent,th_eve_info\n";

  for (const auto& named : cfg.compare) {
    RunConfig point = cfg;
    point.compare.clear();
    point.attack = named.spec;
    point.attack_type = named.name;

    auto out = detail::execute(point);
    const auto eff = detail::effective_source(point);
    const json atk = detail::attack_theory(point, eff);
    const auto& s = out.session.stats;
    const auto& v = out.verdict;
    const double max_z = std::max(std::max(std::abs(v.bit0.z), std::abs(v.bit1.z)),
                                  std::max(std::abs(v.inconclusive.z), std::abs(v.disguised.z)));
    const bool detected = !v.overall_pass();

    json row;
    row["name"] = named.name;
    row["theory"] = atk;
    row["stats"] = detail::stats_json(s);
    row["verdicts"] = detail::verdicts_json(v);
    row["detected"] = detected;
    row["max_abs_z"] = max_z;
    if (s.eve_silent_fraction) row["eve_silent_fraction"] = *s.eve_silent_fraction;
    rows.push_back(row);

    const std::string type = atk.contains("type") ? atk["type"].get<std::string>() : "none";
    std::string th_pd = "0";
    if (atk.contains("p_disguised")) th_pd = detail::num(atk["p_disguised"].get<double>());
    std::string th_b0;
    if (atk.contains("p_bit0")) th_b0 = detail::num(atk["p_bit0"].get<double>());
    std::string th_eve;
    if (atk.contains("eve_information")) th_eve = detail::num(atk["eve_information"].get<double>());
    csv += named.name + "," + type + "," + (detected ? "1" : "0") + "," + detail::num(max_z) + "," +
           detail::num(s.empirical.p_bit0) + "," + th_b0 + "," + detail::num(s.disguised_prob) + "," +
           th_pd + "," + detail::num(s.eve_fraction) + "," +
           (s.eve_silent_fraction ? detail::num(*s.eve_silent_fraction) : std::string()) + "," + th_eve +
           "\n";

    os << named.name << ": " << (detected ? "DETECTED" : "undetected") << "  max|z|=" << detail::num(max_z)
       << "  p_bit0=" << detail::num(s.empirical.p_bit0) << "  P_d=" << detail::num(s.disguised_prob)
       << "  eve_fraction=" << detail::num(s.eve_fraction);
    if (s.eve_silent_fraction) os << "  eve_silent=" << detail::num(*s.eve_silent_fraction);
    os << "\n";
  }

  std::filesystem::create_directories(cfg.out_dir);
  const std::filesystem::path dir(cfg.out_dir);
  if (cfg.format != EmitFormat::Csv) {
    json doc;
    doc["config"] = echo_config(cfg);
    doc["strategies"] = rows;
    doc["meta"] = {{"version", drqkd::version}, {"seed", cfg.seed}, {"trials", cfg.trials}};
    detail::write_file(dir / "attack_compare.json", doc.dump(2) + "\n");
  }
  if (cfg.format != EmitFormat::Json) detail::write_file(dir / "attack_compare.csv", csv);
  return kExitOk;
}

}  // namespace drqkd::cli
