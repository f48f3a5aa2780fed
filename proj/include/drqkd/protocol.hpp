#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "drqkd/errors.hpp"
#include "drqkd/fock.hpp"
#include "drqkd/rng.hpp"
#include "drqkd/theory.hpp"

namespace drqkd::protocol {

using fock::Complex;

/// Which of the four dual-rail carriers Alice emitted.
enum class CarrierLabel { Bit0, Disguised0, Bit1, Disguised1 };

inline bool is_bit_carrier(CarrierLabel l) {
  return l == CarrierLabel::Bit0 || l == CarrierLabel::Bit1;
}
/// 0 for the first family, 1 for the second.
inline int carrier_family(CarrierLabel l) {
  return (l == CarrierLabel::Bit0 || l == CarrierLabel::Disguised0) ? 0 : 1;
}

enum class Outcome { Bit0, Bit1, Inconclusive };

/// Eve's per-trial measurement result (NoMeasurement = she did not act or
/// registered nothing).
enum class EveOutcome { Bit0, Bit1, Inconclusive, NoMeasurement };

/// Clicks of Bob's four detectors. (D1, D2) sit behind the first receiver
/// rail, (D3, D4) behind the second.
struct ClickPattern {
  bool d1 = false, d2 = false, d3 = false, d4 = false;

  static ClickPattern from_clicks(std::span<const bool> c) {
    if (c.size() != 4) throw ShapeMismatch("ClickPattern: need 4 clicks");
    return {c[0], c[1], c[2], c[3]};
  }
  static ClickPattern from_clicks(const std::vector<bool>& c) {
    if (c.size() != 4) throw ShapeMismatch("ClickPattern: need 4 clicks");
    return {c[0], c[1], c[2], c[3]};
  }
  int pair1_clicks() const { return (d1 ? 1 : 0) + (d2 ? 1 : 0); }
  int pair2_clicks() const { return (d3 ? 1 : 0) + (d4 ? 1 : 0); }
  friend bool operator==(const ClickPattern& a, const ClickPattern& b) {
    return a.d1 == b.d1 && a.d2 == b.d2 && a.d3 == b.d3 && a.d4 == b.d4;
  }
};

/// Three-click rule. The single photon exits the rail whose detector pair
/// shows exactly one click; the coherent field lights up the other pair.
inline Outcome classify_pattern(const ClickPattern& p) {
  const bool one1 = p.pair1_clicks() == 1;
  const bool one2 = p.pair2_clicks() == 1;
  const bool both1 = p.pair1_clicks() == 2;
  const bool both2 = p.pair2_clicks() == 2;
  if (one1 && both2) return Outcome::Bit0;
  if (both1 && one2) return Outcome::Bit1;
  return Outcome::Inconclusive;
}

/// Heralded-photon source feeding the mixing splitter: a single photon with
/// admixed vacuum, overlapped with a strong pump on a splitter (T, R).
struct PhysicalSourceParams {
  double prep_efficiency = 1.0;
  Complex mix_t{0.0, 0.0};
  Complex mix_r{1.0, 0.0};
  Complex pump_amplitude{0.0, 0.0};

  void validate() const {
    if (prep_efficiency < 0.0 || prep_efficiency > 1.0)
      throw DomainError("PhysicalSourceParams: efficiency outside [0,1]");
    if (std::abs(std::norm(mix_t) + std::norm(mix_r) - 1.0) > 1e-12)
      throw DomainError("PhysicalSourceParams: |T|^2 + |R|^2 must be 1");
  }

  /// Bit weight eta |R|^2, disguised weight eta |T|^2 + 1 - eta; identical
  /// for both families.
  theory::SourceDistribution implied_source() const {
    const double p = prep_efficiency * std::norm(mix_r);
    return theory::SourceDistribution::from_bit_weights(p, p);
  }
  /// Displacement reaching the channel: pump attenuated by the mixer.
  Complex effective_alpha() const { return pump_amplitude * mix_t; }
};

struct ProtocolParams {
  Complex alpha{1.0, 0.0};
  Complex alpha1{1.0, 0.0};
  theory::SourceDistribution source = theory::SourceDistribution::from_bit_weights(0.5, 0.5);
  fock::FockCutoff cutoff = fock::default_cutoff(std::sqrt(2.0));
  std::array<fock::DetectorModel, 4> detectors{};
  double channel_transmittance = 1.0;
  std::optional<PhysicalSourceParams> physical_source;
  /// Optional per-trial amplitude schedule (phase relations stay fixed);
  /// applied by run_session, replaces both alpha and alpha1.
  std::function<Complex(std::uint64_t)> amplitude_override;

  void validate() const {
    if (channel_transmittance <= 0.0 || channel_transmittance > 1.0)
      throw DomainError("ProtocolParams: channel_transmittance outside (0,1]");
    for (const auto& d : detectors) d.validate();
    if (physical_source) physical_source->validate();
  }

  /// alpha = alpha1 = 1, equal weights, ideal detectors, lossless channel.
  static ProtocolParams defaults() { return ProtocolParams{}; }
};

/// Cutoff covering a session whose largest displacement magnitude is
/// `alpha_max`; the receiver concentrates amplitudes up to sqrt(2) of it.
inline fock::FockCutoff session_cutoff(double alpha_max) {
  return fock::default_cutoff(std::sqrt(2.0) * alpha_max);
}

/// Two-mode product |n1,a1>|n2,a2>. Raises the cutoff once if too tight.
inline fock::MultiModeState dual_rail_state(int n1, Complex a1, int n2, Complex a2,
                                            fock::FockCutoff cutoff) {
  auto build = [&](fock::FockCutoff c) {
    std::array<fock::MultiModeState, 2> rails = {
        fock::MultiModeState::from_single_mode(fock::displaced_fock_amplitudes(n1, a1, c), c),
        fock::MultiModeState::from_single_mode(fock::displaced_fock_amplitudes(n2, a2, c), c)};
    return fock::compose_modes(std::span<const fock::MultiModeState>(rails));
  };
  try {
    return build(cutoff);
  } catch (const CutoffTooSmall&) {
    const double amax = std::max(std::abs(a1), std::abs(a2));
    fock::FockCutoff raised(std::max(fock::default_cutoff(amax).n_max() + std::max(n1, n2),
                                     2 * cutoff.n_max()));
    return build(raised);
  }
}

/// The four carrier states. First family: (alpha, i alpha); second family:
/// (i alpha1, alpha1). The single photon always rides on rail 1.
inline fock::MultiModeState make_carrier(CarrierLabel label, Complex alpha, Complex alpha1,
                                         fock::FockCutoff cutoff) {
  const Complex i(0.0, 1.0);
  switch (label) {
    case CarrierLabel::Bit0: return dual_rail_state(1, alpha, 0, i * alpha, cutoff);
    case CarrierLabel::Disguised0: return dual_rail_state(0, alpha, 0, i * alpha, cutoff);
    case CarrierLabel::Bit1: return dual_rail_state(1, i * alpha1, 0, alpha1, cutoff);
    case CarrierLabel::Disguised1: return dual_rail_state(0, i * alpha1, 0, alpha1, cutoff);
  }
  throw DomainError("make_carrier: unreachable");
}

/// Samples the carrier ensemble: family with probability 1/2 each, then bit
/// vs disguised per the source distribution. Two uniforms.
inline std::pair<CarrierLabel, fock::MultiModeState> alice_sample_carrier(const ProtocolParams& params,
                                                                          RandomStream& rng) {
  const bool family2 = rng.uniform01() >= 0.5;
  const double bit_w = family2 ? params.source.p2() : params.source.p1();
  const bool bit = rng.uniform01() < bit_w;
  const CarrierLabel label = family2 ? (bit ? CarrierLabel::Bit1 : CarrierLabel::Disguised1)
                                     : (bit ? CarrierLabel::Bit0 : CarrierLabel::Disguised0);
  return {label, make_carrier(label, params.alpha, params.alpha1, params.cutoff)};
}

struct PhysicalDraw {
  CarrierLabel label;
  fock::MultiModeState state;
  theory::SourceDistribution implied;
};

/// Samples the statistical mixture produced by the heralded source behind the
/// mixing splitter. Same draw order as alice_sample_carrier.
inline PhysicalDraw alice_physical_source(const PhysicalSourceParams& phys, fock::FockCutoff cutoff,
                                          RandomStream& rng) {
  phys.validate();
  const auto implied = phys.implied_source();
  const Complex a = phys.effective_alpha();
  const bool family2 = rng.uniform01() >= 0.5;
  const bool bit = rng.uniform01() < implied.p1();
  const CarrierLabel label = family2 ? (bit ? CarrierLabel::Bit1 : CarrierLabel::Disguised1)
                                     : (bit ? CarrierLabel::Bit0 : CarrierLabel::Disguised0);
  return {label, make_carrier(label, a, a, cutoff), implied};
}

/// Bob's receiver: channel loss per rail (splitter to a sampled-and-dropped
/// vacuum ancilla), the balanced mixing splitter, then one balanced splitter
/// per output rail. Output modes are (D1, D2, D3, D4); the (D1, D2) pair
/// descends from mixer output 1. The rng is only consumed when the channel
/// is lossy.
inline fock::MultiModeState bob_network(const fock::MultiModeState& carrier, const ProtocolParams& params,
                                        RandomStream& rng) {
  if (carrier.mode_count() != 2) throw ShapeMismatch("bob_network: carrier must have two modes");
  const auto balanced = fock::BeamSplitterSpec::balanced();
  fock::MultiModeState state = carrier;

  if (params.channel_transmittance < 1.0) {
    const auto loss = fock::BeamSplitterSpec::from_transmittance(params.channel_transmittance);
    const auto vac = fock::MultiModeState::vacuum(1, state.cutoff());
    for (int rail = 0; rail < 2; ++rail) {
      state = fock::compose_modes({state, vac});
      state = fock::apply_beam_splitter(state, rail, 2, loss);
      const std::array<int, 1> anc = {2};
      auto [outcome, reduced] = fock::sample_and_remove_modes(state, anc, rng);
      state = std::move(reduced);
    }
  }

  state = fock::apply_beam_splitter(state, 0, 1, balanced);
  const auto vac = fock::MultiModeState::vacuum(1, state.cutoff());
  state = fock::compose_modes({state, vac, vac});
  state = fock::apply_beam_splitter(state, 0, 2, balanced);
  state = fock::apply_beam_splitter(state, 1, 3, balanced);
  const std::array<int, 4> order = {0, 2, 1, 3};
  return fock::permute_modes(state, order);
}

struct TrialRecord {
  std::uint64_t index = 0;
  CarrierLabel sent = CarrierLabel::Bit0;
  ClickPattern pattern;
  Outcome outcome = Outcome::Inconclusive;
  std::optional<int> eve_knowledge;      // bit Eve expects Bob to sift
  std::optional<EveOutcome> eve_outcome; // set whenever an attack ran
};

struct SessionStats {
  theory::OutputDistribution empirical{0.0, 0.0, 1.0};
  double disguised_prob = 0.0;   // conclusive outcomes on disguised sends / all trials
  double mismatch_rate = 0.0;    // wrong or disguised-born bits / conclusive trials
  double eve_fraction = 0.0;     // conclusive trials where Eve held Bob's bit
  /// Among Bob-conclusive trials: fraction where Eve registered nothing.
  /// That is the operationally relevant set; she only reads her records at
  /// announced indices.
  std::optional<double> eve_silent_fraction;
  std::uint64_t trial_count = 0;
  std::uint64_t n_bit0 = 0, n_bit1 = 0, n_inconclusive = 0;
  std::uint64_t n_disguised_conclusive = 0, n_mismatch = 0, n_eve_correct = 0;
};

inline SessionStats empirical_stats(std::span<const TrialRecord> records) {
  if (records.empty()) throw EmptySession("empirical_stats: no records");
  SessionStats s;
  s.trial_count = records.size();
  std::uint64_t n_eve_silent = 0;
  bool any_eve = false;
  for (const auto& r : records) {
    const bool conclusive = r.outcome != Outcome::Inconclusive;
    if (r.outcome == Outcome::Bit0) ++s.n_bit0;
    else if (r.outcome == Outcome::Bit1) ++s.n_bit1;
    else ++s.n_inconclusive;
    if (r.eve_outcome) any_eve = true;
    if (conclusive) {
      const int bob_bit = r.outcome == Outcome::Bit1 ? 1 : 0;
      if (!is_bit_carrier(r.sent)) {
        ++s.n_disguised_conclusive;
        ++s.n_mismatch;
      } else if ((r.sent == CarrierLabel::Bit1 ? 1 : 0) != bob_bit) {
        ++s.n_mismatch;
      }
      if (r.eve_knowledge && *r.eve_knowledge == bob_bit) ++s.n_eve_correct;
      if (r.eve_outcome && *r.eve_outcome == EveOutcome::NoMeasurement) ++n_eve_silent;
    }
  }
  const double n = static_cast<double>(s.trial_count);
  s.empirical = theory::OutputDistribution::make(static_cast<double>(s.n_bit0) / n,
                                                 static_cast<double>(s.n_bit1) / n,
                                                 static_cast<double>(s.n_inconclusive) / n);
  const std::uint64_t conclusive = s.n_bit0 + s.n_bit1;
  s.disguised_prob = static_cast<double>(s.n_disguised_conclusive) / n;
  s.mismatch_rate = conclusive ? static_cast<double>(s.n_mismatch) / static_cast<double>(conclusive) : 0.0;
  s.eve_fraction = conclusive ? static_cast<double>(s.n_eve_correct) / static_cast<double>(conclusive) : 0.0;
  if (any_eve)
    s.eve_silent_fraction = conclusive ? static_cast<double>(n_eve_silent) / static_cast<double>(conclusive) : 0.0;
  return s;
}

struct ComponentCheck {
  double expected = 0.0;
  double observed = 0.0;
  double z = 0.0;
  bool pass = true;
};

enum class Verdict { Pass, Fail, InsufficientData };

struct TheoryVerdict {
  Verdict verdict = Verdict::Pass;
  ComponentCheck bit0, bit1, inconclusive, disguised;
  bool overall_pass() const { return verdict == Verdict::Pass; }
};

namespace detail {

inline ComponentCheck binomial_check(double expected, double observed, double n) {
  ComponentCheck c{expected, observed, 0.0, true};
  const double var = expected * (1.0 - expected) / n;
  if (var <= 0.0) {
    c.z = observed == expected ? 0.0 : 1e9;
  } else {
    c.z = (observed - expected) / std::sqrt(var);
  }
  c.pass = std::abs(c.z) <= 3.0;
  return c;
}

}  // namespace detail

/// Two-sided binomial z-tests of the empirical distribution against the
/// expected one at the 3-sigma level. The disguised probability is tested
/// against a zero null using its own empirical variance, which fails once
/// ten or more disguised-born bits appear.
inline TheoryVerdict compare_to_theory(const SessionStats& stats, const theory::OutputDistribution& expected,
                                       std::uint64_t n) {
  TheoryVerdict v;
  if (n < 1000) {
    v.verdict = Verdict::InsufficientData;
    return v;
  }
  const double dn = static_cast<double>(n);
  v.bit0 = detail::binomial_check(expected.p_bit0, stats.empirical.p_bit0, dn);
  v.bit1 = detail::binomial_check(expected.p_bit1, stats.empirical.p_bit1, dn);
  v.inconclusive = detail::binomial_check(expected.p_inconclusive, stats.empirical.p_inconclusive, dn);
  v.disguised.expected = 0.0;
  v.disguised.observed = stats.disguised_prob;
  const double pd = stats.disguised_prob;
  v.disguised.z = pd > 0.0 ? std::sqrt(dn * pd / (1.0 - pd)) : 0.0;
  v.disguised.pass = v.disguised.z <= 3.0;
  v.verdict = (v.bit0.pass && v.bit1.pass && v.inconclusive.pass && v.disguised.pass) ? Verdict::Pass
                                                                                      : Verdict::Fail;
  return v;
}

}  // namespace drqkd::protocol
