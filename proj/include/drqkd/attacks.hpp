#pragma once

#include <cmath>
#include <optional>
#include <utility>
#include <variant>

#include "drqkd/errors.hpp"
#include "drqkd/fock.hpp"
#include "drqkd/protocol.hpp"
#include "drqkd/rng.hpp"

namespace drqkd::attacks {

using fock::Complex;
using protocol::CarrierLabel;
using protocol::ClickPattern;
using protocol::EveOutcome;
using protocol::Outcome;

/// Measure-and-resend with fresh basis states of amplitude alpha_star.
/// p1_star / p2_star: probability to resend the bit state (instead of the
/// disguised one) after an inconclusive outcome attributed to family 1 / 2.
struct InterceptResend {
  double p1_star = 0.0;
  double p2_star = 0.0;
  Complex alpha_star{1.0, 0.0};
};

/// Measure-and-resend with two-rail superposition carriers; `decohered`
/// degrades them to the equal-weight mixture of their components.
struct SuperpositionResend {
  Complex alpha_prime{1.0, 0.0};
  double eta_fraction = 0.0;
  bool decohered = false;
};

/// Passive tap of both rails through splitters [[T, R], [-R*, T*]].
struct BeamSplit {
  Complex t_e{1.0, 0.0};
  Complex r_e{0.0, 0.0};
};

/// Unitary probe: carriers forwarded with shifted amplitudes, Eve keeps a
/// probe state known only through pairwise overlaps.
struct UnitaryProbe {
  Complex alpha_e{1.0, 0.0};
  Complex alpha_1e{1.0, 0.0};
};

using AttackSpec = std::variant<InterceptResend, SuperpositionResend, BeamSplit, UnitaryProbe>;

inline void validate(const AttackSpec& spec) {
  if (const auto* a = std::get_if<InterceptResend>(&spec)) {
    if (a->p1_star < 0.0 || a->p1_star > 1.0 || a->p2_star < 0.0 || a->p2_star > 1.0)
      throw DomainError("InterceptResend: resend probabilities outside [0,1]");
  } else if (const auto* a = std::get_if<SuperpositionResend>(&spec)) {
    if (a->eta_fraction < 0.0 || a->eta_fraction > 1.0)
      throw DomainError("SuperpositionResend: eta_fraction outside [0,1]");
  } else if (const auto* a = std::get_if<BeamSplit>(&spec)) {
    if (std::abs(std::norm(a->t_e) + std::norm(a->r_e) - 1.0) > 1e-12)
      throw DomainError("BeamSplit: |t_e|^2 + |r_e|^2 must be 1");
  }
}

enum class ProbeIndex { E1, E2, E3, E4 };

struct EveRecord {
  bool acted = false;
  EveOutcome outcome = EveOutcome::NoMeasurement;
  std::optional<ProbeIndex> probe_index;                 // unitary probe only
  std::optional<fock::MultiModeState> tapped_state;      // beam split only
  std::optional<int> knowledge_bit;                      // bit Eve expects Bob to sift
};

/// Eve running Bob's receiver: lossless network, ideal detectors.
/// Consumes exactly five uniforms.
inline std::pair<ClickPattern, Outcome> measure_like_bob(const fock::MultiModeState& carrier,
                                                         RandomStream& rng) {
  protocol::ProtocolParams ideal;
  ideal.channel_transmittance = 1.0;
  const auto out = protocol::bob_network(carrier, ideal, rng);
  const auto clicks = fock::sample_click_pattern(out, ideal.detectors, rng);
  const auto pattern = ClickPattern::from_clicks(clicks);
  return {pattern, protocol::classify_pattern(pattern)};
}

/// Family guess from an inconclusive pattern: clicks confined to the second
/// detector pair point at family 1 carriers, to the first pair at family 2.
/// Returns -1 when the pattern carries no side information.
inline int family_hint(const ClickPattern& p) {
  const int c1 = p.pair1_clicks();
  const int c2 = p.pair2_clicks();
  if (c1 == 0 && c2 > 0) return 0;
  if (c2 == 0 && c1 > 0) return 1;
  return -1;
}

namespace detail {

inline CarrierLabel bit_label(int family) { return family == 0 ? CarrierLabel::Bit0 : CarrierLabel::Bit1; }
inline CarrierLabel disguised_label(int family) {
  return family == 0 ? CarrierLabel::Disguised0 : CarrierLabel::Disguised1;
}

/// Family for an inconclusive pattern: hint when present, else a fair coin.
inline int family_or_coin(const ClickPattern& p, RandomStream& rng) {
  const int hint = family_hint(p);
  if (hint >= 0) return hint;
  return rng.uniform01() < 0.5 ? 0 : 1;
}

}  // namespace detail

/// Superposition carrier resent on a bit outcome; maps to a pure single-rail
/// photon behind the receiver's mixing splitter.
inline fock::MultiModeState superposition_carrier(int family, Complex a, fock::FockCutoff cutoff) {
  const Complex i(0.0, 1.0);
  const double s = 1.0 / std::sqrt(2.0);
  if (family == 0) {
    const auto c1 = protocol::dual_rail_state(1, a, 0, i * a, cutoff);
    const auto c2 = protocol::dual_rail_state(0, a, 1, i * a, cutoff);
    return fock::superpose({{Complex(s, 0.0), c1}, {Complex(0.0, -s), c2}});
  }
  const auto c1 = protocol::dual_rail_state(1, i * a, 0, a, cutoff);
  const auto c2 = protocol::dual_rail_state(0, i * a, 1, a, cutoff);
  return fock::superpose({{Complex(0.0, -s), c1}, {Complex(s, 0.0), c2}});
}

/// Component of the dephased superposition carrier: `flipped` puts the photon
/// on the second rail.
inline fock::MultiModeState decohered_component(int family, bool flipped, Complex a,
                                                fock::FockCutoff cutoff) {
  const Complex i(0.0, 1.0);
  if (family == 0)
    return flipped ? protocol::dual_rail_state(0, a, 1, i * a, cutoff)
                   : protocol::dual_rail_state(1, a, 0, i * a, cutoff);
  return flipped ? protocol::dual_rail_state(0, i * a, 1, a, cutoff)
                 : protocol::dual_rail_state(1, i * a, 0, a, cutoff);
}

/// Eve measures like Bob and resends: the matching bit state on a conclusive
/// outcome, else the bit state with probability p*_family (family guessed
/// from the click pattern) and the disguised state otherwise.
inline std::pair<fock::MultiModeState, EveRecord> intercept_resend_apply(CarrierLabel /*label*/,
                                                                         const fock::MultiModeState& state,
                                                                         const InterceptResend& spec,
                                                                         RandomStream& rng) {
  const auto cutoff = state.cutoff();
  const auto [pattern, outcome] = measure_like_bob(state, rng);
  EveRecord rec;
  rec.acted = true;
  CarrierLabel resent;
  if (outcome == Outcome::Bit0 || outcome == Outcome::Bit1) {
    const int bit = outcome == Outcome::Bit1 ? 1 : 0;
    rec.outcome = bit ? EveOutcome::Bit1 : EveOutcome::Bit0;
    rec.knowledge_bit = bit;
    resent = detail::bit_label(bit);
  } else {
    rec.outcome = EveOutcome::Inconclusive;
    const int family = detail::family_or_coin(pattern, rng);
    const double p_star = family == 0 ? spec.p1_star : spec.p2_star;
    if (rng.uniform01() < p_star) {
      resent = detail::bit_label(family);
      rec.knowledge_bit = family;  // she knows which bit her forgery carries
    } else {
      resent = detail::disguised_label(family);
    }
  }
  return {protocol::make_carrier(resent, spec.alpha_star, spec.alpha_star, cutoff), rec};
}

/// Eve attacks a fraction eta of the trials; on a bit outcome she resends the
/// superposition carrier (or, decohered, one of its components), on an
/// inconclusive outcome the matching disguised state.
inline std::pair<fock::MultiModeState, EveRecord> superposition_resend_apply(
    CarrierLabel /*label*/, const fock::MultiModeState& state, const SuperpositionResend& spec,
    RandomStream& rng) {
  EveRecord rec;
  if (rng.uniform01() >= spec.eta_fraction) {
    return {state, rec};  // carrier passes untouched
  }
  rec.acted = true;
  const auto cutoff = state.cutoff();
  const auto [pattern, outcome] = measure_like_bob(state, rng);
  if (outcome == Outcome::Bit0 || outcome == Outcome::Bit1) {
    const int bit = outcome == Outcome::Bit1 ? 1 : 0;
    rec.outcome = bit ? EveOutcome::Bit1 : EveOutcome::Bit0;
    rec.knowledge_bit = bit;
    if (spec.decohered) {
      const bool flipped = rng.uniform01() < 0.5;
      return {decohered_component(bit, flipped, spec.alpha_prime, cutoff), rec};
    }
    return {superposition_carrier(bit, spec.alpha_prime, cutoff), rec};
  }
  rec.outcome = EveOutcome::Inconclusive;
  const int family = detail::family_or_coin(pattern, rng);
  return {protocol::make_carrier(detail::disguised_label(family), spec.alpha_prime, spec.alpha_prime,
                                 cutoff),
          rec};
}

/// Four-mode state (rail1, rail2, tap1, tap2) after Eve's tap splitters and
/// her own mixing splitter on the taps. Shared with the session cache.
inline fock::MultiModeState beam_split_pre_measurement(const fock::MultiModeState& state,
                                                       const BeamSplit& spec) {
  if (state.mode_count() != 2) throw ShapeMismatch("beam_split: carrier must have two modes");
  const auto vac = fock::MultiModeState::vacuum(1, state.cutoff());
  auto s4 = fock::compose_modes({state, vac, vac});
  const fock::BeamSplitterSpec tap(spec.t_e, spec.r_e);
  // Tap listed first so the rail keeps t*alpha and the tap picks up r*alpha.
  s4 = fock::apply_beam_splitter(s4, 2, 0, tap);
  s4 = fock::apply_beam_splitter(s4, 3, 1, tap);
  return fock::apply_beam_splitter(s4, 2, 3, fock::BeamSplitterSpec::balanced());
}

/// Splits both rails, forwards the transmitted part and measures the taps
/// behind a balanced splitter with threshold detectors. A click confined to
/// the second tap output reads Bit0, to the first Bit1; silence on both is
/// NoMeasurement. Consumes three uniforms.
inline std::pair<fock::MultiModeState, EveRecord> beam_split_apply(
    CarrierLabel /*label*/, const fock::MultiModeState& state, const BeamSplit& spec, RandomStream& rng,
    const fock::DetectorModel& eve_detector = fock::DetectorModel{}) {
  const auto s4 = beam_split_pre_measurement(state, spec);
  const std::array<int, 2> taps = {2, 3};
  const auto sampler = fock::make_marginal_sampler(s4, taps);
  const auto ns = sampler.sample(rng);
  auto [prob, forwarded] = fock::remove_modes(s4, taps, ns);

  EveRecord rec;
  rec.acted = true;
  const bool c1 = rng.bernoulli(fock::click_probability(eve_detector, ns[0]));
  const bool c2 = rng.bernoulli(fock::click_probability(eve_detector, ns[1]));
  if (!c1 && !c2) {
    rec.outcome = EveOutcome::NoMeasurement;
  } else if (c2 && !c1) {
    rec.outcome = EveOutcome::Bit0;
    rec.knowledge_bit = 0;
  } else if (c1 && !c2) {
    rec.outcome = EveOutcome::Bit1;
    rec.knowledge_bit = 1;
  } else {
    rec.outcome = EveOutcome::Inconclusive;
  }
  auto tapped = protocol::dual_rail_state(ns[0], Complex(0.0, 0.0), ns[1], Complex(0.0, 0.0),
                                          state.cutoff());
  rec.tapped_state = std::move(tapped);
  return {std::move(forwarded), rec};
}

/// Unitary probe: the carrier moves on with shifted amplitudes while Eve
/// stores the matching probe state. Deterministic; her distinguishing power
/// lives entirely in theory::probe_overlaps.
inline std::pair<fock::MultiModeState, EveRecord> probe_apply(CarrierLabel label,
                                                              const fock::MultiModeState& state,
                                                              const UnitaryProbe& spec) {
  EveRecord rec;
  rec.acted = true;
  rec.outcome = EveOutcome::NoMeasurement;
  switch (label) {
    case CarrierLabel::Bit0: rec.probe_index = ProbeIndex::E1; break;
    case CarrierLabel::Disguised0: rec.probe_index = ProbeIndex::E2; break;
    case CarrierLabel::Bit1: rec.probe_index = ProbeIndex::E3; break;
    case CarrierLabel::Disguised1: rec.probe_index = ProbeIndex::E4; break;
  }
  return {protocol::make_carrier(label, spec.alpha_e, spec.alpha_1e, state.cutoff()), rec};
}

}  // namespace drqkd::attacks
