#include <catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <optional>

#include "drqkd/attacks.hpp"
#include "drqkd/protocol.hpp"
#include "drqkd/session.hpp"
#include "drqkd/theory.hpp"
#include "testutil.hpp"

using namespace drqkd;
using fock::Complex;
using protocol::CarrierLabel;
using protocol::EveOutcome;
using protocol::Outcome;
using Catch::Approx;

namespace {

protocol::ProtocolParams params_at(double alpha) {
  protocol::ProtocolParams p;
  p.alpha = p.alpha1 = Complex(alpha, 0);
  p.cutoff = protocol::session_cutoff(alpha);
  return p;
}

}  // namespace

TEST_CASE("intercept-resend forwards the measured bit state") {
  const auto params = params_at(1.0);
  const attacks::InterceptResend spec{0.5, 0.5, Complex(2.0, 0)};
  const auto carrier = protocol::make_carrier(CarrierLabel::Bit0, params.alpha, params.alpha1,
                                              params.cutoff);
  bool saw_bit = false, saw_inconclusive = false;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    RandomStream rng(seed);
    const auto [resent, rec] = attacks::intercept_resend_apply(CarrierLabel::Bit0, carrier, spec, rng);
    REQUIRE(rec.acted);
    CHECK(resent.norm() == Approx(1.0).margin(1e-6));
    if (rec.outcome == EveOutcome::Bit0) {
      saw_bit = true;
      const auto expect = protocol::make_carrier(CarrierLabel::Bit0, spec.alpha_star, spec.alpha_star,
                                                 params.cutoff);
      REQUIRE(testutil::fidelity(resent, expect) == Approx(1.0).margin(1e-9));
      REQUIRE(rec.knowledge_bit == 0);
    }
    if (rec.outcome == EveOutcome::Inconclusive) saw_inconclusive = true;
    REQUIRE(rec.outcome != EveOutcome::Bit1);  // a bit-0 carrier can never read as bit 1
  }
  CHECK(saw_bit);
  CHECK(saw_inconclusive);
}

TEST_CASE("intercept-resend with silent resend policy leaks nothing") {
  auto params = params_at(2.5);
  const attacks::AttackSpec spec = attacks::InterceptResend{0.0, 0.0, Complex(2.5, 0)};
  const std::uint64_t n = 50000;
  const auto result = protocol::run_session(params, spec, n, 424242, 2);
  CHECK(result.stats.disguised_prob == 0.0);
  // inconclusives all turn into disguised resends: the bit rate halves
  const auto pred = theory::intercept_resend_prediction(params.source, 0.0);
  CHECK(testutil::within_3sigma(result.stats.empirical.p_bit0, pred.p_bit0, double(n)));
}

TEST_CASE("intercept-resend session matches the closed-form forecast") {
  auto params = params_at(2.5);
  const attacks::AttackSpec spec = attacks::InterceptResend{0.5, 0.0, Complex(2.5, 0)};
  const std::uint64_t n = 200000;
  const auto result = protocol::run_session(params, spec, n, 20250804, 2);
  const auto pred = theory::intercept_resend_prediction(params.source, 0.5);
  CHECK(pred.p_bit0 == Approx(0.15625).margin(1e-12));
  CHECK(pred.p_disguised == Approx(0.0625).margin(1e-12));
  CHECK(theory::p_zero(params.alpha) < 0.01);  // forecast validity gate
  CHECK(testutil::within_3sigma(result.stats.empirical.p_bit0, pred.p_bit0, double(n)));
  CHECK(testutil::within_3sigma(result.stats.disguised_prob, pred.p_disguised, double(n)));
}

TEST_CASE("intercept-resend disguised probability grows with the resend rate") {
  auto params = params_at(2.5);
  const std::uint64_t n = 100000;
  double prev = -1.0;
  double prev_sigma = 0.0;
  for (const double p_star : {0.25, 0.5, 0.75}) {
    const attacks::AttackSpec spec = attacks::InterceptResend{p_star, 0.0, Complex(2.5, 0)};
    const auto result = protocol::run_session(params, spec, n, 1111, 2);
    const auto pred = theory::intercept_resend_prediction(params.source, p_star);
    CHECK(testutil::within_3sigma(result.stats.disguised_prob, pred.p_disguised, double(n)));
    const double sigma = testutil::binomial_sigma(pred.p_disguised, double(n));
    REQUIRE(result.stats.disguised_prob > prev + 3.0 * std::sqrt(sigma * sigma + prev_sigma * prev_sigma));
    prev = result.stats.disguised_prob;
    prev_sigma = sigma;
  }
}

TEST_CASE("superposition carrier collapses to a single rail behind the mixer") {
  for (const double a : {0.7, 1.0, 2.5}) {
    const fock::FockCutoff c = protocol::session_cutoff(a);
    const Complex s2a(0, std::sqrt(2.0) * a);
    const auto psi1 = attacks::superposition_carrier(0, Complex(a, 0), c);
    const auto out1 = fock::apply_beam_splitter(psi1, 0, 1, fock::BeamSplitterSpec::balanced());
    CHECK(testutil::fidelity(out1, protocol::dual_rail_state(1, 0.0, 0, s2a, c)) > 1.0 - 1e-6);

    const auto psi2 = attacks::superposition_carrier(1, Complex(a, 0), c);
    const auto out2 = fock::apply_beam_splitter(psi2, 0, 1, fock::BeamSplitterSpec::balanced());
    CHECK(testutil::fidelity(out2, protocol::dual_rail_state(0, s2a, 1, 0.0, c)) > 1.0 - 1e-6);
  }
}

TEST_CASE("decohered superposition session halves the bit rate") {
  auto params = params_at(2.5);
  const attacks::AttackSpec spec = attacks::SuperpositionResend{Complex(2.5, 0), 1.0, true};
  const std::uint64_t n = 200000;
  const auto result = protocol::run_session(params, spec, n, 606, 2);
  const auto pred = theory::superposition_resend_prediction(0.5, params.alpha, 1.0, true);
  CHECK(testutil::within_3sigma(result.stats.empirical.p_bit0, pred.dist.p_bit0, double(n)));
  CHECK(testutil::within_3sigma(result.stats.empirical.p_bit1, pred.dist.p_bit1, double(n)));
  CHECK(result.stats.disguised_prob == 0.0);  // the mixture never fakes disguised sends

  // detection: the halved rate fails validation against the ideal forecast
  const auto ideal = theory::expected_output_distribution(params.source, params.alpha, params.alpha1);
  const auto verdict = protocol::compare_to_theory(result.stats, ideal, n);
  CHECK_FALSE(verdict.overall_pass());
  CHECK(std::abs(verdict.bit0.z) > 10.0);
}

TEST_CASE("coherent superposition resend is the protocol's blind spot") {
  auto params = params_at(2.5);
  const attacks::AttackSpec spec = attacks::SuperpositionResend{Complex(2.5, 0), 1.0, false};
  const std::uint64_t n = 200000;
  const auto result = protocol::run_session(params, spec, n, 607, 2);
  const auto ideal = theory::expected_output_distribution(params.source, params.alpha, params.alpha1);
  const auto verdict = protocol::compare_to_theory(result.stats, ideal, n);
  CHECK(verdict.overall_pass());
  CHECK(result.stats.eve_fraction > 0.95);
  CHECK(result.stats.mismatch_rate == 0.0);
}

TEST_CASE("decohered bit rate interpolates linearly in the attacked fraction") {
  auto params = params_at(2.5);
  const std::uint64_t n = 100000;
  double rates[3];
  int i = 0;
  for (const double eta : {0.0, 0.5, 1.0}) {
    const attacks::AttackSpec spec = attacks::SuperpositionResend{Complex(2.5, 0), eta, true};
    rates[i++] = protocol::run_session(params, spec, n, 321, 2).stats.empirical.p_bit0;
  }
  const double mid_expected = 0.5 * (rates[0] + rates[2]);
  const double sigma = std::sqrt(1.5 * rates[1] * (1.0 - rates[1]) / double(n));
  CHECK(std::abs(rates[1] - mid_expected) <= 3.0 * sigma);
  CHECK(rates[2] < rates[0]);
}

TEST_CASE("beam split with full transmission is invisible") {
  const auto params = params_at(1.0);
  const attacks::BeamSplit spec{Complex(1, 0), Complex(0, 0)};
  const auto carrier = protocol::make_carrier(CarrierLabel::Bit0, params.alpha, params.alpha1,
                                              params.cutoff);
  RandomStream rng(9);
  const auto [forwarded, rec] = attacks::beam_split_apply(CarrierLabel::Bit0, carrier, spec, rng);
  CHECK(testutil::fidelity(forwarded, carrier) == Approx(1.0).margin(1e-9));
  CHECK(rec.outcome == EveOutcome::NoMeasurement);
  REQUIRE(rec.tapped_state.has_value());
  CHECK(std::abs(rec.tapped_state->amplitude({0, 0}) - Complex(1, 0)) < 1e-12);
}

TEST_CASE("beam split session: vacuum probability and attenuated rate") {
  const auto params = params_at(1.0);
  const double t2 = 0.99;
  const attacks::AttackSpec spec = attacks::BeamSplit{Complex(std::sqrt(t2), 0),
                                                      Complex(std::sqrt(1.0 - t2), 0)};
  const std::uint64_t n = 200000;
  const auto result = protocol::run_session(params, spec, n, 808, 2);
  const auto pred = theory::beam_split_prediction(0.5, params.alpha, t2);

  CHECK(testutil::within_3sigma(result.stats.empirical.p_bit0, pred.dist.p_bit0, double(n)));

  // among announced (conclusive) trials Eve's taps are pure coherent pairs,
  // so her silent fraction reproduces P_vac exactly
  REQUIRE(result.stats.eve_silent_fraction.has_value());
  const double conclusive = double(result.stats.n_bit0 + result.stats.n_bit1);
  CHECK(std::abs(*result.stats.eve_silent_fraction - pred.p_vac) <=
        3.0 * testutil::binomial_sigma(pred.p_vac, conclusive));

  // her information complements the silent fraction
  const double eve_info = 1.0 - *result.stats.eve_silent_fraction;
  CHECK(std::abs(eve_info - pred.eve_information) <=
        3.0 * testutil::binomial_sigma(pred.p_vac, conclusive));

  // undetected at these settings: the rate shift stays under the radar
  const auto ideal = theory::expected_output_distribution(params.source, params.alpha, params.alpha1);
  const auto verdict = protocol::compare_to_theory(result.stats, ideal, n);
  CHECK(result.stats.disguised_prob == 0.0);
  CHECK(verdict.disguised.pass);
}

TEST_CASE("unitary probe forwards relabeled carriers") {
  const auto params = params_at(1.0);
  const attacks::UnitaryProbe spec{Complex(0.9, 0), Complex(0.9, 0)};
  for (const auto label : {CarrierLabel::Bit0, CarrierLabel::Disguised0, CarrierLabel::Bit1,
                           CarrierLabel::Disguised1}) {
    const auto carrier = protocol::make_carrier(label, params.alpha, params.alpha1, params.cutoff);
    const auto [forwarded, rec] = attacks::probe_apply(label, carrier, spec);
    const auto expect = protocol::make_carrier(label, spec.alpha_e, spec.alpha_1e, params.cutoff);
    REQUIRE(testutil::fidelity(forwarded, expect) == Approx(1.0).margin(1e-9));
    REQUIRE(rec.probe_index.has_value());
    CHECK_FALSE(rec.knowledge_bit.has_value());
  }
  const auto carrier = protocol::make_carrier(CarrierLabel::Bit0, params.alpha, params.alpha1,
                                              params.cutoff);
  const auto [fwd, rec] = attacks::probe_apply(CarrierLabel::Bit0, carrier, spec);
  CHECK(rec.probe_index == attacks::ProbeIndex::E1);

  // matched probe amplitudes leave the carrier untouched
  const attacks::UnitaryProbe null_spec{params.alpha, params.alpha1};
  const auto [same, rec2] = attacks::probe_apply(CarrierLabel::Bit0, carrier, null_spec);
  CHECK(testutil::fidelity(same, carrier) == Approx(1.0).margin(1e-12));
  const auto ov = theory::probe_overlaps(params.alpha, params.alpha, params.alpha);
  CHECK(std::abs(ov.e1_e3 - Complex(1, 0)) < 1e-12);
}

TEST_CASE("null-parameter attacks are statistically invisible") {
  const auto params = params_at(1.0);
  const std::uint64_t n = 200000;
  const auto ideal = theory::expected_output_distribution(params.source, params.alpha, params.alpha1);

  const std::optional<attacks::AttackSpec> specs[] = {
      attacks::InterceptResend{0.0, 0.0, Complex(1, 0)},  // silent on inconclusives, resends measured bits
      attacks::SuperpositionResend{Complex(1, 0), 0.0, false},
      attacks::BeamSplit{Complex(1, 0), Complex(0, 0)},
      attacks::UnitaryProbe{Complex(1, 0), Complex(1, 0)},
  };
  // the intercept strategy reshapes the distribution even at p* = 0 (Eve's
  // filter halves the bit rate), so invisibility applies to the other three
  const auto r0 = protocol::run_session(params, specs[1], n, 5001, 2);
  CHECK(protocol::compare_to_theory(r0.stats, ideal, n).overall_pass());
  CHECK(r0.stats.eve_fraction == 0.0);
  const auto r1 = protocol::run_session(params, specs[2], n, 5002, 2);
  CHECK(protocol::compare_to_theory(r1.stats, ideal, n).overall_pass());
  const auto r2 = protocol::run_session(params, specs[3], n, 5003, 2);
  CHECK(protocol::compare_to_theory(r2.stats, ideal, n).overall_pass());
}

TEST_CASE("forwarded states stay normalized for every strategy") {
  const auto params = params_at(1.0);
  const auto carrier = protocol::make_carrier(CarrierLabel::Bit0, params.alpha, params.alpha1,
                                              params.cutoff);
  RandomStream rng(71);
  for (int k = 0; k < 10; ++k) {
    const auto [f1, r1] = attacks::intercept_resend_apply(
        CarrierLabel::Bit0, carrier, attacks::InterceptResend{0.5, 0.5, Complex(1, 0)}, rng);
    REQUIRE(f1.norm() == Approx(1.0).margin(1e-6));
    const auto [f2, r2] = attacks::superposition_resend_apply(
        CarrierLabel::Bit0, carrier, attacks::SuperpositionResend{Complex(1, 0), 1.0, k % 2 == 0}, rng);
    REQUIRE(f2.norm() == Approx(1.0).margin(1e-6));
    const auto [f3, r3] = attacks::beam_split_apply(
        CarrierLabel::Bit0, carrier, attacks::BeamSplit{Complex(std::sqrt(0.95), 0), Complex(std::sqrt(0.05), 0)},
        rng);
    REQUIRE(f3.norm() == Approx(1.0).margin(1e-6));
    const auto [f4, r4] = attacks::probe_apply(CarrierLabel::Bit0, carrier,
                                               attacks::UnitaryProbe{Complex(0.8, 0), Complex(0.8, 0)});
    REQUIRE(f4.norm() == Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("session records match the reference composition of public ops") {
  // The session orchestration and the op-by-op pipeline must consume the
  // trial substream identically: cold-cache and warm-cache paths, and the
  // reference ops, all land on the same draws.
  auto params = params_at(1.0);
  const std::uint64_t seed = 13579;
  const std::uint64_t n = 120;

  const std::optional<attacks::AttackSpec> strategies[] = {
      std::nullopt,
      attacks::InterceptResend{0.4, 0.2, Complex(1.3, 0)},
      attacks::SuperpositionResend{Complex(1.1, 0), 0.7, true},
      attacks::SuperpositionResend{Complex(1.1, 0), 0.7, false},
      attacks::BeamSplit{Complex(std::sqrt(0.97), 0), Complex(std::sqrt(0.03), 0)},
      attacks::UnitaryProbe{Complex(0.9, 0), Complex(1.05, 0)},
  };
  params.cutoff = protocol::session_cutoff(1.3);

  for (const auto& attack : strategies) {
    const auto session = protocol::run_session(params, attack, n, seed, 2);
    for (std::uint64_t i = 0; i < n; ++i) {
      RandomStream rng = RandomStream::substream(seed, i);

      // reference composition: sample, attack op, receiver, detectors
      auto [label, state] = protocol::alice_sample_carrier(params, rng);
      std::optional<int> know;
      if (attack) {
        if (const auto* a = std::get_if<attacks::InterceptResend>(&*attack)) {
          auto [fwd, rec] = attacks::intercept_resend_apply(label, state, *a, rng);
          state = fwd;
          know = rec.knowledge_bit;
        } else if (const auto* a = std::get_if<attacks::SuperpositionResend>(&*attack)) {
          auto [fwd, rec] = attacks::superposition_resend_apply(label, state, *a, rng);
          state = fwd;
          know = rec.knowledge_bit;
        } else if (const auto* a = std::get_if<attacks::BeamSplit>(&*attack)) {
          auto [fwd, rec] = attacks::beam_split_apply(label, state, *a, rng, params.detectors[0]);
          state = fwd;
          know = rec.knowledge_bit;
        } else if (const auto* a = std::get_if<attacks::UnitaryProbe>(&*attack)) {
          auto [fwd, rec] = attacks::probe_apply(label, state, *a);
          state = fwd;
          know = rec.knowledge_bit;
        }
      }
      const auto out = protocol::bob_network(state, params, rng);
      const auto clicks = fock::sample_click_pattern(out, params.detectors, rng);
      const auto pattern = protocol::ClickPattern::from_clicks(clicks);

      const auto& rec = session.records[i];
      REQUIRE(rec.sent == label);
      REQUIRE(rec.pattern == pattern);
      REQUIRE(rec.outcome == protocol::classify_pattern(pattern));
      REQUIRE(rec.eve_knowledge == know);
    }
  }
}

TEST_CASE("attack spec validation") {
  CHECK_THROWS_AS(attacks::validate(attacks::InterceptResend{1.2, 0.0, Complex(1, 0)}), DomainError);
  CHECK_THROWS_AS(attacks::validate(attacks::SuperpositionResend{Complex(1, 0), -0.1, false}),
                  DomainError);
  CHECK_THROWS_AS(attacks::validate(attacks::BeamSplit{Complex(1, 0), Complex(0.4, 0)}), DomainError);
}
