#include <catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <complex>
#include <map>

#include "drqkd/attacks.hpp"
#include "drqkd/protocol.hpp"
#include "drqkd/session.hpp"
#include "drqkd/theory.hpp"
#include "testutil.hpp"

using namespace drqkd;
using fock::Complex;
using protocol::CarrierLabel;
using protocol::ClickPattern;
using protocol::Outcome;
using Catch::Approx;

TEST_CASE("carrier construction") {
  const fock::FockCutoff c(21);
  const Complex a(1, 0);
  const auto bit0 = protocol::make_carrier(CarrierLabel::Bit0, a, a, c);
  const auto direct = fock::compose_modes({fock::displaced_fock_state(1, a, c),
                                           fock::displaced_fock_state(0, Complex(0, 1), c)});
  CHECK(testutil::fidelity(bit0, direct) == Approx(1.0).margin(1e-12));
  CHECK(bit0.norm() == Approx(1.0).margin(1e-9));
}

TEST_CASE("alice carrier sampling") {
  protocol::ProtocolParams params;

  params.source = theory::SourceDistribution::from_bit_weights(1.0, 0.5);
  RandomStream rng(17);
  bool saw_family0 = false;
  for (int k = 0; k < 200; ++k) {
    const auto [label, state] = protocol::alice_sample_carrier(params, rng);
    if (protocol::carrier_family(label) == 0) {
      saw_family0 = true;
      REQUIRE(label == CarrierLabel::Bit0);  // p1 = 1 forces the bit state
      const auto expect = protocol::make_carrier(CarrierLabel::Bit0, params.alpha, params.alpha1,
                                                 params.cutoff);
      REQUIRE(testutil::fidelity(state, expect) == Approx(1.0).margin(1e-12));
    }
  }
  CHECK(saw_family0);

  params.source = theory::SourceDistribution::from_bit_weights(0.0, 0.5);
  RandomStream rng2(18);
  for (int k = 0; k < 200; ++k) {
    const auto [label, state] = protocol::alice_sample_carrier(params, rng2);
    if (protocol::carrier_family(label) == 0) REQUIRE(label == CarrierLabel::Disguised0);
  }

  params.source = theory::SourceDistribution::from_bit_weights(0.5, 0.5);
  RandomStream rng3(19);
  std::map<CarrierLabel, int> counts;
  const int n = 100000;
  for (int k = 0; k < n; ++k) counts[protocol::alice_sample_carrier(params, rng3).first]++;
  for (const auto& [label, cnt] : counts)
    CHECK(testutil::within_3sigma(double(cnt) / n, 0.25, n));
}

TEST_CASE("physical source") {
  protocol::PhysicalSourceParams phys;
  phys.prep_efficiency = 0.8;
  phys.mix_r = Complex(0.5, 0);                  // |R|^2 = 0.25
  phys.mix_t = Complex(std::sqrt(0.75), 0);
  phys.pump_amplitude = Complex(0, 2);
  const auto implied = phys.implied_source();
  CHECK(implied.p1() == Approx(0.2).margin(1e-12));
  CHECK(implied.p1_prime() == Approx(0.8).margin(1e-12));

  // eta |T|^2 + 1 - eta complements eta |R|^2 for any parameters
  RandomStream rng(4);
  for (int k = 0; k < 100; ++k) {
    const double eta = rng.uniform01();
    const double r2 = rng.uniform01();
    CHECK(std::abs((eta * (1.0 - r2) + 1.0 - eta) - (1.0 - eta * r2)) < 1e-12);
  }

  // eta = 1, |R|^2 = 1: always a bit state
  protocol::PhysicalSourceParams mirror;
  mirror.prep_efficiency = 1.0;
  mirror.mix_r = Complex(1, 0);
  mirror.mix_t = Complex(0, 0);
  mirror.pump_amplitude = Complex(1, 0);
  RandomStream rng2(5);
  for (int k = 0; k < 200; ++k) {
    const auto draw = protocol::alice_physical_source(mirror, fock::FockCutoff(12), rng2);
    REQUIRE(protocol::is_bit_carrier(draw.label));
  }

  CHECK_THROWS_AS(
      [] {
        protocol::PhysicalSourceParams bad;
        bad.mix_r = Complex(1, 0);
        bad.mix_t = Complex(0.5, 0);
        bad.validate();
      }(),
      DomainError);
}

TEST_CASE("receiver network on a disguised carrier") {
  protocol::ProtocolParams params;
  RandomStream rng(1);
  const auto carrier = protocol::make_carrier(CarrierLabel::Disguised0, params.alpha, params.alpha1,
                                              params.cutoff);
  const auto out = protocol::bob_network(carrier, params, rng);
  REQUIRE(out.mode_count() == 4);

  // first detector pair sees exact vacuum, second pair mean |alpha|^2 each
  const auto p1 = fock::photon_distribution(out, 0);
  const auto p2 = fock::photon_distribution(out, 1);
  CHECK(p1[0] == Approx(1.0).margin(1e-9));
  CHECK(p2[0] == Approx(1.0).margin(1e-9));
  CHECK(fock::mean_photon_number(out, 2) == Approx(1.0).margin(1e-6));
  CHECK(fock::mean_photon_number(out, 3) == Approx(1.0).margin(1e-6));
  const auto p3 = fock::photon_distribution(out, 2);
  CHECK(p3[0] == Approx(std::exp(-1.0)).margin(1e-6));
}

TEST_CASE("receiver network conserves photons and maps vacuum to vacuum") {
  protocol::ProtocolParams params;
  RandomStream rng(2);
  const auto vac2 = fock::MultiModeState::vacuum(2, params.cutoff);
  const auto out = protocol::bob_network(vac2, params, rng);
  CHECK(std::abs(out.amplitude({0, 0, 0, 0}) - Complex(1, 0)) < 1e-12);

  for (const auto label : {CarrierLabel::Bit0, CarrierLabel::Disguised0, CarrierLabel::Bit1,
                           CarrierLabel::Disguised1}) {
    const auto carrier = protocol::make_carrier(label, params.alpha, params.alpha1, params.cutoff);
    const double before = fock::mean_photon_number(carrier, 0) + fock::mean_photon_number(carrier, 1);
    const auto o = protocol::bob_network(carrier, params, rng);
    double after = 0.0;
    for (int m = 0; m < 4; ++m) after += fock::mean_photon_number(o, m);
    REQUIRE(after == Approx(before).margin(1e-6));
  }
}

TEST_CASE("pattern classification is total and matches the three-click rule") {
  int conclusive = 0;
  for (int mask = 0; mask < 16; ++mask) {
    const ClickPattern p{(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0, (mask & 8) != 0};
    const auto o = protocol::classify_pattern(p);
    if (o != Outcome::Inconclusive) ++conclusive;
    const bool bit0_shape = p.pair1_clicks() == 1 && p.pair2_clicks() == 2;
    const bool bit1_shape = p.pair1_clicks() == 2 && p.pair2_clicks() == 1;
    REQUIRE((o == Outcome::Bit0) == bit0_shape);
    REQUIRE((o == Outcome::Bit1) == bit1_shape);
  }
  CHECK(conclusive == 4);

  CHECK(protocol::classify_pattern({true, false, true, true}) == Outcome::Bit0);
  CHECK(protocol::classify_pattern({true, true, false, true}) == Outcome::Bit1);
  CHECK(protocol::classify_pattern({true, true, false, false}) == Outcome::Inconclusive);
}

TEST_CASE("disguised sends never produce conclusive outcomes") {
  protocol::ProtocolParams params;
  params.source = theory::SourceDistribution::from_bit_weights(0.0, 0.0);  // disguised only
  const auto result = protocol::run_session(params, std::nullopt, 2000, 31, 1);
  for (const auto& r : result.records) {
    REQUIRE_FALSE(protocol::is_bit_carrier(r.sent));
    REQUIRE(r.outcome == Outcome::Inconclusive);
  }
}

TEST_CASE("dark carriers give only inconclusive outcomes") {
  protocol::ProtocolParams params;
  params.alpha = params.alpha1 = Complex(0, 0);
  const auto result = protocol::run_session(params, std::nullopt, 500, 8, 1);
  CHECK(result.stats.empirical.p_inconclusive == 1.0);
}

TEST_CASE("run_trial is deterministic and matches session records") {
  protocol::ProtocolParams params;
  RandomStream a(1234), b(1234);
  const auto t1 = protocol::run_trial(params, std::nullopt, a);
  const auto t2 = protocol::run_trial(params, std::nullopt, b);
  CHECK(t1.sent == t2.sent);
  CHECK(t1.pattern == t2.pattern);
  CHECK(t1.outcome == t2.outcome);

  const std::uint64_t seed = 555;
  const auto session = protocol::run_session(params, std::nullopt, 150, seed, 1);
  for (std::uint64_t i = 0; i < 150; ++i) {
    RandomStream rng = RandomStream::substream(seed, i);
    const auto solo = protocol::run_trial(params, std::nullopt, rng);
    REQUIRE(solo.sent == session.records[i].sent);
    REQUIRE(solo.pattern == session.records[i].pattern);
    REQUIRE(solo.outcome == session.records[i].outcome);
  }
}

TEST_CASE("no-attack session converges to the closed-form distribution") {
  protocol::ProtocolParams params;
  const std::uint64_t n = 200000;
  const auto result = protocol::run_session(params, std::nullopt, n, 20250801, 2);
  const auto expected = theory::expected_output_distribution(params.source, params.alpha, params.alpha1);

  CHECK(testutil::within_3sigma(result.stats.empirical.p_bit0, expected.p_bit0, double(n)));
  CHECK(testutil::within_3sigma(result.stats.empirical.p_bit1, expected.p_bit1, double(n)));
  CHECK(testutil::within_3sigma(result.stats.empirical.p_inconclusive, expected.p_inconclusive, double(n)));
  CHECK(result.stats.disguised_prob == 0.0);
  CHECK(result.stats.mismatch_rate == 0.0);

  // bit0 and bit1 rates statistically equal under the symmetric source
  const double p0 = result.stats.empirical.p_bit0;
  const double p1 = result.stats.empirical.p_bit1;
  const double sd = std::sqrt(2.0 * expected.p_bit0 * (1.0 - expected.p_bit0) / double(n));
  CHECK(std::abs(p0 - p1) <= 3.0 * sd);

  // conclusive fraction among bit sends matches the conditional probability
  std::uint64_t bit_sends = 0, bit_conclusive = 0;
  for (const auto& r : result.records) {
    if (protocol::is_bit_carrier(r.sent)) {
      ++bit_sends;
      if (r.outcome != Outcome::Inconclusive) ++bit_conclusive;
    }
  }
  const double frac = double(bit_conclusive) / double(bit_sends);
  CHECK(testutil::within_3sigma(frac, theory::conditional_bit_prob(params.alpha), double(bit_sends)));

  const auto verdict = protocol::compare_to_theory(result.stats, expected, n);
  CHECK(verdict.overall_pass());
}

TEST_CASE("sessions are reproducible and thread-count independent") {
  protocol::ProtocolParams params;
  const auto a = protocol::run_session(params, std::nullopt, 20000, 777, 1);
  const auto b = protocol::run_session(params, std::nullopt, 20000, 777, 1);
  const auto c = protocol::run_session(params, std::nullopt, 20000, 777, 3);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    REQUIRE(a.records[i].pattern == b.records[i].pattern);
    REQUIRE(a.records[i].pattern == c.records[i].pattern);
    REQUIRE(a.records[i].sent == c.records[i].sent);
    REQUIRE(a.records[i].outcome == c.records[i].outcome);
  }
  CHECK(a.stats.empirical.p_bit0 == b.stats.empirical.p_bit0);
  CHECK(a.stats.empirical.p_bit0 == c.stats.empirical.p_bit0);
}

TEST_CASE("channel loss scales conclusive rates monotonically") {
  protocol::ProtocolParams lossless;
  protocol::ProtocolParams lossy;
  lossy.channel_transmittance = 0.5;
  const std::uint64_t n = 200000;
  const auto full = protocol::run_session(lossless, std::nullopt, n, 2468, 2);
  const auto half = protocol::run_session(lossy, std::nullopt, n, 2468, 2);
  const double bit_full = full.stats.empirical.p_bit0 + full.stats.empirical.p_bit1;
  const double bit_half = half.stats.empirical.p_bit0 + half.stats.empirical.p_bit1;
  const double sep = 3.0 * std::sqrt((bit_full * (1 - bit_full) + bit_half * (1 - bit_half)) / double(n));
  CHECK(bit_half + sep < bit_full);
  CHECK(half.stats.disguised_prob == 0.0);
  CHECK(half.stats.mismatch_rate == 0.0);

  // lossy channel still matches its attenuated expectation
  const double t = 0.5;
  const double b = 0.5 * t * (1.0 - theory::p_zero(Complex(std::sqrt(t), 0))) / 4.0;
  CHECK(testutil::within_3sigma(half.stats.empirical.p_bit0, b, double(n)));
}

TEST_CASE("physical-source session matches the implied distribution") {
  protocol::ProtocolParams params;
  protocol::PhysicalSourceParams phys;
  phys.prep_efficiency = 0.8;
  phys.mix_r = Complex(0.5, 0);
  phys.mix_t = Complex(std::sqrt(0.75), 0);
  phys.pump_amplitude = Complex(0, 1.5);
  params.physical_source = phys;
  params.cutoff = protocol::session_cutoff(std::abs(phys.effective_alpha()));

  const std::uint64_t n = 100000;
  const auto result = protocol::run_session(params, std::nullopt, n, 9000, 2);
  const Complex a = phys.effective_alpha();
  const auto expected = theory::expected_output_distribution(phys.implied_source(), a, a);
  const auto verdict = protocol::compare_to_theory(result.stats, expected, n);
  CHECK(verdict.overall_pass());
  CHECK(result.stats.disguised_prob == 0.0);
}

TEST_CASE("per-trial amplitude schedule hook") {
  protocol::ProtocolParams params;
  params.cutoff = protocol::session_cutoff(1.2);
  params.amplitude_override = [](std::uint64_t i) { return Complex(i % 2 == 0 ? 0.8 : 1.2, 0); };
  const auto result = protocol::run_session(params, std::nullopt, 20000, 12, 1);
  CHECK(result.stats.disguised_prob == 0.0);
  CHECK(result.stats.mismatch_rate == 0.0);
  // rate lands between the two fixed-amplitude expectations
  const double lo = 0.5 * (1.0 - theory::p_zero(Complex(0.8, 0))) / 4.0;
  const double hi = 0.5 * (1.0 - theory::p_zero(Complex(1.2, 0))) / 4.0;
  const double bits = result.stats.empirical.p_bit0 + result.stats.empirical.p_bit1;
  CHECK(bits > 2.0 * lo - 0.01);
  CHECK(bits < 2.0 * hi + 0.01);
}

TEST_CASE("empirical statistics bookkeeping") {
  CHECK_THROWS_AS(protocol::empirical_stats({}), EmptySession);

  std::vector<protocol::TrialRecord> records(4);
  records[0].sent = CarrierLabel::Bit0;
  records[0].outcome = Outcome::Bit0;
  records[1].sent = CarrierLabel::Bit1;
  records[1].outcome = Outcome::Bit1;
  records[2].sent = CarrierLabel::Disguised0;
  records[2].outcome = Outcome::Inconclusive;
  records[3].sent = CarrierLabel::Bit0;
  records[3].outcome = Outcome::Inconclusive;
  auto s = protocol::empirical_stats(records);
  CHECK(s.empirical.p_bit0 == Approx(0.25).margin(1e-15));
  CHECK(s.empirical.p_bit1 == Approx(0.25).margin(1e-15));
  CHECK(s.empirical.p_inconclusive == Approx(0.5).margin(1e-15));
  CHECK(s.disguised_prob == 0.0);
  CHECK(s.mismatch_rate == 0.0);

  // one conclusive outcome on a disguised send
  std::vector<protocol::TrialRecord> leak(10);
  for (auto& r : leak) {
    r.sent = CarrierLabel::Disguised0;
    r.outcome = Outcome::Inconclusive;
  }
  leak[3].outcome = Outcome::Bit0;
  const auto ls = protocol::empirical_stats(leak);
  CHECK(ls.disguised_prob == Approx(0.1).margin(1e-15));
  CHECK(ls.mismatch_rate == 1.0);  // the only conclusive trial is disguised-born

  // a wrong bit counts as a mismatch
  std::vector<protocol::TrialRecord> wrong(2);
  wrong[0].sent = CarrierLabel::Bit0;
  wrong[0].outcome = Outcome::Bit1;
  wrong[1].sent = CarrierLabel::Bit0;
  wrong[1].outcome = Outcome::Bit0;
  CHECK(protocol::empirical_stats(wrong).mismatch_rate == Approx(0.5).margin(1e-15));

  // eve bookkeeping
  std::vector<protocol::TrialRecord> eve(2);
  eve[0].sent = CarrierLabel::Bit0;
  eve[0].outcome = Outcome::Bit0;
  eve[0].eve_knowledge = 0;
  eve[0].eve_outcome = protocol::EveOutcome::Bit0;
  eve[1].sent = CarrierLabel::Bit1;
  eve[1].outcome = Outcome::Bit1;
  eve[1].eve_outcome = protocol::EveOutcome::NoMeasurement;
  const auto es = protocol::empirical_stats(eve);
  CHECK(es.eve_fraction == Approx(0.5).margin(1e-15));
  REQUIRE(es.eve_silent_fraction.has_value());
  CHECK(*es.eve_silent_fraction == Approx(0.5).margin(1e-15));
}

TEST_CASE("comparison against theory") {
  // synthetic multinomial records drawn from the exact expectation
  protocol::ProtocolParams params;
  const auto expected = theory::expected_output_distribution(params.source, params.alpha, params.alpha1);
  RandomStream rng(64);
  std::vector<protocol::TrialRecord> records(100000);
  for (auto& r : records) {
    const double u = rng.uniform01();
    r.sent = CarrierLabel::Bit0;
    if (u < expected.p_bit0) {
      r.outcome = Outcome::Bit0;
    } else if (u < expected.p_bit0 + expected.p_bit1) {
      r.sent = CarrierLabel::Bit1;
      r.outcome = Outcome::Bit1;
    } else {
      r.outcome = Outcome::Inconclusive;
    }
  }
  const auto stats = protocol::empirical_stats(records);
  const auto verdict = protocol::compare_to_theory(stats, expected, records.size());
  CHECK(verdict.overall_pass());

  const auto small = protocol::compare_to_theory(stats, expected, 10);
  CHECK(small.verdict == protocol::Verdict::InsufficientData);

  // shifting the observation far off the expectation must fail
  auto bad = stats;
  bad.empirical.p_bit0 = expected.p_bit0 * 0.5;
  const auto v2 = protocol::compare_to_theory(bad, expected, records.size());
  CHECK_FALSE(v2.overall_pass());
  CHECK(std::abs(v2.bit0.z) > 10.0);

  // disguised hits push the verdict over once ten or more appear
  auto leak = stats;
  leak.disguised_prob = 20.0 / double(records.size());
  CHECK_FALSE(protocol::compare_to_theory(leak, expected, records.size()).overall_pass());
  leak.disguised_prob = 4.0 / double(records.size());
  CHECK(protocol::compare_to_theory(leak, expected, records.size()).disguised.pass);
}

TEST_CASE("parameter validation") {
  protocol::ProtocolParams params;
  params.channel_transmittance = 0.0;
  CHECK_THROWS_AS(params.validate(), DomainError);
  params.channel_transmittance = 1.5;
  CHECK_THROWS_AS(params.validate(), DomainError);
  params.channel_transmittance = 1.0;
  params.detectors[2].dark_count = -0.2;
  CHECK_THROWS_AS(params.validate(), DomainError);
}
