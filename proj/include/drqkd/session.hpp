#pragma once

#include <cstdio>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "drqkd/attacks.hpp"
#include "drqkd/fock.hpp"
#include "drqkd/protocol.hpp"
#include "drqkd/rng.hpp"

namespace drqkd::protocol {

/// Memoizes the deterministic, expensive halves of a trial: carrier tensors,
/// receiver output distributions, loss-stage conditionals. Keys identify the
/// construction path (hex-exact amplitudes included), so equal keys always
/// map to bit-identical values and cache hits cannot change results.
class SessionCache {
 public:
  std::shared_ptr<const fock::MultiModeState> state(const std::string& key,
                                                    const std::function<fock::MultiModeState()>& build) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = states_.find(key);
      if (it != states_.end()) return it->second;
    }
    auto value = std::make_shared<const fock::MultiModeState>(build());
    std::lock_guard<std::mutex> lock(mu_);
    auto [it, inserted] = states_.emplace(key, std::move(value));
    return it->second;
  }

  std::shared_ptr<const fock::JointSampler> sampler(const std::string& key,
                                                    const std::function<fock::JointSampler()>& build) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = samplers_.find(key);
      if (it != samplers_.end()) return it->second;
    }
    auto value = std::make_shared<const fock::JointSampler>(build());
    std::lock_guard<std::mutex> lock(mu_);
    auto [it, inserted] = samplers_.emplace(key, std::move(value));
    return it->second;
  }

 private:
  std::mutex mu_;
  std::unordered_map<std::string, std::shared_ptr<const fock::MultiModeState>> states_;
  std::unordered_map<std::string, std::shared_ptr<const fock::JointSampler>> samplers_;
};

namespace detail {

inline std::string key_complex(fock::Complex c) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a,%a", c.real(), c.imag());
  return buf;
}

inline std::string carrier_key(CarrierLabel label, fock::Complex a, fock::Complex a1, int n_max) {
  return "carrier|" + std::to_string(static_cast<int>(label)) + "|" + key_complex(a) + "|" +
         key_complex(a1) + "|n" + std::to_string(n_max);
}

/// Receiver table of a two-mode input through the lossless network.
inline fock::JointSampler receiver_table(const fock::MultiModeState& input) {
  ProtocolParams lossless;
  lossless.channel_transmittance = 1.0;
  RandomStream unused(0);
  return fock::make_joint_sampler(bob_network(input, lossless, unused));
}

struct Forward {
  std::string key;
  std::function<fock::MultiModeState()> build;
};

}  // namespace detail

/// One protocol round. All deterministic heavy lifting is fetched through the
/// cache; the per-trial draw order is fixed:
///   2 source uniforms, the attack's documented draws, one uniform per lossy
///   rail, one joint photon draw, four detector draws.
inline TrialRecord run_trial_impl(const ProtocolParams& params,
                                  const std::optional<attacks::AttackSpec>& attack, std::uint64_t index,
                                  RandomStream& rng, SessionCache& cache) {
  using attacks::EveRecord;
  using fock::Complex;

  Complex al = params.alpha;
  Complex al1 = params.alpha1;
  if (params.amplitude_override) {
    al = params.amplitude_override(index);
    al1 = al;
  }
  theory::SourceDistribution source = params.source;
  if (params.physical_source) {
    source = params.physical_source->implied_source();
    al = al1 = params.physical_source->effective_alpha();
  }
  const int n_max = params.cutoff.n_max();

  // Alice: family coin, then bit coin.
  const bool family2 = rng.uniform01() >= 0.5;
  const double bit_w = family2 ? source.p2() : source.p1();
  const bool bit = rng.uniform01() < bit_w;
  const CarrierLabel label = family2 ? (bit ? CarrierLabel::Bit1 : CarrierLabel::Disguised1)
                                     : (bit ? CarrierLabel::Bit0 : CarrierLabel::Disguised0);

  const std::string carrier_key = detail::carrier_key(label, al, al1, n_max);
  const fock::FockCutoff cutoff = params.cutoff;
  auto carrier_builder = [=] { return make_carrier(label, al, al1, cutoff); };

  detail::Forward fwd{carrier_key, carrier_builder};
  std::optional<int> eve_knowledge;
  std::optional<EveOutcome> eve_outcome;

  auto measure_with_table = [&](const std::string& state_key,
                                const std::function<fock::MultiModeState()>& build)
      -> std::pair<ClickPattern, Outcome> {
    auto table = cache.sampler("rt|" + state_key, [&] {
      return detail::receiver_table(*cache.state(state_key, build));
    });
    const auto ns = table->sample(rng);
    std::vector<bool> clicks(4);
    const fock::DetectorModel ideal;
    for (int m = 0; m < 4; ++m) clicks[static_cast<std::size_t>(m)] = rng.bernoulli(fock::click_probability(ideal, ns[static_cast<std::size_t>(m)]));
    const auto pattern = ClickPattern::from_clicks(clicks);
    return {pattern, classify_pattern(pattern)};
  };

  if (attack) {
    if (const auto* a = std::get_if<attacks::InterceptResend>(&*attack)) {
      const auto [pattern, outcome] = measure_with_table(carrier_key, carrier_builder);
      CarrierLabel resent;
      if (outcome != Outcome::Inconclusive) {
        const int b = outcome == Outcome::Bit1 ? 1 : 0;
        eve_outcome = b ? EveOutcome::Bit1 : EveOutcome::Bit0;
        eve_knowledge = b;
        resent = attacks::detail::bit_label(b);
      } else {
        eve_outcome = EveOutcome::Inconclusive;
        const int family = attacks::detail::family_or_coin(pattern, rng);
        const double p_star = family == 0 ? a->p1_star : a->p2_star;
        if (rng.uniform01() < p_star) {
          resent = attacks::detail::bit_label(family);
          eve_knowledge = family;
        } else {
          resent = attacks::detail::disguised_label(family);
        }
      }
      const Complex as = a->alpha_star;
      fwd.key = detail::carrier_key(resent, as, as, n_max);
      fwd.build = [=] { return make_carrier(resent, as, as, cutoff); };
    } else if (const auto* a = std::get_if<attacks::SuperpositionResend>(&*attack)) {
      if (rng.uniform01() < a->eta_fraction) {
        const auto [pattern, outcome] = measure_with_table(carrier_key, carrier_builder);
        const Complex ap = a->alpha_prime;
        if (outcome != Outcome::Inconclusive) {
          const int b = outcome == Outcome::Bit1 ? 1 : 0;
          eve_outcome = b ? EveOutcome::Bit1 : EveOutcome::Bit0;
          eve_knowledge = b;
          if (a->decohered) {
            const bool flipped = rng.uniform01() < 0.5;
            fwd.key = "deco|" + std::to_string(b) + "|" + std::to_string(flipped ? 1 : 0) + "|" +
                      detail::key_complex(ap) + "|n" + std::to_string(n_max);
            fwd.build = [=] { return attacks::decohered_component(b, flipped, ap, cutoff); };
          } else {
            fwd.key = "psi|" + std::to_string(b) + "|" + detail::key_complex(ap) + "|n" +
                      std::to_string(n_max);
            fwd.build = [=] { return attacks::superposition_carrier(b, ap, cutoff); };
          }
        } else {
          eve_outcome = EveOutcome::Inconclusive;
          const int family = attacks::detail::family_or_coin(pattern, rng);
          const CarrierLabel resent = attacks::detail::disguised_label(family);
          fwd.key = detail::carrier_key(resent, ap, ap, n_max);
          fwd.build = [=] { return make_carrier(resent, ap, ap, cutoff); };
        }
      } else {
        eve_outcome = EveOutcome::NoMeasurement;
      }
    } else if (const auto* a = std::get_if<attacks::BeamSplit>(&*attack)) {
      const attacks::BeamSplit spec = *a;
      const std::string pre_key = "bspre|" + carrier_key + "|" + detail::key_complex(spec.t_e) + "|" +
                                  detail::key_complex(spec.r_e);
      auto pre = cache.state(pre_key, [&] {
        return attacks::beam_split_pre_measurement(*cache.state(carrier_key, carrier_builder), spec);
      });
      auto marg = cache.sampler("mg|" + pre_key, [&] {
        const std::array<int, 2> taps = {2, 3};
        return fock::make_marginal_sampler(*pre, taps);
      });
      const auto ns = marg->sample(rng);
      const fock::DetectorModel& eve_det = params.detectors[0];
      const bool c1 = rng.bernoulli(fock::click_probability(eve_det, ns[0]));
      const bool c2 = rng.bernoulli(fock::click_probability(eve_det, ns[1]));
      if (!c1 && !c2) {
        eve_outcome = EveOutcome::NoMeasurement;
      } else if (c2 && !c1) {
        eve_outcome = EveOutcome::Bit0;
        eve_knowledge = 0;
      } else if (c1 && !c2) {
        eve_outcome = EveOutcome::Bit1;
        eve_knowledge = 1;
      } else {
        eve_outcome = EveOutcome::Inconclusive;
      }
      const int n1 = ns[0], n2 = ns[1];
      fwd.key = pre_key + "|cond|" + std::to_string(n1) + "," + std::to_string(n2);
      fwd.build = [pre, n1, n2] {
        const std::array<int, 2> taps = {2, 3};
        const std::array<int, 2> obs = {n1, n2};
        return fock::remove_modes(*pre, taps, obs).second;
      };
    } else if (const auto* a = std::get_if<attacks::UnitaryProbe>(&*attack)) {
      const Complex ae = a->alpha_e;
      const Complex a1e = a->alpha_1e;
      eve_outcome = EveOutcome::NoMeasurement;
      fwd.key = detail::carrier_key(label, ae, a1e, n_max);
      fwd.build = [=] { return make_carrier(label, ae, a1e, cutoff); };
    }
  }

  // Bob's receiver.
  std::vector<int> ns4;
  if (params.channel_transmittance >= 1.0) {
    auto table = cache.sampler("rt|" + fwd.key, [&] {
      return detail::receiver_table(*cache.state(fwd.key, fwd.build));
    });
    ns4 = table->sample(rng);
  } else {
    const auto loss = fock::BeamSplitterSpec::from_transmittance(params.channel_transmittance);
    const std::string tkey = "|t" + detail::key_complex(Complex(params.channel_transmittance, 0.0));
    auto s0 = cache.state("ls0|" + fwd.key + tkey, [&] {
      auto in = cache.state(fwd.key, fwd.build);
      const auto vac = fock::MultiModeState::vacuum(1, in->cutoff());
      return fock::apply_beam_splitter(fock::compose_modes({*in, vac}), 0, 2, loss);
    });
    auto m0 = cache.sampler("lm0|" + fwd.key + tkey, [&] {
      const std::array<int, 1> anc = {2};
      return fock::make_marginal_sampler(*s0, anc);
    });
    const int n0 = m0->sample(rng)[0];
    const std::string k1 = "ls1|" + fwd.key + tkey + "|" + std::to_string(n0);
    auto s1 = cache.state(k1, [&] {
      const std::array<int, 1> anc = {2};
      const std::array<int, 1> obs = {n0};
      auto reduced = fock::remove_modes(*s0, anc, obs).second;
      const auto vac = fock::MultiModeState::vacuum(1, reduced.cutoff());
      return fock::apply_beam_splitter(fock::compose_modes({reduced, vac}), 1, 2, loss);
    });
    auto m1 = cache.sampler("lm1|" + fwd.key + tkey + "|" + std::to_string(n0), [&] {
      const std::array<int, 1> anc = {2};
      return fock::make_marginal_sampler(*s1, anc);
    });
    const int n1 = m1->sample(rng)[0];
    auto table = cache.sampler("rt|" + k1 + "|" + std::to_string(n1), [&] {
      const std::array<int, 1> anc = {2};
      const std::array<int, 1> obs = {n1};
      return detail::receiver_table(fock::remove_modes(*s1, anc, obs).second);
    });
    ns4 = table->sample(rng);
  }

  std::vector<bool> clicks(4);
  for (int m = 0; m < 4; ++m)
    clicks[static_cast<std::size_t>(m)] =
        rng.bernoulli(fock::click_probability(params.detectors[static_cast<std::size_t>(m)],
                                              ns4[static_cast<std::size_t>(m)]));

  TrialRecord rec;
  rec.index = index;
  rec.sent = label;
  rec.pattern = ClickPattern::from_clicks(clicks);
  rec.outcome = classify_pattern(rec.pattern);
  rec.eve_knowledge = eve_knowledge;
  rec.eve_outcome = eve_outcome;
  return rec;
}

/// One round through the full pipeline with a throwaway cache.
inline TrialRecord run_trial(const ProtocolParams& params,
                             const std::optional<attacks::AttackSpec>& attack, RandomStream& rng) {
  params.validate();
  if (attack) attacks::validate(*attack);
  SessionCache cache;
  return run_trial_impl(params, attack, 0, rng, cache);
}

struct SessionResult {
  std::vector<TrialRecord> records;
  SessionStats stats;
};

/// Seeded session of independent trials. Trial i draws from
/// RandomStream::substream(seed, i), so results do not depend on the worker
/// count; records come back in trial order.
inline SessionResult run_session(const ProtocolParams& params,
                                 const std::optional<attacks::AttackSpec>& attack,
                                 std::uint64_t n_trials, std::uint64_t seed, int threads = 1) {
  if (n_trials < 1) throw DomainError("run_session: need at least one trial");
  params.validate();
  if (attack) attacks::validate(*attack);

  SessionResult out;
  out.records.resize(n_trials);
  SessionCache cache;

  // Warm the cache on the first trial so workers mostly read.
  {
    RandomStream rng = RandomStream::substream(seed, 0);
    out.records[0] = run_trial_impl(params, attack, 0, rng, cache);
  }

  const int workers = std::max(1, threads);
  if (workers == 1 || n_trials <= 2) {
    for (std::uint64_t i = 1; i < n_trials; ++i) {
      RandomStream rng = RandomStream::substream(seed, i);
      out.records[i] = run_trial_impl(params, attack, i, rng, cache);
    }
  } else {
    std::vector<std::thread> pool;
    const std::uint64_t first = 1;
    const std::uint64_t span = n_trials - first;
    const std::uint64_t chunk = (span + static_cast<std::uint64_t>(workers) - 1) / static_cast<std::uint64_t>(workers);
    for (int w = 0; w < workers; ++w) {
      const std::uint64_t lo = first + static_cast<std::uint64_t>(w) * chunk;
      const std::uint64_t hi = std::min(n_trials, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back([&, lo, hi] {
        for (std::uint64_t i = lo; i < hi; ++i) {
          RandomStream rng = RandomStream::substream(seed, i);
          out.records[i] = run_trial_impl(params, attack, i, rng, cache);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  out.stats = empirical_stats(out.records);
  return out;
}

}  // namespace drqkd::protocol
