#pragma once

#include <cmath>
#include <complex>

#include "drqkd/errors.hpp"

namespace drqkd::theory {

using Complex = std::complex<double>;

/// Alice's secret bit/disguised weights for the two carrier families.
class SourceDistribution {
 public:
  SourceDistribution(double p1, double p1_prime, double p2, double p2_prime)
      : p1_(p1), p1_prime_(p1_prime), p2_(p2), p2_prime_(p2_prime) {
    if (p1 < 0 || p1_prime < 0 || p2 < 0 || p2_prime < 0)
      throw DomainError("SourceDistribution: negative weight");
    if (std::abs(p1 + p1_prime - 1.0) > 1e-12 || std::abs(p2 + p2_prime - 1.0) > 1e-12)
      throw DomainError("SourceDistribution: weights of each family must sum to 1");
  }

  /// Weights from the two bit probabilities; the disguised ones complement.
  static SourceDistribution from_bit_weights(double p1, double p2) {
    return SourceDistribution(p1, 1.0 - p1, p2, 1.0 - p2);
  }

  double p1() const { return p1_; }
  double p1_prime() const { return p1_prime_; }
  double p2() const { return p2_; }
  double p2_prime() const { return p2_prime_; }

 private:
  double p1_, p1_prime_, p2_, p2_prime_;
};

/// Probabilities of bit-0, bit-1 and inconclusive outcomes.
struct OutputDistribution {
  double p_bit0;
  double p_bit1;
  double p_inconclusive;

  static OutputDistribution make(double b0, double b1, double inc) {
    if (b0 < -1e-12 || b1 < -1e-12 || inc < -1e-12)
      throw DomainError("OutputDistribution: negative entry");
    if (std::abs(b0 + b1 + inc - 1.0) > 1e-9)
      throw DomainError("OutputDistribution: entries must sum to 1");
    return {b0, b1, inc};
  }
  static OutputDistribution from_bits(double b0, double b1) {
    return make(b0, b1, 1.0 - b0 - b1);
  }
};

/// Probability that the receiver registers fewer than three clicks when a
/// bit carrier arrived: exp(-2|a|^2) + 2 exp(-|a|^2)(1 - exp(-|a|^2)).
inline double p_zero(Complex alpha) {
  const double aa = std::norm(alpha);
  const double e = std::exp(-aa);
  return e * e + 2.0 * e * (1.0 - e);
}

/// Conditional probability of a conclusive outcome given a bit carrier.
inline double conditional_bit_prob(Complex alpha) { return 0.5 * (1.0 - p_zero(alpha)); }

/// Ideal no-eavesdropping output distribution.
inline OutputDistribution expected_output_distribution(const SourceDistribution& dist, Complex alpha,
                                                       Complex alpha1) {
  const double b0 = dist.p1() / 4.0 * (1.0 - p_zero(alpha));
  const double b1 = dist.p2() / 4.0 * (1.0 - p_zero(alpha1));
  return OutputDistribution::from_bits(b0, b1);
}

/// Sifted-key information shared through the erasure channel, taking the two
/// joint weights (family weight times conditional bit probability) as inputs.
/// Algebraically the binary entropy of p1w / (p1w + p2w); asserted in tests,
/// not assumed here.
inline double mutual_information(double p1w, double p2w) {
  if (p1w <= 0.0 || p2w <= 0.0) throw DomainError("mutual_information: weights must be positive");
  const double s = p1w + p2w;
  return std::log2(s) - (p1w * std::log2(p1w) + p2w * std::log2(p2w)) / s;
}

/// Intercept-resend forecast for the first carrier family: bit-0 rate under
/// attack and the disguised probability Eve leaks. Valid in the regime where
/// p_zero of the resend amplitude is negligible (< 0.01 is a good gate);
/// Monte Carlo agreement is only asserted there.
struct InterceptPrediction {
  double p_bit0;
  double p_disguised;
};

inline InterceptPrediction intercept_resend_prediction(const SourceDistribution& dist, double p1_star) {
  if (p1_star < 0.0 || p1_star > 1.0) throw DomainError("intercept_resend_prediction: p1_star outside [0,1]");
  const double leak = p1_star * dist.p1_prime() / 4.0;
  return {dist.p1() * (1.0 + p1_star) / 8.0 + leak, leak};
}

/// Superposition-resend forecast. Decohered resends halve the conclusive
/// rate on the attacked fraction; coherent resends reproduce the ideal
/// distribution. Like the intercept forecast this neglects higher orders of
/// p_zero, so empirical agreement is asserted only at small p_zero.
struct SuperpositionPrediction {
  OutputDistribution dist;
  double eve_information;  // bits per sifted bit claimed by the closed form
};

inline SuperpositionPrediction superposition_resend_prediction(double p, Complex alpha, double eta_e,
                                                               bool decohered) {
  if (eta_e < 0.0 || eta_e > 1.0) throw DomainError("superposition_resend_prediction: eta outside [0,1]");
  if (p < 0.0 || p > 1.0) throw DomainError("superposition_resend_prediction: p outside [0,1]");
  const double ideal = p / 4.0 * (1.0 - p_zero(alpha));
  const double bit = decohered ? p * (1.0 - eta_e / 2.0) * (1.0 - p_zero(alpha)) / 4.0 : ideal;
  return {OutputDistribution::from_bits(bit, bit), eta_e};
}

/// Beam-splitting forecast: attenuated conclusive rates, the probability that
/// Eve's taps stay silent on an announced bit, and her information 1 - P_vac.
struct BeamSplitPrediction {
  OutputDistribution dist;
  double p_vac;
  double eve_information;
};

inline BeamSplitPrediction beam_split_prediction(double p, Complex alpha, double t_mag2) {
  if (t_mag2 < 0.0 || t_mag2 > 1.0) throw DomainError("beam_split_prediction: |T|^2 outside [0,1]");
  if (p < 0.0 || p > 1.0) throw DomainError("beam_split_prediction: p outside [0,1]");
  const Complex alpha_t = alpha * std::sqrt(t_mag2);
  const double bit = p * t_mag2 * (1.0 - p_zero(alpha_t)) / 4.0;
  const double p_vac = std::exp(-2.0 * std::norm(alpha) * (1.0 - t_mag2));
  return {OutputDistribution::from_bits(bit, bit), p_vac, 1.0 - p_vac};
}

/// Pairwise overlaps of the four probe states left with Eve by the unitary
/// probe attack. Magnitudes above 1 mark unphysical parameter choices; they
/// are reported, never clipped.
struct ProbeOverlaps {
  Complex e1_e3;
  Complex e1_e4;
  Complex e3_e2;
  Complex e4_e2;

  bool physical(double tol = 1e-9) const {
    return std::abs(e1_e3) <= 1.0 + tol && std::abs(e1_e4) <= 1.0 + tol &&
           std::abs(e3_e2) <= 1.0 + tol && std::abs(e4_e2) <= 1.0 + tol;
  }
};

inline ProbeOverlaps probe_overlaps(Complex alpha, Complex alpha_e, Complex alpha_1e) {
  const Complex i(0.0, 1.0);
  const Complex common = std::exp(Complex(-(std::norm(alpha) - std::norm(alpha_e)) -
                                              (std::norm(alpha) - std::norm(alpha_1e)),
                                          0.0));
  const Complex d = i * alpha_1e - alpha_e;
  const Complex d_sq = 1.0 - d * d;
  if (std::abs(d) < 1e-15) throw DegenerateDenominator("probe_overlaps: i*alpha_1e - alpha_e vanishes");
  if (std::abs(d_sq) < 1e-15) throw DegenerateDenominator("probe_overlaps: 1 - (i*alpha_1e - alpha_e)^2 vanishes");
  const Complex num = i * alpha - alpha;
  ProbeOverlaps out;
  out.e1_e3 = common * (1.0 - num * num) / d_sq;
  out.e1_e4 = common * num / d;
  out.e3_e2 = common * (alpha - i * alpha) / (alpha_e - i * alpha_1e);
  out.e4_e2 = common;
  return out;
}

}  // namespace drqkd::theory
