#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "drqkd/errors.hpp"
#include "drqkd/rng.hpp"

namespace drqkd::fock {

using Complex = std::complex<double>;

/// Highest photon number retained per mode.
class FockCutoff {
 public:
  explicit FockCutoff(int n_max) : n_max_(n_max) {
    if (n_max < 1) throw DomainError("FockCutoff: n_max must be >= 1");
  }
  int n_max() const { return n_max_; }
  int dim() const { return n_max_ + 1; }
  friend bool operator==(FockCutoff a, FockCutoff b) { return a.n_max_ == b.n_max_; }
  friend bool operator!=(FockCutoff a, FockCutoff b) { return !(a == b); }

 private:
  int n_max_;
};

/// Cutoff large enough that displaced states of magnitude `alpha_max` keep
/// truncated norm >= 1 - 1e-9 with ample slack.
inline FockCutoff default_cutoff(double alpha_max) {
  double a = std::abs(alpha_max);
  return FockCutoff(static_cast<int>(std::ceil(a * a + 6.0 * a + 10.0)));
}

/// Two-mode transformation [[t, r], [-conj(r), conj(t)]].
struct BeamSplitterSpec {
  Complex t;
  Complex r;

  BeamSplitterSpec(Complex t_, Complex r_) : t(t_), r(r_) {
    double s = std::norm(t) + std::norm(r);
    if (std::abs(s - 1.0) > 1e-12)
      throw DomainError("BeamSplitterSpec: |t|^2 + |r|^2 must be 1");
  }

  /// Balanced splitter with the i cross phase.
  static BeamSplitterSpec balanced() {
    const double s = 1.0 / std::sqrt(2.0);
    return {Complex(s, 0.0), Complex(0.0, s)};
  }
  static BeamSplitterSpec identity() { return {Complex(1.0, 0.0), Complex(0.0, 0.0)}; }
  /// Real splitter transmitting |t|^2 = t_mag2 of the intensity.
  static BeamSplitterSpec from_transmittance(double t_mag2) {
    if (t_mag2 < 0.0 || t_mag2 > 1.0) throw DomainError("transmittance outside [0,1]");
    return {Complex(std::sqrt(t_mag2), 0.0), Complex(std::sqrt(1.0 - t_mag2), 0.0)};
  }
  BeamSplitterSpec inverse() const { return {std::conj(t), -r}; }
};

/// Threshold (click / no-click) detector.
struct DetectorModel {
  double efficiency = 1.0;
  double dark_count = 0.0;

  void validate() const {
    if (efficiency < 0.0 || efficiency > 1.0 || dark_count < 0.0 || dark_count > 1.0)
      throw DomainError("DetectorModel: probabilities must lie in [0,1]");
  }
};

/// P(click | n photons arrived).
inline double click_probability(const DetectorModel& det, int n) {
  return 1.0 - (1.0 - det.dark_count) * std::pow(1.0 - det.efficiency, n);
}

/// Pure state of k modes as a dense complex amplitude tensor over the
/// truncated Fock basis. Index layout: mode 0 slowest, last mode fastest.
class MultiModeState {
 public:
  MultiModeState(int mode_count, FockCutoff cutoff)
      : cutoff_(cutoff), modes_(mode_count) {
    if (mode_count < 1) throw ShapeMismatch("MultiModeState: mode_count must be >= 1");
    amp_.assign(total_size(mode_count, cutoff.dim()), Complex(0.0, 0.0));
  }

  static MultiModeState vacuum(int mode_count, FockCutoff cutoff) {
    MultiModeState s(mode_count, cutoff);
    s.amp_[0] = 1.0;
    return s;
  }

  static MultiModeState from_single_mode(std::vector<Complex> amplitudes, FockCutoff cutoff) {
    if (static_cast<int>(amplitudes.size()) != cutoff.dim())
      throw ShapeMismatch("from_single_mode: amplitude count does not match cutoff");
    MultiModeState s(1, cutoff);
    s.amp_ = std::move(amplitudes);
    return s;
  }

  int mode_count() const { return modes_; }
  FockCutoff cutoff() const { return cutoff_; }
  int dim() const { return cutoff_.dim(); }
  std::size_t size() const { return amp_.size(); }

  std::span<const Complex> amplitudes() const { return amp_; }
  std::span<Complex> mutable_amplitudes() { return amp_; }

  std::size_t stride(int mode) const {
    std::size_t s = 1;
    for (int m = modes_ - 1; m > mode; --m) s *= static_cast<std::size_t>(dim());
    return s;
  }

  Complex amplitude(std::span<const int> ns) const {
    if (static_cast<int>(ns.size()) != modes_) throw ShapeMismatch("amplitude: wrong index rank");
    std::size_t idx = 0;
    for (int m = 0; m < modes_; ++m) {
      if (ns[m] < 0 || ns[m] > cutoff_.n_max()) throw InvalidPhotonNumber("amplitude: index out of range");
      idx = idx * static_cast<std::size_t>(dim()) + static_cast<std::size_t>(ns[m]);
    }
    return amp_[idx];
  }
  Complex amplitude(std::initializer_list<int> ns) const {
    return amplitude(std::span<const int>(ns.begin(), ns.size()));
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& a : amp_) s += std::norm(a);
    return s;
  }
  double norm() const { return std::sqrt(squared_norm()); }

 private:
  static std::size_t total_size(int modes, int dim) {
    std::size_t s = 1;
    for (int m = 0; m < modes; ++m) s *= static_cast<std::size_t>(dim);
    return s;
  }

  FockCutoff cutoff_;
  int modes_;
  std::vector<Complex> amp_;
};

/// Weighted ensemble of pure states. Stands in for every diagonal density
/// matrix in the protocol; ensemble sampling is exact for such mixtures.
class MixedState {
 public:
  explicit MixedState(std::vector<std::pair<double, MultiModeState>> components)
      : components_(std::move(components)) {
    if (components_.empty()) throw ShapeMismatch("MixedState: no components");
    double sum = 0.0;
    for (const auto& [w, st] : components_) {
      if (w <= 0.0) throw DomainError("MixedState: weights must be positive");
      if (st.mode_count() != components_.front().second.mode_count() ||
          st.cutoff() != components_.front().second.cutoff())
        throw ShapeMismatch("MixedState: inconsistent component shapes");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DomainError("MixedState: weights must sum to 1");
  }

  const std::vector<std::pair<double, MultiModeState>>& components() const { return components_; }

  const MultiModeState& sample_component(RandomStream& rng) const {
    double u = rng.uniform01();
    double acc = 0.0;
    for (const auto& [w, st] : components_) {
      acc += w;
      if (u < acc) return st;
    }
    return components_.back().second;
  }

 private:
  std::vector<std::pair<double, MultiModeState>> components_;
};

namespace detail {

inline std::vector<double> log_factorials(int up_to) {
  std::vector<double> lf(static_cast<std::size_t>(up_to) + 1, 0.0);
  for (int i = 1; i <= up_to; ++i) lf[static_cast<std::size_t>(i)] = lf[static_cast<std::size_t>(i - 1)] + std::log(static_cast<double>(i));
  return lf;
}

/// Generalized Laguerre L_k^{(m)}(x) by the three-term recurrence.
inline double generalized_laguerre(int k, int m, double x) {
  if (k == 0) return 1.0;
  double lm1 = 1.0;
  double l = 1.0 + static_cast<double>(m) - x;
  for (int i = 1; i < k; ++i) {
    double next = ((static_cast<double>(2 * i + 1 + m) - x) * l - static_cast<double>(i + m) * lm1) /
                  static_cast<double>(i + 1);
    lm1 = l;
    l = next;
  }
  return l;
}

}  // namespace detail

/// Single-mode amplitudes <m|D(alpha)|n> for m = 0..n_max.
/// Closed form via associated Laguerre polynomials; cross-checked in the test
/// suite against a truncated exponential of the displacement generator.
inline std::vector<Complex> displaced_fock_amplitudes(int n, Complex alpha, FockCutoff cutoff) {
  if (n < 0) throw InvalidPhotonNumber("displaced_fock_amplitudes: n must be >= 0");
  if (n > cutoff.n_max()) throw InvalidPhotonNumber("displaced_fock_amplitudes: n exceeds cutoff");
  const int dim = cutoff.dim();
  const double aa = std::norm(alpha);
  const auto lf = detail::log_factorials(std::max(dim - 1, n));
  std::vector<Complex> out(static_cast<std::size_t>(dim));
  const double pre = std::exp(-aa / 2.0);
  for (int m = 0; m < dim; ++m) {
    Complex v;
    if (m >= n) {
      const int k = m - n;
      v = std::exp(0.5 * (lf[static_cast<std::size_t>(n)] - lf[static_cast<std::size_t>(m)])) * std::pow(alpha, k) * pre *
          detail::generalized_laguerre(n, k, aa);
    } else {
      const int k = n - m;
      v = std::exp(0.5 * (lf[static_cast<std::size_t>(m)] - lf[static_cast<std::size_t>(n)])) * std::pow(-std::conj(alpha), k) *
          pre * detail::generalized_laguerre(m, k, aa);
    }
    out[static_cast<std::size_t>(m)] = v;
  }
  double sq = 0.0;
  for (const auto& a : out) sq += std::norm(a);
  if (sq < 1.0 - 1e-9)
    throw CutoffTooSmall("displaced_fock_amplitudes: truncated norm below 1 - 1e-9");
  return out;
}

/// Single-mode displaced Fock state |n,alpha>. Raises the cutoff once if the
/// requested one cannot hold the state, then errors.
inline MultiModeState displaced_fock_state(int n, Complex alpha, FockCutoff cutoff) {
  try {
    return MultiModeState::from_single_mode(displaced_fock_amplitudes(n, alpha, cutoff), cutoff);
  } catch (const CutoffTooSmall&) {
    FockCutoff raised(std::max(default_cutoff(std::abs(alpha)).n_max() + n, 2 * cutoff.n_max()));
    return MultiModeState::from_single_mode(displaced_fock_amplitudes(n, alpha, raised), raised);
  }
}

/// Tensor product of states sharing a cutoff.
inline MultiModeState compose_modes(std::span<const MultiModeState> states) {
  if (states.empty()) throw ShapeMismatch("compose_modes: empty operand list");
  const FockCutoff cutoff = states.front().cutoff();
  int modes = 0;
  for (const auto& s : states) {
    if (s.cutoff() != cutoff) throw CutoffMismatch("compose_modes: operands differ in cutoff");
    modes += s.mode_count();
  }
  MultiModeState out(modes, cutoff);
  auto dst = out.mutable_amplitudes();
  dst[0] = 1.0;
  std::size_t filled = 1;
  std::vector<Complex> tmp;
  for (const auto& s : states) {
    const auto src = s.amplitudes();
    tmp.assign(filled * src.size(), Complex(0.0, 0.0));
    for (std::size_t i = 0; i < filled; ++i) {
      const Complex a = dst[i];
      if (a == Complex(0.0, 0.0)) continue;
      for (std::size_t j = 0; j < src.size(); ++j) tmp[i * src.size() + j] = a * src[j];
    }
    std::copy(tmp.begin(), tmp.end(), dst.begin());
    filled *= src.size();
  }
  return out;
}

inline MultiModeState compose_modes(std::initializer_list<MultiModeState> states) {
  return compose_modes(std::span<const MultiModeState>(states.begin(), states.size()));
}

/// Linear combination sum_i c_i |psi_i>. No renormalization.
inline MultiModeState superpose(std::span<const std::pair<Complex, MultiModeState>> terms) {
  if (terms.empty()) throw ShapeMismatch("superpose: empty term list");
  MultiModeState out(terms.front().second.mode_count(), terms.front().second.cutoff());
  auto dst = out.mutable_amplitudes();
  for (const auto& [c, st] : terms) {
    if (st.mode_count() != out.mode_count() || st.cutoff() != out.cutoff())
      throw ShapeMismatch("superpose: mismatched term shapes");
    const auto src = st.amplitudes();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += c * src[i];
  }
  return out;
}

inline MultiModeState superpose(std::initializer_list<std::pair<Complex, MultiModeState>> terms) {
  return superpose(std::span<const std::pair<Complex, MultiModeState>>(terms.begin(), terms.size()));
}

/// Reorders modes: output mode i is input mode perm[i].
inline MultiModeState permute_modes(const MultiModeState& state, std::span<const int> perm) {
  const int k = state.mode_count();
  if (static_cast<int>(perm.size()) != k) throw ShapeMismatch("permute_modes: wrong permutation size");
  std::vector<bool> seen(static_cast<std::size_t>(k), false);
  for (int p : perm) {
    if (p < 0 || p >= k || seen[static_cast<std::size_t>(p)]) throw ShapeMismatch("permute_modes: not a permutation");
    seen[static_cast<std::size_t>(p)] = true;
  }
  MultiModeState out(k, state.cutoff());
  const auto src = state.amplitudes();
  auto dst = out.mutable_amplitudes();
  std::vector<std::size_t> in_stride(static_cast<std::size_t>(k));
  for (int m = 0; m < k; ++m) in_stride[static_cast<std::size_t>(m)] = state.stride(m);
  const int dim = state.dim();
  std::vector<int> digits(static_cast<std::size_t>(k), 0);
  for (std::size_t out_idx = 0; out_idx < dst.size(); ++out_idx) {
    std::size_t in_idx = 0;
    for (int m = 0; m < k; ++m)
      in_idx += static_cast<std::size_t>(digits[static_cast<std::size_t>(m)]) * in_stride[static_cast<std::size_t>(perm[m])];
    dst[out_idx] = src[in_idx];
    for (int m = k - 1; m >= 0; --m) {
      if (++digits[static_cast<std::size_t>(m)] < dim) break;
      digits[static_cast<std::size_t>(m)] = 0;
    }
  }
  return out;
}

namespace detail {

/// Per-total-photon-number block columns of a beam-splitter unitary.
/// Column for input |k, N-k> holds the full output amplitudes p = 0..N:
///   entry(p) = [x^p] (t x - conj(r))^k (r x + conj(t))^(N-k)
///              * sqrt(p! (N-p)! / (k! (N-k)!)).
struct BeamSplitterBlocks {
  int n_max;
  // columns[N][ (k - kmin(N)) * (N+1) + p ]
  std::vector<std::vector<Complex>> columns;

  BeamSplitterBlocks(const BeamSplitterSpec& bs, int n_max_) : n_max(n_max_) {
    const auto lf = log_factorials(2 * n_max);
    columns.resize(static_cast<std::size_t>(2 * n_max) + 1);
    std::vector<Complex> poly, next;
    for (int N = 0; N <= 2 * n_max; ++N) {
      const int kmin = std::max(0, N - n_max);
      const int kmax = std::min(N, n_max);
      auto& col = columns[static_cast<std::size_t>(N)];
      col.assign(static_cast<std::size_t>(kmax - kmin + 1) * static_cast<std::size_t>(N + 1), Complex(0.0, 0.0));
      for (int k = kmin; k <= kmax; ++k) {
        poly.assign(1, Complex(1.0, 0.0));
        for (int i = 0; i < k; ++i) {
          next.assign(poly.size() + 1, Complex(0.0, 0.0));
          for (std::size_t j = 0; j < poly.size(); ++j) {
            next[j] += poly[j] * (-std::conj(bs.r));
            next[j + 1] += poly[j] * bs.t;
          }
          poly.swap(next);
        }
        for (int i = 0; i < N - k; ++i) {
          next.assign(poly.size() + 1, Complex(0.0, 0.0));
          for (std::size_t j = 0; j < poly.size(); ++j) {
            next[j] += poly[j] * std::conj(bs.t);
            next[j + 1] += poly[j] * bs.r;
          }
          poly.swap(next);
        }
        Complex* out = col.data() + static_cast<std::size_t>(k - kmin) * static_cast<std::size_t>(N + 1);
        for (int p = 0; p <= N; ++p) {
          const double scale =
              std::exp(0.5 * (lf[static_cast<std::size_t>(p)] + lf[static_cast<std::size_t>(N - p)] -
                              lf[static_cast<std::size_t>(k)] - lf[static_cast<std::size_t>(N - k)]));
          out[p] = poly[static_cast<std::size_t>(p)] * scale;
        }
      }
    }
  }
};

}  // namespace detail

/// Applies a beam splitter to modes (mode_a, mode_b). Exact within each
/// total-photon-number block; probability mass pushed past the cutoff above
/// 1e-6 raises CutoffOverflow.
inline MultiModeState apply_beam_splitter(const MultiModeState& state, int mode_a, int mode_b,
                                          const BeamSplitterSpec& bs) {
  const int k = state.mode_count();
  if (mode_a == mode_b || mode_a < 0 || mode_b < 0 || mode_a >= k || mode_b >= k)
    throw ShapeMismatch("apply_beam_splitter: invalid mode pair");
  const int n_max = state.cutoff().n_max();
  const int dim = state.dim();
  const detail::BeamSplitterBlocks blocks(bs, n_max);

  MultiModeState out(k, state.cutoff());
  const auto src = state.amplitudes();
  auto dst = out.mutable_amplitudes();
  const std::size_t sa = state.stride(mode_a);
  const std::size_t sb = state.stride(mode_b);

  // Enumerate base offsets with n_a = n_b = 0 over the remaining modes.
  std::vector<std::size_t> other_strides;
  for (int m = 0; m < k; ++m)
    if (m != mode_a && m != mode_b) other_strides.push_back(state.stride(m));
  const std::size_t n_other = other_strides.size();
  std::vector<int> digits(std::max<std::size_t>(n_other, 1), 0);

  std::vector<Complex> v(static_cast<std::size_t>(n_max) + 1);
  std::vector<Complex> w(static_cast<std::size_t>(2 * n_max) + 1);
  double lost = 0.0;

  const std::size_t slice_count = src.size() / (static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim));
  for (std::size_t slice = 0; slice < slice_count; ++slice) {
    std::size_t base = 0;
    for (std::size_t m = 0; m < n_other; ++m) base += static_cast<std::size_t>(digits[m]) * other_strides[m];

    for (int N = 0; N <= 2 * n_max; ++N) {
      const int kmin = std::max(0, N - n_max);
      const int kmax = std::min(N, n_max);
      const auto& col = blocks.columns[static_cast<std::size_t>(N)];
      for (int kk = kmin; kk <= kmax; ++kk)
        v[static_cast<std::size_t>(kk - kmin)] =
            src[base + static_cast<std::size_t>(kk) * sa + static_cast<std::size_t>(N - kk) * sb];
      std::fill(w.begin(), w.begin() + N + 1, Complex(0.0, 0.0));
      for (int kk = kmin; kk <= kmax; ++kk) {
        const Complex amp_in = v[static_cast<std::size_t>(kk - kmin)];
        if (amp_in == Complex(0.0, 0.0)) continue;
        const Complex* c = col.data() + static_cast<std::size_t>(kk - kmin) * static_cast<std::size_t>(N + 1);
        for (int p = 0; p <= N; ++p) w[static_cast<std::size_t>(p)] += amp_in * c[p];
      }
      for (int p = 0; p <= N; ++p) {
        if (p >= kmin && p <= kmax)
          dst[base + static_cast<std::size_t>(p) * sa + static_cast<std::size_t>(N - p) * sb] = w[static_cast<std::size_t>(p)];
        else
          lost += std::norm(w[static_cast<std::size_t>(p)]);
      }
    }

    for (std::size_t m = n_other; m-- > 0;) {
      if (++digits[m] < dim) break;
      digits[m] = 0;
    }
  }

  if (lost > 1e-6) throw CutoffOverflow("apply_beam_splitter: truncation loss above 1e-6");
  return out;
}

/// Marginal photon-number distribution of one mode. Entries sum to the
/// squared norm of the state.
inline std::vector<double> photon_distribution(const MultiModeState& state, int mode) {
  if (mode < 0 || mode >= state.mode_count()) throw ShapeMismatch("photon_distribution: bad mode");
  const int dim = state.dim();
  std::vector<double> p(static_cast<std::size_t>(dim), 0.0);
  const auto src = state.amplitudes();
  const std::size_t s = state.stride(mode);
  for (std::size_t i = 0; i < src.size(); ++i) {
    const int n = static_cast<int>((i / s) % static_cast<std::size_t>(dim));
    p[static_cast<std::size_t>(n)] += std::norm(src[i]);
  }
  return p;
}

inline double mean_photon_number(const MultiModeState& state, int mode) {
  const auto p = photon_distribution(state, mode);
  double m = 0.0;
  for (std::size_t n = 0; n < p.size(); ++n) m += static_cast<double>(n) * p[n];
  return m;
}

/// <X_theta> with X_theta = (a e^{-i theta} + a^dag e^{i theta}) / sqrt(2).
inline double quadrature_mean(const MultiModeState& state, int mode, double theta) {
  if (mode < 0 || mode >= state.mode_count()) throw ShapeMismatch("quadrature_mean: bad mode");
  const int dim = state.dim();
  const auto src = state.amplitudes();
  const std::size_t s = state.stride(mode);
  Complex a_mean(0.0, 0.0);
  for (std::size_t i = 0; i < src.size(); ++i) {
    const int n = static_cast<int>((i / s) % static_cast<std::size_t>(dim));
    if (n == 0) continue;
    // <psi| (...,n-1,...)><(...,n,...) |psi> sqrt(n)
    a_mean += std::conj(src[i - s]) * src[i] * std::sqrt(static_cast<double>(n));
  }
  const Complex rotated = a_mean * std::exp(Complex(0.0, -theta));
  return std::sqrt(2.0) * rotated.real();
}

inline Complex inner_product(const MultiModeState& a, const MultiModeState& b) {
  if (a.mode_count() != b.mode_count() || a.cutoff() != b.cutoff())
    throw ShapeMismatch("inner_product: mismatched shapes");
  Complex s(0.0, 0.0);
  const auto va = a.amplitudes();
  const auto vb = b.amplitudes();
  for (std::size_t i = 0; i < va.size(); ++i) s += std::conj(va[i]) * vb[i];
  return s;
}

/// Precomputed cumulative distribution over joint photon-number tuples.
/// Shared by the one-shot sampling entry points and the session cache so
/// both paths consume randomness identically.
struct JointSampler {
  std::vector<int> dims;
  std::vector<double> cdf;  // inclusive prefix sums, index order of the tensor

  double total() const { return cdf.empty() ? 0.0 : cdf.back(); }

  std::vector<int> sample(RandomStream& rng) const {
    const double u = rng.uniform01() * total();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t idx = static_cast<std::size_t>(it - cdf.begin());
    if (idx >= cdf.size()) idx = cdf.size() - 1;
    std::vector<int> out(dims.size());
    for (std::size_t m = dims.size(); m-- > 0;) {
      out[m] = static_cast<int>(idx % static_cast<std::size_t>(dims[m]));
      idx /= static_cast<std::size_t>(dims[m]);
    }
    return out;
  }
};

/// Sampler over the full joint photon-number distribution of the state.
inline JointSampler make_joint_sampler(const MultiModeState& state) {
  JointSampler js;
  js.dims.assign(static_cast<std::size_t>(state.mode_count()), state.dim());
  const auto src = state.amplitudes();
  js.cdf.resize(src.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    acc += std::norm(src[i]);
    js.cdf[i] = acc;
  }
  return js;
}

/// Sampler over the joint marginal of a subset of modes (in the given order).
inline JointSampler make_marginal_sampler(const MultiModeState& state, std::span<const int> modes) {
  const int dim = state.dim();
  JointSampler js;
  js.dims.assign(modes.size(), dim);
  std::size_t n_cells = 1;
  for (std::size_t m = 0; m < modes.size(); ++m) n_cells *= static_cast<std::size_t>(dim);
  std::vector<double> p(n_cells, 0.0);
  const auto src = state.amplitudes();
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::size_t cell = 0;
    for (std::size_t m = 0; m < modes.size(); ++m) {
      const int n = static_cast<int>((i / state.stride(modes[m])) % static_cast<std::size_t>(dim));
      cell = cell * static_cast<std::size_t>(dim) + static_cast<std::size_t>(n);
    }
    p[cell] += std::norm(src[i]);
  }
  js.cdf.resize(n_cells);
  double acc = 0.0;
  for (std::size_t i = 0; i < n_cells; ++i) {
    acc += p[i];
    js.cdf[i] = acc;
  }
  return js;
}

/// One draw from |amplitudes|^2.
inline std::vector<int> sample_photon_numbers(const MultiModeState& state, RandomStream& rng) {
  return make_joint_sampler(state).sample(rng);
}

/// Samples joint photon numbers, then runs each mode's threshold detector.
/// Consumes exactly 1 + mode_count uniforms.
inline std::vector<bool> sample_click_pattern(const MultiModeState& state,
                                              std::span<const DetectorModel> detectors,
                                              RandomStream& rng) {
  if (static_cast<int>(detectors.size()) != state.mode_count())
    throw ShapeMismatch("sample_click_pattern: one detector per mode required");
  const auto ns = sample_photon_numbers(state, rng);
  std::vector<bool> clicks(ns.size());
  for (std::size_t m = 0; m < ns.size(); ++m)
    clicks[m] = rng.bernoulli(click_probability(detectors[m], ns[m]));
  return clicks;
}

/// Projects the listed modes onto the observed photon numbers, removes them
/// and renormalizes. Returns the outcome probability alongside the state.
inline std::pair<double, MultiModeState> remove_modes(const MultiModeState& state,
                                                      std::span<const int> modes,
                                                      std::span<const int> observed) {
  if (modes.size() != observed.size() || modes.empty())
    throw ShapeMismatch("remove_modes: modes/observed size mismatch");
  const int k = state.mode_count();
  if (static_cast<int>(modes.size()) >= k) throw ShapeMismatch("remove_modes: cannot remove all modes");
  const int dim = state.dim();

  std::size_t fixed_off = 0;
  for (std::size_t m = 0; m < modes.size(); ++m) {
    if (observed[m] < 0 || observed[m] >= dim) throw InvalidPhotonNumber("remove_modes: bad outcome");
    fixed_off += static_cast<std::size_t>(observed[m]) * state.stride(modes[m]);
  }

  std::vector<std::size_t> keep_strides;
  for (int m = 0; m < k; ++m)
    if (std::find(modes.begin(), modes.end(), m) == modes.end()) keep_strides.push_back(state.stride(m));

  MultiModeState out(static_cast<int>(keep_strides.size()), state.cutoff());
  const auto src = state.amplitudes();
  auto dst = out.mutable_amplitudes();
  std::vector<int> digits(keep_strides.size(), 0);
  double prob = 0.0;
  for (std::size_t out_idx = 0; out_idx < dst.size(); ++out_idx) {
    std::size_t in_idx = fixed_off;
    for (std::size_t m = 0; m < keep_strides.size(); ++m)
      in_idx += static_cast<std::size_t>(digits[m]) * keep_strides[m];
    dst[out_idx] = src[in_idx];
    prob += std::norm(src[in_idx]);
    for (std::size_t m = keep_strides.size(); m-- > 0;) {
      if (++digits[m] < dim) break;
      digits[m] = 0;
    }
  }
  if (prob > 0.0) {
    const double inv = 1.0 / std::sqrt(prob);
    for (auto& a : dst) a *= inv;
  }
  return {prob, std::move(out)};
}

/// Jointly samples the listed modes (one uniform) and projects them out.
inline std::pair<std::vector<int>, MultiModeState> sample_and_remove_modes(const MultiModeState& state,
                                                                           std::span<const int> modes,
                                                                           RandomStream& rng) {
  const auto sampler = make_marginal_sampler(state, modes);
  const auto outcome = sampler.sample(rng);
  auto [prob, reduced] = remove_modes(state, modes, outcome);
  return {outcome, std::move(reduced)};
}

}  // namespace drqkd::fock
