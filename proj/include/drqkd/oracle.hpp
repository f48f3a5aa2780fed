#pragma once

// Brute-force reference path for the Fock engine: displacement and
// beam-splitter unitaries evaluated as truncated matrix exponentials of
// their generators (scaled Taylor series applied to vectors). Shares no
// code with the closed forms in fock.hpp; used by the test suites and the
// validate command as the independent route of every dual-route check.

#include <cmath>
#include <complex>
#include <vector>

#include "drqkd/errors.hpp"
#include "drqkd/fock.hpp"

namespace drqkd::oracle {

using Complex = std::complex<double>;

namespace detail {

/// w = exp(G) v with G given as a matrix-free action, via 2^s-fold scaling
/// and a Taylor series per step.
template <typename ApplyG>
std::vector<Complex> expm_action(const ApplyG& apply_g, std::vector<Complex> v, double norm_bound) {
  int s = 0;
  double scaled = std::max(norm_bound, 1e-300);
  while (scaled > 0.5) {
    scaled *= 0.5;
    ++s;
  }
  const double inv = std::ldexp(1.0, -s);
  std::vector<Complex> term(v.size()), next(v.size()), acc(v.size());
  const long long reps = 1ll << s;
  for (long long rep = 0; rep < reps; ++rep) {
    acc = v;
    term = v;
    for (int k = 1; k <= 60; ++k) {
      apply_g(term, next);
      double nrm = 0.0;
      for (std::size_t i = 0; i < next.size(); ++i) {
        term[i] = next[i] * (inv / static_cast<double>(k));
        acc[i] += term[i];
        nrm += std::norm(term[i]);
      }
      if (nrm < 1e-32) break;
    }
    v = acc;
  }
  return v;
}

}  // namespace detail

/// <m|exp(alpha a^dag - conj(alpha) a)|n> for m = 0..n_max, computed in a
/// padded truncated space so edge effects cannot reach the reported window.
inline std::vector<Complex> displaced_amplitudes(int n, Complex alpha, int n_max) {
  if (n < 0 || n > n_max) throw InvalidPhotonNumber("oracle::displaced_amplitudes: bad n");
  const int pad_dim = n_max + 1 + 48;
  std::vector<Complex> v(static_cast<std::size_t>(pad_dim), Complex(0.0, 0.0));
  v[static_cast<std::size_t>(n)] = 1.0;
  const Complex ac = std::conj(alpha);
  auto apply_g = [&](const std::vector<Complex>& x, std::vector<Complex>& y) {
    for (int m = 0; m < pad_dim; ++m) {
      Complex acc(0.0, 0.0);
      if (m > 0) acc += alpha * std::sqrt(static_cast<double>(m)) * x[static_cast<std::size_t>(m - 1)];
      if (m + 1 < pad_dim) acc -= ac * std::sqrt(static_cast<double>(m + 1)) * x[static_cast<std::size_t>(m + 1)];
      y[static_cast<std::size_t>(m)] = acc;
    }
  };
  const double bound = 2.0 * std::abs(alpha) * std::sqrt(static_cast<double>(pad_dim));
  auto w = detail::expm_action(apply_g, std::move(v), bound);
  w.resize(static_cast<std::size_t>(n_max) + 1);
  return w;
}

/// Spec of the beam splitter generated by theta (e^{i phi} a^dag b - h.c.):
/// t = cos(theta), r = e^{i phi} sin(theta).
inline fock::BeamSplitterSpec bs_spec(double theta, double phi) {
  return {Complex(std::cos(theta), 0.0), std::exp(Complex(0.0, phi)) * std::sin(theta)};
}

/// Two-mode beam splitter exp(kappa a^dag b - conj(kappa) a b^dag) applied to
/// a two-mode state. Evaluated at doubled per-mode dimension, where every
/// total-photon block of the input is complete, then truncated back.
inline fock::MultiModeState apply_beam_splitter(const fock::MultiModeState& state, double theta,
                                                double phi) {
  if (state.mode_count() != 2) throw ShapeMismatch("oracle::apply_beam_splitter: two modes required");
  const int dim = state.dim();
  const int big = 2 * dim - 1;  // holds total photon numbers up to 2 n_max
  const Complex kappa = std::exp(Complex(0.0, phi)) * theta;
  const Complex kc = std::conj(kappa);

  std::vector<Complex> v(static_cast<std::size_t>(big) * static_cast<std::size_t>(big), Complex(0.0, 0.0));
  const auto src = state.amplitudes();
  for (int m = 0; m < dim; ++m)
    for (int n = 0; n < dim; ++n)
      v[static_cast<std::size_t>(m) * static_cast<std::size_t>(big) + static_cast<std::size_t>(n)] =
          src[static_cast<std::size_t>(m) * static_cast<std::size_t>(dim) + static_cast<std::size_t>(n)];

  auto apply_g = [&](const std::vector<Complex>& x, std::vector<Complex>& y) {
    for (int m = 0; m < big; ++m) {
      for (int n = 0; n < big; ++n) {
        Complex acc(0.0, 0.0);
        if (m > 0 && n + 1 < big)
          acc += kappa * std::sqrt(static_cast<double>(m)) * std::sqrt(static_cast<double>(n + 1)) *
                 x[static_cast<std::size_t>(m - 1) * static_cast<std::size_t>(big) + static_cast<std::size_t>(n + 1)];
        if (n > 0 && m + 1 < big)
          acc -= kc * std::sqrt(static_cast<double>(m + 1)) * std::sqrt(static_cast<double>(n)) *
                 x[static_cast<std::size_t>(m + 1) * static_cast<std::size_t>(big) + static_cast<std::size_t>(n - 1)];
        y[static_cast<std::size_t>(m) * static_cast<std::size_t>(big) + static_cast<std::size_t>(n)] = acc;
      }
    }
  };
  const double bound = 2.0 * std::abs(kappa) * static_cast<double>(big);
  auto w = detail::expm_action(apply_g, std::move(v), bound);

  fock::MultiModeState out(2, state.cutoff());
  auto dst = out.mutable_amplitudes();
  for (int m = 0; m < dim; ++m)
    for (int n = 0; n < dim; ++n)
      dst[static_cast<std::size_t>(m) * static_cast<std::size_t>(dim) + static_cast<std::size_t>(n)] =
          w[static_cast<std::size_t>(m) * static_cast<std::size_t>(big) + static_cast<std::size_t>(n)];
  return out;
}

}  // namespace drqkd::oracle
