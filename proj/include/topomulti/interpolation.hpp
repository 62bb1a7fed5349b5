#pragma once

// Multi-material stiffness interpolation.
//
// Three schemes map the per-element design variables gamma_1..gamma_NM to
// an effective Young's modulus:
//
//   pnorm_mapping  phi_i = (|g|_p / (|g|_1 + delta)) * g_i
//                  E     = sum phi_i^n (E_i - E_void) + E_void
//   extended_simp  phi_1 = g_1^n (1 - g_2^n), nested products thereafter
//                  E     = sum phi_i (E_i - E_void) + E_void
//   dmo            phi_i = g_i^n prod_{j!=i} (1 - g_j^n)
//                  E     = sum phi_i (E_i - E_void) + E_void
//
// All functions are pure, allocation-free, and safe to call concurrently.
// Gradients are analytic; at the all-void point the p-norm gradient is
// defined as zero (subgradient choice matching the phi = 0 plateau).

#include <cassert>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace topomulti {

enum class Scheme { pnorm_mapping, extended_simp, dmo };

inline const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::pnorm_mapping: return "pnorm_mapping";
    case Scheme::extended_simp: return "extended_simp";
    case Scheme::dmo: return "dmo";
  }
  return "?";
}

inline Scheme scheme_from_name(std::string_view name) {
  if (name == "pnorm_mapping") return Scheme::pnorm_mapping;
  if (name == "extended_simp") return Scheme::extended_simp;
  if (name == "dmo") return Scheme::dmo;
  throw std::invalid_argument("unknown scheme '" + std::string(name) +
                              "' (expected pnorm_mapping, extended_simp or dmo)");
}

/// Candidate material stiffnesses plus the parameters shared by all schemes.
/// Moduli may appear in any order; the void modulus must stay strictly below
/// every candidate so that an empty element keeps a (tiny) positive stiffness.
struct MaterialSet {
  std::vector<double> moduli;  // E_i per candidate material
  double e_void = 1e-9;        // stiffness assigned to emptiness
  double penal_n = 3.0;        // penalization exponent n
  double norm_p = 6.0;         // norm order p of the mapping scheme
  double delta = 1e-9;         // guards the 0/0 at an all-void element

  int count() const { return static_cast<int>(moduli.size()); }

  bool operator==(const MaterialSet&) const = default;

  void validate() const {
    if (moduli.empty()) throw std::invalid_argument("MaterialSet: at least one material required");
    if (!(e_void > 0.0)) throw std::invalid_argument("MaterialSet: e_void must be positive");
    for (double e : moduli)
      if (!(e > e_void)) throw std::invalid_argument("MaterialSet: every modulus must exceed e_void");
    if (!(penal_n >= 1.0)) throw std::invalid_argument("MaterialSet: penal_n must be >= 1");
    if (!(norm_p >= 1.0)) throw std::invalid_argument("MaterialSet: norm_p must be >= 1");
    if (!(delta > 0.0)) throw std::invalid_argument("MaterialSet: delta must be positive");
  }
};

namespace detail {

// p-norm of gamma and the guarded 1-norm denominator.
struct PnormParts {
  double norm_p;  // |g|_p, zero iff all entries are zero
  double denom;   // |g|_1 + delta, always positive
};

inline PnormParts pnorm_parts(std::span<const double> gamma, const MaterialSet& mat) {
  double sum1 = 0.0, sump = 0.0;
  for (double g : gamma) {
    sum1 += g;
    sump += std::pow(g, mat.norm_p);
  }
  const double np = sump > 0.0 ? std::pow(sump, 1.0 / mat.norm_p) : 0.0;
  return {np, sum1 + mat.delta};
}

}  // namespace detail

/// phi_i = (|g|_p / (|g|_1 + delta)) * g_i.  Since |g|_p <= |g|_1 on the unit
/// box, each weight lies in [0, g_i].
inline void weights_pnorm(std::span<const double> gamma, const MaterialSet& mat,
                          std::span<double> phi) {
  assert(gamma.size() == phi.size());
  const auto [np, denom] = detail::pnorm_parts(gamma, mat);
  const double ratio = np / denom;
  for (std::size_t i = 0; i < gamma.size(); ++i) phi[i] = ratio * gamma[i];
}

/// Nested products: phi_i = (prod_{j<=i} g_j^n) * (1 - g_{i+1}^n) and the
/// trailing phi_NM = prod_j g_j^n.  Material i is selected by setting the
/// first i variables to one and the rest to zero.
inline void weights_extended_simp(std::span<const double> gamma, const MaterialSet& mat,
                                  std::span<double> phi) {
  assert(gamma.size() == phi.size());
  const std::size_t nm = gamma.size();
  const double n = mat.penal_n;
  double prod = 1.0;
  for (std::size_t i = 0; i < nm; ++i) {
    prod *= std::pow(gamma[i], n);
    phi[i] = (i + 1 < nm) ? prod * (1.0 - std::pow(gamma[i + 1], n)) : prod;
  }
}

/// phi_i = g_i^n prod_{j != i} (1 - g_j^n); conflicting selections annihilate.
inline void weights_dmo(std::span<const double> gamma, const MaterialSet& mat,
                        std::span<double> phi) {
  assert(gamma.size() == phi.size());
  const std::size_t nm = gamma.size();
  const double n = mat.penal_n;
  for (std::size_t i = 0; i < nm; ++i) {
    double w = std::pow(gamma[i], n);
    for (std::size_t j = 0; j < nm; ++j)
      if (j != i) w *= 1.0 - std::pow(gamma[j], n);
    phi[i] = w;
  }
}

inline void weights(Scheme scheme, std::span<const double> gamma, const MaterialSet& mat,
                    std::span<double> phi) {
  switch (scheme) {
    case Scheme::pnorm_mapping: weights_pnorm(gamma, mat, phi); return;
    case Scheme::extended_simp: weights_extended_simp(gamma, mat, phi); return;
    case Scheme::dmo: weights_dmo(gamma, mat, phi); return;
  }
}

/// Interpolated Young's modulus.  The penalization exponent sits on phi for
/// the mapping scheme and inside phi for the two baselines.
inline double modulus(Scheme scheme, std::span<const double> gamma, const MaterialSet& mat) {
  assert(gamma.size() == mat.moduli.size());
  const std::size_t nm = gamma.size();
  const double n = mat.penal_n;
  double e = mat.e_void;
  switch (scheme) {
    case Scheme::pnorm_mapping: {
      const auto [np, denom] = detail::pnorm_parts(gamma, mat);
      const double ratio = np / denom;
      for (std::size_t i = 0; i < nm; ++i)
        e += std::pow(ratio * gamma[i], n) * (mat.moduli[i] - mat.e_void);
      return e;
    }
    case Scheme::extended_simp: {
      double prod = 1.0;
      for (std::size_t i = 0; i < nm; ++i) {
        prod *= std::pow(gamma[i], n);
        const double phi = (i + 1 < nm) ? prod * (1.0 - std::pow(gamma[i + 1], n)) : prod;
        e += phi * (mat.moduli[i] - mat.e_void);
      }
      return e;
    }
    case Scheme::dmo: {
      for (std::size_t i = 0; i < nm; ++i) {
        double w = std::pow(gamma[i], n);
        for (std::size_t j = 0; j < nm; ++j)
          if (j != i) w *= 1.0 - std::pow(gamma[j], n);
        e += w * (mat.moduli[i] - mat.e_void);
      }
      return e;
    }
  }
  return e;
}

/// Fused modulus + analytic gradient dE/dgamma_j; returns E.
/// This is the kernel the optimization loop calls once per element.
inline double modulus_and_gradient(Scheme scheme, std::span<const double> gamma,
                                   const MaterialSet& mat, std::span<double> grad) {
  assert(gamma.size() == mat.moduli.size() && grad.size() == gamma.size());
  const std::size_t nm = gamma.size();
  const double n = mat.penal_n;
  double e = mat.e_void;

  switch (scheme) {
    case Scheme::pnorm_mapping: {
      // phi_i = r g_i with r = N/D.  dphi_i/dg_j = (g_i/D)(t_j - r) + r 1{i=j}
      // where t_j = dN/dg_j = (g_j/N)^(p-1), taken as zero when N = 0.
      const auto [np, denom] = detail::pnorm_parts(gamma, mat);
      const double ratio = np / denom;
      double weighted = 0.0;  // sum_i w_i g_i with w_i = n phi_i^(n-1) dE_i
      for (std::size_t i = 0; i < nm; ++i) {
        const double phi = ratio * gamma[i];
        const double de = mat.moduli[i] - mat.e_void;
        e += std::pow(phi, n) * de;
        const double w = n * std::pow(phi, n - 1.0) * de;
        grad[i] = w;  // stash w_i
        weighted += w * gamma[i];
      }
      for (std::size_t j = 0; j < nm; ++j) {
        const double t = np > 0.0 ? std::pow(gamma[j] / np, mat.norm_p - 1.0) : 0.0;
        grad[j] = (t - ratio) / denom * weighted + grad[j] * ratio;
      }
      return e;
    }
    case Scheme::extended_simp: {
      for (std::size_t j = 0; j < nm; ++j) grad[j] = 0.0;
      for (std::size_t i = 0; i < nm; ++i) {
        const double de = mat.moduli[i] - mat.e_void;
        const double tail = (i + 1 < nm) ? 1.0 - std::pow(gamma[i + 1], n) : 1.0;
        double prod = 1.0;
        for (std::size_t k = 0; k <= i; ++k) prod *= std::pow(gamma[k], n);
        e += prod * tail * de;
        for (std::size_t j = 0; j <= i; ++j) {
          double excl = 1.0;
          for (std::size_t k = 0; k <= i; ++k)
            if (k != j) excl *= std::pow(gamma[k], n);
          grad[j] += de * n * std::pow(gamma[j], n - 1.0) * excl * tail;
        }
        if (i + 1 < nm)
          grad[i + 1] += de * prod * (-n * std::pow(gamma[i + 1], n - 1.0));
      }
      return e;
    }
    case Scheme::dmo: {
      for (std::size_t j = 0; j < nm; ++j) grad[j] = 0.0;
      for (std::size_t i = 0; i < nm; ++i) {
        const double de = mat.moduli[i] - mat.e_void;
        const double ti = std::pow(gamma[i], n);
        double rest = 1.0;
        for (std::size_t k = 0; k < nm; ++k)
          if (k != i) rest *= 1.0 - std::pow(gamma[k], n);
        e += ti * rest * de;
        grad[i] += de * n * std::pow(gamma[i], n - 1.0) * rest;
        for (std::size_t j = 0; j < nm; ++j) {
          if (j == i) continue;
          double excl = 1.0;
          for (std::size_t k = 0; k < nm; ++k)
            if (k != i && k != j) excl *= 1.0 - std::pow(gamma[k], n);
          grad[j] += de * ti * (-n * std::pow(gamma[j], n - 1.0)) * excl;
        }
      }
      return e;
    }
  }
  return e;
}

inline void modulus_gradient(Scheme scheme, std::span<const double> gamma,
                             const MaterialSet& mat, std::span<double> grad) {
  modulus_and_gradient(scheme, gamma, mat, grad);
}

}  // namespace topomulti
