#pragma once

// Maximum Coupling between two categorical marginals.
//
// For z_t = k the plan keeps z_s = k with probability min(u_s[k], u_t[k]) / u_t[k]
// and sends the excess (u_t[k] - u_s[k])+ / u_t[k] to the deficit bins in
// proportion m[j] = (u_s[j] - u_t[j])+ / sum_l (u_s[l] - u_t[l])+. Rows are
// normalized and transport u_t exactly onto u_s.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fldd/catdist.hpp"
#include "fldd/ndgrad.hpp"

namespace fldd {

/// Conditioning mass below which a category is treated as unreachable.
inline constexpr double kCouplingEps = 1e-12;

class CouplingError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct CouplingRow {
  std::size_t from = 0;
  Simplex row;
};

/// Normalized positive part of u_s - u_t; empty when there is no deficit.
std::optional<Simplex> deficit_distribution(const Simplex& u_s, const Simplex& u_t);

/// Row of the plan for z_t = k. Throws CouplingError when u_t[k] == 0.
CouplingRow max_coupling_row(const Simplex& u_s, const Simplex& u_t, std::size_t k);

/// All K rows. Categories with u_t[k] below kCouplingEps carry no mass and get
/// identity rows.
std::vector<CouplingRow> coupling_matrix(const Simplex& u_s, const Simplex& u_t);

/// sum_k min(u_s[k], u_t[k]) = 1 - TV(u_s, u_t), the largest achievable P(z_s == z_t).
double expected_stay_mass(const Simplex& u_s, const Simplex& u_t);

/// Differentiable per-row coupling factors over (N, K) marginals.
///
/// Row k of the plan is stay[k] * e_k + leave[k] * deficit.
struct CouplingTerms {
  nd::Var stay;
  nd::Var leave;
  nd::Var deficit;
  /// Conditioning categories below kCouplingEps that were given identity rows.
  std::size_t degenerate = 0;
};

CouplingTerms coupling_terms(const nd::Var& u_s, const nd::Var& u_t);

/// Posterior rows for hard conditioning categories z (one per row).
nd::Var posterior_rows(const CouplingTerms& terms, std::span<const std::size_t> z);

/// Posterior mixture sum_k w[k] * row_k for relaxed weights w of shape (N, K).
nd::Var mixed_posterior(const CouplingTerms& terms, const nd::Var& weights);

}  // namespace fldd
