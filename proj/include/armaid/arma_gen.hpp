#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "armaid/rng.hpp"

namespace armaid {

enum class NoiseKind { Normal01, StudentT2 };

/// Which characteristic polynomial a coefficient vector belongs to:
/// AR uses 1 - sum c_i z^i, MA uses 1 + sum c_j z^j.
enum class PolyRole { AR, MA };

inline constexpr int kMaxOrder = 9;
inline constexpr int kDefaultSeriesLength = 1000;
/// "Roots larger than 1" is enforced as modulus > 1 + kRootMargin.
inline constexpr double kRootMargin = 1e-10;

struct OrderPair {
  int p = 0;
  int q = 0;
  friend bool operator==(const OrderPair&, const OrderPair&) = default;
};

struct ArmaSpec {
  int p = 0;
  int q = 0;
  std::vector<double> phi;
  std::vector<double> theta;
  NoiseKind noise = NoiseKind::Normal01;

  /// Throws InvalidArgument unless orders are in range, vector lengths match,
  /// and both root conditions hold.
  void validate() const;
};

struct TimeSeries {
  std::vector<double> values;
  std::optional<OrderPair> label;
};

struct LabeledBatch {
  std::vector<TimeSeries> series;
  std::vector<OrderPair> labels;
  std::vector<ArmaSpec> specs;  // generating model of each entry
};

/// Roots of the monic polynomial w^d + a[0] w^(d-1) + ... + a[d-1] by
/// Aberth-Ehrlich iteration. Throws NumericalError if the iteration cap is hit.
std::vector<std::complex<double>> monic_polynomial_roots(std::span<const double> tail, int max_iterations = 100);

/// Smallest root modulus of the AR or MA characteristic polynomial.
/// +infinity for an empty (or all-zero) coefficient vector.
double poly_min_root_modulus(std::span<const double> coeffs, PolyRole role);

bool satisfies_root_condition(std::span<const double> coeffs, PolyRole role);

/// Draws i.i.d. N(0,1) coefficients and halves a uniformly chosen entry until
/// the root condition holds.
std::vector<double> gen_coefficients(int order, PolyRole role, Rng& rng);

int burn_in_length(int p, int q, double min_root);

/// Zero-initialised ARMA recursion over the full noise sequence (no burn-in
/// removed).
std::vector<double> arma_recursion(std::span<const double> phi, std::span<const double> theta,
                                   std::span<const double> noise);

struct SimulationTrace {
  TimeSeries series;
  std::vector<double> noise;  // every draw, burn-in included
  int burn_in = 0;
};

SimulationTrace simulate_arma_traced(const ArmaSpec& spec, int length, Rng& rng);
TimeSeries simulate_arma(const ArmaSpec& spec, int length, Rng& rng);

/// Centre to mean 0 and scale to sample standard deviation 1 (n-1 denominator).
TimeSeries standardize(const TimeSeries& series);

ArmaSpec random_spec(int p, int q, NoiseKind noise, Rng& rng);

/// One series per (p, q) in ar_range x ma_range, repeated `copies` times, each
/// standardised, entries shuffled. Every entry draws from its own sub-stream.
LabeledBatch make_training_batch(std::span<const int> ar_range, std::span<const int> ma_range, NoiseKind noise,
                                 Rng& rng, int copies = 1, int length = kDefaultSeriesLength, bool shuffle = true);

std::vector<int> order_range(int lo, int hi);

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& text);

}  // namespace armaid
