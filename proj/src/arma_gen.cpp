#include "armaid/arma_gen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "armaid/error.hpp"

namespace armaid {

namespace {

constexpr int kMaxHalvings = 10000;
constexpr int kMaxNoiseRetries = 100;
constexpr int kBurnInCap = 50000;

struct HornerResult {
  std::complex<double> value;
  std::complex<double> derivative;
  double error_bound;  // rounding-error bound on |value|
};

HornerResult horner(std::span<const double> tail, std::complex<double> w) {
  std::complex<double> value = 1.0;
  std::complex<double> derivative = 0.0;
  double bound = 1.0;
  const double aw = std::abs(w);
  for (double a : tail) {
    derivative = derivative * w + value;
    value = value * w + a;
    bound = bound * aw + std::abs(a);
  }
  return {value, derivative, bound * 8.0 * std::numeric_limits<double>::epsilon() * (tail.size() + 1)};
}

}  // namespace

std::vector<std::complex<double>> monic_polynomial_roots(std::span<const double> tail, int max_iterations) {
  const std::size_t d = tail.size();
  if (d == 0) return {};
  if (d == 1) return {std::complex<double>(-tail[0], 0.0)};

  // Start on a circle whose radius is the geometric mean of the root moduli.
  const double radius = std::max(std::pow(std::abs(tail[d - 1]), 1.0 / static_cast<double>(d)), 1e-3);
  std::vector<std::complex<double>> roots(d);
  for (std::size_t k = 0; k < d; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(d) + 0.4;
    roots[k] = std::polar(radius, angle);
  }

  std::vector<bool> done(d, false);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool all_done = true;
    for (std::size_t k = 0; k < d; ++k) {
      if (done[k]) continue;
      const HornerResult h = horner(tail, roots[k]);
      if (std::abs(h.value) <= h.error_bound) {
        done[k] = true;
        continue;
      }
      const std::complex<double> ratio = h.value / h.derivative;
      std::complex<double> repulsion = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        if (j != k) repulsion += 1.0 / (roots[k] - roots[j]);
      }
      const std::complex<double> step = ratio / (1.0 - ratio * repulsion);
      if (!std::isfinite(step.real()) || !std::isfinite(step.imag())) {
        throw NumericalError("root finder: non-finite Aberth step");
      }
      roots[k] -= step;
      if (std::abs(step) <= 1e-12 * std::max(1.0, std::abs(roots[k]))) {
        done[k] = true;
      } else {
        all_done = false;
      }
    }
    if (all_done && std::all_of(done.begin(), done.end(), [](bool b) { return b; })) return roots;
  }
  throw NumericalError("root finder: Aberth iteration did not converge within " + std::to_string(max_iterations) +
                       " iterations");
}

double poly_min_root_modulus(std::span<const double> coeffs, PolyRole role) {
  for (double c : coeffs) {
    if (!std::isfinite(c)) throw InvalidArgument("poly_min_root_modulus: non-finite coefficient");
  }
  std::size_t degree = coeffs.size();
  while (degree > 0 && coeffs[degree - 1] == 0.0) --degree;
  if (degree == 0) return std::numeric_limits<double>::infinity();

  // Roots of 1 + sum a_i z^i are reciprocals of the roots of the reversed
  // monic polynomial w^d + a_1 w^(d-1) + ... + a_d.
  const double sign = role == PolyRole::AR ? -1.0 : 1.0;
  std::vector<double> tail(degree);
  for (std::size_t i = 0; i < degree; ++i) tail[i] = sign * coeffs[i];
  const auto reversed_roots = monic_polynomial_roots(tail);
  double max_modulus = 0.0;
  for (const auto& w : reversed_roots) max_modulus = std::max(max_modulus, std::abs(w));
  return 1.0 / max_modulus;
}

bool satisfies_root_condition(std::span<const double> coeffs, PolyRole role) {
  return poly_min_root_modulus(coeffs, role) > 1.0 + kRootMargin;
}

void ArmaSpec::validate() const {
  if (p < 0 || p > kMaxOrder || q < 0 || q > kMaxOrder) throw InvalidArgument("ArmaSpec: order out of range 0..9");
  if (phi.size() != static_cast<std::size_t>(p) || theta.size() != static_cast<std::size_t>(q)) {
    throw InvalidArgument("ArmaSpec: coefficient vector length does not match order");
  }
  if (p > 0 && !satisfies_root_condition(phi, PolyRole::AR)) throw InvalidArgument("ArmaSpec: AR part not stationary");
  if (q > 0 && !satisfies_root_condition(theta, PolyRole::MA)) throw InvalidArgument("ArmaSpec: MA part not invertible");
}

std::vector<double> gen_coefficients(int order, PolyRole role, Rng& rng) {
  if (order < 0 || order > kMaxOrder) throw InvalidArgument("gen_coefficients: order must be in 0..9");
  std::vector<double> coeffs(static_cast<std::size_t>(order));
  for (double& c : coeffs) c = rng.normal();
  if (order == 0) return coeffs;
  for (int halvings = 0; !satisfies_root_condition(coeffs, role); ++halvings) {
    if (halvings >= kMaxHalvings) throw NumericalError("gen_coefficients: halving cap reached");
    coeffs[rng.uniform_index(coeffs.size())] *= 0.5;
  }
  return coeffs;
}

int burn_in_length(int p, int q, double min_root) {
  if (p < 0 || q < 0) throw InvalidArgument("burn_in_length: negative order");
  if (p == 0) return q;
  if (!(min_root > 1.0)) throw InvalidArgument("burn_in_length: AR min root modulus must exceed 1");
  const double tail = std::ceil(10.0 / std::log(min_root));
  const int extra = tail >= kBurnInCap ? kBurnInCap : static_cast<int>(tail);
  return p + q + extra;
}

std::vector<double> arma_recursion(std::span<const double> phi, std::span<const double> theta,
                                   std::span<const double> noise) {
  const std::size_t n = noise.size();
  std::vector<double> x(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double v = noise[t];
    for (std::size_t i = 0; i < phi.size() && i < t; ++i) v += phi[i] * x[t - 1 - i];
    for (std::size_t j = 0; j < theta.size() && j < t; ++j) v += theta[j] * noise[t - 1 - j];
    x[t] = v;
  }
  return x;
}

SimulationTrace simulate_arma_traced(const ArmaSpec& spec, int length, Rng& rng) {
  spec.validate();
  if (length < 1) throw InvalidArgument("simulate_arma: length must be positive");
  const double min_root = spec.p > 0 ? poly_min_root_modulus(spec.phi, PolyRole::AR) : 0.0;
  const int burn = burn_in_length(spec.p, spec.q, min_root);
  const std::size_t total = static_cast<std::size_t>(burn) + static_cast<std::size_t>(length);

  for (int attempt = 0; attempt < kMaxNoiseRetries; ++attempt) {
    std::vector<double> noise(total);
    for (double& e : noise) e = spec.noise == NoiseKind::Normal01 ? rng.normal() : rng.student_t2();
    std::vector<double> full = arma_recursion(spec.phi, spec.theta, noise);
    if (!std::all_of(full.begin(), full.end(), [](double v) { return std::isfinite(v); })) continue;
    SimulationTrace trace;
    trace.series.values.assign(full.begin() + burn, full.end());
    trace.series.label = OrderPair{spec.p, spec.q};
    trace.noise = std::move(noise);
    trace.burn_in = burn;
    return trace;
  }
  throw NumericalError("simulate_arma: non-finite values after 100 noise redraws");
}

TimeSeries simulate_arma(const ArmaSpec& spec, int length, Rng& rng) {
  return simulate_arma_traced(spec, length, rng).series;
}

TimeSeries standardize(const TimeSeries& series) {
  const auto& x = series.values;
  if (x.size() < 2) throw InvalidArgument("standardize: need at least two values");
  const double n = static_cast<double>(x.size());
  double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double residual = 0.0;
  for (double v : x) residual += v - mean;
  mean += residual / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0) || !std::isfinite(sd)) throw InvalidArgument("standardize: zero or non-finite variance");
  TimeSeries out;
  out.label = series.label;
  out.values.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.values[i] = (x[i] - mean) / sd;
  return out;
}

ArmaSpec random_spec(int p, int q, NoiseKind noise, Rng& rng) {
  ArmaSpec spec;
  spec.p = p;
  spec.q = q;
  spec.noise = noise;
  spec.phi = gen_coefficients(p, PolyRole::AR, rng);
  spec.theta = gen_coefficients(q, PolyRole::MA, rng);
  return spec;
}

LabeledBatch make_training_batch(std::span<const int> ar_range, std::span<const int> ma_range, NoiseKind noise,
                                 Rng& rng, int copies, int length, bool shuffle) {
  if (ar_range.empty() || ma_range.empty()) throw InvalidArgument("make_training_batch: empty order range");
  if (copies < 1) throw InvalidArgument("make_training_batch: copies must be positive");
  for (int o : ar_range) {
    if (o < 0 || o > kMaxOrder) throw InvalidArgument("make_training_batch: AR order out of range");
  }
  for (int o : ma_range) {
    if (o < 0 || o > kMaxOrder) throw InvalidArgument("make_training_batch: MA order out of range");
  }

  LabeledBatch batch;
  std::uint64_t index = 0;
  for (int c = 0; c < copies; ++c) {
    for (int p : ar_range) {
      for (int q : ma_range) {
        Rng stream = rng.substream("series", index++);
        ArmaSpec spec = random_spec(p, q, noise, stream);
        batch.series.push_back(standardize(simulate_arma(spec, length, stream)));
        batch.labels.push_back({p, q});
        batch.specs.push_back(std::move(spec));
      }
    }
  }
  if (shuffle) {
    std::vector<std::size_t> perm(batch.series.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng shuffler = rng.substream("shuffle");
    std::shuffle(perm.begin(), perm.end(), shuffler.engine());
    LabeledBatch shuffled;
    for (std::size_t i : perm) {
      shuffled.series.push_back(std::move(batch.series[i]));
      shuffled.labels.push_back(batch.labels[i]);
      shuffled.specs.push_back(std::move(batch.specs[i]));
    }
    return shuffled;
  }
  return batch;
}

std::vector<int> order_range(int lo, int hi) {
  std::vector<int> r;
  for (int o = lo; o <= hi; ++o) r.push_back(o);
  return r;
}

std::string to_string(NoiseKind kind) { return kind == NoiseKind::Normal01 ? "normal" : "t2"; }

NoiseKind parse_noise_kind(const std::string& text) {
  if (text == "normal") return NoiseKind::Normal01;
  if (text == "t2") return NoiseKind::StudentT2;
  throw InvalidArgument("unknown noise kind '" + text + "' (expected normal or t2)");
}

}  // namespace armaid
