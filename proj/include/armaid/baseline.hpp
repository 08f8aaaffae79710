#pragma once

#include <span>
#include <string>
#include <vector>

#include "armaid/arma_gen.hpp"
#include "armaid/error.hpp"

namespace armaid {

enum class Criterion { AIC, BIC };
enum class SearchMode { Full, Stepwise };

std::string to_string(Criterion c);
std::string to_string(SearchMode m);
Criterion parse_criterion(const std::string& text);
SearchMode parse_search_mode(const std::string& text);

struct Autocovariances {
  std::vector<double> gamma;  // lags 0..max_lag
  double tail_estimate = 0.0; // sigma2 * sum of psi_j^2 over the next truncation block
};

inline constexpr int kPsiTruncation = 10000;

/// Autocovariances from the MA(infinity) expansion truncated at kPsiTruncation terms.
Autocovariances arma_autocovariances(std::span<const double> phi, std::span<const double> theta, double sigma2,
                                     int max_lag);

struct KalmanResult {
  double loglik = 0.0;         // at the supplied sigma2, or at sigma2_hat when concentrated
  double sigma2_hat = 0.0;     // (1/n) sum v_t^2 / F_t with unit innovation variance
  double sum_log_f = 0.0;
  double sum_sq = 0.0;         // sum v_t^2 / F_t
  int steady_from = -1;        // first time step using the frozen gain, -1 if never
};

/// Exact Gaussian log-likelihood of a zero-mean ARMA through a state-space
/// filter (state dimension max(p, q + 1)) started at the stationary covariance.
double kalman_loglik(std::span<const double> series, std::span<const double> phi, std::span<const double> theta,
                     double sigma2);

/// Filter pass with unit innovation variance; returns the pieces for both the
/// fixed-sigma2 and the concentrated likelihood (loglik is the concentrated one).
KalmanResult kalman_filter(std::span<const double> series, std::span<const double> phi,
                           std::span<const double> theta);

/// Maps R^k onto the stationary AR region through partial autocorrelations
/// r_i = tanh(u_i) and the Durbin-Levinson recursion.
std::vector<double> stationarity_transform(std::span<const double> unconstrained);
/// Inverse of stationarity_transform; throws InvalidArgument off the region.
std::vector<double> stationarity_inverse(std::span<const double> coeffs);
/// MA coefficients (1 + sum theta_j z^j) from unconstrained values: theta = -transform(u).
std::vector<double> invertibility_transform(std::span<const double> unconstrained);
std::vector<double> invertibility_inverse(std::span<const double> theta);

struct ArmaEstimate {
  std::vector<double> phi;
  std::vector<double> theta;
  double sigma2 = 0.0;
  bool fell_back = false;  // singular regression, zeros returned
};

/// Long-autoregression residual regression estimate, projected into the
/// stationary/invertible region when needed.
ArmaEstimate hannan_rissanen_init(std::span<const double> series, int p, int q);

struct FitResult {
  int p = 0;
  int q = 0;
  std::vector<double> phi;
  std::vector<double> theta;
  double sigma2 = 0.0;
  double loglik = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  int n = 0;
  bool converged = false;
  int iterations = 0;  // objective evaluations

  [[nodiscard]] int num_params() const { return p + q + 1; }
  /// Criterion value used by searches; +infinity for unconverged fits.
  [[nodiscard]] double criterion(Criterion c) const;
};

struct FitOptions {
  int max_evals = 2000;
  double size_tol = 1e-8;   // simplex size in transformed coordinates
  double f_rel_tol = 1e-10; // relative spread of objective values across the simplex
  double initial_step = 0.1;
};

/// Maximum-likelihood fit with sigma2 concentrated out, Nelder-Mead over the
/// transformed coefficients.
FitResult fit_arma(std::span<const double> series, int p, int q, const FitOptions& options = {});

struct SearchConfig {
  Criterion criterion = Criterion::BIC;
  SearchMode mode = SearchMode::Full;
  int p_max = kMaxOrder;
  int q_max = kMaxOrder;
  FitOptions fit;

  void validate() const;
};

struct SearchResult {
  int p = 0;
  int q = 0;
  double value = 0.0;            // selected criterion value
  std::vector<FitResult> fits;   // every fitted model, in visiting order (grid order for Full)
  std::vector<OrderPair> visited;

  /// Criterion table for a full search: entry [p * (q_max + 1) + q].
  [[nodiscard]] std::vector<double> table(const SearchConfig& config) const;
};

/// True when (value_a, a) should be preferred over (value_b, b): lower value,
/// then smaller p + q, then smaller p.
bool better_model(double value_a, OrderPair a, double value_b, OrderPair b);

SearchResult full_search(std::span<const double> series, const SearchConfig& config);
SearchResult stepwise_search(std::span<const double> series, const SearchConfig& config);
/// Dispatches on config.mode.
SearchResult search(std::span<const double> series, const SearchConfig& config);

}  // namespace armaid
