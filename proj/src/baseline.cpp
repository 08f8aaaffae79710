#include "armaid/baseline.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>

#include "armaid/parallel.hpp"

namespace armaid {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

std::string to_string(Criterion c) { return c == Criterion::AIC ? "aic" : "bic"; }
std::string to_string(SearchMode m) { return m == SearchMode::Full ? "full" : "stepwise"; }

Criterion parse_criterion(const std::string& text) {
  if (text == "aic" || text == "AIC") return Criterion::AIC;
  if (text == "bic" || text == "BIC") return Criterion::BIC;
  throw InvalidArgument("unknown criterion '" + text + "' (expected aic or bic)");
}

SearchMode parse_search_mode(const std::string& text) {
  if (text == "full") return SearchMode::Full;
  if (text == "stepwise") return SearchMode::Stepwise;
  throw InvalidArgument("unknown search mode '" + text + "' (expected full or stepwise)");
}

Autocovariances arma_autocovariances(std::span<const double> phi, std::span<const double> theta, double sigma2,
                                     int max_lag) {
  if (max_lag < 0) throw InvalidArgument("arma_autocovariances: negative max_lag");
  if (!satisfies_root_condition(phi, PolyRole::AR)) {
    throw InvalidArgument("arma_autocovariances: AR polynomial is not stationary");
  }
  const int n_psi = 2 * kPsiTruncation + max_lag;
  std::vector<double> psi(static_cast<std::size_t>(n_psi));
  for (int j = 0; j < n_psi; ++j) {
    double v = j == 0 ? 1.0 : (j <= static_cast<int>(theta.size()) ? theta[j - 1] : 0.0);
    for (int i = 1; i <= std::min<int>(j, static_cast<int>(phi.size())); ++i) v += phi[i - 1] * psi[j - i];
    psi[j] = v;
  }
  Autocovariances out;
  out.gamma.assign(static_cast<std::size_t>(max_lag) + 1, 0.0);
  for (int h = 0; h <= max_lag; ++h) {
    double s = 0.0;
    for (int j = 0; j < kPsiTruncation; ++j) s += psi[j] * psi[j + h];
    out.gamma[h] = sigma2 * s;
  }
  double tail = 0.0;
  for (int j = kPsiTruncation; j < 2 * kPsiTruncation; ++j) tail += psi[j] * psi[j];
  out.tail_estimate = sigma2 * tail;
  return out;
}

namespace {

/// Stationary state covariance for unit innovation variance: P = T P T' + R R'.
Eigen::MatrixXd stationary_covariance(const std::vector<double>& tcol, const std::vector<double>& rvec) {
  const int r = static_cast<int>(rvec.size());
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(r, r);
  for (int i = 0; i < r; ++i) {
    t(i, 0) = tcol[i];
    if (i + 1 < r) t(i, i + 1) = 1.0;
  }
  const int r2 = r * r;
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(r2, r2);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) {
      if (t(i, j) == 0.0) continue;
      a.block(i * r, j * r, r, r) -= t(i, j) * t;
    }
  }
  Eigen::VectorXd b(r2);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) b(i * r + j) = rvec[i] * rvec[j];
  }
  const Eigen::VectorXd x = a.partialPivLu().solve(b);
  Eigen::MatrixXd p(r, r);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) p(i, j) = 0.5 * (x(i * r + j) + x(j * r + i));
  }
  return p;
}

}  // namespace

KalmanResult kalman_filter(std::span<const double> series, std::span<const double> phi,
                           std::span<const double> theta) {
  const int n = static_cast<int>(series.size());
  if (n < 1) throw InvalidArgument("kalman_filter: empty series");
  const int p = static_cast<int>(phi.size());
  const int q = static_cast<int>(theta.size());
  const int r = std::max(p, q + 1);
  std::vector<double> tcol(r, 0.0), rvec(r, 0.0);
  for (int i = 0; i < p; ++i) tcol[i] = phi[i];
  rvec[0] = 1.0;
  for (int j = 0; j < q; ++j) rvec[j + 1] = theta[j];

  const Eigen::MatrixXd p0 = stationary_covariance(tcol, rvec);
  std::vector<double> P(static_cast<std::size_t>(r) * r);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) P[i * r + j] = p0(i, j);
  }
  if (!(P[0] > 0.0) || !std::isfinite(P[0])) {
    throw NumericalError("kalman_filter: stationary covariance is not positive definite (P00=" +
                         std::to_string(P[0]) + ")");
  }

  std::vector<double> a(r, 0.0), a_next(r), m(static_cast<std::size_t>(r) * r), tm(m.size()), k(r);
  KalmanResult res;
  bool steady = false;
  for (int t = 0; t < n; ++t) {
    const double v = series[t] - a[0];
    if (steady) {
      // P has reached R R' and F = 1: a' = T (a + R v).
      for (int i = 0; i < r; ++i) k[i] = a[i] + rvec[i] * v;
      for (int i = 0; i < r; ++i) a[i] = tcol[i] * k[0] + (i + 1 < r ? k[i + 1] : 0.0);
      res.sum_sq += v * v;
      continue;
    }
    const double f = P[0];
    if (!(f > 0.0) || !std::isfinite(f)) {
      throw NumericalError("kalman_filter: prediction variance lost positivity at t=" + std::to_string(t) +
                           " (F=" + std::to_string(f) + ")");
    }
    res.sum_log_f += std::log(f);
    res.sum_sq += v * v / f;
    // Filtered state a + P Z' v / F, then predict with T.
    for (int i = 0; i < r; ++i) k[i] = a[i] + P[i * r] * v / f;
    for (int i = 0; i < r; ++i) a_next[i] = tcol[i] * k[0] + (i + 1 < r ? k[i + 1] : 0.0);
    a.swap(a_next);
    // M = P - P Z' Z P / F;  P' = T M T' + R R'.
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < r; ++j) m[i * r + j] = P[i * r + j] - P[i * r] * P[j * r] / f;
    }
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < r; ++j) tm[i * r + j] = tcol[i] * m[j] + (i + 1 < r ? m[(i + 1) * r + j] : 0.0);
    }
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < r; ++j) {
        P[i * r + j] = tm[i * r] * tcol[j] + (j + 1 < r ? tm[i * r + j + 1] : 0.0) + rvec[i] * rvec[j];
      }
    }
    if (std::abs(P[0] - 1.0) < 1e-12) {
      steady = true;
      res.steady_from = t + 1;
    }
  }
  res.sigma2_hat = res.sum_sq / n;
  const double two_pi = 2.0 * std::numbers::pi;
  res.loglik = -0.5 * (n * std::log(two_pi) + n * std::log(res.sigma2_hat) + res.sum_log_f + n);
  return res;
}

double kalman_loglik(std::span<const double> series, std::span<const double> phi, std::span<const double> theta,
                     double sigma2) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw InvalidArgument("kalman_loglik: sigma2 must be positive");
  if (!satisfies_root_condition(phi, PolyRole::AR)) throw InvalidArgument("kalman_loglik: AR part not stationary");
  if (!satisfies_root_condition(theta, PolyRole::MA)) throw InvalidArgument("kalman_loglik: MA part not invertible");
  for (double x : series) {
    if (!std::isfinite(x)) throw InvalidArgument("kalman_loglik: non-finite observation");
  }
  const KalmanResult k = kalman_filter(series, phi, theta);
  const double n = static_cast<double>(series.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi * sigma2) + k.sum_log_f + k.sum_sq / sigma2);
}

std::vector<double> stationarity_transform(std::span<const double> unconstrained) {
  const std::size_t k = unconstrained.size();
  std::vector<double> phi(k, 0.0), prev(k, 0.0);
  for (std::size_t m = 0; m < k; ++m) {
    const double r = std::tanh(unconstrained[m]);
    prev = phi;
    phi[m] = r;
    for (std::size_t j = 0; j < m; ++j) phi[j] = prev[j] - r * prev[m - 1 - j];
  }
  return phi;
}

std::vector<double> stationarity_inverse(std::span<const double> coeffs) {
  const std::size_t k = coeffs.size();
  std::vector<double> phi(coeffs.begin(), coeffs.end()), u(k, 0.0), prev(k);
  for (std::size_t m = k; m-- > 0;) {
    const double r = phi[m];
    if (!(std::abs(r) < 1.0)) {
      throw InvalidArgument("stationarity_inverse: coefficients outside the stationary region");
    }
    u[m] = std::atanh(r);
    const double denom = 1.0 - r * r;
    for (std::size_t j = 0; j < m; ++j) prev[j] = (phi[j] + r * phi[m - 1 - j]) / denom;
    for (std::size_t j = 0; j < m; ++j) phi[j] = prev[j];
  }
  return u;
}

std::vector<double> invertibility_transform(std::span<const double> unconstrained) {
  std::vector<double> theta = stationarity_transform(unconstrained);
  for (double& t : theta) t = -t;
  return theta;
}

std::vector<double> invertibility_inverse(std::span<const double> theta) {
  std::vector<double> neg(theta.begin(), theta.end());
  for (double& t : neg) t = -t;
  return stationarity_inverse(neg);
}

namespace {

/// Levinson-Durbin solve of the Yule-Walker equations; empty on breakdown.
std::vector<double> yule_walker(std::span<const double> gamma, int order) {
  std::vector<double> a(order, 0.0), prev(order);
  double err = gamma[0];
  if (!(err > 0.0)) return {};
  for (int m = 0; m < order; ++m) {
    double acc = gamma[m + 1];
    for (int j = 0; j < m; ++j) acc -= a[j] * gamma[m - j];
    const double r = acc / err;
    if (!(std::abs(r) < 1.0)) return {};
    prev = a;
    a[m] = r;
    for (int j = 0; j < m; ++j) a[j] = prev[j] - r * prev[m - 1 - j];
    err *= 1.0 - r * r;
  }
  return a;
}

/// Shrinks coefficients radially (c_i *= s^i, moving every root outward by 1/s)
/// until the root condition holds.
void project_roots(std::vector<double>& c, PolyRole role) {
  for (int iter = 0; iter < 1000 && !satisfies_root_condition(c, role); ++iter) {
    double s = 1.0;
    for (double& x : c) {
      s *= 0.9;
      x *= s;
    }
  }
  if (!satisfies_root_condition(c, role)) std::fill(c.begin(), c.end(), 0.0);
}

double sample_variance(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return ss / (n - 1.0);
}

}  // namespace

ArmaEstimate hannan_rissanen_init(std::span<const double> series, int p, int q) {
  const int n = static_cast<int>(series.size());
  if (p < 0 || q < 0) throw InvalidArgument("hannan_rissanen_init: negative order");
  if (n <= 20 * (p + q + 1)) throw InvalidArgument("hannan_rissanen_init: series too short for the requested orders");
  ArmaEstimate est;
  est.phi.assign(p, 0.0);
  est.theta.assign(q, 0.0);
  est.sigma2 = sample_variance(series);
  if (p == 0 && q == 0) return est;

  std::vector<double> resid(n, 0.0);
  int start = p;
  if (q > 0) {
    const int m = std::min(std::max(p + q, static_cast<int>(std::ceil(10.0 * std::log10(n)))), n / 4);
    std::vector<double> gamma(m + 1, 0.0);
    for (int h = 0; h <= m; ++h) {
      double s = 0.0;
      for (int t = h; t < n; ++t) s += series[t] * series[t - h];
      gamma[h] = s / n;
    }
    const std::vector<double> a = yule_walker(gamma, m);
    if (a.empty()) {
      est.fell_back = true;
      return est;
    }
    for (int t = m; t < n; ++t) {
      double e = series[t];
      for (int i = 0; i < m; ++i) e -= a[i] * series[t - 1 - i];
      resid[t] = e;
    }
    start = m + q;
  }
  const int rows = n - start;
  const int cols = p + q;
  Eigen::MatrixXd x(rows, cols);
  Eigen::VectorXd y(rows);
  for (int r = 0; r < rows; ++r) {
    const int t = start + r;
    y(r) = series[t];
    for (int i = 0; i < p; ++i) x(r, i) = series[t - 1 - i];
    for (int j = 0; j < q; ++j) x(r, p + j) = resid[t - 1 - j];
  }
  const auto qr = x.colPivHouseholderQr();
  if (qr.rank() < cols) {
    est.fell_back = true;
    return est;
  }
  const Eigen::VectorXd beta = qr.solve(y);
  if (!beta.allFinite()) {
    est.fell_back = true;
    return est;
  }
  for (int i = 0; i < p; ++i) est.phi[i] = beta(i);
  for (int j = 0; j < q; ++j) est.theta[j] = beta(p + j);
  const double rss = (y - x * beta).squaredNorm();
  est.sigma2 = rss / rows;
  project_roots(est.phi, PolyRole::AR);
  project_roots(est.theta, PolyRole::MA);
  return est;
}

double FitResult::criterion(Criterion c) const {
  if (!converged) return kInf;
  return c == Criterion::AIC ? aic : bic;
}

namespace {

struct NelderMeadResult {
  std::vector<double> x;
  double f = kInf;
  int evals = 0;
  bool converged = false;
};

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                             const FitOptions& o, int budget) {
  const std::size_t d = x0.size();
  std::vector<std::vector<double>> s(d + 1, x0);
  std::vector<double> fv(d + 1);
  NelderMeadResult res;
  auto eval = [&](const std::vector<double>& x) {
    ++res.evals;
    return f(x);
  };
  for (std::size_t i = 0; i < d; ++i) s[i + 1][i] += o.initial_step;
  for (std::size_t i = 0; i <= d; ++i) fv[i] = eval(s[i]);

  std::vector<std::size_t> order(d + 1);
  std::vector<double> centroid(d), xr(d), xe(d), xc(d);
  while (true) {
    for (std::size_t i = 0; i <= d; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order[0], worst = order[d], second = order[d - 1];

    double size = 0.0;
    for (std::size_t i = 0; i <= d; ++i) {
      for (std::size_t j = 0; j < d; ++j) size = std::max(size, std::abs(s[i][j] - s[best][j]));
    }
    const double spread = fv[worst] - fv[best];
    if (std::isfinite(fv[best]) &&
        (size < o.size_tol || (std::isfinite(spread) && spread <= o.f_rel_tol * (std::abs(fv[best]) + o.f_rel_tol)))) {
      res.converged = true;
      break;
    }
    if (res.evals >= budget) break;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i <= d; ++i) {
      if (i == worst) continue;
      for (std::size_t j = 0; j < d; ++j) centroid[j] += s[i][j] / static_cast<double>(d);
    }
    for (std::size_t j = 0; j < d; ++j) xr[j] = centroid[j] + (centroid[j] - s[worst][j]);
    const double fr = eval(xr);
    if (fr < fv[best]) {
      for (std::size_t j = 0; j < d; ++j) xe[j] = centroid[j] + 2.0 * (centroid[j] - s[worst][j]);
      const double fe = eval(xe);
      if (fe < fr) {
        s[worst] = xe;
        fv[worst] = fe;
      } else {
        s[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      s[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    const bool outside = fr < fv[worst];
    for (std::size_t j = 0; j < d; ++j) {
      xc[j] = outside ? centroid[j] + 0.5 * (xr[j] - centroid[j]) : centroid[j] + 0.5 * (s[worst][j] - centroid[j]);
    }
    const double fc = eval(xc);
    if (fc < (outside ? fr : fv[worst])) {
      s[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= d; ++i) {
      if (i == best) continue;
      for (std::size_t j = 0; j < d; ++j) s[i][j] = s[best][j] + 0.5 * (s[i][j] - s[best][j]);
      fv[i] = eval(s[i]);
    }
  }
  const auto it = std::min_element(fv.begin(), fv.end());
  res.x = s[static_cast<std::size_t>(it - fv.begin())];
  res.f = *it;
  return res;
}

void set_criteria(FitResult& r) {
  const double k = r.num_params();
  r.aic = -2.0 * r.loglik + 2.0 * k;
  r.bic = -2.0 * r.loglik + k * std::log(static_cast<double>(r.n));
  const double identity = r.bic - r.aic - k * (std::log(static_cast<double>(r.n)) - 2.0);
  if (std::abs(identity) > 1e-9) throw NumericalError("fit_arma: AIC/BIC identity violated");
}

}  // namespace

FitResult fit_arma(std::span<const double> series, int p, int q, const FitOptions& options) {
  const int n = static_cast<int>(series.size());
  if (p < 0 || q < 0 || p > kMaxOrder || q > kMaxOrder) throw InvalidArgument("fit_arma: orders must be in 0..9");
  if (10 * (p + q) >= n) throw InvalidArgument("fit_arma: p + q must be below n / 10");
  FitResult r;
  r.p = p;
  r.q = q;
  r.n = n;

  auto unpack = [p](const std::vector<double>& u, std::vector<double>& phi, std::vector<double>& theta) {
    phi = stationarity_transform(std::span<const double>(u.data(), p));
    theta = invertibility_transform(std::span<const double>(u.data() + p, u.size() - p));
  };
  auto objective = [&](const std::vector<double>& u) {
    std::vector<double> phi, theta;
    unpack(u, phi, theta);
    try {
      const double ll = kalman_filter(series, phi, theta).loglik;
      return std::isfinite(ll) ? -ll : kInf;
    } catch (const NumericalError&) {
      return kInf;
    }
  };

  if (p + q == 0) {
    const KalmanResult k = kalman_filter(series, {}, {});
    r.sigma2 = k.sigma2_hat;
    r.loglik = k.loglik;
    r.converged = std::isfinite(r.loglik);
    r.iterations = 1;
    set_criteria(r);
    return r;
  }

  // Candidate starts: zero and the zero-padded initial estimates of every
  // nested order. The surface is multimodal, so the two best starts are both
  // refined; seeding from nested orders keeps nested fits ordered.
  std::vector<std::pair<double, std::vector<double>>> starts;
  starts.emplace_back(objective(std::vector<double>(static_cast<std::size_t>(p + q), 0.0)),
                      std::vector<double>(static_cast<std::size_t>(p + q), 0.0));
  int evals = 1;
  for (int ps = 0; ps <= p; ++ps) {
    for (int qs = 0; qs <= q; ++qs) {
      if (ps + qs == 0 || n <= 20 * (ps + qs + 1)) continue;
      ArmaEstimate hr = hannan_rissanen_init(series, ps, qs);
      if (hr.fell_back) continue;
      hr.phi.resize(p, 0.0);
      hr.theta.resize(q, 0.0);
      try {
        std::vector<double> u(stationarity_inverse(hr.phi));
        const std::vector<double> v = invertibility_inverse(hr.theta);
        u.insert(u.end(), v.begin(), v.end());
        const double f = objective(u);
        ++evals;
        if (std::isfinite(f)) starts.emplace_back(f, std::move(u));
      } catch (const InvalidArgument&) {
        // On the boundary of the region: not a usable start.
      }
    }
  }
  std::stable_sort(starts.begin(), starts.end(), [](const auto& x, const auto& y) { return x.first < y.first; });

  NelderMeadResult nm;
  for (std::size_t i = 0; i < std::min<std::size_t>(2, starts.size()) && evals < options.max_evals; ++i) {
    if (i > 0 && starts[i].second == starts[0].second) break;
    NelderMeadResult run = nelder_mead(objective, starts[i].second, options, options.max_evals - evals);
    evals += run.evals;
    if (i == 0 || run.f < nm.f) nm = std::move(run);
  }
  // One restart from the best vertex guards against a collapsed simplex.
  if (nm.converged && evals < options.max_evals) {
    NelderMeadResult again = nelder_mead(objective, nm.x, options, options.max_evals - evals);
    evals += again.evals;
    if (again.f < nm.f) {
      nm.x = std::move(again.x);
      nm.f = again.f;
    }
  }
  r.iterations = evals;
  unpack(nm.x, r.phi, r.theta);
  if (!std::isfinite(nm.f)) {
    r.loglik = -kInf;
    r.aic = r.bic = kInf;
    return r;
  }
  const KalmanResult k = kalman_filter(series, r.phi, r.theta);
  r.sigma2 = k.sigma2_hat;
  r.loglik = k.loglik;
  r.converged = nm.converged && satisfies_root_condition(r.phi, PolyRole::AR) &&
                satisfies_root_condition(r.theta, PolyRole::MA);
  set_criteria(r);
  return r;
}

void SearchConfig::validate() const {
  if (p_max < 0 || q_max < 0 || p_max > kMaxOrder || q_max > kMaxOrder) {
    throw InvalidArgument("search: p_max and q_max must be in 0..9");
  }
  if (fit.max_evals < 1) throw InvalidArgument("search: max_evals must be positive");
}

std::vector<double> SearchResult::table(const SearchConfig& config) const {
  std::vector<double> t(static_cast<std::size_t>((config.p_max + 1) * (config.q_max + 1)), kInf);
  for (const FitResult& f : fits) {
    if (f.p <= config.p_max && f.q <= config.q_max) t[f.p * (config.q_max + 1) + f.q] = f.criterion(config.criterion);
  }
  return t;
}

bool better_model(double value_a, OrderPair a, double value_b, OrderPair b) {
  if (value_a != value_b) return value_a < value_b;
  if (a.p + a.q != b.p + b.q) return a.p + a.q < b.p + b.q;
  return a.p < b.p;
}

namespace {

void select_best(SearchResult& res, Criterion c) {
  bool any = false;
  res.value = kInf;
  for (const FitResult& f : res.fits) {
    if (!f.converged) continue;
    const double v = f.criterion(c);
    if (!any || better_model(v, {f.p, f.q}, res.value, {res.p, res.q})) {
      res.value = v;
      res.p = f.p;
      res.q = f.q;
      any = true;
    }
  }
  if (!any) throw NumericalError("search: no model converged");
}

}  // namespace

SearchResult full_search(std::span<const double> series, const SearchConfig& config) {
  config.validate();
  SearchResult res;
  const int nq = config.q_max + 1;
  const std::size_t total = static_cast<std::size_t>((config.p_max + 1) * nq);
  res.fits.resize(total);
  parallel_for(0, total, [&](std::size_t i) {
    res.fits[i] = fit_arma(series, static_cast<int>(i) / nq, static_cast<int>(i) % nq, config.fit);
  });
  for (const FitResult& f : res.fits) res.visited.push_back({f.p, f.q});
  select_best(res, config.criterion);
  return res;
}

SearchResult stepwise_search(std::span<const double> series, const SearchConfig& config) {
  config.validate();
  SearchResult res;
  std::map<std::pair<int, int>, std::size_t> seen;
  auto visit = [&](int p, int q) -> const FitResult& {
    const auto key = std::make_pair(p, q);
    const auto it = seen.find(key);
    if (it != seen.end()) return res.fits[it->second];
    seen.emplace(key, res.fits.size());
    res.fits.push_back(fit_arma(series, p, q, config.fit));
    res.visited.push_back({p, q});
    return res.fits.back();
  };

  const int p2 = std::min(2, config.p_max), q2 = std::min(2, config.q_max);
  const std::pair<int, int> starts[] = {{p2, q2}, {0, 0}, {std::min(1, config.p_max), 0}, {0, std::min(1, config.q_max)}};
  OrderPair cur{0, 0};
  double cur_value = kInf;
  bool have = false;
  for (const auto& [p, q] : starts) {
    const FitResult& f = visit(p, q);
    const double v = f.criterion(config.criterion);
    if (!have || better_model(v, {p, q}, cur_value, cur)) {
      cur = {p, q};
      cur_value = v;
      have = true;
    }
  }

  static constexpr int kMoves[8][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}, {-1, -1}, {1, 1}, {-1, 1}, {1, -1}};
  bool moved = true;
  while (moved) {
    moved = false;
    for (const auto& mv : kMoves) {
      const int p = cur.p + mv[0], q = cur.q + mv[1];
      if (p < 0 || q < 0 || p > config.p_max || q > config.q_max) continue;
      if (seen.count({p, q})) continue;
      const double v = visit(p, q).criterion(config.criterion);
      if (better_model(v, {p, q}, cur_value, cur)) {
        cur = {p, q};
        cur_value = v;
        moved = true;
        break;
      }
    }
  }
  select_best(res, config.criterion);
  return res;
}

SearchResult search(std::span<const double> series, const SearchConfig& config) {
  return config.mode == SearchMode::Full ? full_search(series, config) : stepwise_search(series, config);
}

}  // namespace armaid
