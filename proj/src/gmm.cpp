#include "taskgrasp/gmm.hpp"

#include "taskgrasp/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace taskgrasp::gmm {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_gauss(const Vec2& x, const Vec2& mean, const Mat2& inv, double log_det) {
  const Vec2 d = x - mean;
  return -0.5 * (d.dot(inv * d) + log_det) - kLog2Pi;
}

Mat2 floor_cov(const Mat2& cov, double floor) {
  const Mat2 sym = 0.5 * (cov + cov.transpose());
  const Eigen::SelfAdjointEigenSolver<Mat2> es(sym);
  const Vec2 ev = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Log-likelihood and responsibilities under the current parameters.
double e_step(std::span<const Vec2> data, const Mixture& m, Eigen::MatrixXd& resp) {
  const std::size_t n = data.size();
  const std::size_t k = m.components.size();
  std::vector<Mat2> inv(k);
  std::vector<double> log_det(k), log_w(k);
  for (std::size_t c = 0; c < k; ++c) {
    inv[c] = m.components[c].cov.inverse();
    log_det[c] = std::log(m.components[c].cov.determinant());
    log_w[c] = m.components[c].weight > 0.0 ? std::log(m.components[c].weight)
                                            : -std::numeric_limits<double>::infinity();
  }
  resp.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  double ll = 0.0;
  std::vector<double> lp(k);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      lp[c] = log_w[c] + log_gauss(data[i], m.components[c].mean, inv[c], log_det[c]);
      mx = std::max(mx, lp[c]);
    }
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += std::exp(lp[c] - mx);
    const double lse = mx + std::log(s);
    ll += lse;
    for (std::size_t c = 0; c < k; ++c)
      resp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = std::exp(lp[c] - lse);
  }
  return ll;
}

void m_step(std::span<const Vec2> data, const Eigen::MatrixXd& resp, Mixture& m, double floor) {
  const std::size_t n = data.size();
  for (std::size_t c = 0; c < m.components.size(); ++c) {
    const auto col = static_cast<Eigen::Index>(c);
    double nk = 0.0;
    Vec2 mean = Vec2::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const double r = resp(static_cast<Eigen::Index>(i), col);
      nk += r;
      mean += r * data[i];
    }
    auto& comp = m.components[c];
    comp.weight = nk / static_cast<double>(n);
    if (nk < 1e-12) continue;  // starved component: weight ~0, keep shape
    mean /= nk;
    Mat2 cov = Mat2::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 d = data[i] - mean;
      cov += resp(static_cast<Eigen::Index>(i), col) * d * d.transpose();
    }
    comp.mean = mean;
    comp.cov = floor_cov(cov / nk, floor);
  }
}

Mixture kmeanspp_init(std::span<const Vec2> data, int k, Rng& rng, double floor) {
  const std::size_t n = data.size();
  std::vector<Vec2> centers;
  centers.push_back(data[rng.below(n)]);
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, (data[i] - c).squaredNorm());
      d2[i] = best;
      total += best;
    }
    std::size_t pick = rng.below(n);
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(data[pick]);
  }

  // Hard assignment to the nearest seed, then one M-step.
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), k);
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double d = (data[i] - centers[static_cast<std::size_t>(c)]).squaredNorm();
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    resp(static_cast<Eigen::Index>(i), best) = 1.0;
  }
  Vec2 gmean = Vec2::Zero();
  for (const auto& x : data) gmean += x;
  gmean /= static_cast<double>(n);
  Mat2 gcov = Mat2::Zero();
  for (const auto& x : data) gcov += (x - gmean) * (x - gmean).transpose();
  gcov = floor_cov(gcov / static_cast<double>(n), floor);

  Mixture m;
  m.components.resize(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    m.components[static_cast<std::size_t>(c)].mean = centers[static_cast<std::size_t>(c)];
    m.components[static_cast<std::size_t>(c)].cov = gcov;
  }
  m_step(data, resp, m, floor);
  // Seeds that captured nothing restart from the global spread.
  for (auto& c : m.components)
    if (c.weight <= 0.0) {
      c.weight = 1e-3;
      c.cov = gcov;
    }
  double wsum = 0.0;
  for (const auto& c : m.components) wsum += c.weight;
  for (auto& c : m.components) c.weight /= wsum;
  return m;
}

EmRun run_em(std::span<const Vec2> data, int k, Rng& rng, const EmOptions& opts) {
  EmRun run;
  run.mixture = kmeanspp_init(data, k, rng, opts.cov_floor);
  Eigen::MatrixXd resp;
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.max_iterations; ++it) {
    const double ll = e_step(data, run.mixture, resp);
    if (!std::isfinite(ll)) fail(ErrorKind::Numerical, "EM log-likelihood is not finite");
    run.trace.push_back(ll);
    run.iterations = it + 1;
    if (it > 0 && ll - prev < opts.tolerance) {
      run.converged = true;
      break;
    }
    prev = ll;
    m_step(data, resp, run.mixture, opts.cov_floor);
  }
  // The final parameters are the ones the last trace entry was computed on
  // unless the loop ran out after an M-step.
  if (!run.converged) {
    const double ll = e_step(data, run.mixture, resp);
    run.trace.push_back(ll);
  }
  run.log_likelihood = run.trace.back();
  return run;
}

}  // namespace

double Mixture::density(const Vec2& x) const {
  double acc = 0.0;
  for (const auto& c : components) {
    const Vec2 d = x - c.mean;
    const double q = d.dot(c.cov.inverse() * d);
    acc += c.weight * std::exp(-0.5 * q) / (2.0 * std::numbers::pi * std::sqrt(c.cov.determinant()));
  }
  return acc;
}

double Mixture::log_likelihood(std::span<const Vec2> data) const {
  Eigen::MatrixXd resp;
  return e_step(data, *this, resp);
}

std::vector<kernels::Gaussian2> Mixture::packed() const {
  std::vector<kernels::Gaussian2> out;
  out.reserve(components.size());
  for (const auto& c : components) {
    const Mat2 inv = c.cov.inverse();
    out.push_back({c.weight / (2.0 * std::numbers::pi * std::sqrt(c.cov.determinant())), c.mean[0],
                   c.mean[1], inv(0, 0), inv(0, 1), inv(1, 1)});
  }
  return out;
}

void Mixture::validate(double cov_floor) const {
  if (components.empty()) fail(ErrorKind::Numerical, "mixture has no components");
  double sum = 0.0;
  for (const auto& c : components) {
    if (!(c.weight > 0.0)) fail(ErrorKind::Numerical, "mixture weight not positive");
    sum += c.weight;
    if (std::abs(c.cov(0, 1) - c.cov(1, 0)) > 1e-12 * std::max(1.0, c.cov.norm()))
      fail(ErrorKind::Numerical, "covariance not symmetric");
    const Eigen::SelfAdjointEigenSolver<Mat2> es(c.cov);
    if (es.eigenvalues()[0] < cov_floor * (1.0 - 1e-9))
      fail(ErrorKind::Numerical, "covariance eigenvalue below floor");
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorKind::Numerical, "mixture weights do not sum to 1");
}

EmFit fit_em(std::span<const Vec2> data, int components, Rng& rng, const EmOptions& opts) {
  if (components < 1) fail(ErrorKind::InvalidInput, "component count must be >= 1");
  if (data.size() < static_cast<std::size_t>(components))
    fail(ErrorKind::InvalidInput, "fewer samples than components");
  EmFit fit;
  const int restarts = components == 1 ? 1 : std::max(1, opts.restarts);
  for (int r = 0; r < restarts; ++r) {
    fit.runs.push_back(run_em(data, components, rng, opts));
    if (r == 0 || fit.runs.back().log_likelihood > fit.best.log_likelihood) fit.best = fit.runs.back();
  }
  // Drop near-empty components left behind by a starved start.
  auto& comps = fit.best.mixture.components;
  std::erase_if(comps, [](const Component& c) { return c.weight < 1e-12; });
  double wsum = 0.0;
  for (const auto& c : comps) wsum += c.weight;
  for (auto& c : comps) c.weight /= wsum;
  return fit;
}

int free_parameters(int components) { return 6 * components - 1; }

Selection select_by_bic(std::span<const Vec2> data, int max_components, std::uint64_t seed,
                        const EmOptions& opts) {
  if (data.empty()) fail(ErrorKind::InvalidInput, "no samples to fit");
  if (max_components < 1) fail(ErrorKind::InvalidInput, "max_components must be >= 1");
  const int kmax = std::min<int>(max_components, static_cast<int>(data.size()));
  const double logn = std::log(static_cast<double>(data.size()));
  Selection sel;
  double best_bic = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= kmax; ++k) {
    Rng rng(splitmix64(seed ^ (0x51ed27ULL * static_cast<std::uint64_t>(k))));
    EmFit fit = fit_em(data, k, rng, opts);
    for (const auto& r : fit.runs) sel.traces.push_back(r.trace);
    const double ll = fit.best.log_likelihood;
    const double bic = -2.0 * ll + free_parameters(k) * logn;
    sel.table.push_back({k, ll, bic});
    if (bic < best_bic) {
      best_bic = bic;
      sel.mixture = fit.best.mixture;
      sel.components = static_cast<int>(fit.best.mixture.components.size());
    }
  }
  return sel;
}

}  // namespace taskgrasp::gmm
