#pragma once

// Bivariate Gaussian mixtures fitted by expectation-maximisation, with the
// component count picked by the Bayesian information criterion.

#include "taskgrasp/kernels/kernels.hpp"
#include "taskgrasp/random.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace taskgrasp::gmm {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

struct Component {
  double weight = 1.0;
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Identity();
};

struct Mixture {
  std::vector<Component> components;

  double density(const Vec2& x) const;
  double log_likelihood(std::span<const Vec2> data) const;
  // Packed form for kernels::mixture_density.
  std::vector<kernels::Gaussian2> packed() const;
  // Throws Numerical when weights/covariances violate the invariants.
  void validate(double cov_floor) const;
};

struct EmOptions {
  int max_iterations = 200;
  double tolerance = 1e-6;  // absolute log-likelihood improvement
  double cov_floor = 1e-6;  // lower bound on covariance eigenvalues
  int restarts = 4;
};

struct EmRun {
  Mixture mixture;
  std::vector<double> trace;  // log-likelihood before each M-step
  int iterations = 0;
  bool converged = false;
  double log_likelihood = 0.0;
};

// Best of `opts.restarts` k-means++-seeded EM runs; all runs are returned in
// `runs` for inspection.
struct EmFit {
  EmRun best;
  std::vector<EmRun> runs;
};

EmFit fit_em(std::span<const Vec2> data, int components, Rng& rng, const EmOptions& opts = {});

struct BicEntry {
  int components = 0;
  double log_likelihood = 0.0;
  double bic = 0.0;
};

struct Selection {
  Mixture mixture;
  int components = 0;
  std::vector<BicEntry> table;
  std::vector<std::vector<double>> traces;  // every EM run, every count
};

// Fits 1..max_components (capped at the sample count) and keeps the lowest
// BIC; ties keep the smaller count.
Selection select_by_bic(std::span<const Vec2> data, int max_components, std::uint64_t seed,
                        const EmOptions& opts = {});

int free_parameters(int components);

}  // namespace taskgrasp::gmm
