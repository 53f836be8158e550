#pragma once

// CMA-ES with rank-one and rank-mu covariance updates (ask/tell interface),
// maximizing, plus the policies that map parameter vectors to actions.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "gesp/core.hpp"

namespace gesp {

struct CmaOptions {
  std::size_t population_size = 0;  // 0 = 4 + floor(3 ln n)
  double initial_sigma = 0.5;
};

class CmaEs {
 public:
  CmaEs(const std::vector<double>& initial_mean, std::uint64_t seed, CmaOptions options = {})
      : n_(initial_mean.size()), rng_(seed) {
    if (n_ == 0) throw std::invalid_argument("CmaEs: dimension must be positive");
    if (!(options.initial_sigma > 0.0)) throw std::invalid_argument("CmaEs: sigma must be positive");
    lambda_ = options.population_size != 0
                  ? options.population_size
                  : 4 + static_cast<std::size_t>(std::floor(3.0 * std::log(static_cast<double>(n_))));
    if (lambda_ < 2) throw std::invalid_argument("CmaEs: population size must be >= 2");
    mu_ = lambda_ / 2;

    const double n = static_cast<double>(n_);
    weights_.resize(static_cast<Eigen::Index>(mu_));
    for (std::size_t i = 0; i < mu_; ++i) {
      weights_[static_cast<Eigen::Index>(i)] =
          std::log(static_cast<double>(mu_) + 0.5) - std::log(static_cast<double>(i + 1));
    }
    weights_ /= weights_.sum();
    mueff_ = 1.0 / weights_.squaredNorm();

    cc_ = (4.0 + mueff_ / n) / (n + 4.0 + 2.0 * mueff_ / n);
    cs_ = (mueff_ + 2.0) / (n + mueff_ + 5.0);
    c1_ = 2.0 / ((n + 1.3) * (n + 1.3) + mueff_);
    cmu_ = std::min(1.0 - c1_, 2.0 * (mueff_ - 2.0 + 1.0 / mueff_) / ((n + 2.0) * (n + 2.0) + mueff_));
    damps_ = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff_ - 1.0) / (n + 1.0)) - 1.0) + cs_;
    chi_n_ = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

    mean_ = Eigen::Map<const Eigen::VectorXd>(initial_mean.data(), static_cast<Eigen::Index>(n_));
    sigma_ = options.initial_sigma;
    cov_ = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    pc_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
    ps_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
    decompose();
  }

  std::size_t dimension() const { return n_; }
  std::size_t population_size() const { return lambda_; }
  std::size_t generation() const { return generation_; }
  double sigma() const { return sigma_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }

  // Overrides the search distribution (covariance must be symmetric PD).
  void set_distribution(const Eigen::VectorXd& mean, double sigma, const Eigen::MatrixXd& cov) {
    if (mean.size() != static_cast<Eigen::Index>(n_) || cov.rows() != mean.size() || cov.cols() != mean.size()) {
      throw std::invalid_argument("CmaEs: distribution dimension mismatch");
    }
    if (!(sigma > 0.0)) throw std::invalid_argument("CmaEs: sigma must be positive");
    mean_ = mean;
    sigma_ = sigma;
    cov_ = 0.5 * (cov + cov.transpose());
    decompose();
  }

  // Draws lambda candidates from N(mean, sigma^2 C).
  std::vector<ParamVector> ask() {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<ParamVector> out;
    out.reserve(lambda_);
    Eigen::VectorXd z(static_cast<Eigen::Index>(n_));
    for (std::size_t k = 0; k < lambda_; ++k) {
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng_);
      const Eigen::VectorXd x = mean_ + sigma_ * (basis_ * (scales_.asDiagonal() * z));
      out.emplace_back(std::vector<double>(x.data(), x.data() + x.size()));
    }
    return out;
  }

  // Updates the distribution; larger fitness is better.
  void tell(std::span<const ParamVector> candidates, std::span<const double> fitnesses) {
    if (candidates.size() != lambda_ || fitnesses.size() != lambda_) {
      throw std::invalid_argument("CmaEs::tell: expected exactly lambda candidates and fitnesses");
    }
    for (double f : fitnesses) {
      if (!std::isfinite(f)) throw std::invalid_argument("CmaEs::tell: non-finite fitness");
    }
    for (const auto& c : candidates) {
      if (c.size() != n_) throw std::invalid_argument("CmaEs::tell: candidate dimension mismatch");
    }

    std::vector<std::size_t> order(lambda_);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fitnesses[a] > fitnesses[b]; });

    const auto n_idx = static_cast<Eigen::Index>(n_);
    Eigen::MatrixXd steps(n_idx, static_cast<Eigen::Index>(mu_));
    for (std::size_t i = 0; i < mu_; ++i) {
      const auto& v = candidates[order[i]].values();
      steps.col(static_cast<Eigen::Index>(i)) =
          (Eigen::Map<const Eigen::VectorXd>(v.data(), n_idx) - mean_) / sigma_;
    }
    const Eigen::VectorXd y_w = steps * weights_;
    mean_ += sigma_ * y_w;

    const double n = static_cast<double>(n_);
    const Eigen::MatrixXd inv_sqrt_c = basis_ * scales_.cwiseInverse().asDiagonal() * basis_.transpose();
    ps_ = (1.0 - cs_) * ps_ + std::sqrt(cs_ * (2.0 - cs_) * mueff_) * (inv_sqrt_c * y_w);
    const double ps_norm = ps_.norm();
    const double gen = static_cast<double>(generation_ + 1);
    const bool hsig = ps_norm / std::sqrt(1.0 - std::pow(1.0 - cs_, 2.0 * gen)) / chi_n_ < 1.4 + 2.0 / (n + 1.0);
    pc_ = (1.0 - cc_) * pc_ + (hsig ? std::sqrt(cc_ * (2.0 - cc_) * mueff_) : 0.0) * y_w;

    const double delta_h = hsig ? 0.0 : cc_ * (2.0 - cc_);
    Eigen::MatrixXd rank_mu = steps * weights_.asDiagonal() * steps.transpose();
    cov_ = (1.0 - c1_ - cmu_) * cov_ + c1_ * (pc_ * pc_.transpose() + delta_h * cov_) + cmu_ * rank_mu;
    cov_ = 0.5 * (cov_ + cov_.transpose());

    sigma_ *= std::exp((cs_ / damps_) * (ps_norm / chi_n_ - 1.0));
    if (!std::isfinite(sigma_) || sigma_ <= 0.0) throw std::runtime_error("CmaEs: step size degenerated");
    ++generation_;
    decompose();
  }

 private:
  // Eigendecomposition C = B diag(d) B^T; re-conditions once on failure or
  // when the condition number exceeds 1e14.
  void decompose() {
    for (int attempt = 0; attempt < 2; ++attempt) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov_);
      if (solver.info() == Eigen::Success) {
        const Eigen::VectorXd ev = solver.eigenvalues();
        const double lo = ev.minCoeff();
        const double hi = ev.maxCoeff();
        if (lo > 0.0 && hi / lo <= 1e14) {
          eigenvalues_ = ev;
          basis_ = solver.eigenvectors();
          scales_ = ev.cwiseSqrt();
          return;
        }
      }
      if (attempt == 0) recondition();
    }
    throw std::runtime_error("CmaEs: covariance decomposition failed");
  }

  void recondition() {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov_);
    const double hi = solver.info() == Eigen::Success ? std::max(solver.eigenvalues().maxCoeff(), 1e-300) : 1.0;
    const double lo = solver.info() == Eigen::Success ? solver.eigenvalues().minCoeff() : 0.0;
    const double shift = hi / 1e14 - std::min(lo, 0.0);
    cov_.diagonal().array() += shift;
  }

  std::size_t n_;
  std::size_t lambda_ = 0;
  std::size_t mu_ = 0;
  Eigen::VectorXd weights_;
  double mueff_ = 0.0;
  double cc_ = 0.0, cs_ = 0.0, c1_ = 0.0, cmu_ = 0.0, damps_ = 0.0, chi_n_ = 0.0;

  Eigen::VectorXd mean_;
  double sigma_ = 0.0;
  Eigen::MatrixXd cov_;
  Eigen::VectorXd pc_, ps_;
  Eigen::MatrixXd basis_;
  Eigen::VectorXd scales_;
  Eigen::VectorXd eigenvalues_;
  std::size_t generation_ = 0;
  std::mt19937_64 rng_;
};

enum class Squash {
  Sign,        // binary action: 1 if W.obs + b >= 0 else 0
  ScaledTanh,  // bound * tanh(W.obs + b)
};

// One-output linear policy: action = squash(w . obs + b).
// Parameter layout: [w_0 .. w_{obs_dim-1}, b].
class LinearPolicy {
 public:
  LinearPolicy(std::size_t obs_dim, Squash squash, double bound = 1.0)
      : weights_(obs_dim, 0.0), squash_(squash), bound_(bound) {}

  static std::size_t parameter_count(std::size_t obs_dim) { return obs_dim + 1; }

  static LinearPolicy for_environment(const Environment& env) {
    const auto spec = env.action_spec();
    return spec.kind == ActionKind::Binary ? LinearPolicy(env.observation_dim(), Squash::Sign)
                                           : LinearPolicy(env.observation_dim(), Squash::ScaledTanh, spec.bound);
  }

  std::size_t obs_dim() const { return weights_.size(); }
  Squash squash() const { return squash_; }
  double bound() const { return bound_; }

  void set_params(const ParamVector& p) {
    if (p.size() != parameter_count(weights_.size())) {
      throw std::invalid_argument("LinearPolicy: parameter count mismatch");
    }
    std::copy_n(p.values().begin(), weights_.size(), weights_.begin());
    bias_ = p[weights_.size()];
  }

  ParamVector params() const {
    std::vector<double> v(weights_);
    v.push_back(bias_);
    return ParamVector(std::move(v));
  }

  double operator()(std::span<const double> obs) const {
    if (obs.size() != weights_.size()) throw std::invalid_argument("LinearPolicy: observation size mismatch");
    double z = bias_;
    for (std::size_t i = 0; i < obs.size(); ++i) z += weights_[i] * obs[i];
    return squash_ == Squash::Sign ? (z >= 0.0 ? 1.0 : 0.0) : bound_ * std::tanh(z);
  }

 private:
  std::vector<double> weights_;
  double bias_ = 0.0;
  Squash squash_;
  double bound_;
};

// One hidden tanh layer between observation and action:
//   action = squash(v . tanh(W obs + c) + b)
// Parameter layout: [W row-major (hidden x obs_dim), c (hidden), v (hidden), b].
class MlpPolicy {
 public:
  MlpPolicy(std::size_t obs_dim, std::size_t hidden, Squash squash, double bound = 1.0)
      : obs_dim_(obs_dim), hidden_(hidden), params_(parameter_count(obs_dim, hidden), 0.0), squash_(squash),
        bound_(bound) {
    if (hidden == 0) throw std::invalid_argument("MlpPolicy: needs at least one hidden unit");
  }

  static std::size_t parameter_count(std::size_t obs_dim, std::size_t hidden) {
    return hidden * obs_dim + 2 * hidden + 1;
  }

  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t hidden() const { return hidden_; }

  void set_params(const ParamVector& p) {
    if (p.size() != params_.size()) throw std::invalid_argument("MlpPolicy: parameter count mismatch");
    params_ = p.values();
  }

  ParamVector params() const { return ParamVector(params_); }

  double operator()(std::span<const double> obs) const {
    if (obs.size() != obs_dim_) throw std::invalid_argument("MlpPolicy: observation size mismatch");
    const double* w = params_.data();
    const double* c = w + hidden_ * obs_dim_;
    const double* v = c + hidden_;
    double z = v[hidden_];
    for (std::size_t j = 0; j < hidden_; ++j) {
      double a = c[j];
      for (std::size_t i = 0; i < obs_dim_; ++i) a += w[j * obs_dim_ + i] * obs[i];
      z += v[j] * std::tanh(a);
    }
    return squash_ == Squash::Sign ? (z >= 0.0 ? 1.0 : 0.0) : bound_ * std::tanh(z);
  }

 private:
  std::size_t obs_dim_;
  std::size_t hidden_;
  std::vector<double> params_;
  Squash squash_;
  double bound_;
};

// Linear when hidden_units == 0, otherwise a one-hidden-layer MLP. The squash
// follows the environment's action type.
class Policy {
 public:
  Policy(const Environment& env, std::size_t hidden_units)
      : impl_(make(env, hidden_units)) {}

  std::size_t parameter_count() const {
    return std::visit([](const auto& p) { return p.params().size(); }, impl_);
  }
  void set_params(const ParamVector& p) {
    std::visit([&](auto& impl) { impl.set_params(p); }, impl_);
  }
  double operator()(std::span<const double> obs) const {
    return std::visit([&](const auto& impl) { return impl(obs); }, impl_);
  }

 private:
  static std::variant<LinearPolicy, MlpPolicy> make(const Environment& env, std::size_t hidden) {
    const auto spec = env.action_spec();
    const Squash squash = spec.kind == ActionKind::Binary ? Squash::Sign : Squash::ScaledTanh;
    if (hidden == 0) return LinearPolicy(env.observation_dim(), squash, spec.bound);
    return MlpPolicy(env.observation_dim(), hidden, squash, spec.bound);
  }

  std::variant<LinearPolicy, MlpPolicy> impl_;
};

}  // namespace gesp
