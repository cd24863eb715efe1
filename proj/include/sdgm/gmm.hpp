#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "sdgm/corpus.hpp"
#include "sdgm/params.hpp"

namespace sdgm::gmm {

// Diagonal-covariance Gaussian mixture over coefficient space.
struct GmmModel {
  std::vector<double> weights;  // M, a simplex
  Tensor means;                 // M x K
  Tensor variances;             // M x K

  std::size_t components() const { return weights.size(); }
  std::size_t dim() const { return means.rank() == 2 ? means.dim(1) : 0; }
  bool empty() const { return weights.empty(); }
  // Throws unless weights form a simplex and every variance >= var_floor.
  void validate(double var_floor) const;
};

enum class EmInit { KMeansPlusPlus, Random };
EmInit parse_em_init(std::string_view s);
std::string_view to_string(EmInit i);

struct EmConfig {
  std::size_t max_iters = 100;
  double tol = 1e-6;  // relative change of the mean log-likelihood
  double var_floor = 1e-6;
  EmInit init = EmInit::KMeansPlusPlus;
  std::uint64_t seed = 0;
  std::size_t init_subsample = 4096;  // rows used for k-means++ seeding

  void validate() const;
};

struct CoefficientBank {
  Tensor Z;  // N x K
  std::size_t rows() const { return Z.rank() == 2 ? Z.dim(0) : 0; }
};

struct FitResult {
  GmmModel model;
  // Mean log-likelihood per iteration; the last entry belongs to `model`.
  std::vector<double> ll_trace;
  std::size_t iterations = 0;
  bool converged = false;
};

FitResult fit_em(const CoefficientBank& bank, std::size_t components,
                 const EmConfig& cfg);

double log_density(std::span<const double> z, const GmmModel& gmm);
// Same value; also writes d log p / dz into grad.
double log_density(std::span<const double> z, const GmmModel& gmm,
                   std::span<double> grad);

// Mean log-likelihood of every row of Z.
double mean_log_likelihood(const Tensor& Z, const GmmModel& gmm);

// Ancestral sampling: component ~ Categorical(weights), then a diagonal
// Gaussian draw. n x K.
Tensor sample(const GmmModel& gmm, std::mt19937_64& rng, std::size_t n);

// Runs the forward pass over the batches and stacks C rows of every real
// input position, batch by batch, row-major.
CoefficientBank collect_bank(const ModelParams& params, const ModelConfig& cfg,
                             std::span<const corpus::Batch> batches);

// Evenly strided subset of at most max_rows rows (order preserved).
CoefficientBank subsample(const CoefficientBank& bank, std::size_t max_rows);

}  // namespace sdgm::gmm
