#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sdgm/corpus.hpp"
#include "sdgm/genhead.hpp"
#include "sdgm/gmm.hpp"
#include "sdgm/loss.hpp"
#include "sdgm/model.hpp"
#include "sdgm/optim.hpp"
#include "sdgm/params.hpp"

namespace sdgm::train {

enum class BankSource { Train, Val };
BankSource parse_bank_source(std::string_view s);
std::string_view to_string(BankSource b);

struct TrainConfig {
  corpus::TokenMode token_mode = corpus::TokenMode::Char;
  std::size_t max_vocab = 508;  // + 4 reserved = 512
  ModelConfig model;            // vocab_size is filled from the vocabulary
  corpus::BatchPlan plan;       // seq_len follows model.seq_len
  optim::OptimConfig optim;
  loss::LossWeights weights;
  loss::StftConfig stft;
  gmm::EmConfig em;
  std::size_t gmm_components = 16;
  std::size_t gmm_refit_epochs = 1;
  BankSource gmm_bank = BankSource::Train;
  std::size_t gmm_bank_max = 4096;
  double val_fraction = 0.1;
  std::size_t threads = 1;
  std::size_t gen_budget = 256;  // tokens generated to measure throughput
  std::uint64_t seed = 0;        // drives init, shuffling and EM

  // Copies the shared fields (seq_len, seed) into the nested configs and
  // validates everything.
  void finalize();
};

// Contiguous train/validation split of an encoded corpus: the last
// val_fraction of the ids is held out.
struct DataSplit {
  std::vector<corpus::TokenId> train_ids;
  std::vector<corpus::TokenId> val_ids;
  std::vector<corpus::Batch> train_windows;  // one row each
  std::vector<corpus::Batch> val_batches;
};

DataSplit split_and_batch(std::span<const corpus::TokenId> ids, const corpus::BatchPlan& plan,
                          double val_fraction);

// Stacks single-row windows into one batch.
corpus::Batch stack_rows(std::span<const corpus::Batch* const> rows);

// One forward pass through model, head and composite loss.
struct Evaluation {
  model::ForwardCache fwd;
  head::HeadCache head;
  loss::LossReport report;
};

Evaluation evaluate_loss(const corpus::Batch& batch, const ModelParams& params,
                         const ModelConfig& cfg, const loss::LossWeights& weights,
                         const loss::StftConfig& stft, const gmm::GmmModel* gmm);

struct StepResult {
  loss::LossReport report;
  ModelParams grads;
};

// Composite loss and its gradient w.r.t. every parameter.
StepResult loss_and_gradients(const corpus::Batch& batch, const ModelParams& params,
                              const ModelConfig& cfg, const loss::LossWeights& weights,
                              const loss::StftConfig& stft, const gmm::GmmModel* gmm);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_total = 0.0;
  double train_time = 0.0;
  double train_freq = 0.0;
  double train_nll = 0.0;
  double train_prior = 0.0;
  double val_ppl = 0.0;
  double val_fidelity = 0.0;
  double sec = 0.0;
};

struct StepLog {
  std::size_t step = 0;
  loss::LossReport report;
  double tokens_per_sec = 0.0;
};

struct TrainResult {
  ModelParams best_params;
  gmm::GmmModel best_gmm;
  ModelConfig model;
  std::vector<EpochMetrics> epochs;
  std::vector<StepLog> steps;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

struct TrainHooks {
  std::ostream* log = nullptr;                       // progress lines
  std::optional<std::filesystem::path> dump_dir;     // NaN diagnostics
  std::function<void(const EpochMetrics&)> on_epoch;
};

// Early stopping fires once validation perplexity has failed to improve for
// `patience` consecutive epochs; the best epoch's parameters and GMM are
// returned. Throws NonFinite (after writing a dump when dump_dir is set) on a
// non-finite loss or gradient.
TrainResult train(const DataSplit& data, const TrainConfig& cfg, const TrainHooks& hooks = {});

struct EvalReport {
  double perplexity = 0.0;
  double cosine_fidelity = 0.0;
  double tokens_per_sec = 0.0;  // 0 when no GMM is available
  std::size_t peak_mem_bytes = 0;
  std::size_t token_count = 0;
  double mean_nll = 0.0;
};

EvalReport evaluate(const ModelParams& params, const ModelConfig& cfg,
                    std::span<const corpus::Batch> batches, const gmm::GmmModel* gmm = nullptr,
                    std::size_t gen_budget = 0, std::uint64_t seed = 0);

// Perplexity of add-one smoothed unigram frequencies of train_ids on the
// valid targets of `batches`.
double unigram_perplexity(std::span<const corpus::TokenId> train_ids,
                          std::span<const corpus::Batch> batches, std::size_t vocab_size);

// Peak resident set size from /proc, 0 when unavailable.
std::size_t peak_rss_bytes();

struct GradCheckConfig {
  ModelConfig model;
  loss::LossWeights weights{1.0, 0.5, 0.1, 0.01};
  loss::StftConfig stft{8, 4, loss::WindowKind::Hann, false};
  double eps = 1e-5;
  double tol = 1e-4;
  // Denominator floor of the relative error, so entries whose true gradient
  // is zero are judged by absolute error.
  double abs_floor = 1e-8;
  std::uint64_t seed = 0;
  std::size_t batch_rows = 2;
  std::size_t gmm_components = 2;
  // Applied to the analytic gradient before comparison (negative controls).
  std::function<void(ModelParams&)> corrupt;

  GradCheckConfig();
};

struct GradCheckReport {
  std::array<double, kNumParamGroups> max_rel_error{};
  std::array<std::size_t, kNumParamGroups> checked{};
  double tol = 0.0;
  bool passed = false;
};

// Central differences of the composite loss against the analytic backward,
// every parameter entry, f64.
GradCheckReport grad_check(const GradCheckConfig& cfg);

struct BenchConfig {
  std::size_t d_model = 64;
  std::size_t dict_size = 32;
  std::size_t batch = 1;
  std::size_t vocab = 256;
  std::size_t conv_width = 3;
  std::size_t repeats = 9;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::size_t length = 0;
  double forward_ms = 0.0;
  double decode_ms = 0.0;
  std::size_t mem_bytes = 0;
};

// Median-of-repeats timings of the core forward pass and of decode alone.
std::vector<BenchRow> bench_scaling(const BenchConfig& cfg, std::span<const std::size_t> lengths);

}  // namespace sdgm::train
