#include "sdgm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include "sdgm/error.hpp"
#include "sdgm/parallel.hpp"

namespace sdgm::train {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Shuffle stream kept apart from the init stream that shares the seed.
constexpr std::uint64_t kShuffleSalt = 0x5DEECE66DULL;

void write_nan_dump(const std::filesystem::path& dir, std::size_t epoch, std::size_t step,
                    const loss::LossReport& rep, const ModelParams& params,
                    const ModelParams& grads, const corpus::Batch& batch) {
  std::filesystem::create_directories(dir);
  std::ofstream f(dir / "nan_dump.txt");
  if (!f) return;
  f.precision(17);
  f << "epoch " << epoch << "\nstep " << step << '\n';
  f << "loss total=" << rep.total << " time=" << rep.time << " freq=" << rep.freq
    << " nll=" << rep.nll << " prior=" << rep.prior << '\n';
  auto describe = [&](const char* what, const ModelParams& p) {
    p.for_each([&](std::string_view name, ParamGroup, const Tensor& t) {
      std::size_t bad = 0;
      double sq = 0.0;
      for (double x : t.data) {
        if (std::isfinite(x)) {
          sq += x * x;
        } else {
          ++bad;
        }
      }
      f << what << ' ' << name << " nonfinite=" << bad << " norm=" << std::sqrt(sq) << '\n';
    });
  };
  describe("param", params);
  describe("grad", grads);
  f << "inputs";
  for (auto id : batch.inputs) f << ' ' << id;
  f << '\n';
}

}  // namespace

BankSource parse_bank_source(std::string_view s) {
  if (s == "train") return BankSource::Train;
  if (s == "val") return BankSource::Val;
  throw Error(ErrorKind::InvalidArgument, "unknown bank source '" + std::string(s) + "' (train|val)");
}

std::string_view to_string(BankSource b) { return b == BankSource::Train ? "train" : "val"; }

void TrainConfig::finalize() {
  plan.seq_len = model.seq_len;
  optim.seed = seed;
  em.seed = seed;
  if (max_vocab < 1) throw Error(ErrorKind::InvalidArgument, "max_vocab must be >= 1");
  if (gmm_components < 1) throw Error(ErrorKind::InvalidArgument, "gmm components must be >= 1");
  if (gmm_refit_epochs < 1) throw Error(ErrorKind::InvalidArgument, "gmm refit cadence must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "val_fraction must lie in (0, 1)");
  }
  if (threads < 1) throw Error(ErrorKind::InvalidArgument, "threads must be >= 1");
  if (model.vocab_size > 0) model.validate();
  plan.validate();
  optim.validate();
  weights.validate();
  stft.validate();
  em.validate();
  if (weights.beta > 0.0) stft.frames(model.seq_len);
}

DataSplit split_and_batch(std::span<const corpus::TokenId> ids, const corpus::BatchPlan& plan,
                          double val_fraction) {
  plan.validate();
  const std::size_t n = ids.size();
  const std::size_t need = plan.seq_len + 1;
  std::size_t n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * val_fraction));
  n_val = std::max(n_val, need);
  if (n < n_val + need) {
    throw Error(ErrorKind::SequenceTooShort,
                "corpus of " + std::to_string(n) + " ids is too short for a train/validation split at seq_len " +
                    std::to_string(plan.seq_len));
  }
  DataSplit out;
  out.train_ids.assign(ids.begin(), ids.end() - static_cast<std::ptrdiff_t>(n_val));
  out.val_ids.assign(ids.end() - static_cast<std::ptrdiff_t>(n_val), ids.end());
  corpus::BatchPlan single = plan;
  single.batch_size = 1;
  out.train_windows = corpus::batchify(out.train_ids, single);
  out.val_batches = corpus::batchify(out.val_ids, plan);
  return out;
}

corpus::Batch stack_rows(std::span<const corpus::Batch* const> rows) {
  if (rows.empty()) throw Error(ErrorKind::InvalidArgument, "nothing to stack");
  corpus::Batch out;
  out.len = rows.front()->len;
  for (const auto* r : rows) {
    if (r->len != out.len) throw Error(ErrorKind::ShapeMismatch, "stacked windows differ in length");
    out.rows += r->rows;
    out.inputs.insert(out.inputs.end(), r->inputs.begin(), r->inputs.end());
    out.targets.insert(out.targets.end(), r->targets.begin(), r->targets.end());
    out.mask.insert(out.mask.end(), r->mask.begin(), r->mask.end());
  }
  return out;
}

Evaluation evaluate_loss(const corpus::Batch& batch, const ModelParams& params,
                         const ModelConfig& cfg, const loss::LossWeights& weights,
                         const loss::StftConfig& stft, const gmm::GmmModel* gmm) {
  Evaluation ev;
  ev.fwd = model::forward(batch, params, cfg);
  ev.head = head::predict(ev.fwd, params, cfg);
  loss::LossInputs in{&ev.fwd.Xhat, &ev.fwd.X,  &ev.head.log_probs, batch.targets,
                      &ev.fwd.C,    gmm,        batch.mask};
  ev.report = loss::composite_loss(in, weights, stft);
  return ev;
}

StepResult loss_and_gradients(const corpus::Batch& batch, const ModelParams& params,
                              const ModelConfig& cfg, const loss::LossWeights& weights,
                              const loss::StftConfig& stft, const gmm::GmmModel* gmm) {
  const auto fwd = model::forward(batch, params, cfg);
  const bool need_head = weights.gamma > 0.0;
  head::HeadCache hc;
  if (need_head) hc = head::predict(fwd, params, cfg);
  loss::LossInputs in{&fwd.Xhat, &fwd.X, need_head ? &hc.log_probs : nullptr, batch.targets,
                      &fwd.C,    gmm,    batch.mask};
  loss::LossGrads lg;
  StepResult out;
  out.report = loss::composite_loss(in, weights, stft, &lg);
  out.grads = ModelParams::zeros(cfg);
  model::Upstream up{std::move(lg.dXhat), std::move(lg.dC), std::move(lg.dX)};
  if (need_head && !lg.dlogits.data.empty()) {
    head::backward(fwd, hc, params, cfg, lg.dlogits, out.grads, up.dXhat, up.dX);
  }
  model::backward(fwd, params, cfg, up, out.grads);
  return out;
}

TrainResult train(const DataSplit& data, const TrainConfig& cfg_in, const TrainHooks& hooks) {
  TrainConfig cfg = cfg_in;
  cfg.finalize();
  const ModelConfig& mcfg = cfg.model;
  if (mcfg.vocab_size == 0) throw Error(ErrorKind::InvalidArgument, "model vocab_size is unset");
  mcfg.validate();
  if (data.train_windows.empty()) throw Error(ErrorKind::EmptyCorpus, "no training windows");
  if (data.val_batches.empty()) throw Error(ErrorKind::EmptyEvalSet, "no validation batches");
  set_num_threads(cfg.threads);

  ModelParams params = ModelParams::init(mcfg, cfg.seed);
  optim::AdamState adam = optim::AdamState::for_params(params);
  std::mt19937_64 shuffle_rng(cfg.seed ^ kShuffleSalt);
  gmm::GmmModel prior;

  // Windows in corpus order, stacked once for bank collection.
  std::vector<corpus::Batch> train_batches;
  for (std::size_t i = 0; i < data.train_windows.size(); i += cfg.plan.batch_size) {
    std::vector<const corpus::Batch*> rows;
    for (std::size_t j = i; j < std::min(i + cfg.plan.batch_size, data.train_windows.size()); ++j) {
      rows.push_back(&data.train_windows[j]);
    }
    train_batches.push_back(stack_rows(rows));
  }

  TrainResult res;
  res.model = mcfg;
  res.best_params = params;
  double best_ppl = std::numeric_limits<double>::infinity();
  std::size_t stale = 0, global_step = 0;
  std::vector<std::size_t> order(data.train_windows.size());

  for (std::size_t epoch = 1; epoch <= cfg.optim.epochs; ++epoch) {
    const auto t_epoch = Clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochMetrics em;
    em.epoch = epoch;
    double weight_sum = 0.0;
    for (std::size_t i = 0; i < order.size(); i += cfg.plan.batch_size) {
      const auto t_step = Clock::now();
      std::vector<const corpus::Batch*> rows;
      for (std::size_t j = i; j < std::min(i + cfg.plan.batch_size, order.size()); ++j) {
        rows.push_back(&data.train_windows[order[j]]);
      }
      const corpus::Batch batch = stack_rows(rows);
      StepResult step = loss_and_gradients(batch, params, mcfg, cfg.weights, cfg.stft,
                                           prior.empty() ? nullptr : &prior);
      ++global_step;
      if (!std::isfinite(step.report.total) || !step.grads.all_finite()) {
        if (hooks.dump_dir) {
          write_nan_dump(*hooks.dump_dir, epoch, global_step, step.report, params, step.grads, batch);
        }
        throw Error(ErrorKind::NonFinite,
                    "non-finite loss or gradient at epoch " + std::to_string(epoch) + ", step " +
                        std::to_string(global_step));
      }
      optim::clip_global_norm(step.grads, cfg.optim.clip_norm);
      optim::adam_step(params, step.grads, adam, cfg.optim);
      if (mcfg.precision == Precision::F32) params.round_to_f32();

      const auto& r = step.report;
      const double n = static_cast<double>(r.token_count);
      em.train_total += n * r.total;
      em.train_time += n * r.time;
      em.train_freq += n * r.freq;
      em.train_nll += n * r.nll;
      em.train_prior += n * r.prior;
      weight_sum += n;
      const double dt = seconds_since(t_step);
      res.steps.push_back({global_step, r, dt > 0.0 ? n / dt : 0.0});
    }
    if (weight_sum > 0.0) {
      em.train_total /= weight_sum;
      em.train_time /= weight_sum;
      em.train_freq /= weight_sum;
      em.train_nll /= weight_sum;
      em.train_prior /= weight_sum;
    }

    if (epoch % cfg.gmm_refit_epochs == 0) {
      const auto& source = cfg.gmm_bank == BankSource::Train
                               ? std::span<const corpus::Batch>(train_batches)
                               : std::span<const corpus::Batch>(data.val_batches);
      const auto bank = gmm::subsample(gmm::collect_bank(params, mcfg, source), cfg.gmm_bank_max);
      prior = gmm::fit_em(bank, cfg.gmm_components, cfg.em).model;
    }

    const EvalReport val = evaluate(params, mcfg, data.val_batches);
    em.val_ppl = val.perplexity;
    em.val_fidelity = val.cosine_fidelity;
    em.sec = seconds_since(t_epoch);
    res.epochs.push_back(em);
    if (hooks.log != nullptr) {
      *hooks.log << "epoch " << epoch << " train_total " << em.train_total << " val_ppl "
                 << em.val_ppl << " val_fidelity " << em.val_fidelity << " (" << em.sec << " s)\n";
    }
    if (hooks.on_epoch) hooks.on_epoch(em);

    if (em.val_ppl < best_ppl) {
      best_ppl = em.val_ppl;
      res.best_params = params;
      res.best_gmm = prior;
      res.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.optim.patience) {
      res.stopped_early = epoch < cfg.optim.epochs;
      break;
    }
  }
  return res;
}

EvalReport evaluate(const ModelParams& params, const ModelConfig& cfg,
                    std::span<const corpus::Batch> batches, const gmm::GmmModel* gmm,
                    std::size_t gen_budget, std::uint64_t seed) {
  EvalReport rep;
  double nll_sum = 0.0, cos_sum = 0.0;
  std::size_t cos_count = 0;
  const loss::LossWeights nll_only{0.0, 0.0, 1.0, 0.0};
  for (const auto& batch : batches) {
    const auto ev = evaluate_loss(batch, params, cfg, nll_only, loss::StftConfig{}, nullptr);
    nll_sum += ev.report.nll * static_cast<double>(ev.report.token_count);
    rep.token_count += ev.report.token_count;
    for (std::size_t b = 0; b < batch.rows; ++b) {
      for (std::size_t t = 0; t < batch.len; ++t) {
        if (!batch.valid(b, t)) continue;
        auto a = ev.fwd.Xhat.vec(b, t);
        auto x = ev.fwd.X.vec(b, t);
        const double den = std::sqrt(dot(a, a) * dot(x, x));
        cos_sum += den > 0.0 ? std::clamp(dot(a, x) / den, -1.0, 1.0) : 0.0;
        ++cos_count;
      }
    }
  }
  if (rep.token_count == 0) throw Error(ErrorKind::EmptyEvalSet, "no valid tokens to evaluate");
  rep.mean_nll = nll_sum / static_cast<double>(rep.token_count);
  rep.perplexity = std::exp(rep.mean_nll);
  rep.cosine_fidelity = cos_sum / static_cast<double>(cos_count);

  if (gmm != nullptr && !gmm->empty() && gen_budget > 0 && cfg.seq_len >= 2) {
    head::GenRequest req;
    req.length = cfg.seq_len - 1;
    std::size_t produced = 0;
    const auto t0 = Clock::now();
    for (std::uint64_t round = 0; produced < gen_budget; ++round) {
      req.seed = seed + round;
      produced += head::generate(params, cfg, *gmm, req).tokens.size();
    }
    const double dt = seconds_since(t0);
    rep.tokens_per_sec = dt > 0.0 ? static_cast<double>(produced) / dt : 0.0;
  }
  rep.peak_mem_bytes = peak_rss_bytes();
  return rep;
}

double unigram_perplexity(std::span<const corpus::TokenId> train_ids,
                          std::span<const corpus::Batch> batches, std::size_t vocab_size) {
  std::vector<double> counts(vocab_size, 1.0);
  for (auto id : train_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
      throw Error(ErrorKind::IdOutOfRange, "training id out of range");
    }
    counts[static_cast<std::size_t>(id)] += 1.0;
  }
  const double total = static_cast<double>(train_ids.size() + vocab_size);
  double nll = 0.0;
  std::size_t n = 0;
  for (const auto& batch : batches) {
    for (std::size_t i = 0; i < batch.targets.size(); ++i) {
      if (batch.mask[i] == 0) continue;
      nll -= std::log(counts[static_cast<std::size_t>(batch.targets[i])] / total);
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorKind::EmptyEvalSet, "no valid tokens to evaluate");
  return std::exp(nll / static_cast<double>(n));
}

std::size_t peak_rss_bytes() {
  std::ifstream f("/proc/self/status");
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      return static_cast<std::size_t>(std::stoull(line.substr(6))) * 1024;
    }
  }
  return 0;
}

GradCheckConfig::GradCheckConfig() {
  model.vocab_size = 20;
  model.d_model = 8;
  model.dict_size = 4;
  model.seq_len = 16;
  model.conv_width = 3;
  model.precision = Precision::F64;
}

GradCheckReport grad_check(const GradCheckConfig& cfg) {
  const ModelConfig& mcfg = cfg.model;
  mcfg.validate();
  cfg.weights.validate();
  ModelParams params = ModelParams::init(mcfg, cfg.seed);

  // Random tokens; the last target of the final row is padding so the mask
  // path is exercised too.
  std::mt19937_64 rng(cfg.seed + 1);
  std::uniform_int_distribution<corpus::TokenId> tok(0, static_cast<corpus::TokenId>(mcfg.vocab_size - 1));
  const std::size_t B = cfg.batch_rows, L = mcfg.seq_len;
  corpus::Batch batch;
  batch.rows = B;
  batch.len = L;
  batch.inputs.resize(B * L);
  batch.targets.resize(B * L);
  batch.mask.assign(B * L, 1);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t <= L; ++t) {
      const auto id = tok(rng);
      if (t < L) batch.inputs[b * L + t] = id;
      if (t > 0) batch.targets[b * L + t - 1] = id;
    }
  }
  batch.targets[B * L - 1] = corpus::kPad;
  batch.mask[B * L - 1] = 0;

  gmm::GmmModel prior;
  if (cfg.weights.delta > 0.0) {
    gmm::EmConfig em;
    em.seed = cfg.seed;
    prior = gmm::fit_em(gmm::collect_bank(params, mcfg, std::span(&batch, 1)), cfg.gmm_components, em).model;
  }
  const gmm::GmmModel* gp = prior.empty() ? nullptr : &prior;

  ModelParams analytic =
      loss_and_gradients(batch, params, mcfg, cfg.weights, cfg.stft, gp).grads;
  if (cfg.corrupt) cfg.corrupt(analytic);

  std::vector<std::pair<ParamGroup, Tensor*>> theta;
  std::vector<const Tensor*> grad;
  params.for_each([&](std::string_view, ParamGroup g, Tensor& t) { theta.emplace_back(g, &t); });
  analytic.for_each([&](std::string_view, ParamGroup, Tensor& t) { grad.push_back(&t); });

  auto total = [&] {
    return evaluate_loss(batch, params, mcfg, cfg.weights, cfg.stft, gp).report.total;
  };

  GradCheckReport rep;
  rep.tol = cfg.tol;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    auto [group, t] = theta[i];
    const auto gi = static_cast<std::size_t>(group);
    for (std::size_t j = 0; j < t->size(); ++j) {
      const double saved = (*t)[j];
      (*t)[j] = saved + cfg.eps;
      const double up = total();
      (*t)[j] = saved - cfg.eps;
      const double down = total();
      (*t)[j] = saved;
      const double numeric = (up - down) / (2.0 * cfg.eps);
      const double a = (*grad[i])[j];
      const double den = std::max({std::abs(a), std::abs(numeric), cfg.abs_floor});
      rep.max_rel_error[gi] = std::max(rep.max_rel_error[gi], std::abs(a - numeric) / den);
      ++rep.checked[gi];
    }
  }
  rep.passed = std::all_of(rep.max_rel_error.begin(), rep.max_rel_error.end(),
                           [&](double e) { return e <= cfg.tol; });
  return rep;
}

std::vector<BenchRow> bench_scaling(const BenchConfig& cfg, std::span<const std::size_t> lengths) {
  if (!std::is_sorted(lengths.begin(), lengths.end())) {
    throw Error(ErrorKind::InvalidArgument, "bench lengths must be ascending");
  }
  if (cfg.repeats < 1) throw Error(ErrorKind::InvalidArgument, "bench repeats must be >= 1");
  // All lengths are prepared first and then timed round-robin, so a slow
  // spell on a shared machine hits every length alike instead of skewing one
  // ratio.
  struct Case {
    std::size_t L = 0;
    ModelConfig cfg;
    ModelParams params;
    std::vector<corpus::TokenId> tokens;
    model::ForwardCache cache;
    std::size_t inner = 1;
    std::vector<double> fwd_ms, dec_ms;
  };
  std::vector<Case> cases;
  for (std::size_t L : lengths) {
    Case c;
    c.L = L;
    c.cfg.vocab_size = cfg.vocab;
    c.cfg.d_model = cfg.d_model;
    c.cfg.dict_size = cfg.dict_size;
    c.cfg.seq_len = L;
    c.cfg.conv_width = cfg.conv_width;
    c.cfg.precision = Precision::F64;
    c.cfg.validate();
    c.params = ModelParams::init(c.cfg, cfg.seed);
    std::mt19937_64 rng(cfg.seed + L);
    std::uniform_int_distribution<corpus::TokenId> tok(0, static_cast<corpus::TokenId>(cfg.vocab - 1));
    c.tokens.resize(cfg.batch * L);
    for (auto& id : c.tokens) id = tok(rng);
    // Calibrate so every timed sample spans at least ~20 ms.
    c.cache = model::forward(c.tokens, cfg.batch, L, c.params, c.cfg);
    const auto t_once = Clock::now();
    c.cache = model::forward(c.tokens, cfg.batch, L, c.params, c.cfg);
    const double once = std::max(seconds_since(t_once), 1e-7);
    c.inner = std::max<std::size_t>(1, static_cast<std::size_t>(0.02 / once));
    cases.push_back(std::move(c));
  }
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    for (auto& c : cases) {
      auto t0 = Clock::now();
      for (std::size_t k = 0; k < c.inner; ++k) {
        c.cache = model::forward(c.tokens, cfg.batch, c.L, c.params, c.cfg);
      }
      c.fwd_ms.push_back(1e3 * seconds_since(t0) / static_cast<double>(c.inner));
      t0 = Clock::now();
      Tensor out;
      for (std::size_t k = 0; k < c.inner; ++k) out = model::decode(c.cache.C, c.cache.atoms);
      c.dec_ms.push_back(1e3 * seconds_since(t0) / static_cast<double>(c.inner));
    }
  }
  std::vector<BenchRow> rows;
  for (const auto& c : cases) {
    rows.push_back({c.L, median(c.fwd_ms), median(c.dec_ms), model::cache_bytes(c.cache)});
  }
  return rows;
}

}  // namespace sdgm::train
