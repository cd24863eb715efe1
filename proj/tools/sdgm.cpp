// sdgm: command-line front end for the spectral dictionary language model.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error, 3 a check
// (grad-check or bench threshold) failed.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdgm/checkpoint.hpp"
#include "sdgm/config.hpp"
#include "sdgm/error.hpp"
#include "sdgm/parallel.hpp"
#include "sdgm/pipeline.hpp"
#include "sdgm/report.hpp"
#include "sdgm/trainer.hpp"

namespace fs = std::filesystem;
using namespace sdgm;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitCheck = 3;

// Every config key doubles as a --flag (underscores become dashes).
struct Overrides {
  std::map<std::string, std::string> values;
  std::string config_path;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "key = value settings file")->check(CLI::ExistingFile);
    for (const auto& key : config::keys()) {
      std::string flag = "--" + key;
      for (char& ch : flag) {
        if (ch == '_') ch = '-';
      }
      app.add_option(flag, values[key], "override config key " + key);
    }
  }

  // defaults < file < top-level --threads < subcommand flags
  train::TrainConfig resolve(const CLI::App& app) const {
    train::TrainConfig cfg;
    if (!config_path.empty()) config::load(cfg, config_path);
    if (app.get_parent() != nullptr && app.get_parent()->count("--threads") > 0) cfg.threads = num_threads();
    for (const auto& [key, value] : values) {
      std::string flag = "--" + key;
      for (char& ch : flag) {
        if (ch == '_') ch = '-';
      }
      if (app.count(flag) > 0) config::apply(cfg, key, value);
    }
    cfg.finalize();
    return cfg;
  }
};

fs::path require_out_dir(const std::string& out_dir) {
  if (out_dir.empty()) throw CLI::ValidationError("--out-dir", "an output directory is required");
  fs::create_directories(out_dir);
  return out_dir;
}

fs::path default_vocab(const std::string& vocab, const std::string& ckpt_path) {
  if (!vocab.empty()) return vocab;
  return fs::path(ckpt_path).parent_path() / "vocab.txt";
}

int cmd_build_vocab(const CLI::App& app, const Overrides& ov, const std::string& corpus_path,
                    const std::string& out_dir, bool dump_tokens) {
  auto cfg = ov.resolve(app);
  const fs::path out = require_out_dir(out_dir);
  const std::string text = ckpt::read_file(corpus_path);
  const auto vocab = corpus::build_vocab(text, cfg.max_vocab, cfg.token_mode);
  corpus::save_vocab(vocab, out / "vocab.txt");
  if (dump_tokens) corpus::save_token_dump(corpus::encode(text, vocab, cfg.token_mode), out / "tokens.txt");
  std::cout << "vocab " << vocab.size() << " tokens -> " << (out / "vocab.txt").string() << '\n';
  return 0;
}

int cmd_train(const CLI::App& app, const Overrides& ov, const std::string& corpus_path,
              const std::string& vocab_path, const std::string& out_dir) {
  auto cfg = ov.resolve(app);
  const fs::path out = require_out_dir(out_dir);
  const std::string text = ckpt::read_file(corpus_path);
  std::optional<corpus::Vocab> vocab;
  if (!vocab_path.empty()) vocab = corpus::load_vocab(vocab_path);
  auto prep = pipeline::prepare(text, cfg, std::move(vocab));
  std::cerr << "corpus " << prep.ids.size() << " ids, vocab " << prep.vocab.size() << ", "
            << prep.split.train_windows.size() << " training windows, "
            << prep.split.val_batches.size() << " validation batches\n";

  train::TrainHooks hooks;
  hooks.log = &std::cerr;
  hooks.dump_dir = out;
  const auto result = train::train(prep.split, cfg, hooks);

  corpus::save_vocab(prep.vocab, out / "vocab.txt");
  ckpt::write_file(out / "config.txt", config::dump(cfg));
  ckpt::save(pipeline::make_checkpoint(result, cfg), out / "model.ckpt");
  report::write_metrics_csv(result.epochs, out / "metrics.csv");
  report::write_loss_csv(result.steps, out / "loss.csv");

  const auto ev = train::evaluate(result.best_params, result.model, prep.split.val_batches,
                                  &result.best_gmm, cfg.gen_budget, cfg.seed);
  const double unigram =
      train::unigram_perplexity(prep.split.train_ids, prep.split.val_batches, prep.vocab.size());
  std::cout << report::emit_report(out / "metrics.csv", ev.tokens_per_sec)
            << "best_epoch    " << result.best_epoch << '\n'
            << "unigram_ppl   " << report::format_real(unigram) << '\n'
            << "checkpoint    " << (out / "model.ckpt").string() << '\n';
  return 0;
}

int cmd_eval(const CLI::App& app, const Overrides& ov, const std::string& ckpt_path,
             const std::string& vocab_path, const std::string& corpus_path, bool whole) {
  auto cfg = ov.resolve(app);
  auto ck = ckpt::load(ckpt_path);
  const auto vocab = corpus::load_vocab(default_vocab(vocab_path, ckpt_path));
  if (vocab.size() != ck.model.vocab_size) {
    throw Error(ErrorKind::DimensionMismatch, "vocabulary size differs from the checkpoint");
  }
  cfg.token_mode = ck.token_mode;
  cfg.model = ck.model;
  cfg.finalize();
  const std::string text = ckpt::read_file(corpus_path);
  const auto ids = corpus::encode(text, vocab, ck.token_mode);
  std::vector<corpus::Batch> batches;
  std::vector<corpus::TokenId> train_ids;
  if (whole) {
    batches = corpus::batchify(ids, cfg.plan);
    train_ids = ids;
  } else {
    auto split = train::split_and_batch(ids, cfg.plan, cfg.val_fraction);
    batches = std::move(split.val_batches);
    train_ids = std::move(split.train_ids);
  }
  const auto ev = train::evaluate(ck.params, ck.model, batches, ck.gmm.empty() ? nullptr : &ck.gmm,
                                  cfg.gen_budget, cfg.seed);
  std::cout << "tokens         " << ev.token_count << '\n'
            << "perplexity     " << report::format_real(ev.perplexity) << '\n'
            << "mean_nll       " << report::format_real(ev.mean_nll) << '\n'
            << "cosine_fidelity " << report::format_real(ev.cosine_fidelity) << '\n'
            << "tokens_per_sec " << report::format_real(ev.tokens_per_sec) << '\n'
            << "peak_mem_bytes " << ev.peak_mem_bytes << '\n'
            << "unigram_ppl    "
            << report::format_real(train::unigram_perplexity(train_ids, batches, vocab.size())) << '\n';
  return 0;
}

struct GenerateArgs {
  std::string ckpt;
  std::string vocab;
  std::string gmm;
  std::string prompt;
  std::string mode = "sample";
  std::string out_dir;
  std::size_t length = 16;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  bool diagnostics = false;
};

int cmd_generate(const GenerateArgs& a) {
  auto ck = ckpt::load(a.ckpt);
  const auto vocab = corpus::load_vocab(default_vocab(a.vocab, a.ckpt));
  if (vocab.size() != ck.model.vocab_size) {
    throw Error(ErrorKind::DimensionMismatch, "vocabulary size differs from the checkpoint");
  }
  if (!a.gmm.empty()) ck.gmm = ckpt::load_gmm(a.gmm);

  head::GenRequest req;
  req.length = a.length;
  req.mode = head::parse_decode_mode(a.mode);
  req.temperature = a.temperature;
  req.seed = a.seed;
  std::vector<corpus::TokenId> shown;
  if (!a.prompt.empty()) {
    req.prompt = corpus::encode(a.prompt, vocab, ck.token_mode);
    req.prompt.pop_back();  // eos
    shown.assign(req.prompt.begin(), req.prompt.end());
  }
  const auto res = head::generate(ck.params, ck.model, ck.gmm, req);
  shown.insert(shown.end(), res.tokens.begin(), res.tokens.end());
  std::cout << corpus::decode(shown, vocab, ck.token_mode) << '\n';

  if (a.diagnostics) {
    const fs::path out = require_out_dir(a.out_dir);
    std::ostringstream lines;
    for (const auto& s : res.steps) {
      nlohmann::json j;
      j["step"] = s.step;
      j["p_gen"] = s.p_gen;
      j["id"] = s.id;
      j["token"] = vocab.token(s.id);
      j["copy_degenerate"] = s.copy_degenerate;
      auto& top = j["top"] = nlohmann::json::array();
      for (const auto& [id, p] : s.top) top.push_back({{"id", id}, {"token", vocab.token(id)}, {"p", p}});
      lines << j.dump() << '\n';
    }
    ckpt::write_file(out / "generate.jsonl", lines.str());
  }
  return 0;
}

int cmd_grad_check(double eps, double tol, std::uint64_t seed, const std::string& weights) {
  train::GradCheckConfig cfg;
  cfg.eps = eps;
  cfg.tol = tol;
  cfg.seed = seed;
  if (!weights.empty()) {
    double w[4];
    if (std::sscanf(weights.c_str(), "%lf,%lf,%lf,%lf", &w[0], &w[1], &w[2], &w[3]) != 4) {
      throw CLI::ValidationError("--weights", "expected alpha,beta,gamma,delta");
    }
    cfg.weights = {w[0], w[1], w[2], w[3]};
  }
  const auto rep = train::grad_check(cfg);
  std::printf("%-10s %8s %14s\n", "group", "entries", "max_rel_err");
  for (std::size_t g = 0; g < kNumParamGroups; ++g) {
    std::printf("%-10s %8zu %14.3e\n", std::string(to_string(static_cast<ParamGroup>(g))).c_str(),
                rep.checked[g], rep.max_rel_error[g]);
  }
  std::printf("tolerance %.1e: %s\n", rep.tol, rep.passed ? "PASS" : "FAIL");
  return rep.passed ? 0 : kExitCheck;
}

int cmd_bench(const train::BenchConfig& cfg, const std::vector<std::size_t>& lengths,
              const std::string& out_dir) {
  const fs::path out = require_out_dir(out_dir);
  const auto rows = train::bench_scaling(cfg, lengths);
  report::write_bench_csv(rows, out / "bench.csv");
  bool ok = true;
  std::printf("%8s %12s %12s %12s %8s %8s\n", "L", "forward_ms", "decode_ms", "mem_bytes", "t_ratio",
              "m_ratio");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (i == 0) {
      std::printf("%8zu %12.4f %12.4f %12zu\n", r.length, r.forward_ms, r.decode_ms, r.mem_bytes);
      continue;
    }
    const double tr = r.forward_ms / rows[i - 1].forward_ms;
    const double mr = static_cast<double>(r.mem_bytes) / static_cast<double>(rows[i - 1].mem_bytes);
    // Thresholds apply to doublings only.
    if (r.length == 2 * rows[i - 1].length) ok = ok && tr >= 1.5 && tr <= 2.5 && mr <= 2.5;
    std::printf("%8zu %12.4f %12.4f %12zu %8.3f %8.3f\n", r.length, r.forward_ms, r.decode_ms,
                r.mem_bytes, tr, mr);
  }
  std::printf("linear scaling: %s\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : kExitCheck;
}

int cmd_fit_gmm(const CLI::App& app, const Overrides& ov, const std::string& ckpt_path,
                const std::string& vocab_path, const std::string& corpus_path,
                const std::string& out_dir) {
  auto cfg = ov.resolve(app);
  const fs::path out = require_out_dir(out_dir);
  auto ck = ckpt::load(ckpt_path);
  const auto vocab = corpus::load_vocab(default_vocab(vocab_path, ckpt_path));
  cfg.token_mode = ck.token_mode;
  cfg.model = ck.model;
  cfg.finalize();
  const auto ids = corpus::encode(ckpt::read_file(corpus_path), vocab, ck.token_mode);
  const auto split = train::split_and_batch(ids, cfg.plan, cfg.val_fraction);
  std::vector<corpus::Batch> source;
  if (cfg.gmm_bank == train::BankSource::Val) {
    source = split.val_batches;
  } else {
    source = corpus::batchify(split.train_ids, cfg.plan);
  }
  const auto bank = gmm::subsample(gmm::collect_bank(ck.params, ck.model, source), cfg.gmm_bank_max);
  const auto fit = gmm::fit_em(bank, cfg.gmm_components, cfg.em);
  ck.gmm = fit.model;
  ckpt::save_gmm(ck.gmm, out / "gmm.bin");
  ckpt::save(ck, out / "model.ckpt");
  std::cout << "bank rows     " << bank.rows() << '\n'
            << "components    " << ck.gmm.components() << '\n'
            << "iterations    " << fit.iterations << (fit.converged ? " (converged)" : "") << '\n'
            << "mean_ll       " << report::format_real(fit.ll_trace.back()) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral dictionary generative language model"};
  app.require_subcommand(1);
  std::size_t threads = 1;
  app.add_option("--threads", threads, "worker thread cap")->check(CLI::PositiveNumber);

  std::string corpus_path, vocab_path, out_dir, ckpt_path;
  bool dump_tokens = false, whole = false;

  auto* bv = app.add_subcommand("build-vocab", "rank tokens of a corpus into vocab.txt");
  Overrides bv_ov;
  bv_ov.attach(*bv);
  bv->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  bv->add_option("--out-dir", out_dir)->required();
  bv->add_flag("--dump-tokens", dump_tokens, "also write tokens.txt");

  auto* tr = app.add_subcommand("train", "train a model and write model.ckpt and metric CSVs");
  Overrides tr_ov;
  tr_ov.attach(*tr);
  tr->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  tr->add_option("--vocab", vocab_path, "reuse an existing vocabulary")->check(CLI::ExistingFile);
  tr->add_option("--out-dir", out_dir)->required();

  auto* ev = app.add_subcommand("eval", "perplexity, fidelity and throughput of a checkpoint");
  Overrides ev_ov;
  ev_ov.attach(*ev);
  ev->add_option("--ckpt", ckpt_path)->required()->check(CLI::ExistingFile);
  ev->add_option("--vocab", vocab_path);
  ev->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  ev->add_flag("--all", whole, "evaluate the whole corpus instead of its validation tail");

  auto* gen = app.add_subcommand("generate", "sample text from a checkpoint's GMM prior");
  GenerateArgs ga;
  gen->add_option("--ckpt", ga.ckpt)->required()->check(CLI::ExistingFile);
  gen->add_option("--vocab", ga.vocab);
  gen->add_option("--gmm", ga.gmm, "standalone GMM blob replacing the checkpoint's")->check(CLI::ExistingFile);
  gen->add_option("--len", ga.length, "tokens to generate")->check(CLI::PositiveNumber);
  gen->add_option("--seed", ga.seed);
  gen->add_option("--mode", ga.mode)->check(CLI::IsMember({"sample", "argmax"}));
  gen->add_option("--temperature", ga.temperature);
  gen->add_option("--prompt", ga.prompt);
  gen->add_option("--out-dir", ga.out_dir);
  gen->add_flag("--diagnostics", ga.diagnostics, "write per-step JSON lines to OUT_DIR/generate.jsonl");

  auto* gc = app.add_subcommand("grad-check", "finite-difference check of every gradient");
  double eps = 1e-5, tol = 1e-4;
  std::uint64_t gc_seed = 0;
  std::string gc_weights;
  gc->add_option("--eps", eps);
  gc->add_option("--tol", tol);
  gc->add_option("--seed", gc_seed);
  gc->add_option("--weights", gc_weights, "alpha,beta,gamma,delta");

  auto* be = app.add_subcommand("bench", "forward-pass scaling in the sequence length");
  train::BenchConfig bcfg;
  std::vector<std::size_t> lengths{128, 256, 512, 1024};
  be->add_option("--lengths", lengths)->delimiter(',');
  be->add_option("--d-model", bcfg.d_model);
  be->add_option("--dict-size", bcfg.dict_size);
  be->add_option("--batch", bcfg.batch);
  be->add_option("--repeats", bcfg.repeats);
  be->add_option("--seed", bcfg.seed);
  be->add_option("--out-dir", out_dir)->required();

  auto* fg = app.add_subcommand("fit-gmm", "refit the coefficient prior of a checkpoint");
  Overrides fg_ov;
  fg_ov.attach(*fg);
  fg->add_option("--ckpt", ckpt_path)->required()->check(CLI::ExistingFile);
  fg->add_option("--vocab", vocab_path);
  fg->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  fg->add_option("--out-dir", out_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    set_num_threads(threads);
    if (*bv) return cmd_build_vocab(*bv, bv_ov, corpus_path, out_dir, dump_tokens);
    if (*tr) return cmd_train(*tr, tr_ov, corpus_path, vocab_path, out_dir);
    if (*ev) return cmd_eval(*ev, ev_ov, ckpt_path, vocab_path, corpus_path, whole);
    if (*gen) return cmd_generate(ga);
    if (*gc) return cmd_grad_check(eps, tol, gc_seed, gc_weights);
    if (*be) return cmd_bench(bcfg, lengths, out_dir);
    if (*fg) return cmd_fit_gmm(*fg, fg_ov, ckpt_path, vocab_path, corpus_path, out_dir);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "sdgm: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "sdgm: " << e.what() << '\n';
    return e.kind() == ErrorKind::InvalidArgument ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "sdgm: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
