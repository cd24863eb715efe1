#include "sdgm/pipeline.hpp"

namespace sdgm::pipeline {

Prepared prepare(std::string_view text, train::TrainConfig& cfg,
                 std::optional<corpus::Vocab> vocab) {
  cfg.finalize();
  Prepared p;
  p.vocab = vocab ? std::move(*vocab) : corpus::build_vocab(text, cfg.max_vocab, cfg.token_mode);
  cfg.model.vocab_size = p.vocab.size();
  cfg.finalize();
  p.ids = corpus::encode(text, p.vocab, cfg.token_mode);
  p.split = train::split_and_batch(p.ids, cfg.plan, cfg.val_fraction);
  return p;
}

ckpt::Checkpoint make_checkpoint(const train::TrainResult& result, const train::TrainConfig& cfg) {
  ckpt::Checkpoint c;
  c.model = result.model;
  c.weights = cfg.weights;
  c.stft = cfg.stft;
  c.token_mode = cfg.token_mode;
  c.params = result.best_params;
  c.gmm = result.best_gmm;
  return c;
}

}  // namespace sdgm::pipeline
