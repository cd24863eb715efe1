#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "sdgm/checkpoint.hpp"
#include "sdgm/corpus.hpp"
#include "sdgm/trainer.hpp"

namespace sdgm::pipeline {

// A corpus turned into ids and a train/validation split.
struct Prepared {
  corpus::Vocab vocab;
  std::vector<corpus::TokenId> ids;
  train::DataSplit split;
};

// Builds the vocabulary from `text` unless one is given, encodes, and splits.
// Sets cfg.model.vocab_size and finalizes cfg.
Prepared prepare(std::string_view text, train::TrainConfig& cfg,
                 std::optional<corpus::Vocab> vocab = std::nullopt);

ckpt::Checkpoint make_checkpoint(const train::TrainResult& result, const train::TrainConfig& cfg);

}  // namespace sdgm::pipeline
