#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sdgm/trainer.hpp"

namespace sdgm::config {

// Flat `key = value` settings. Blank lines and lines starting with '#' are
// ignored. Unknown keys and unparsable values throw InvalidArgument.
void apply(train::TrainConfig& cfg, std::string_view key, std::string_view value);
void apply_text(train::TrainConfig& cfg, std::string_view text);
void load(train::TrainConfig& cfg, const std::filesystem::path& path);

// Every key with its current value, one per line, in documentation order.
std::string dump(const train::TrainConfig& cfg);
std::vector<std::string> keys();

}  // namespace sdgm::config
