#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sdgm::corpus {

using TokenId = std::int32_t;

inline constexpr TokenId kUnk = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kPad = 3;
inline constexpr std::size_t kNumReserved = 4;

enum class TokenMode { Word, Char };

TokenMode parse_token_mode(std::string_view s);
std::string_view to_string(TokenMode m);

// Lowercases ASCII, maps tabs/newlines/carriage returns to a space and drops
// every other control byte. Multi-byte UTF-8 sequences pass through.
std::string normalize(std::string_view text);

// Splits normalized text into surface tokens: whitespace-separated words, or
// one token per UTF-8 code point.
std::vector<std::string> tokenize(std::string_view normalized, TokenMode mode);

class Vocab {
 public:
  Vocab();  // reserved tokens only

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  TokenId id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  // Appends a non-reserved token; returns its id. Duplicates are rejected.
  TokenId add(std::string token);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Ranked vocabulary: descending frequency, ascending lexicographic on ties,
// at most `max_size` entries after the four reserved ids.
Vocab build_vocab(std::string_view text, std::size_t max_size, TokenMode mode);

// bos + ids + eos, out-of-vocab tokens mapped to kUnk.
std::vector<TokenId> encode(std::string_view text, const Vocab& vocab,
                            TokenMode mode);

// Inverse of encode: bos/eos/pad are dropped, unk renders as "<unk>".
// Words are joined with a single space, characters are concatenated.
std::string decode(std::span<const TokenId> ids, const Vocab& vocab,
                   TokenMode mode);

// One token per line, line index = id. Tokens never contain '\n' because
// normalization removes it.
void save_vocab(const Vocab& vocab, const std::filesystem::path& path);
Vocab load_vocab(const std::filesystem::path& path);

void save_token_dump(std::span<const TokenId> ids,
                     const std::filesystem::path& path);

struct BatchPlan {
  std::size_t batch_size = 8;
  std::size_t seq_len = 32;
  std::size_t stride = 32;
  bool drop_last = false;

  void validate() const;
};

// A B x L block of next-token pairs. `mask` is 1 where the target is a real
// token; padded targets carry kPad and mask 0.
struct Batch {
  std::size_t rows = 0;
  std::size_t len = 0;
  std::vector<TokenId> inputs;
  std::vector<TokenId> targets;
  std::vector<std::uint8_t> mask;

  TokenId input(std::size_t b, std::size_t t) const { return inputs[b * len + t]; }
  TokenId target(std::size_t b, std::size_t t) const {
    return targets[b * len + t];
  }
  bool valid(std::size_t b, std::size_t t) const { return mask[b * len + t] != 0; }
  // Real (non-pad) input token: every window holds one more real input than
  // it has real targets.
  bool input_valid(std::size_t b, std::size_t t) const {
    return t == 0 || mask[b * len + t - 1] != 0;
  }
  std::size_t token_count() const;
};

// Windows start at 0, stride, 2*stride, ... A window with fewer than L+1
// remaining ids is padded (kept only if it still has one real target) unless
// drop_last is set. Consecutive windows are grouped into batches of
// plan.batch_size rows; the last batch may be smaller (dropped when
// drop_last).
std::vector<Batch> batchify(std::span<const TokenId> ids, const BatchPlan& plan);

}  // namespace sdgm::corpus
