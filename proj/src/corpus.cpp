#include "sdgm/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "sdgm/error.hpp"

namespace sdgm::corpus {

namespace {

constexpr const char* kReservedNames[kNumReserved] = {"<unk>", "<bos>",
                                                      "<eos>", "<pad>"};

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

}  // namespace

TokenMode parse_token_mode(std::string_view s) {
  if (s == "word") return TokenMode::Word;
  if (s == "char") return TokenMode::Char;
  throw Error(ErrorKind::InvalidArgument,
              "unknown token mode '" + std::string(s) + "' (word|char)");
}

std::string_view to_string(TokenMode m) {
  return m == TokenMode::Word ? "word" : "char";
}

std::string normalize(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (c == '\t' || c == '\n' || c == '\r') {
      out.push_back(' ');
    } else if (c < 0x20 || c == 0x7F) {
      continue;
    } else if (c >= 'A' && c <= 'Z') {
      out.push_back(static_cast<char>(c - 'A' + 'a'));
    } else {
      out.push_back(ch);
    }
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view normalized, TokenMode mode) {
  std::vector<std::string> out;
  if (mode == TokenMode::Word) {
    std::size_t i = 0;
    while (i < normalized.size()) {
      while (i < normalized.size() && normalized[i] == ' ') ++i;
      std::size_t j = i;
      while (j < normalized.size() && normalized[j] != ' ') ++j;
      if (j > i) out.emplace_back(normalized.substr(i, j - i));
      i = j;
    }
  } else {
    std::size_t i = 0;
    while (i < normalized.size()) {
      std::size_t n = utf8_length(static_cast<unsigned char>(normalized[i]));
      n = std::min(n, normalized.size() - i);
      out.emplace_back(normalized.substr(i, n));
      i += n;
    }
  }
  return out;
}

Vocab::Vocab() {
  for (std::size_t i = 0; i < kNumReserved; ++i) {
    tokens_.emplace_back(kReservedNames[i]);
    index_.emplace(kReservedNames[i], static_cast<TokenId>(i));
  }
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw Error(ErrorKind::IdOutOfRange,
                "token id " + std::to_string(id) + " outside vocabulary of " +
                    std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

TokenId Vocab::add(std::string token) {
  if (token.empty() || token.find('\n') != std::string::npos) {
    throw Error(ErrorKind::InvalidArgument, "vocabulary token must be a non-empty single line");
  }
  if (index_.count(token) != 0) {
    throw Error(ErrorKind::InvalidArgument, "duplicate vocabulary token '" + token + "'");
  }
  auto id = static_cast<TokenId>(tokens_.size());
  index_.emplace(token, id);
  tokens_.push_back(std::move(token));
  return id;
}

Vocab build_vocab(std::string_view text, std::size_t max_size, TokenMode mode) {
  if (max_size < 1) {
    throw Error(ErrorKind::InvalidArgument, "max vocabulary size must be >= 1");
  }
  const auto words = tokenize(normalize(text), mode);
  if (words.empty()) {
    throw Error(ErrorKind::EmptyCorpus, "corpus is empty after normalization");
  }

  std::map<std::string, std::size_t> counts;
  for (const auto& w : words) ++counts[w];

  Vocab vocab;
  std::vector<std::pair<std::string, std::size_t>> ranked;
  ranked.reserve(counts.size());
  for (auto& [w, n] : counts) {
    if (!vocab.contains(w)) ranked.emplace_back(w, n);
  }
  // std::map iteration is already lexicographic, so a stable sort on count
  // alone gives the tie-break.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > max_size) ranked.resize(max_size);
  for (auto& [w, n] : ranked) vocab.add(w);
  return vocab;
}

std::vector<TokenId> encode(std::string_view text, const Vocab& vocab,
                            TokenMode mode) {
  const auto words = tokenize(normalize(text), mode);
  std::vector<TokenId> ids;
  ids.reserve(words.size() + 2);
  ids.push_back(kBos);
  for (const auto& w : words) ids.push_back(vocab.id(w));
  ids.push_back(kEos);
  return ids;
}

std::string decode(std::span<const TokenId> ids, const Vocab& vocab,
                   TokenMode mode) {
  std::string out;
  bool first = true;
  for (TokenId id : ids) {
    if (id == kBos || id == kEos || id == kPad) continue;
    if (mode == TokenMode::Word && !first) out.push_back(' ');
    out += vocab.token(id);
    first = false;
  }
  return out;
}

void save_vocab(const Vocab& vocab, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot write vocabulary " + path.string());
  for (const auto& t : vocab.tokens()) f << t << '\n';
  if (!f) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

Vocab load_vocab(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot read vocabulary " + path.string());
  Vocab vocab;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    if (lineno < kNumReserved) {
      if (line != kReservedNames[lineno]) {
        throw Error(ErrorKind::Format, "vocabulary line " + std::to_string(lineno) +
                                           " must be " + kReservedNames[lineno]);
      }
    } else {
      vocab.add(line);
    }
    ++lineno;
  }
  if (lineno < kNumReserved) {
    throw Error(ErrorKind::Format, "vocabulary file is missing reserved tokens");
  }
  return vocab;
}

void save_token_dump(std::span<const TokenId> ids,
                     const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (TokenId id : ids) f << id << '\n';
}

void BatchPlan::validate() const {
  if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch size must be >= 1");
  if (seq_len < 2) throw Error(ErrorKind::InvalidArgument, "sequence length must be >= 2");
  if (stride < 1 || stride > seq_len) {
    throw Error(ErrorKind::InvalidArgument, "stride must lie in [1, seq_len]");
  }
}

std::size_t Batch::token_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::vector<Batch> batchify(std::span<const TokenId> ids, const BatchPlan& plan) {
  plan.validate();
  const std::size_t L = plan.seq_len;
  if (ids.size() < L + 1) {
    throw Error(ErrorKind::SequenceTooShort,
                "need at least " + std::to_string(L + 1) + " ids, got " +
                    std::to_string(ids.size()));
  }

  struct Window {
    std::size_t offset;
    std::size_t targets;  // number of real targets
  };
  std::vector<Window> windows;
  for (std::size_t o = 0; o + 1 < ids.size(); o += plan.stride) {
    const std::size_t avail = ids.size() - o - 1;
    if (avail >= L) {
      windows.push_back({o, L});
    } else {
      if (!plan.drop_last) windows.push_back({o, avail});
      break;
    }
  }

  std::vector<Batch> batches;
  for (std::size_t first = 0; first < windows.size(); first += plan.batch_size) {
    const std::size_t rows = std::min(plan.batch_size, windows.size() - first);
    if (rows < plan.batch_size && plan.drop_last) break;
    Batch batch;
    batch.rows = rows;
    batch.len = L;
    batch.inputs.assign(rows * L, kPad);
    batch.targets.assign(rows * L, kPad);
    batch.mask.assign(rows * L, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const Window& w = windows[first + r];
      for (std::size_t t = 0; t < L; ++t) {
        if (w.offset + t < ids.size()) batch.inputs[r * L + t] = ids[w.offset + t];
        if (t < w.targets) {
          batch.targets[r * L + t] = ids[w.offset + t + 1];
          batch.mask[r * L + t] = 1;
        }
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace sdgm::corpus
