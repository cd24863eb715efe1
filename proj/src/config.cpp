#include "sdgm/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "sdgm/checkpoint.hpp"
#include "sdgm/error.hpp"

namespace sdgm::config {

namespace {

using train::TrainConfig;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw Error(ErrorKind::InvalidArgument,
              "bad value '" + std::string(value) + "' for key '" + std::string(key) + "'");
}

std::size_t to_count(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
  return out;
}

double to_real(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
  return out;
}

bool to_flag(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  bad_value(key, v);
}

std::string fmt_real(double v) {
  // shortest text that parses back to the same double
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Entry {
  const char* key;
  std::function<void(TrainConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define SDGM_COUNT(name, field)                                                               \
  Entry {                                                                                     \
    name, [](TrainConfig& c, std::string_view k, std::string_view v) { c.field = to_count(k, v); }, \
        [](const TrainConfig& c) { return std::to_string(c.field); }                           \
  }
#define SDGM_REAL(name, field)                                                               \
  Entry {                                                                                    \
    name, [](TrainConfig& c, std::string_view k, std::string_view v) { c.field = to_real(k, v); }, \
        [](const TrainConfig& c) { return fmt_real(c.field); }                                \
  }
#define SDGM_FLAG(name, field)                                                               \
  Entry {                                                                                    \
    name, [](TrainConfig& c, std::string_view k, std::string_view v) { c.field = to_flag(k, v); }, \
        [](const TrainConfig& c) { return std::string(c.field ? "true" : "false"); }          \
  }
#define SDGM_ENUM(name, field, parse)                                                        \
  Entry {                                                                                    \
    name, [](TrainConfig& c, std::string_view, std::string_view v) { c.field = parse(v); },   \
        [](const TrainConfig& c) { return std::string(to_string(c.field)); }                  \
  }

const std::vector<Entry>& table() {
  using namespace sdgm;
  using corpus::to_string;
  using gmm::to_string;
  using loss::to_string;
  using optim::to_string;
  using sdgm::to_string;
  using train::to_string;
  static const std::vector<Entry> entries = {
      SDGM_ENUM("token_mode", token_mode, corpus::parse_token_mode),
      SDGM_COUNT("max_vocab", max_vocab),
      SDGM_COUNT("d_model", model.d_model),
      SDGM_COUNT("dict_size", model.dict_size),
      SDGM_COUNT("seq_len", model.seq_len),
      SDGM_COUNT("conv_width", model.conv_width),
      SDGM_ENUM("activation", model.activation, parse_activation),
      SDGM_ENUM("head", model.head, parse_head_kind),
      SDGM_ENUM("precision", model.precision, parse_precision),
      SDGM_COUNT("batch_size", plan.batch_size),
      SDGM_COUNT("stride", plan.stride),
      SDGM_FLAG("drop_last", plan.drop_last),
      SDGM_REAL("lr", optim.lr),
      SDGM_REAL("beta1", optim.beta1),
      SDGM_REAL("beta2", optim.beta2),
      SDGM_REAL("adam_eps", optim.eps),
      SDGM_REAL("weight_decay", optim.weight_decay),
      SDGM_ENUM("decay_mode", optim.decay_mode, optim::parse_decay_mode),
      SDGM_REAL("clip_norm", optim.clip_norm),
      SDGM_COUNT("epochs", optim.epochs),
      SDGM_COUNT("patience", optim.patience),
      SDGM_REAL("alpha", weights.alpha),
      SDGM_REAL("beta", weights.beta),
      SDGM_REAL("gamma", weights.gamma),
      SDGM_REAL("delta", weights.delta),
      SDGM_COUNT("n_fft", stft.n_fft),
      SDGM_COUNT("hop", stft.hop),
      SDGM_ENUM("window", stft.window, loss::parse_window),
      SDGM_FLAG("center", stft.center),
      SDGM_COUNT("gmm_components", gmm_components),
      SDGM_COUNT("gmm_refit_epochs", gmm_refit_epochs),
      SDGM_ENUM("gmm_bank", gmm_bank, train::parse_bank_source),
      SDGM_COUNT("gmm_bank_max", gmm_bank_max),
      SDGM_COUNT("em_max_iters", em.max_iters),
      SDGM_REAL("em_tol", em.tol),
      SDGM_REAL("em_var_floor", em.var_floor),
      SDGM_ENUM("em_init", em.init, gmm::parse_em_init),
      SDGM_COUNT("em_subsample", em.init_subsample),
      SDGM_REAL("val_fraction", val_fraction),
      SDGM_COUNT("threads", threads),
      SDGM_COUNT("gen_budget", gen_budget),
      SDGM_COUNT("seed", seed),
  };
  return entries;
}

#undef SDGM_COUNT
#undef SDGM_REAL
#undef SDGM_FLAG
#undef SDGM_ENUM

}  // namespace

void apply(TrainConfig& cfg, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  for (const auto& e : table()) {
    if (key == e.key) {
      e.set(cfg, key, value);
      return;
    }
  }
  throw Error(ErrorKind::InvalidArgument, "unknown config key '" + std::string(key) + "'");
}

void apply_text(TrainConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::InvalidArgument,
                  "config line " + std::to_string(line_no) + " is not key = value");
    }
    apply(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
}

void load(TrainConfig& cfg, const std::filesystem::path& path) {
  apply_text(cfg, ckpt::read_file(path));
}

std::string dump(const TrainConfig& cfg) {
  std::ostringstream out;
  for (const auto& e : table()) out << e.key << " = " << e.get(cfg) << '\n';
  return out.str();
}

std::vector<std::string> keys() {
  std::vector<std::string> out;
  for (const auto& e : table()) out.emplace_back(e.key);
  return out;
}

}  // namespace sdgm::config
