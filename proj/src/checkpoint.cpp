#include "sdgm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sdgm/error.hpp"

namespace sdgm::ckpt {

namespace {

constexpr char kMagic[8] = {'S', 'D', 'G', 'M', 'C', 'K', 'P', 'T'};
constexpr char kGmmMagic[8] = {'S', 'D', 'G', 'M', 'G', 'M', 'M', '\0'};

template <class U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) out = static_cast<U>((out << 8) | ((v >> (8 * i)) & 0xFF));
    return out;
  }
  return v;
}

class Writer {
 public:
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u32(std::uint64_t v) {
    if (v > 0xFFFFFFFFu) throw Error(ErrorKind::Format, "value does not fit a u32 header field");
    const auto le = to_little(static_cast<std::uint32_t>(v));
    raw(&le, 4);
  }
  void f64(double v) {
    const auto le = to_little(std::bit_cast<std::uint64_t>(v));
    raw(&le, 8);
  }
  void f32(double v) {
    const auto le = to_little(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    raw(&le, 4);
  }
  void tensor(const Tensor& t) {
    for (double v : t.data) f32(v);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}
  void raw(void* p, std::size_t n) {
    if (pos_ + n > b_.size()) throw Error(ErrorKind::Format, "checkpoint is truncated");
    std::memcpy(p, b_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return to_little(v);
  }
  double f64() {
    std::uint64_t v;
    raw(&v, 8);
    return std::bit_cast<double>(to_little(v));
  }
  double f32() {
    std::uint32_t v;
    raw(&v, 4);
    return static_cast<double>(std::bit_cast<float>(to_little(v)));
  }
  void tensor(Tensor& t) {
    for (double& v : t.data) v = f32();
  }
  void expect_end() const {
    if (pos_ != b_.size()) throw Error(ErrorKind::Format, "trailing bytes after checkpoint");
  }

 private:
  std::string_view b_;
  std::size_t pos_ = 0;
};

template <class E>
E enum_field(std::uint32_t v, std::uint32_t count, const char* what) {
  if (v >= count) throw Error(ErrorKind::Format, std::string("bad ") + what + " field");
  return static_cast<E>(v);
}

void write_gmm_body(Writer& w, const gmm::GmmModel& g) {
  for (double p : g.weights) w.f32(p);
  w.tensor(g.means);
  w.tensor(g.variances);
}

gmm::GmmModel read_gmm_body(Reader& r, std::size_t M, std::size_t K) {
  gmm::GmmModel g;
  if (M == 0) return g;
  g.weights.resize(M);
  for (double& p : g.weights) p = r.f32();
  g.means = Tensor({M, K});
  g.variances = Tensor({M, K});
  r.tensor(g.means);
  r.tensor(g.variances);
  return g;
}

void check_magic(Reader& r, const char (&magic)[8], const char* what) {
  char m[8];
  r.raw(m, 8);
  if (std::memcmp(m, magic, 8) != 0) throw Error(ErrorKind::Format, std::string("not a ") + what);
  const auto version = r.u32();
  if (version != kVersion) {
    throw Error(ErrorKind::Format, std::string("unsupported ") + what + " version " + std::to_string(version));
  }
}

}  // namespace

std::string serialize(const Checkpoint& c) {
  c.model.validate();
  c.params.check_shapes(c.model);
  const std::size_t M = c.gmm.components();
  if (M > 0 && c.gmm.dim() != c.model.dict_size) {
    throw Error(ErrorKind::DimensionMismatch, "GMM dimension differs from the dictionary size");
  }
  Writer w;
  w.raw(kMagic, 8);
  w.u32(kVersion);
  const auto& m = c.model;
  for (std::size_t v : {m.vocab_size, m.d_model, m.dict_size, m.seq_len, m.conv_width, M}) w.u32(v);
  for (double v : {c.weights.alpha, c.weights.beta, c.weights.gamma, c.weights.delta}) w.f64(v);
  w.u32(static_cast<std::uint32_t>(m.activation));
  w.u32(static_cast<std::uint32_t>(m.head));
  w.u32(static_cast<std::uint32_t>(m.precision));
  w.u32(static_cast<std::uint32_t>(c.token_mode));
  w.u32(c.stft.n_fft);
  w.u32(c.stft.hop);
  w.u32(static_cast<std::uint32_t>(c.stft.window));
  w.u32(c.stft.center ? 1 : 0);
  c.params.for_each([&](std::string_view, ParamGroup, const Tensor& t) { w.tensor(t); });
  write_gmm_body(w, c.gmm);
  return w.take();
}

Checkpoint deserialize(std::string_view bytes) {
  Reader r(bytes);
  check_magic(r, kMagic, "SDGM checkpoint");
  Checkpoint c;
  auto& m = c.model;
  m.vocab_size = r.u32();
  m.d_model = r.u32();
  m.dict_size = r.u32();
  m.seq_len = r.u32();
  m.conv_width = r.u32();
  const std::size_t M = r.u32();
  c.weights.alpha = r.f64();
  c.weights.beta = r.f64();
  c.weights.gamma = r.f64();
  c.weights.delta = r.f64();
  m.activation = enum_field<Activation>(r.u32(), 3, "activation");
  m.head = enum_field<HeadKind>(r.u32(), 2, "head");
  m.precision = enum_field<Precision>(r.u32(), 2, "precision");
  c.token_mode = enum_field<corpus::TokenMode>(r.u32(), 2, "token mode");
  c.stft.n_fft = r.u32();
  c.stft.hop = r.u32();
  c.stft.window = enum_field<loss::WindowKind>(r.u32(), 2, "window");
  c.stft.center = enum_field<std::uint32_t>(r.u32(), 2, "center") != 0;
  try {
    m.validate();
    c.weights.validate();
    c.stft.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Format, std::string("invalid checkpoint header: ") + e.what());
  }
  c.params = ModelParams::zeros(m);
  c.params.for_each([&](std::string_view, ParamGroup, Tensor& t) { r.tensor(t); });
  c.gmm = read_gmm_body(r, M, m.dict_size);
  r.expect_end();
  return c;
}

void save(const Checkpoint& c, const std::filesystem::path& path) { write_file(path, serialize(c)); }

Checkpoint load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

std::string serialize_gmm(const gmm::GmmModel& g) {
  if (g.empty()) throw Error(ErrorKind::InvalidArgument, "cannot export an empty GMM");
  Writer w;
  w.raw(kGmmMagic, 8);
  w.u32(kVersion);
  w.u32(g.components());
  w.u32(g.dim());
  write_gmm_body(w, g);
  return w.take();
}

gmm::GmmModel deserialize_gmm(std::string_view bytes) {
  Reader r(bytes);
  check_magic(r, kGmmMagic, "SDGM GMM blob");
  const std::size_t M = r.u32();
  const std::size_t K = r.u32();
  if (M == 0 || K == 0) throw Error(ErrorKind::Format, "GMM blob has no components");
  auto g = read_gmm_body(r, M, K);
  r.expect_end();
  return g;
}

void save_gmm(const gmm::GmmModel& g, const std::filesystem::path& path) {
  write_file(path, serialize_gmm(g));
}

gmm::GmmModel load_gmm(const std::filesystem::path& path) { return deserialize_gmm(read_file(path)); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::Io, "cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorKind::Io, "short write to " + path.string());
}

}  // namespace sdgm::ckpt
