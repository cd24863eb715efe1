#include "sdgm/report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "sdgm/checkpoint.hpp"
#include "sdgm/error.hpp"

namespace sdgm::report {

namespace {

constexpr const char* kMetricsHeader =
    "epoch,train_total,train_time,train_freq,train_nll,train_prior,val_ppl,val_fidelity,sec";

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const auto c = line.find(',');
    out.push_back(line.substr(0, c));
    if (c == std::string_view::npos) break;
    line = line.substr(c + 1);
  }
  return out;
}

double parse_real(std::string_view s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error(ErrorKind::Format, "bad number '" + std::string(s) + "' in metric log");
  }
  return v;
}

}  // namespace

std::string format_real(double v) {
  // shortest text that parses back to the same double
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_metrics_csv(std::span<const train::EpochMetrics> rows, const std::filesystem::path& path) {
  std::ostringstream out;
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    out << r.epoch << ',' << format_real(r.train_total) << ',' << format_real(r.train_time) << ','
        << format_real(r.train_freq) << ',' << format_real(r.train_nll) << ','
        << format_real(r.train_prior) << ',' << format_real(r.val_ppl) << ','
        << format_real(r.val_fidelity) << ',' << format_real(r.sec) << '\n';
  }
  ckpt::write_file(path, out.str());
}

void write_loss_csv(std::span<const train::StepLog> rows, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "step,total,time,freq,nll,prior,tokens_per_sec\n";
  for (const auto& r : rows) {
    out << r.step << ',' << format_real(r.report.total) << ',' << format_real(r.report.time) << ','
        << format_real(r.report.freq) << ',' << format_real(r.report.nll) << ','
        << format_real(r.report.prior) << ',' << format_real(r.tokens_per_sec) << '\n';
  }
  ckpt::write_file(path, out.str());
}

void write_bench_csv(std::span<const train::BenchRow> rows, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "L,forward_ms,decode_ms,mem_bytes\n";
  for (const auto& r : rows) {
    out << r.length << ',' << format_real(r.forward_ms) << ',' << format_real(r.decode_ms) << ','
        << r.mem_bytes << '\n';
  }
  ckpt::write_file(path, out.str());
}

std::vector<train::EpochMetrics> read_metrics_csv(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::Io, "metric log " + path.string() + " does not exist");
  }
  std::istringstream in(ckpt::read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw Error(ErrorKind::Format, path.string() + " is not a metric log");
  }
  std::vector<train::EpochMetrics> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_commas(line);
    if (f.size() != 9) throw Error(ErrorKind::Format, "metric row has " + std::to_string(f.size()) + " fields");
    train::EpochMetrics m;
    m.epoch = static_cast<std::size_t>(parse_real(f[0]));
    m.train_total = parse_real(f[1]);
    m.train_time = parse_real(f[2]);
    m.train_freq = parse_real(f[3]);
    m.train_nll = parse_real(f[4]);
    m.train_prior = parse_real(f[5]);
    m.val_ppl = parse_real(f[6]);
    m.val_fidelity = parse_real(f[7]);
    m.sec = parse_real(f[8]);
    rows.push_back(m);
  }
  return rows;
}

std::string emit_report(const std::filesystem::path& metrics_csv, double tokens_per_sec) {
  const auto rows = read_metrics_csv(metrics_csv);
  if (rows.empty()) throw Error(ErrorKind::Format, metrics_csv.string() + " has no epochs");
  const auto& last = rows.back();
  std::ostringstream out;
  out << "epochs        " << rows.size() << '\n'
      << "val_ppl       " << format_real(last.val_ppl) << '\n'
      << "val_fidelity  " << format_real(last.val_fidelity) << '\n'
      << "tokens_per_sec " << format_real(tokens_per_sec) << '\n'
      << "metrics       " << metrics_csv.string() << '\n';
  return out.str();
}

}  // namespace sdgm::report
