#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sdgm/trainer.hpp"

namespace sdgm::report {

// Reals are written in shortest round-trip form, so a CSV reproduces the
// doubles exactly.
void write_metrics_csv(std::span<const train::EpochMetrics> rows, const std::filesystem::path& path);
void write_loss_csv(std::span<const train::StepLog> rows, const std::filesystem::path& path);
void write_bench_csv(std::span<const train::BenchRow> rows, const std::filesystem::path& path);

std::vector<train::EpochMetrics> read_metrics_csv(const std::filesystem::path& path);

// Human-readable summary of a metric log: epoch count, final validation
// perplexity and fidelity, and the supplied generation throughput. Throws Io
// when the log is missing, Format when it has no rows.
std::string emit_report(const std::filesystem::path& metrics_csv, double tokens_per_sec);

std::string format_real(double v);

}  // namespace sdgm::report
