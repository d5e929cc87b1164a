#pragma once

// Run outputs: per-round metrics rows, their CSV rendering, and atomic file
// writes. Doubles are printed with %.17g so values round-trip exactly and
// reruns of the same config produce byte-identical files.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/core.hpp"

namespace fedsim {

struct RoundRecord {
  int round = 0;
  double mean_test_accuracy = 0.0;
  double std_test_accuracy = 0.0;
  std::optional<double> delta;         // fedacs threshold, when one was computed
  int n_participants = 0;
  std::optional<double> f_lambda;      // with diagnostics on
  std::optional<double> grad_norm_sq;  // with diagnostics on
};

struct SeedSeries {
  std::uint64_t seed = 0;
  std::vector<RoundRecord> rounds;
  double final_accuracy = 0.0;
};

struct MetricsSeries {
  std::vector<SeedSeries> per_seed;
  double final_accuracy_mean = 0.0;
  double final_accuracy_std = 0.0;  // population std over seeds
};

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_optional(const std::optional<double>& v) {
  return v ? fmt_double(*v) : std::string();
}

inline std::string metrics_csv(const SeedSeries& series) {
  std::string out =
      "round,mean_test_accuracy,std_test_accuracy,delta,n_participants,"
      "f_lambda,grad_norm_sq\n";
  for (const auto& r : series.rounds) {
    out += std::to_string(r.round);
    out += ',';
    out += fmt_double(r.mean_test_accuracy);
    out += ',';
    out += fmt_double(r.std_test_accuracy);
    out += ',';
    out += fmt_optional(r.delta);
    out += ',';
    out += std::to_string(r.n_participants);
    out += ',';
    out += fmt_optional(r.f_lambda);
    out += ',';
    out += fmt_optional(r.grad_norm_sq);
    out += '\n';
  }
  return out;
}

inline void aggregate_final_accuracy(MetricsSeries& m) {
  require(!m.per_seed.empty(), "aggregate_final_accuracy: no seed series");
  double sum = 0.0;
  for (const auto& s : m.per_seed) sum += s.final_accuracy;
  m.final_accuracy_mean = sum / m.per_seed.size();
  double sq = 0.0;
  for (const auto& s : m.per_seed) {
    const double d = s.final_accuracy - m.final_accuracy_mean;
    sq += d * d;
  }
  m.final_accuracy_std = std::sqrt(sq / m.per_seed.size());
}

// Write-then-rename so readers never observe a half-written file and failed
// runs leave no partial output behind.
inline void atomic_write_file(const std::filesystem::path& path,
                              const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw FormatError("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw FormatError("rename failed for: " + path.string());
  }
}

}  // namespace fedsim
