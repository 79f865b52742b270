// Trajectory/statistics serialization: comma-separated samples with a header
// row (rho entries row-major, 17 significant digits for bit-exact
// round-trips) and structured JSON summaries.
#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ensemble.hpp"
#include "integrate.hpp"

namespace qmeas {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shortest exact decimal is not needed; 17 significant digits round-trip
// any double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string samples_header(const TrajectoryRecord& record) {
  std::string h = "s";
  for (int r = 0; r < record.dim; ++r)
    for (int c = 0; c < record.dim; ++c) {
      const std::string tag = "rho" + std::to_string(r) + std::to_string(c);
      h += "," + tag + "_re," + tag + "_im";
    }
  if (record.dim > 0) h += ",purity";
  for (int i = 0; i < record.diagonal_count; ++i) h += ",d" + std::to_string(i);
  if (record.has_weights)
    for (int i = 0; i < record.diagonal_count; ++i) h += ",w" + std::to_string(i);
  if (record.has_feedback) h += ",feedback";
  if (record.has_fidelity) h += ",fidelity";
  return h;
}

inline void emit_samples(const TrajectoryRecord& record, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open samples file '" + path.string() + "' for writing");
  out << samples_header(record) << "\n";
  for (const auto& sample : record.samples) {
    out << format_double(sample.s);
    for (int r = 0; r < record.dim; ++r)
      for (int c = 0; c < record.dim; ++c) {
        const Complex v = sample.rho(r, c);
        out << "," << format_double(v.real()) << "," << format_double(v.imag());
      }
    if (record.dim > 0) out << "," << format_double(sample.purity);
    for (int i = 0; i < record.diagonal_count; ++i) out << "," << format_double(sample.diagonals(i));
    if (record.has_weights)
      for (int i = 0; i < record.diagonal_count; ++i) out << "," << format_double(sample.weights(i));
    if (record.has_feedback) out << "," << format_double(sample.feedback_shift);
    if (record.has_fidelity) out << "," << format_double(sample.fidelity);
    out << "\n";
  }
  if (!out) throw IoError("failed while writing samples to '" + path.string() + "'");
}

// Mean-trajectory record of an ensemble on the shared sample grid; purity
// and diagonals are those of the pointwise mean state.
inline TrajectoryRecord mean_trajectory_record(const EnsembleStatistics& stats,
                                               const ProjectorSet& set) {
  TrajectoryRecord record;
  record.dim = stats.mean_states.empty() ? set.dim() : static_cast<int>(stats.mean_states.front().rows());
  record.diagonal_count = set.size();
  record.samples.reserve(stats.mean_states.size());
  for (std::size_t i = 0; i < stats.mean_states.size(); ++i) {
    TrajectorySample sample;
    sample.s = stats.mean_times[i];
    sample.rho = stats.mean_states[i];
    sample.purity = purity(sample.rho);
    sample.diagonals = diagonals(sample.rho, set);
    record.samples.push_back(std::move(sample));
  }
  return record;
}

inline void emit_summary(const nlohmann::json& summary, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open summary file '" + path.string() + "' for writing");
  out << summary.dump(2) << "\n";
  if (!out) throw IoError("failed while writing summary to '" + path.string() + "'");
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed while reading '" + path.string() + "'");
  return text;
}

}  // namespace qmeas
