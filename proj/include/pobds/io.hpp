#pragma once

#include <string>
#include <vector>

#include "pobds/adaptive.hpp"
#include "pobds/exact.hpp"
#include "pobds/grn_model.hpp"
#include "pobds/particle.hpp"
#include "pobds/rnaseq_model.hpp"

namespace pobds {

struct NamedGrnModel {
  GrnModel model;
  std::vector<std::string> genes;
};

// Network definition file: JSON with fields d, a (d x d integer matrix),
// b (length-d array of -0.5/+0.5), p, and optional gene names.
NamedGrnModel load_grn_model(const std::string& path);

// Observation model file: JSON with s, mu, delta[], phi[].
RnaSeqModel load_rnaseq_model(const std::string& path);

// Candidate bank file: JSON array of parameter overrides applied to a base
// model, e.g. [{"label": "a42=-1", "a": [[4, 2, -1]]}, ...]. Gene indices
// are 1-based as in the model files.
struct BankSpec {
  std::vector<ParameterVector> candidates;
  std::vector<std::string> labels;
};
BankSpec load_bank_spec(const std::string& path);

// Time-series data file: CSV, one row per time step, d integer columns,
// header with gene names.
std::vector<ReadCountVector> read_observations_csv(const std::string& path);
void write_observations_csv(const std::string& path, const std::vector<std::string>& genes,
                            std::span<const ReadCountVector> observations);

// State path CSV: step index plus one 0/1 column per gene.
void write_states_csv(const std::string& path, const std::vector<std::string>& genes,
                      std::span<const BooleanState> states, int first_step);

// Filter/smoother trace CSVs: k, log_beta_norm, mse, estimate_bits
// (hex-encoded state); particle traces add N and F_k.
void write_filter_trace_csv(const std::string& path, const FilterTrace& trace);
void write_smoother_trace_csv(const std::string& path, const SmootherTrace& trace);
void write_apf_trace_csv(const std::string& path, const ApfTrace& trace);
void write_apf_smoother_trace_csv(const std::string& path, const ApfTrace& forward,
                                  const ApfSmootherResult& smoother);

void write_parameters_json(const std::string& path, const ParameterVector& theta);
void write_em_report_csv(const std::string& path, const ParameterVector& theta,
                         const std::vector<EmIterationRecord>& history);

// Generic plot-data CSV: x, y, series.
struct PlotPoint {
  double x;
  double y;
  std::string series;
};
void write_plot_data_csv(const std::string& path, std::span<const PlotPoint> points);

// Shortest-exact decimal formatting used by every CSV writer, so identical
// configurations produce byte-identical outputs.
std::string format_double(double value);

}  // namespace pobds
