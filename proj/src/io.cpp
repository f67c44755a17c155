#include "pobds/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace pobds {

namespace {

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::string hex_state(const BooleanState& x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%llx", static_cast<unsigned long long>(x.encode()));
  return buf;
}

}  // namespace

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

NamedGrnModel load_grn_model(const std::string& path) {
  const nlohmann::json j = load_json(path);
  const int d = j.at("d").get<int>();
  auto a = j.at("a").get<std::vector<std::vector<int>>>();
  auto b = j.at("b").get<std::vector<double>>();
  const double p = j.at("p").get<double>();
  std::vector<std::string> genes;
  if (j.contains("genes")) {
    genes = j.at("genes").get<std::vector<std::string>>();
    if (static_cast<int>(genes.size()) != d)
      throw std::runtime_error(path + ": gene name count does not match d");
  } else {
    for (int g = 1; g <= d; ++g) genes.push_back("gene" + std::to_string(g));
  }
  if (static_cast<int>(a.size()) != d)
    throw std::runtime_error(path + ": interaction matrix does not match d");
  return {GrnModel(std::move(a), std::move(b), p), std::move(genes)};
}

RnaSeqModel load_rnaseq_model(const std::string& path) {
  const nlohmann::json j = load_json(path);
  return {j.at("s").get<double>(), j.at("mu").get<double>(),
          j.at("delta").get<std::vector<double>>(),
          j.at("phi").get<std::vector<double>>()};
}

BankSpec load_bank_spec(const std::string& path) {
  const nlohmann::json j = load_json(path);
  if (!j.is_array()) throw std::runtime_error(path + ": bank spec must be a JSON array");
  BankSpec spec;
  for (const auto& entry : j) {
    ParameterVector theta;
    if (entry.contains("a")) {
      for (const auto& triple : entry.at("a")) {
        if (!triple.is_array() || triple.size() != 3)
          throw std::runtime_error(path + ": interaction override must be [i, j, value]");
        theta.add(ParameterVector::interaction(triple[0].get<int>() - 1,
                                               triple[1].get<int>() - 1,
                                               triple[2].get<int>()));
      }
    }
    if (entry.contains("p"))
      theta.add(ParameterVector::noise_intensity(entry.at("p").get<double>()));
    if (entry.contains("mu"))
      theta.add(ParameterVector::baseline(entry.at("mu").get<double>()));
    if (entry.contains("s"))
      theta.add(ParameterVector::depth(entry.at("s").get<double>()));
    spec.labels.push_back(entry.contains("label") ? entry.at("label").get<std::string>()
                                                  : "candidate_" + std::to_string(spec.candidates.size()));
    spec.candidates.push_back(std::move(theta));
  }
  return spec;
}

std::vector<ReadCountVector> read_observations_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  int columns = 1;
  for (const char c : line)
    if (c == ',') ++columns;

  std::vector<ReadCountVector> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::uint32_t> counts;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) {
      const long long v = std::stoll(cell);
      if (v < 0) throw std::runtime_error(path + ": negative read count");
      counts.push_back(static_cast<std::uint32_t>(v));
    }
    if (static_cast<int>(counts.size()) != columns)
      throw std::runtime_error(path + ": ragged row");
    out.emplace_back(std::move(counts));
  }
  return out;
}

void write_observations_csv(const std::string& path, const std::vector<std::string>& genes,
                            std::span<const ReadCountVector> observations) {
  std::ofstream out = open_out(path);
  for (std::size_t g = 0; g < genes.size(); ++g)
    out << (g ? "," : "") << genes[g];
  out << "\n";
  for (const ReadCountVector& y : observations) {
    for (int g = 0; g < y.dim(); ++g) out << (g ? "," : "") << y[g];
    out << "\n";
  }
}

void write_states_csv(const std::string& path, const std::vector<std::string>& genes,
                      std::span<const BooleanState> states, int first_step) {
  std::ofstream out = open_out(path);
  out << "k";
  for (const std::string& g : genes) out << "," << g;
  out << "\n";
  for (std::size_t i = 0; i < states.size(); ++i) {
    out << first_step + static_cast<int>(i);
    for (int g = 0; g < states[i].dim(); ++g) out << "," << (states[i].bit(g) ? 1 : 0);
    out << "\n";
  }
}

void write_filter_trace_csv(const std::string& path, const FilterTrace& trace) {
  std::ofstream out = open_out(path);
  out << "k,log_beta_norm,mse,estimate_bits\n";
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    const FilterStep& step = trace.steps[k];
    out << k + 1 << "," << format_double(step.log_beta_norm) << ","
        << format_double(step.mse) << "," << hex_state(step.estimate) << "\n";
  }
}

void write_smoother_trace_csv(const std::string& path, const SmootherTrace& trace) {
  std::ofstream out = open_out(path);
  out << "k,log_beta_norm,mse,estimate_bits\n";
  for (std::size_t k = 0; k < trace.estimates.size(); ++k) {
    out << k + 1 << "," << format_double(trace.filter.steps[k].log_beta_norm) << ","
        << format_double(trace.mses[k]) << "," << hex_state(trace.estimates[k]) << "\n";
  }
}

void write_apf_trace_csv(const std::string& path, const ApfTrace& trace) {
  std::ofstream out = open_out(path);
  out << "k,log_beta_norm,mse,estimate_bits,N,F_k\n";
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    const ApfStep& step = trace.steps[k];
    out << k + 1 << "," << format_double(step.log_beta_hat) << ","
        << format_double(step.mse) << "," << hex_state(step.estimate) << ","
        << step.ensemble.size() << "," << step.unique.size() << "\n";
  }
}

void write_apf_smoother_trace_csv(const std::string& path, const ApfTrace& forward,
                                  const ApfSmootherResult& smoother) {
  std::ofstream out = open_out(path);
  out << "k,log_beta_norm,mse,estimate_bits,N,F_k\n";
  for (std::size_t k = 1; k < smoother.estimates.size(); ++k) {
    const ApfStep& step = forward.steps[k - 1];
    out << k << "," << format_double(step.log_beta_hat) << ","
        << format_double(smoother.mses[k]) << "," << hex_state(smoother.estimates[k])
        << "," << step.ensemble.size() << "," << step.unique.size() << "\n";
  }
}

void write_parameters_json(const std::string& path, const ParameterVector& theta) {
  nlohmann::json j = nlohmann::json::array();
  for (int i = 0; i < theta.size(); ++i) {
    j.push_back({{"name", theta.name(i)},
                 {"value", theta[i].value},
                 {"lower", theta[i].lower},
                 {"upper", theta[i].upper}});
  }
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
}

void write_em_report_csv(const std::string& path, const ParameterVector& theta,
                         const std::vector<EmIterationRecord>& history) {
  std::ofstream out = open_out(path);
  out << "iteration";
  for (int i = 0; i < theta.size(); ++i) out << "," << theta.name(i);
  out << ",q_hat,max_abs_change,forward_log_likelihood\n";
  for (std::size_t n = 0; n < history.size(); ++n) {
    out << n + 1;
    for (const double v : history[n].theta) out << "," << format_double(v);
    out << "," << format_double(history[n].q_value) << ","
        << format_double(history[n].max_abs_change) << ","
        << format_double(history[n].forward_log_likelihood) << "\n";
  }
}

void write_plot_data_csv(const std::string& path, std::span<const PlotPoint> points) {
  std::ofstream out = open_out(path);
  out << "x,y,series\n";
  for (const PlotPoint& p : points)
    out << format_double(p.x) << "," << format_double(p.y) << "," << p.series << "\n";
}

}  // namespace pobds
