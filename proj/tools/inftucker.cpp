// Command-line front end: fit, predict, eval, synth.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "inftucker/config.hpp"
#include "inftucker/errors.hpp"
#include "inftucker/eval.hpp"
#include "inftucker/inference.hpp"
#include "inftucker/io.hpp"
#include "inftucker/naive_oracle.hpp"
#include "inftucker/prediction.hpp"

using namespace inftucker;

namespace {

constexpr double kOracleTolerance = 1e-6;

ExperimentSpec load_spec(const std::string& path, const std::optional<std::uint64_t>& seed) {
  ExperimentSpec spec = load_config(path);
  if (seed) {
    spec.seed = *seed;
    spec.model.seed = *seed;
  }
  return spec;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

double rel_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double worst = 0.0;
  for (Index i = 0; i < a.size(); ++i) worst = std::max(worst, rel_diff(a[i], b[i]));
  return worst;
}

// Recomputes the final posterior, M-step objective/gradient and predictions
// densely and returns the largest relative divergence from the fast path.
double oracle_divergence(const FittedModel& model) {
  const auto& grams = model.mode_grams;
  const double rho = model.config.rho();
  const double tau = model.config.process == ProcessKind::t_process ? model.state.tau : 1.0;
  const auto fast = e_step_m(model.state.target, grams, tau, rho);
  const auto dense = oracle::dense_posterior(model.state.target, grams, tau, rho);
  double worst = rel_diff(fast.mu.values(), dense.mu_vec.cast<double>());

  MStepStats stats{fast.mu, fast.ups_diag, {}, tau};
  for (const auto& g : grams) stats.basis.push_back(g.eigvecs);
  const auto fast_f = m_step_evaluate(model.factors, stats, model.config);
  const auto dense_f = oracle::dense_objective_and_gradient(model.factors, dense.upsilon, dense.mu_vec, tau,
                                                            model.config);
  worst = std::max(worst, rel_diff(fast_f.value, dense_f.value));
  worst = std::max(worst, rel_diff(flatten_factors(fast_f.gradient), flatten_factors(dense_f.gradient)));

  const BatchPredictor predictor(model, rho);
  for (Index i = 0; i < model.state.target.size(); ++i) {
    const auto d = oracle::dense_predictive(model.state.target, grams, model.tau_star, rho, i);
    const auto f = predictor.moments(i);
    worst = std::max({worst, rel_diff(f.mean, d.mean), rel_diff(f.variance, d.variance)});
  }
  return worst;
}

std::vector<Index> read_index_list(const std::string& path, const Dims& dims) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open index list '" + path + "'");
  std::vector<Index> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ss(line);
    std::vector<Index> idx;
    for (std::string tok; ss >> tok;) {
      try {
        std::size_t used = 0;
        idx.push_back(std::stoll(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::logic_error&) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": malformed index '" + tok + "'");
      }
    }
    if (idx.empty()) continue;
    try {
      out.push_back(vec_index(MultiIndex(idx), dims) - 1);
    } catch (const std::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_predictions(const std::string& path, const FittedModel& model, const std::vector<Prediction>& preds) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  const bool probit = model.config.noise == NoiseModel::probit;
  out << (probit ? "# indices probability\n" : "# indices mean variance\n");
  for (const auto& p : preds) {
    for (Index i : multi_index_of(p.offset + 1, model.dims()).indices) out << i << ' ';
    if (probit) {
      out << format_g17(p.probability) << '\n';
    } else {
      out << format_g17(p.mean) << ' ' << format_g17(p.variance) << '\n';
    }
  }
  if (!out) throw ParseError("failed writing '" + path + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Infinite Tucker decomposition: fit, predict, evaluate, synthesize"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Override the config seed");

  std::string data_path, config_path, out_path, model_path, indices;
  bool run_oracle = false;

  auto* fit_cmd = app.add_subcommand("fit", "Fit a model to a tensor file");
  fit_cmd->add_option("--data", data_path, "Tensor file")->required();
  fit_cmd->add_option("--config", config_path, "Config file")->required();
  fit_cmd->add_option("--out", out_path, "Model output path")->required();
  fit_cmd->add_flag("--oracle", run_oracle, "Cross-check against dense computations (n <= 64)");
  fit_cmd->fallthrough();

  auto* predict_cmd = app.add_subcommand("predict", "Predict cells with a fitted model");
  predict_cmd->add_option("--model", model_path, "Model file")->required();
  predict_cmd->add_option("--indices", indices, "Index list file, or 'all-missing'")->required();
  predict_cmd->add_option("--out", out_path, "Prediction output path")->required();
  predict_cmd->fallthrough();

  auto* eval_cmd = app.add_subcommand("eval", "Run a cross-validated experiment");
  eval_cmd->add_option("--config", config_path, "Config file")->required();
  eval_cmd->fallthrough();

  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic data");
  synth_cmd->add_option("--config", config_path, "Config file")->required();
  synth_cmd->add_option("--out", out_path, "Output prefix")->required();
  synth_cmd->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (fit_cmd->parsed()) {
      const ExperimentSpec spec = load_spec(config_path, seed);
      const TensorFile data = read_tensor(data_path);
      const FittedModel model = fit(data.values, data.mask, spec.model);
      if (run_oracle) {
        if (data.values.size() > oracle::kGradientCap) {
          std::cerr << "oracle check skipped: n = " << data.values.size() << " exceeds " << oracle::kGradientCap
                    << "\n";
        } else {
          const double d = oracle_divergence(model);
          std::cout << "oracle max relative divergence " << format_g17(d) << "\n";
          if (!(d <= kOracleTolerance)) throw NumericalError("oracle divergence exceeds tolerance");
        }
      }
      save_model(out_path, model);
    } else if (predict_cmd->parsed()) {
      const FittedModel model = load_model(model_path);
      const std::vector<Index> cells =
          indices == "all-missing" ? model.mask.complement().offsets() : read_index_list(indices, model.dims());
      write_predictions(out_path, model, predict_cells(model, cells));
    } else if (eval_cmd->parsed()) {
      const ExperimentSpec spec = load_spec(config_path, seed);
      std::cout << format_report(run_experiment(spec));
    } else if (synth_cmd->parsed()) {
      const ExperimentSpec spec = load_spec(config_path, seed);
      SeededRandomSource rng(spec.seed);
      const SynthData d = synth_generate(spec, rng);
      write_tensor(out_path + ".y.tns", d.y, d.observed);
      write_tensor(out_path + ".truth.tns", d.truth, ObservationMask::full(d.truth.dims()));
      DenseTensor indicator(d.y.dims());
      for (Index i = 0; i < indicator.size(); ++i) indicator[i] = d.observed.observed(i) ? 1.0 : 0.0;
      write_tensor(out_path + ".mask.tns", indicator, ObservationMask::full(indicator.dims()));
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
