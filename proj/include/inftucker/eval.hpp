#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "inftucker/inference.hpp"
#include "inftucker/mask.hpp"
#include "inftucker/random.hpp"

namespace inftucker {

enum class Generator { gp_latent, t_latent, rank1, file };

std::string to_string(Generator generator);
Generator generator_from_string(const std::string& name);

struct ExperimentSpec {
  Dims dims;
  Generator generator = Generator::gp_latent;
  std::string data_path;  // Generator::file
  double holdout_fraction = 0.2;
  int folds = 5;
  int repeats = 1;
  std::uint64_t seed = 0;
  bool normalize = false;

  // Ground truth for the synthetic generators.
  Index gen_rank = 3;
  KernelSpec gen_kernel{};
  double gen_sigma = 0.1;  // gaussian observation noise
  double gen_scale = 1.0;  // multiplies the latent tensor
  double gen_nu = 10.0;    // t_latent

  ModelConfig model;
  std::vector<double> gamma_grid;
  std::vector<double> lambda_grid;
  std::vector<Index> rank_grid;

  void validate() const;
};

struct SynthData {
  DenseTensor y;
  DenseTensor truth;         // latent tensor
  ObservationMask observed;  // cells left visible
  ObservationMask holdout;   // complement of observed
};

/// Latent tensor from the experiment generator (no noise).
DenseTensor sample_latent(const ExperimentSpec& spec, SeededRandomSource& rng);

/// gaussian: m + gen_sigma * e; probit: 1{m + e > 0}.
DenseTensor apply_noise(const DenseTensor& latent, NoiseModel noise, double sigma, SeededRandomSource& rng);

/// Uniformly chosen set of round(fraction * |candidates|) cells from `candidates`.
ObservationMask sample_holdout(const ObservationMask& candidates, double fraction, SeededRandomSource& rng);

SynthData synth_generate(const ExperimentSpec& spec, SeededRandomSource& rng);

double mse(std::span<const double> pred, std::span<const double> truth);
/// Mann-Whitney AUC; ties between a positive and a negative count 1/2.
double auc(std::span<const double> scores, std::span<const int> labels);

struct CvSplit {
  int repeat = 0;
  int fold = 0;
  ObservationMask train;
  ObservationMask test;
};

/// For each repeat, shuffles the observed cells with a seed derived from
/// (seed, repeat) and deals them round-robin into `folds` test sets.
std::vector<CvSplit> cv_splits(const ObservationMask& mask, int folds, int repeats, std::uint64_t seed);

struct Normalized {
  DenseTensor y;
  double mean = 0.0;
  double std = 1.0;
};

/// Standardizes using the mean and population std of the observed cells.
Normalized normalize_tensor(const DenseTensor& y, const ObservationMask& mask);
DenseTensor denormalize_tensor(const DenseTensor& y, double mean, double std);

struct FoldRecord {
  int repeat = 0;
  int fold = 0;
  double gamma = 0.0;
  double lambda = 0.0;
  Index rank = 0;
  double metric = 0.0;
};

struct ExperimentReport {
  std::string metric_name;  // "mse" or "auc"
  std::vector<FoldRecord> folds;
  double mean = 0.0;
  double stderr_of_mean = 0.0;
};

/// Held-out metric of `model` on the `test` cells of y.
double evaluate_model(const FittedModel& model, const DenseTensor& y, const ObservationMask& test);

ExperimentReport run_experiment(const ExperimentSpec& spec);
std::string format_report(const ExperimentReport& report);

}  // namespace inftucker
