#include "inftucker/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>

#include "inftucker/distributions.hpp"
#include "inftucker/io.hpp"
#include "inftucker/prediction.hpp"

namespace inftucker {

std::string to_string(Generator generator) {
  switch (generator) {
    case Generator::gp_latent: return "gp_latent";
    case Generator::t_latent: return "t_latent";
    case Generator::rank1: return "rank1";
    case Generator::file: return "file";
  }
  return "?";
}

Generator generator_from_string(const std::string& name) {
  if (name == "gp_latent") return Generator::gp_latent;
  if (name == "t_latent") return Generator::t_latent;
  if (name == "rank1") return Generator::rank1;
  if (name == "file") return Generator::file;
  throw UsageError("unknown generator '" + name + "'");
}

void ExperimentSpec::validate() const {
  if (generator == Generator::file) {
    if (data_path.empty()) throw UsageError("generator 'file' needs a data path");
  } else {
    check_dims(dims);
    if (gen_rank < 1) throw UsageError("gen_rank must be >= 1");
    if (!(gen_sigma >= 0.0)) throw UsageError("gen_sigma must be nonnegative");
    if (generator == Generator::t_latent && !(gen_nu > 2.0)) throw UsageError("gen_nu must exceed 2");
    gen_kernel.validate();
    model.validate(static_cast<Index>(dims.size()));
  }
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw UsageError("holdout_fraction must lie in [0, 1)");
  if (folds < 2) throw UsageError("folds must be >= 2");
  if (repeats < 1) throw UsageError("repeats must be >= 1");
  for (double g : gamma_grid)
    if (!(g > 0.0)) throw UsageError("gamma_grid values must be positive");
  for (double l : lambda_grid)
    if (!(l >= 0.0)) throw UsageError("lambda_grid values must be nonnegative");
  for (Index r : rank_grid)
    if (r < 1) throw UsageError("rank_grid values must be >= 1");
}

DenseTensor sample_latent(const ExperimentSpec& spec, SeededRandomSource& rng) {
  const Dims& dims = spec.dims;
  check_dims(dims);
  DenseTensor latent;
  switch (spec.generator) {
    case Generator::gp_latent:
    case Generator::t_latent: {
      std::vector<SpectralGram> grams;
      const double sd = 1.0 / std::sqrt(static_cast<double>(spec.gen_rank));
      for (Index n : dims) grams.push_back(gram_matrix(spec.gen_kernel, rng.normal_matrix(n, spec.gen_rank, sd)));
      if (spec.generator == Generator::gp_latent) {
        latent = sample_tensor_normal(rng, TensorNormalParams{DenseTensor::Zero(dims), grams});
      } else {
        latent = sample_tensor_t(rng, TensorTParams{spec.gen_nu, DenseTensor::Zero(dims), grams});
      }
      break;
    }
    case Generator::rank1: {
      std::vector<Eigen::VectorXd> parts;
      for (Index n : dims) parts.push_back(rng.normal_vector(n));
      latent = DenseTensor(dims, kron_vectors(parts));
      break;
    }
    case Generator::file:
      throw UsageError("the file generator has no latent tensor");
  }
  latent.values() *= spec.gen_scale;
  return latent;
}

DenseTensor apply_noise(const DenseTensor& latent, NoiseModel noise, double sigma, SeededRandomSource& rng) {
  DenseTensor y = latent;
  for (Index i = 0; i < y.size(); ++i) {
    const double e = rng.normal();
    y[i] = noise == NoiseModel::gaussian ? latent[i] + sigma * e : (latent[i] + e > 0.0 ? 1.0 : 0.0);
  }
  return y;
}

ObservationMask sample_holdout(const ObservationMask& candidates, double fraction, SeededRandomSource& rng) {
  std::vector<Index> cells = candidates.offsets();
  std::shuffle(cells.begin(), cells.end(), rng.engine());
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(cells.size())));
  ObservationMask out(candidates.dims());
  for (std::size_t i = 0; i < count; ++i) out.set(cells[i], true);
  return out;
}

SynthData synth_generate(const ExperimentSpec& spec, SeededRandomSource& rng) {
  spec.validate();
  SynthData d;
  ObservationMask available;
  if (spec.generator == Generator::file) {
    TensorFile tf = read_tensor(spec.data_path);
    d.y = tf.values;
    d.truth = std::move(tf.values);
    available = std::move(tf.mask);
  } else {
    d.truth = sample_latent(spec, rng);
    d.y = apply_noise(d.truth, spec.model.noise, spec.gen_sigma, rng);
    available = ObservationMask::full(spec.dims);
  }
  d.holdout = sample_holdout(available, spec.holdout_fraction, rng);
  d.observed = ObservationMask(available.dims());
  for (Index i = 0; i < available.size(); ++i) d.observed.set(i, available.observed(i) && !d.holdout.observed(i));
  return d;
}

double mse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw ShapeError("mse: length mismatch");
  if (pred.empty()) throw UsageError("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positives = 0.0, negatives = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      const int label = labels[order[t]];
      if (label != 0 && label != 1) throw UsageError("auc: labels must be 0 or 1");
      if (label == 1) {
        positives += 1.0;
        rank_sum += mid_rank;
      } else {
        negatives += 1.0;
      }
    }
    i = j;
  }
  if (positives == 0.0 || negatives == 0.0) throw UsageError("auc: both classes must be present");
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

std::vector<CvSplit> cv_splits(const ObservationMask& mask, int folds, int repeats, std::uint64_t seed) {
  if (folds < 2) throw UsageError("cv_splits: folds must be >= 2");
  if (repeats < 1) throw UsageError("cv_splits: repeats must be >= 1");
  const std::vector<Index> cells = mask.offsets();
  if (static_cast<Index>(cells.size()) < folds) {
    throw UsageError("cv_splits: " + std::to_string(cells.size()) + " observed cells cannot fill " +
                     std::to_string(folds) + " folds");
  }
  std::vector<CvSplit> out;
  for (int r = 0; r < repeats; ++r) {
    SeededRandomSource rng(derive_seed(seed, 0x5eed, static_cast<std::uint64_t>(r)));
    std::vector<Index> shuffled = cells;
    std::shuffle(shuffled.begin(), shuffled.end(), rng.engine());
    for (int f = 0; f < folds; ++f) {
      CvSplit s{r, f, mask, ObservationMask(mask.dims())};
      for (std::size_t p = static_cast<std::size_t>(f); p < shuffled.size(); p += static_cast<std::size_t>(folds)) {
        s.test.set(shuffled[p], true);
        s.train.set(shuffled[p], false);
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

Normalized normalize_tensor(const DenseTensor& y, const ObservationMask& mask) {
  if (mask.dims() != y.dims()) throw ShapeError("normalize_tensor: mask dims do not match");
  const auto cells = mask.offsets();
  if (cells.size() < 2) throw UsageError("normalize_tensor: need at least two observed cells");
  double mean = 0.0;
  for (Index c : cells) mean += y[c];
  mean /= static_cast<double>(cells.size());
  double var = 0.0;
  for (Index c : cells) var += (y[c] - mean) * (y[c] - mean);
  var /= static_cast<double>(cells.size());
  if (!(var > 0.0)) throw UsageError("normalize_tensor: observed cells have zero variance");
  Normalized out{y, mean, std::sqrt(var)};
  out.y.values().array() = (y.values().array() - mean) / out.std;
  return out;
}

DenseTensor denormalize_tensor(const DenseTensor& y, double mean, double std) {
  DenseTensor out = y;
  out.values().array() = y.values().array() * std + mean;
  return out;
}

double evaluate_model(const FittedModel& model, const DenseTensor& y, const ObservationMask& test) {
  const auto cells = test.offsets();
  const auto preds = predict_cells(model, cells);
  if (model.config.noise == NoiseModel::gaussian) {
    std::vector<double> p, t;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      p.push_back(preds[i].mean);
      t.push_back(y[cells[i]]);
    }
    return mse(p, t);
  }
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    scores.push_back(preds[i].probability);
    labels.push_back(y[cells[i]] > 0.5 ? 1 : 0);
  }
  return auc(scores, labels);
}

namespace {

struct Hyper {
  std::optional<double> gamma;
  std::optional<double> lambda;
  std::optional<Index> rank;
};

std::vector<Hyper> hyper_grid(const ExperimentSpec& spec) {
  std::vector<std::optional<double>> gammas, lambdas;
  std::vector<std::optional<Index>> ranks;
  for (double g : spec.gamma_grid) gammas.emplace_back(g);
  for (double l : spec.lambda_grid) lambdas.emplace_back(l);
  for (Index r : spec.rank_grid) ranks.emplace_back(r);
  if (gammas.empty()) gammas.emplace_back();
  if (lambdas.empty()) lambdas.emplace_back();
  if (ranks.empty()) ranks.emplace_back();
  std::vector<Hyper> out;
  for (const auto& g : gammas)
    for (const auto& l : lambdas)
      for (const auto& r : ranks) out.push_back(Hyper{g, l, r});
  return out;
}

ModelConfig apply_hyper(ModelConfig c, const Hyper& h, Index order) {
  if (h.gamma) {
    if (c.kernels.empty()) c.kernels.push_back(KernelSpec{});
    for (auto& k : c.kernels) k.gamma = *h.gamma;
  }
  if (h.lambda) c.l1_lambda = *h.lambda;
  if (h.rank) c.rank_per_mode.assign(1, *h.rank);
  c.validate(order);
  return c;
}

// Larger is better for AUC, smaller for MSE.
bool better(NoiseModel noise, double a, double b) { return noise == NoiseModel::probit ? a > b : a < b; }

}  // namespace

ExperimentReport run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  SeededRandomSource data_rng(derive_seed(spec.seed, 1));
  const SynthData data = synth_generate(spec, data_rng);
  const Index order = data.y.order();
  const NoiseModel noise = spec.model.noise;

  DenseTensor y = data.y;
  if (spec.normalize && noise == NoiseModel::gaussian) y = normalize_tensor(y, data.observed).y;

  const auto grid = hyper_grid(spec);
  ExperimentReport report;
  report.metric_name = noise == NoiseModel::probit ? "auc" : "mse";
  const auto splits = cv_splits(data.observed, spec.folds, spec.repeats, derive_seed(spec.seed, 2));
  for (const auto& split : splits) {
    const auto split_id = static_cast<std::uint64_t>(split.repeat) * static_cast<std::uint64_t>(spec.folds) +
                          static_cast<std::uint64_t>(split.fold);
    const std::uint64_t fit_seed = derive_seed(spec.seed, 4, split_id);
    Hyper chosen = grid.front();
    if (grid.size() > 1) {
      const auto inner = cv_splits(split.train, 2, 1, derive_seed(spec.seed, 3, split_id));
      double best = 0.0;
      bool have_best = false;
      for (const auto& h : grid) {
        ModelConfig c = apply_hyper(spec.model, h, order);
        c.seed = fit_seed;
        double score = 0.0;
        for (const auto& in : inner) {
          const FittedModel m = fit(y, in.train, c);
          double s = 0.5;
          try {
            s = evaluate_model(m, y, in.test);
          } catch (const UsageError&) {
            // single-class inner fold: no ranking information
          }
          score += s / static_cast<double>(inner.size());
        }
        if (!have_best || better(noise, score, best)) {
          best = score;
          chosen = h;
          have_best = true;
        }
      }
    }
    ModelConfig c = apply_hyper(spec.model, chosen, order);
    c.seed = fit_seed;
    const FittedModel model = fit(y, split.train, c);
    FoldRecord rec;
    rec.repeat = split.repeat;
    rec.fold = split.fold;
    rec.gamma = c.kernel(0).gamma;
    rec.lambda = c.l1_lambda;
    rec.rank = c.rank(0);
    rec.metric = evaluate_model(model, y, split.test);
    report.folds.push_back(rec);
  }

  const double count = static_cast<double>(report.folds.size());
  for (const auto& f : report.folds) report.mean += f.metric / count;
  if (report.folds.size() > 1) {
    double ss = 0.0;
    for (const auto& f : report.folds) ss += (f.metric - report.mean) * (f.metric - report.mean);
    report.stderr_of_mean = std::sqrt(ss / (count - 1.0)) / std::sqrt(count);
  }
  return report;
}

std::string format_report(const ExperimentReport& report) {
  std::string out;
  char buf[256];
  for (const auto& f : report.folds) {
    std::snprintf(buf, sizeof buf, "fold repeat=%d fold=%d gamma=%.6g lambda=%.6g rank=%ld %s=%.9g\n", f.repeat + 1,
                  f.fold + 1, f.gamma, f.lambda, static_cast<long>(f.rank), report.metric_name.c_str(), f.metric);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%s %.9g \xC2\xB1 %.9g\n", report.metric_name.c_str(), report.mean,
                report.stderr_of_mean);
  out += buf;
  return out;
}

}  // namespace inftucker
