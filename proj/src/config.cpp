#include "inftucker/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "inftucker/errors.hpp"

namespace inftucker {

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "noise",      "process",        "nu",          "rank",       "kernel",         "gamma",
      "lambda",     "sigma",          "max_em_iters", "em_rel_tol", "mstep_max_iters", "lbfgs_history",
      "mstep_grad_tol", "seed",       "truncation_energy", "dims",   "generator",      "data",
      "holdout_fraction", "folds",    "repeats",     "gamma_grid", "lambda_grid",    "rank_grid",
      "normalize",  "gen_rank",       "gen_kernel",  "gen_gamma",  "gen_sigma",      "gen_scale",
      "gen_nu"};
  return keys;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Entry {
  std::string value;
  int line = 0;
};

class Reader {
 public:
  Reader(std::string source, std::map<std::string, Entry> entries)
      : source_(std::move(source)), entries_(std::move(entries)) {}

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  [[noreturn]] void fail(const std::string& key, const std::string& message) const {
    throw ParseError(source_ + ":" + std::to_string(entries_.at(key).line) + ": " + key + ": " + message);
  }

  std::string text(const std::string& key) const { return entries_.at(key).value; }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(text(key));
    for (std::string item; std::getline(ss, item, ',');) {
      item = trim(item);
      if (item.empty()) fail(key, "empty list element");
      out.push_back(item);
    }
    if (out.empty()) fail(key, "empty value");
    return out;
  }

  template <typename T>
  T number_of(const std::string& key, const std::string& token) const {
    T out{};
    const char* first = token.data();
    const char* last = first + token.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last) fail(key, "cannot parse '" + token + "' as a number");
    return out;
  }

  template <typename T>
  void read(const std::string& key, T& out) const {
    if (has(key)) out = number_of<T>(key, trim(text(key)));
  }

  template <typename T>
  void read_list(const std::string& key, std::vector<T>& out) const {
    if (!has(key)) return;
    out.clear();
    for (const auto& item : list(key)) out.push_back(number_of<T>(key, item));
  }

  bool boolean(const std::string& key) const {
    const std::string v = trim(text(key));
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(key, "expected true or false, got '" + v + "'");
  }

  template <typename F>
  auto convert(const std::string& key, F f) const {
    try {
      return f(trim(text(key)));
    } catch (const UsageError& e) {
      fail(key, e.what());
    }
  }

 private:
  std::string source_;
  std::map<std::string, Entry> entries_;
};

std::vector<KernelSpec> build_kernels(const Reader& r, const std::string& family_key, const std::string& gamma_key,
                                      std::vector<KernelSpec> defaults) {
  std::vector<std::string> families;
  std::vector<double> gammas;
  if (r.has(family_key)) families = r.list(family_key);
  r.read_list(gamma_key, gammas);
  if (families.empty() && gammas.empty()) return defaults;
  const std::size_t n = std::max(families.size(), gammas.size());
  if (families.size() > 1 && gammas.size() > 1 && families.size() != gammas.size()) {
    r.fail(gamma_key, "list length does not match '" + family_key + "'");
  }
  const KernelSpec base = defaults.empty() ? KernelSpec{} : defaults.front();
  std::vector<KernelSpec> out(n, base);
  for (std::size_t i = 0; i < n; ++i) {
    if (!families.empty()) {
      const auto& name = families[families.size() == 1 ? 0 : i];
      out[i].family = r.convert(family_key, [&](const std::string&) { return kernel_family_from_string(name); });
    }
    if (!gammas.empty()) out[i].gamma = gammas[gammas.size() == 1 ? 0 : i];
  }
  return out;
}

}  // namespace

ExperimentSpec parse_config(std::istream& in, const std::string& source) {
  const auto& known = config_keys();
  std::map<std::string, Entry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw UsageError(source + ":" + std::to_string(line_no) + ": unknown config key '" + key + "'");
    }
    if (entries.count(key)) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": key '" + key + "' given twice");
    }
    if (value.empty()) throw ParseError(source + ":" + std::to_string(line_no) + ": empty value for '" + key + "'");
    entries[key] = Entry{value, line_no};
  }

  const Reader r(source, std::move(entries));
  ExperimentSpec spec;
  ModelConfig& m = spec.model;
  if (r.has("noise")) m.noise = r.convert("noise", noise_model_from_string);
  if (r.has("process")) m.process = r.convert("process", process_kind_from_string);
  r.read("nu", m.nu);
  r.read_list("rank", m.rank_per_mode);
  m.kernels = build_kernels(r, "kernel", "gamma", {KernelSpec{}});
  r.read("lambda", m.l1_lambda);
  r.read("sigma", m.gaussian_sigma);
  r.read("max_em_iters", m.max_em_iters);
  r.read("em_rel_tol", m.em_rel_tol);
  r.read("mstep_max_iters", m.mstep_max_iters);
  r.read("lbfgs_history", m.lbfgs_history);
  r.read("mstep_grad_tol", m.mstep_grad_tol);
  r.read("seed", m.seed);
  r.read("truncation_energy", m.truncation_energy);
  spec.seed = m.seed;

  r.read_list("dims", spec.dims);
  if (r.has("generator")) spec.generator = r.convert("generator", generator_from_string);
  if (r.has("data")) spec.data_path = r.text("data");
  r.read("holdout_fraction", spec.holdout_fraction);
  r.read("folds", spec.folds);
  r.read("repeats", spec.repeats);
  r.read_list("gamma_grid", spec.gamma_grid);
  r.read_list("lambda_grid", spec.lambda_grid);
  r.read_list("rank_grid", spec.rank_grid);
  if (r.has("normalize")) spec.normalize = r.boolean("normalize");
  r.read("gen_rank", spec.gen_rank);
  {
    const auto gk = build_kernels(r, "gen_kernel", "gen_gamma", {spec.gen_kernel});
    if (gk.size() != 1) r.fail(r.has("gen_kernel") ? "gen_kernel" : "gen_gamma", "takes a single value");
    spec.gen_kernel = gk.front();
  }
  r.read("gen_sigma", spec.gen_sigma);
  r.read("gen_scale", spec.gen_scale);
  r.read("gen_nu", spec.gen_nu);
  return spec;
}

ExperimentSpec load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  return parse_config(in, path);
}

}  // namespace inftucker
