#include "inftucker/io.hpp"

#include <json.hpp>

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "inftucker/errors.hpp"

namespace inftucker {

static_assert(std::endian::native == std::endian::little, "binary tensor IO assumes a little-endian host");

namespace {

constexpr char kBinaryMagic[4] = {'I', 'T', 'K', 'B'};
constexpr std::uint32_t kBinaryVersion = 1;

std::string strip_comment(const std::string& line) {
  const auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

template <typename T>
bool parse_number(const std::string& token, T& out) {
  const char* first = token.data();
  const char* last = first + token.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

[[noreturn]] void fail_at(const std::string& source, int line, const std::string& message) {
  throw ParseError(source + ":" + std::to_string(line) + ": " + message);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ifstream open_input(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw ParseError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_output(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  return out;
}

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_raw(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw ParseError(path + ": truncated binary tensor file");
  return v;
}

TensorFile read_tensor_binary(std::istream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kBinaryMagic, 4) != 0) throw ParseError(path + ": bad binary tensor magic");
  const auto version = read_raw<std::uint32_t>(in, path);
  if (version != kBinaryVersion) {
    throw ParseError(path + ": unsupported binary tensor version " + std::to_string(version));
  }
  const auto order = read_raw<std::uint32_t>(in, path);
  if (order == 0) throw ParseError(path + ": tensor order must be positive");
  Dims dims;
  for (std::uint32_t k = 0; k < order; ++k) {
    const auto d = read_raw<std::uint64_t>(in, path);
    if (d == 0) throw ParseError(path + ": zero dimension");
    dims.push_back(static_cast<Index>(d));
  }
  TensorFile tf{DenseTensor(dims), ObservationMask(dims)};
  const auto count = read_raw<std::uint64_t>(in, path);
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto offset = read_raw<std::uint64_t>(in, path);
    const auto value = read_raw<double>(in, path);
    if (offset >= static_cast<std::uint64_t>(tf.values.size())) {
      throw ParseError(path + ": record " + std::to_string(r + 1) + " offset out of range");
    }
    const auto off = static_cast<Index>(offset);
    if (tf.mask.observed(off)) throw ParseError(path + ": record " + std::to_string(r + 1) + " duplicates a cell");
    tf.mask.set(off, true);
    tf.values[off] = value;
  }
  return tf;
}

}  // namespace

TensorFile parse_tensor_text(std::istream& in, const std::string& source) {
  std::string line;
  int line_no = 0;
  bool have_header = false;
  bool dense = false;
  Dims dims;
  TensorFile tf;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream tokens(strip_comment(line));
    std::vector<std::string> fields;
    for (std::string tok; tokens >> tok;) fields.push_back(tok);
    if (fields.empty()) continue;

    if (!have_header) {
      if (fields[0] != "tensor") fail_at(source, line_no, "expected header 'tensor K n1 ... nK [dense]'");
      Index order = 0;
      if (fields.size() < 2 || !parse_number(fields[1], order) || order < 1) {
        fail_at(source, line_no, "malformed tensor order");
      }
      const auto expected = static_cast<std::size_t>(order) + 2;
      if (fields.size() != expected && fields.size() != expected + 1) {
        fail_at(source, line_no, "header lists " + std::to_string(fields.size() - 2) + " fields for order " +
                                     std::to_string(order));
      }
      for (Index k = 0; k < order; ++k) {
        Index d = 0;
        if (!parse_number(fields[static_cast<std::size_t>(k) + 2], d) || d < 1) {
          fail_at(source, line_no, "malformed dimension '" + fields[static_cast<std::size_t>(k) + 2] + "'");
        }
        dims.push_back(d);
      }
      if (fields.size() == expected + 1) {
        if (fields.back() != "dense") fail_at(source, line_no, "unknown header flag '" + fields.back() + "'");
        dense = true;
      }
      tf = TensorFile{DenseTensor(dims), ObservationMask(dims)};
      have_header = true;
      continue;
    }

    const std::size_t order = dims.size();
    if (fields.size() != order + 1) {
      fail_at(source, line_no, "expected " + std::to_string(order) + " indices and a value");
    }
    MultiIndex idx;
    idx.indices.resize(order);
    for (std::size_t k = 0; k < order; ++k) {
      Index v = 0;
      if (!parse_number(fields[k], v)) fail_at(source, line_no, "malformed index '" + fields[k] + "'");
      if (v < 1 || v > dims[k]) {
        fail_at(source, line_no, "index " + fields[k] + " out of range 1.." + std::to_string(dims[k]) + " in mode " +
                                     std::to_string(k + 1));
      }
      idx.indices[k] = v;
    }
    double value = 0.0;
    if (!parse_number(fields[order], value)) fail_at(source, line_no, "malformed value '" + fields[order] + "'");
    const Index off = vec_index(idx, dims) - 1;
    if (tf.mask.observed(off)) fail_at(source, line_no, "duplicate record for a cell");
    tf.mask.set(off, true);
    tf.values[off] = value;
  }
  if (!have_header) throw ParseError(source + ": missing tensor header");
  if (dense && tf.mask.count() != tf.mask.size()) {
    throw ParseError(source + ": dense tensor lists " + std::to_string(tf.mask.count()) + " of " +
                     std::to_string(tf.mask.size()) + " cells");
  }
  return tf;
}

TensorFile read_tensor(const std::string& path) {
  auto in = open_input(path, std::ios::in | std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  const bool binary = in.gcount() == 4 && std::memcmp(magic, kBinaryMagic, 4) == 0;
  in.clear();
  in.seekg(0);
  return binary ? read_tensor_binary(in, path) : parse_tensor_text(in, path);
}

void write_tensor_text(std::ostream& out, const DenseTensor& t, const ObservationMask& mask) {
  if (mask.dims() != t.dims()) throw ShapeError("write_tensor: mask dims do not match tensor dims");
  const Dims& dims = t.dims();
  out << "tensor " << dims.size();
  for (Index d : dims) out << ' ' << d;
  out << '\n';
  for (Index off = 0; off < t.size(); ++off) {
    if (!mask.observed(off)) continue;
    const MultiIndex idx = multi_index_of(off + 1, dims);
    for (Index i : idx.indices) out << i << ' ';
    out << format_double(t[off]) << '\n';
  }
}

void write_tensor(const std::string& path, const DenseTensor& t, const ObservationMask& mask) {
  auto out = open_output(path);
  write_tensor_text(out, t, mask);
  if (!out) throw ParseError("failed writing '" + path + "'");
}

void write_tensor_binary(const std::string& path, const DenseTensor& t, const ObservationMask& mask) {
  if (mask.dims() != t.dims()) throw ShapeError("write_tensor_binary: mask dims do not match tensor dims");
  auto out = open_output(path, std::ios::out | std::ios::binary);
  out.write(kBinaryMagic, 4);
  write_raw(out, kBinaryVersion);
  write_raw(out, static_cast<std::uint32_t>(t.order()));
  for (Index d : t.dims()) write_raw(out, static_cast<std::uint64_t>(d));
  write_raw(out, static_cast<std::uint64_t>(mask.count()));
  for (Index off = 0; off < t.size(); ++off) {
    if (!mask.observed(off)) continue;
    write_raw(out, static_cast<std::uint64_t>(off));
    write_raw(out, t[off]);
  }
  if (!out) throw ParseError("failed writing '" + path + "'");
}

// ---- model files ----

namespace {

using nlohmann::json;

constexpr const char* kModelFormat = "inftucker-model";

json tensor_json(const DenseTensor& t) {
  return json{{"dims", t.dims()}, {"values", std::vector<double>(t.data(), t.data() + t.size())}};
}

DenseTensor tensor_from_json(const json& j) {
  const auto dims = j.at("dims").get<Dims>();
  const auto values = j.at("values").get<std::vector<double>>();
  return DenseTensor(dims, Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Index>(values.size())));
}

json matrix_json(const Eigen::MatrixXd& m) {
  return json{{"rows", m.rows()},
              {"cols", m.cols()},
              {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 1 || cols < 1 || static_cast<Index>(data.size()) != rows * cols) {
    throw ParseError("matrix entry has inconsistent size");
  }
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

json config_json(const ModelConfig& c) {
  json kernels = json::array();
  for (const auto& k : c.kernels) kernels.push_back(json{{"family", to_string(k.family)}, {"gamma", k.gamma}});
  return json{{"noise", to_string(c.noise)},
              {"process", to_string(c.process)},
              {"nu", c.nu},
              {"rank", c.rank_per_mode},
              {"kernels", kernels},
              {"lambda", c.l1_lambda},
              {"sigma", c.gaussian_sigma},
              {"max_em_iters", c.max_em_iters},
              {"em_rel_tol", c.em_rel_tol},
              {"mstep_max_iters", c.mstep_max_iters},
              {"lbfgs_history", c.lbfgs_history},
              {"mstep_grad_tol", c.mstep_grad_tol},
              {"mstep_rel_tol", c.mstep_rel_tol},
              {"seed", c.seed},
              {"truncation_energy", c.truncation_energy}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.noise = noise_model_from_string(j.at("noise").get<std::string>());
  c.process = process_kind_from_string(j.at("process").get<std::string>());
  c.nu = j.at("nu").get<double>();
  c.rank_per_mode = j.at("rank").get<std::vector<Index>>();
  for (const auto& k : j.at("kernels")) {
    c.kernels.push_back(KernelSpec{kernel_family_from_string(k.at("family").get<std::string>()),
                                   k.at("gamma").get<double>()});
  }
  c.l1_lambda = j.at("lambda").get<double>();
  c.gaussian_sigma = j.at("sigma").get<double>();
  c.max_em_iters = j.at("max_em_iters").get<int>();
  c.em_rel_tol = j.at("em_rel_tol").get<double>();
  c.mstep_max_iters = j.at("mstep_max_iters").get<int>();
  c.lbfgs_history = j.at("lbfgs_history").get<int>();
  c.mstep_grad_tol = j.at("mstep_grad_tol").get<double>();
  c.mstep_rel_tol = j.at("mstep_rel_tol").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.truncation_energy = j.at("truncation_energy").get<double>();
  return c;
}

}  // namespace

std::string model_to_json(const FittedModel& model) {
  if (model.factors.empty()) throw UsageError("cannot save an unfitted model");
  json factors = json::array();
  for (const auto& f : model.factors) factors.push_back(matrix_json(f));
  const auto& s = model.state;
  json state{{"target", tensor_json(s.target)},
             {"anchor", tensor_json(s.anchor)},
             {"mu", tensor_json(s.mu)},
             {"ups_diag", tensor_json(s.ups_diag)},
             {"beta1", s.beta1},
             {"beta2", s.beta2},
             {"tau", s.tau}};
  json j{{"format", kModelFormat},
         {"version", kModelFormatVersion},
         {"dims", model.dims()},
         {"config", config_json(model.config)},
         {"factors", factors},
         {"state", state},
         {"tau_star", model.tau_star},
         {"objective_trace", model.objective_trace},
         {"converged", model.converged},
         {"training_cells", model.mask.offsets()}};
  return j.dump(1) + "\n";
}

FittedModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (!j.is_object() || j.value("format", std::string()) != kModelFormat) {
      throw ParseError("not an inftucker model file");
    }
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw ParseError("model format version " + std::to_string(version) + " is incompatible with version " +
                       std::to_string(kModelFormatVersion));
    }
    FittedModel m;
    const auto dims = j.at("dims").get<Dims>();
    check_dims(dims);
    m.config = config_from_json(j.at("config"));
    m.config.validate(static_cast<Index>(dims.size()));
    for (const auto& f : j.at("factors")) m.factors.push_back(matrix_from_json(f));
    if (m.factors.size() != dims.size()) throw ParseError("factor count does not match tensor order");
    for (std::size_t k = 0; k < dims.size(); ++k) {
      if (m.factors[k].rows() != dims[k]) throw ParseError("factor row count does not match dims");
    }
    const auto& s = j.at("state");
    m.state.target = tensor_from_json(s.at("target"));
    m.state.anchor = tensor_from_json(s.at("anchor"));
    m.state.mu = tensor_from_json(s.at("mu"));
    m.state.ups_diag = tensor_from_json(s.at("ups_diag"));
    for (const DenseTensor* t : {&m.state.target, &m.state.anchor, &m.state.mu, &m.state.ups_diag}) {
      if (t->dims() != dims) throw ParseError("state tensor dims do not match model dims");
    }
    m.state.beta1 = s.at("beta1").get<double>();
    m.state.beta2 = s.at("beta2").get<double>();
    m.state.tau = s.at("tau").get<double>();
    m.tau_star = j.at("tau_star").get<double>();
    m.objective_trace = j.at("objective_trace").get<std::vector<double>>();
    m.converged = j.at("converged").get<bool>();
    m.mask = ObservationMask(dims);
    for (const auto off : j.at("training_cells").get<std::vector<Index>>()) {
      if (off < 0 || off >= m.mask.size()) throw ParseError("training cell offset out of range");
      m.mask.set(off, true);
    }
    m.mode_grams = build_grams(m.factors, m.config);
    for (const auto& g : m.mode_grams) m.state.basis.push_back(g.eigvecs);
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  } catch (const ShapeError& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const std::string& path, const FittedModel& model) {
  const std::string text = model_to_json(model);
  auto out = open_output(path);
  out << text;
  if (!out) throw ParseError("failed writing '" + path + "'");
}

FittedModel load_model(const std::string& path) {
  auto in = open_input(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return model_from_json(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace inftucker
