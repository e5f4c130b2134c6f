#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "inftucker/errors.hpp"
#include "inftucker/io.hpp"
#include "inftucker/prediction.hpp"
#include "test_util.hpp"

using namespace inftucker;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("inftucker_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

TensorFile parse(const std::string& text) {
  std::istringstream in(text);
  return parse_tensor_text(in, "t.txt");
}

std::string parse_error(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(TensorText, ParsesRecordsAndComments) {
  const auto tf = parse("# a comment\ntensor 2 2 3\n1 1 0.5\n2 3 -1.25  # trailing\n\n1 2 7\n");
  EXPECT_EQ(tf.values.dims(), (Dims{2, 3}));
  EXPECT_EQ(tf.mask.count(), 3);
  EXPECT_TRUE(tf.mask.observed(MultiIndex{{1, 1}}));
  EXPECT_TRUE(tf.mask.observed(MultiIndex{{2, 3}}));
  EXPECT_DOUBLE_EQ(tf.values[vec_index(MultiIndex{{2, 3}}, tf.values.dims()) - 1], -1.25);
  EXPECT_EQ(tf.values[vec_index(MultiIndex{{2, 1}}, tf.values.dims()) - 1], 0.0);
}

TEST(TensorText, FullMaskFromEveryRecord) {
  const auto tf = parse("tensor 3 2 2 2\n1 1 1 1\n1 1 2 2\n1 2 1 3\n1 2 2 4\n2 1 1 5\n2 1 2 6\n2 2 1 7\n2 2 2 8\n");
  EXPECT_EQ(tf.mask, ObservationMask::full({2, 2, 2}));
  // Row-wise vec order: the last index runs fastest.
  for (Index i = 0; i < 8; ++i) EXPECT_EQ(tf.values[i], static_cast<double>(i + 1));
}

TEST(TensorText, Errors) {
  EXPECT_NE(parse_error("tensor 2 2 2\n1 1 1\n2 2 2\n1 1 3\n").find("t.txt:4: duplicate record"), std::string::npos);
  EXPECT_NE(parse_error("tensor 2 2 2\n1 3 1\n").find("t.txt:2: index 3 out of range"), std::string::npos);
  EXPECT_NE(parse_error("# nothing\n").find("missing tensor header"), std::string::npos);
  EXPECT_NE(parse_error("tensor 2 2 2 dense\n1 1 1\n").find("dense tensor lists 1 of 4"), std::string::npos);
  EXPECT_NE(parse_error("tensor 2 2\n").find("t.txt:1:"), std::string::npos);
  EXPECT_NE(parse_error("tensor 1 2\n1 x\n").find("t.txt:2: malformed value"), std::string::npos);
  EXPECT_NE(parse_error("tensor 1 2\n1\n").find("t.txt:2:"), std::string::npos);
  EXPECT_NE(parse_error("tensor 1 2 sparse\n").find("unknown header flag"), std::string::npos);
}

TEST(TensorText, RoundTripIsBitExact) {
  SeededRandomSource rng(51);
  DenseTensor t = inftucker::testing::random_tensor(rng, {3, 2, 4});
  t[0] = 0.1;
  t[1] = 1e-300;
  t[2] = -12345.678901234567;
  ObservationMask mask = ObservationMask::full({3, 2, 4});
  mask.set(5, false);
  mask.set(17, false);
  std::stringstream ss;
  write_tensor_text(ss, t, mask);
  const auto back = parse_tensor_text(ss);
  EXPECT_EQ(back.mask, mask);
  for (Index i : mask.offsets()) EXPECT_EQ(back.values[i], t[i]);
}

TEST(TensorText, EmptyMaskWritesHeaderOnly) {
  std::stringstream ss;
  write_tensor_text(ss, DenseTensor::Zero({2, 3}), ObservationMask::none({2, 3}));
  EXPECT_EQ(ss.str(), "tensor 2 2 3\n");
  EXPECT_EQ(parse_tensor_text(ss).mask.count(), 0);
}

TEST(TensorFiles, TextAndBinaryRoundTrip) {
  TempDir dir;
  SeededRandomSource rng(52);
  const DenseTensor t = inftucker::testing::random_tensor(rng, {4, 3, 2});
  ObservationMask mask(Dims{4, 3, 2});
  for (Index i = 0; i < mask.size(); i += 3) mask.set(i, true);
  for (const std::string name : {"a.txt", "a.itkb"}) {
    const auto path = dir.file(name);
    if (name.ends_with(".itkb")) {
      write_tensor_binary(path, t, mask);
      EXPECT_EQ(slurp(path).substr(0, 4), "ITKB");
    } else {
      write_tensor(path, t, mask);
    }
    const auto back = read_tensor(path);
    EXPECT_EQ(back.mask, mask) << name;
    for (Index i : mask.offsets()) EXPECT_EQ(back.values[i], t[i]) << name;
  }
}

TEST(TensorFiles, CorruptBinaryRejected) {
  TempDir dir;
  const auto path = dir.file("bad.itkb");
  write_tensor_binary(path, DenseTensor::Zero({2, 2}), ObservationMask::full({2, 2}));
  std::string bytes = slurp(path);
  bytes.resize(bytes.size() - 5);
  std::ofstream(path, std::ios::binary) << bytes;
  EXPECT_THROW(read_tensor(path), ParseError);
  EXPECT_THROW(read_tensor(dir.file("missing.txt")), ParseError);
}

namespace {

FittedModel small_model(NoiseModel noise) {
  SeededRandomSource rng(53);
  ModelConfig c;
  c.noise = noise;
  c.rank_per_mode = {2};
  c.kernels = {KernelSpec{KernelFamily::gaussian, 0.7}};
  c.gaussian_sigma = 0.3;
  c.max_em_iters = 8;
  c.seed = 5;
  DenseTensor y = inftucker::testing::random_tensor(rng, {4, 4, 4});
  if (noise == NoiseModel::probit)
    for (Index i = 0; i < y.size(); ++i) y[i] = y[i] > 0.0 ? 1.0 : 0.0;
  ObservationMask mask = ObservationMask::full({4, 4, 4});
  for (Index i = 0; i < mask.size(); i += 5) mask.set(i, false);
  return fit(y, mask, c);
}

}  // namespace

TEST(ModelFile, SaveLoadPredictsIdentically) {
  TempDir dir;
  for (auto noise : {NoiseModel::gaussian, NoiseModel::probit}) {
    const FittedModel m = small_model(noise);
    const auto path = dir.file("m.json");
    save_model(path, m);
    const FittedModel back = load_model(path);
    EXPECT_EQ(back.factors, m.factors);
    EXPECT_EQ(back.mask, m.mask);
    EXPECT_EQ(back.tau_star, m.tau_star);
    EXPECT_EQ(back.objective_trace, m.objective_trace);
    std::vector<Index> all(64);
    for (Index i = 0; i < 64; ++i) all[static_cast<std::size_t>(i)] = i;
    const auto p = predict_cells(m, all), q = predict_cells(back, all);
    for (std::size_t i = 0; i < all.size(); ++i) {
      EXPECT_EQ(p[i].mean, q[i].mean);
      EXPECT_EQ(p[i].variance, q[i].variance);
      EXPECT_EQ(p[i].probability, q[i].probability);
    }
    EXPECT_EQ(model_to_json(back), model_to_json(m));
  }
}

TEST(ModelFile, RejectsForeignAndIncompatibleFiles) {
  const std::string good = model_to_json(small_model(NoiseModel::gaussian));
  const auto message = [](const std::string& text) -> std::string {
    try {
      model_from_json(text);
    } catch (const ParseError& e) {
      return e.what();
    }
    return "";
  };
  EXPECT_NE(message(good.substr(0, good.size() / 2)).find("not valid JSON"), std::string::npos);
  EXPECT_NE(message("{\"format\": \"other\"}").find("not an inftucker model file"), std::string::npos);
  std::string future = good;
  const auto at = future.find("\"version\": 1");
  ASSERT_NE(at, std::string::npos);
  future.replace(at, 12, "\"version\": 2");
  EXPECT_NE(message(future).find("version 2 is incompatible"), std::string::npos);
  std::string broken = good;
  broken.replace(broken.find("\"factors\""), 9, "\"factorz\"");
  EXPECT_NE(message(broken).find("malformed model file"), std::string::npos);
  EXPECT_THROW(model_to_json(FittedModel{}), UsageError);
}
