#pragma once

// Coordinate tensor files and model files.
//
// Text tensor format:
//   # comment lines and trailing comments start with '#'
//   tensor K n1 ... nK [dense]
//   i1 ... iK value          (1-based indices, one record per observed cell)
// Cells without a record are missing, unless the header says `dense`, in
// which case every cell must be listed.
//
// Binary tensor format (little-endian): "ITKB", u32 version, u32 K,
// u64 dims[K], u64 count, then count x (u64 0-based vec offset, f64 value).

#include <iosfwd>
#include <string>

#include "inftucker/inference.hpp"
#include "inftucker/mask.hpp"
#include "inftucker/tensor.hpp"

namespace inftucker {

struct TensorFile {
  DenseTensor values;  // missing cells hold 0
  ObservationMask mask;
};

inline constexpr int kModelFormatVersion = 1;

/// Reads either format; binary files are recognized by their magic bytes.
TensorFile read_tensor(const std::string& path);
TensorFile parse_tensor_text(std::istream& in, const std::string& source = "<stream>");

/// Values are written with 17 significant digits so they read back bit-exact.
void write_tensor(const std::string& path, const DenseTensor& t, const ObservationMask& mask);
void write_tensor_text(std::ostream& out, const DenseTensor& t, const ObservationMask& mask);
void write_tensor_binary(const std::string& path, const DenseTensor& t, const ObservationMask& mask);

/// JSON model file carrying a format version. Gram matrices are rebuilt from
/// the stored factors on load, so predictions match the original exactly.
void save_model(const std::string& path, const FittedModel& model);
FittedModel load_model(const std::string& path);
std::string model_to_json(const FittedModel& model);
FittedModel model_from_json(const std::string& text);

}  // namespace inftucker
