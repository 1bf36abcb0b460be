#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "axis/adapt.hpp"
#include "axis/merge.hpp"
#include "axis/params.hpp"

namespace axis::io {

using json = nlohmann::json;

// AXTC container: "AXTC" magic, u16 LE version (= 1), u32 LE
// length-prefixed UTF-8 JSON manifest, then tensors as little-endian f32,
// row-major, each 8-byte aligned, in manifest order. The manifest lists
// per tensor {name, kind, shape, dtype, offset, byte_len, flags} plus a
// document-level object_type and free-form meta.
inline constexpr char kMagic[4] = {'A', 'X', 'T', 'C'};
inline constexpr std::uint16_t kVersion = 1;

struct ContainerTensor {
  std::string name;
  Kind kind = Kind::VectorKind;
  std::vector<std::size_t> shape;
  std::vector<double> values;
  json flags = json::object();
};

struct ContainerDoc {
  std::string object_type;
  json meta = json::object();
  std::vector<ContainerTensor> tensors;
};

// Deterministic bytes for identical input.
void write_container(const std::string& path, const ContainerDoc& doc);

// Total: every byte string yields either a valid document or a
// classified Error (FormatError for magic/version, CorruptFile for
// structural damage, IoError for filesystem failures).
ContainerDoc read_container(const std::string& path);

// Typed mappings between domain objects and container documents.
ContainerDoc to_doc(const ParamSet& params);
ContainerDoc to_doc(const TaskVector& tv);
ContainerDoc to_doc(const MergedDelta& merged);
ContainerDoc to_doc(const AdaptState& state);

ParamSet param_set_from_doc(const ContainerDoc& doc);
TaskVector task_vector_from_doc(const ContainerDoc& doc);
MergedDelta merged_delta_from_doc(const ContainerDoc& doc);
AdaptState adapt_state_from_doc(const ContainerDoc& doc);

ParamSet read_param_set(const std::string& path);
TaskVector read_task_vector(const std::string& path);
MergedDelta read_merged_delta(const std::string& path);
AdaptState read_adapt_state(const std::string& path);

}  // namespace axis::io
