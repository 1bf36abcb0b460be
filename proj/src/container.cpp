#include "axis/container.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

namespace axis::io {

namespace {

std::size_t align8(std::size_t offset) { return (offset + 7) & ~std::size_t{7}; }

const char* kind_token(Kind kind) {
  return kind == Kind::MatrixKind ? "matrix" : "vector";
}

void append_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void append_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

json manifest_json(const ContainerDoc& doc,
                   const std::vector<std::size_t>& offsets) {
  json tensors = json::array();
  for (std::size_t i = 0; i < doc.tensors.size(); ++i) {
    const ContainerTensor& t = doc.tensors[i];
    json entry;
    entry["name"] = t.name;
    entry["kind"] = kind_token(t.kind);
    entry["shape"] = t.shape;
    entry["dtype"] = "f32";
    entry["offset"] = offsets[i];
    entry["byte_len"] = 4 * t.values.size();
    entry["flags"] = t.flags;
    tensors.push_back(std::move(entry));
  }
  json manifest;
  manifest["object_type"] = doc.object_type;
  manifest["meta"] = doc.meta;
  manifest["tensors"] = std::move(tensors);
  return manifest;
}

}  // namespace

void write_container(const std::string& path, const ContainerDoc& doc) {
  for (const ContainerTensor& t : doc.tensors) {
    std::size_t numel = 1;
    for (std::size_t d : t.shape) numel *= d;
    if (numel != t.values.size()) {
      throw Error(ErrorCode::ShapeMismatch,
                  "tensor value count does not match shape: " + t.name);
    }
    const std::size_t expected_dims = t.kind == Kind::MatrixKind ? 2 : 1;
    if (t.shape.size() != expected_dims) {
      throw Error(ErrorCode::ShapeMismatch,
                  "tensor shape arity does not match kind: " + t.name);
    }
    for (double v : t.values) {
      if (!std::isfinite(static_cast<float>(v))) {
        throw Error(ErrorCode::InvalidInput,
                    "value does not fit in f32: " + t.name);
      }
    }
  }

  // Offsets depend on the manifest length and vice versa; iterate to a
  // fixed point (digit counts stabilize after a couple of rounds).
  std::vector<std::size_t> offsets(doc.tensors.size(), 0);
  std::string manifest_text = manifest_json(doc, offsets).dump();
  for (int round = 0; round < 16; ++round) {
    std::size_t pos = align8(10 + manifest_text.size());
    for (std::size_t i = 0; i < doc.tensors.size(); ++i) {
      offsets[i] = pos;
      pos = align8(pos + 4 * doc.tensors[i].values.size());
    }
    std::string next = manifest_json(doc, offsets).dump();
    if (next.size() == manifest_text.size()) {
      manifest_text = std::move(next);
      break;
    }
    manifest_text = std::move(next);
  }

  std::string bytes;
  bytes.append(kMagic, 4);
  append_u16le(bytes, kVersion);
  append_u32le(bytes, static_cast<std::uint32_t>(manifest_text.size()));
  bytes += manifest_text;
  for (std::size_t i = 0; i < doc.tensors.size(); ++i) {
    bytes.resize(offsets[i], '\0');
    for (double v : doc.tensors[i].values) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      append_u32le(bytes, bits);
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot open for writing: " + path);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out.flush()) {
    throw Error(ErrorCode::IoError, "write failed: " + path);
  }
}

namespace {

std::uint64_t require_uint(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number_unsigned()) {
    throw Error(ErrorCode::CorruptFile,
                std::string("manifest field missing or not unsigned: ") + key);
  }
  return it->get<std::uint64_t>();
}

std::string require_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw Error(ErrorCode::CorruptFile,
                std::string("manifest field missing or not a string: ") + key);
  }
  return it->get<std::string>();
}

}  // namespace

ContainerDoc read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open: " + path);
  }
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw Error(ErrorCode::IoError, "read failed: " + path);
  }

  if (bytes.size() < 4) {
    throw Error(ErrorCode::CorruptFile, "file shorter than magic");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::FormatError, "bad magic");
  }
  if (bytes.size() < 10) {
    throw Error(ErrorCode::CorruptFile, "truncated header");
  }
  const std::uint16_t version = static_cast<std::uint8_t>(bytes[4]) |
                                (static_cast<std::uint16_t>(
                                     static_cast<std::uint8_t>(bytes[5]))
                                 << 8);
  if (version != kVersion) {
    throw Error(ErrorCode::FormatError,
                "unsupported version " + std::to_string(version));
  }
  std::uint32_t manifest_len = 0;
  for (int i = 0; i < 4; ++i) {
    manifest_len |= static_cast<std::uint32_t>(
                        static_cast<std::uint8_t>(bytes[6 + i]))
                    << (8 * i);
  }
  if (manifest_len > bytes.size() - 10) {
    throw Error(ErrorCode::CorruptFile, "manifest length exceeds file size");
  }

  json manifest;
  try {
    manifest = json::parse(bytes.begin() + 10, bytes.begin() + 10 + manifest_len);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptFile,
                std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!manifest.is_object()) {
    throw Error(ErrorCode::CorruptFile, "manifest is not a JSON object");
  }

  ContainerDoc doc;
  doc.object_type = require_string(manifest, "object_type");
  if (doc.object_type != "param_set" && doc.object_type != "task_vector" &&
      doc.object_type != "merged_delta" && doc.object_type != "adapt_state") {
    throw Error(ErrorCode::CorruptFile,
                "unknown object_type: " + doc.object_type);
  }
  auto meta_it = manifest.find("meta");
  if (meta_it == manifest.end() || !meta_it->is_object()) {
    throw Error(ErrorCode::CorruptFile, "manifest meta missing or not object");
  }
  doc.meta = *meta_it;
  auto tensors_it = manifest.find("tensors");
  if (tensors_it == manifest.end() || !tensors_it->is_array()) {
    throw Error(ErrorCode::CorruptFile, "manifest tensors missing or not array");
  }

  const std::size_t header_end = 10 + manifest_len;
  std::size_t prev_end = header_end;
  for (const json& entry : *tensors_it) {
    if (!entry.is_object()) {
      throw Error(ErrorCode::CorruptFile, "tensor entry is not an object");
    }
    ContainerTensor tensor;
    tensor.name = require_string(entry, "name");
    const std::string kind = require_string(entry, "kind");
    if (kind == "matrix") {
      tensor.kind = Kind::MatrixKind;
    } else if (kind == "vector") {
      tensor.kind = Kind::VectorKind;
    } else {
      throw Error(ErrorCode::CorruptFile, "unknown tensor kind: " + kind);
    }
    if (require_string(entry, "dtype") != "f32") {
      throw Error(ErrorCode::CorruptFile, "unsupported dtype");
    }
    auto shape_it = entry.find("shape");
    if (shape_it == entry.end() || !shape_it->is_array()) {
      throw Error(ErrorCode::CorruptFile, "tensor shape missing or not array");
    }
    std::uint64_t numel = 1;
    for (const json& dim : *shape_it) {
      if (!dim.is_number_unsigned()) {
        throw Error(ErrorCode::CorruptFile, "tensor dim is not unsigned");
      }
      const std::uint64_t d = dim.get<std::uint64_t>();
      if (d != 0 && numel > std::numeric_limits<std::uint64_t>::max() / 4 / d) {
        throw Error(ErrorCode::CorruptFile, "tensor shape overflows");
      }
      numel *= d;
      tensor.shape.push_back(static_cast<std::size_t>(d));
    }
    const std::size_t expected_dims = tensor.kind == Kind::MatrixKind ? 2 : 1;
    if (tensor.shape.size() != expected_dims) {
      throw Error(ErrorCode::CorruptFile, "tensor shape arity mismatch");
    }
    const std::uint64_t offset = require_uint(entry, "offset");
    const std::uint64_t byte_len = require_uint(entry, "byte_len");
    if (byte_len != 4 * numel) {
      throw Error(ErrorCode::CorruptFile,
                  "byte_len does not equal 4 x product(shape)");
    }
    if (offset % 8 != 0) {
      throw Error(ErrorCode::CorruptFile, "tensor offset not 8-byte aligned");
    }
    if (offset < prev_end) {
      throw Error(ErrorCode::CorruptFile,
                  "tensor offsets overlap or are not ascending");
    }
    if (offset > bytes.size() || byte_len > bytes.size() - offset) {
      throw Error(ErrorCode::CorruptFile, "truncated payload");
    }
    prev_end = static_cast<std::size_t>(offset + byte_len);

    auto flags_it = entry.find("flags");
    if (flags_it == entry.end() || !flags_it->is_object()) {
      throw Error(ErrorCode::CorruptFile, "tensor flags missing or not object");
    }
    tensor.flags = *flags_it;

    tensor.values.resize(static_cast<std::size_t>(numel));
    for (std::size_t i = 0; i < tensor.values.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(
                    bytes[offset + 4 * i + b]))
                << (8 * b);
      }
      const float value = std::bit_cast<float>(bits);
      if (!std::isfinite(value)) {
        throw Error(ErrorCode::CorruptFile, "non-finite payload value");
      }
      tensor.values[i] = static_cast<double>(value);
    }
    doc.tensors.push_back(std::move(tensor));
  }
  return doc;
}

// ---- typed mappings ---------------------------------------------------

ContainerDoc to_doc(const ParamSet& params) {
  ContainerDoc doc;
  doc.object_type = "param_set";
  for (const auto& [name, tensor] : params.entries()) {
    doc.tensors.push_back(
        ContainerTensor{name, tensor.kind, tensor.shape, tensor.values,
                        json::object()});
  }
  return doc;
}

ContainerDoc to_doc(const TaskVector& tv) {
  ContainerDoc doc;
  doc.object_type = "task_vector";
  doc.meta["source_id"] = tv.source_id;
  for (const auto& [name, tensor] : tv.entries) {
    doc.tensors.push_back(
        ContainerTensor{name, tensor.kind, tensor.shape, tensor.values,
                        json::object()});
  }
  return doc;
}

namespace {

void push_factor_tensors(ContainerDoc& doc, const std::string& layer,
                         const Matrix& u, const Matrix& v) {
  doc.tensors.push_back(ContainerTensor{
      layer + "::U", Kind::MatrixKind, {u.rows(), u.cols()}, u.data(),
      json::object()});
  doc.tensors.push_back(ContainerTensor{
      layer + "::V", Kind::MatrixKind, {v.rows(), v.cols()}, v.data(),
      json::object()});
}

}  // namespace

ContainerDoc to_doc(const MergedDelta& merged) {
  ContainerDoc doc;
  doc.object_type = "merged_delta";
  json prov;
  prov["strategy"] = merged.provenance.strategy;
  prov["k_spec"] = merged.provenance.k_spec;
  prov["k_per_layer"] = merged.provenance.k_per_layer;
  prov["source_ids"] = merged.provenance.source_ids;
  prov["seed"] = merged.provenance.seed;
  prov["rank_tol"] = merged.provenance.rank_tol;
  prov["final_svd"] = merged.provenance.final_svd;
  prov["warnings"] = merged.provenance.warnings;
  doc.meta["provenance"] = std::move(prov);
  for (const auto& [name, factors] : merged.layers) {
    push_factor_tensors(doc, name, factors.u, factors.v);
    doc.tensors.push_back(ContainerTensor{
        name + "::s", Kind::VectorKind, {factors.s.size()}, factors.s,
        json::object()});
  }
  for (const auto& [name, tensor] : merged.vector_deltas) {
    doc.tensors.push_back(ContainerTensor{name, tensor.kind, tensor.shape,
                                          tensor.values, json::object()});
  }
  return doc;
}

ContainerDoc to_doc(const AdaptState& state) {
  ContainerDoc doc;
  doc.object_type = "adapt_state";
  doc.meta["n_fraction"] = state.n_fraction;
  for (const auto& [name, layer] : state.layers) {
    push_factor_tensors(doc, name, layer.u, layer.v);
    doc.tensors.push_back(ContainerTensor{
        name + "::lambda", Kind::VectorKind, {layer.lambda.size()},
        layer.lambda, json{{"learnable", true}}});
    doc.tensors.push_back(ContainerTensor{
        name + "::s_frozen", Kind::VectorKind, {layer.s_frozen.size()},
        layer.s_frozen, json::object()});
  }
  for (const auto& [name, tensor] : state.vector_deltas) {
    doc.tensors.push_back(ContainerTensor{name, tensor.kind, tensor.shape,
                                          tensor.values, json::object()});
  }
  return doc;
}

namespace {

void require_object_type(const ContainerDoc& doc, const std::string& expected) {
  if (doc.object_type != expected) {
    throw Error(ErrorCode::CorruptFile, "expected object_type " + expected +
                                            ", found " + doc.object_type);
  }
}

Tensor to_tensor(const ContainerTensor& src) {
  Tensor t;
  t.kind = src.kind;
  t.shape = src.shape;
  t.values = src.values;
  return t;
}

Matrix to_matrix(const ContainerTensor& src) {
  if (src.kind != Kind::MatrixKind || src.shape.size() != 2) {
    throw Error(ErrorCode::CorruptFile, "tensor is not a matrix: " + src.name);
  }
  return Matrix(src.shape[0], src.shape[1], src.values);
}

// Splits "layer::part" names; returns false for plain names.
bool split_factor_name(const std::string& name, std::string& layer,
                       std::string& part) {
  const std::size_t pos = name.rfind("::");
  if (pos == std::string::npos) return false;
  layer = name.substr(0, pos);
  part = name.substr(pos + 2);
  return true;
}

}  // namespace

ParamSet param_set_from_doc(const ContainerDoc& doc) {
  require_object_type(doc, "param_set");
  ParamSet params;
  for (const ContainerTensor& t : doc.tensors) {
    params.insert(t.name, to_tensor(t));
  }
  return params;
}

TaskVector task_vector_from_doc(const ContainerDoc& doc) {
  require_object_type(doc, "task_vector");
  TaskVector tv;
  tv.source_id = require_string(doc.meta, "source_id");
  for (const ContainerTensor& t : doc.tensors) {
    if (!tv.entries.emplace(t.name, to_tensor(t)).second) {
      throw Error(ErrorCode::CorruptFile, "duplicate tensor name: " + t.name);
    }
  }
  return tv;
}

MergedDelta merged_delta_from_doc(const ContainerDoc& doc) {
  require_object_type(doc, "merged_delta");
  MergedDelta merged;

  auto prov_it = doc.meta.find("provenance");
  if (prov_it == doc.meta.end() || !prov_it->is_object()) {
    throw Error(ErrorCode::CorruptFile, "missing provenance");
  }
  const json& prov = *prov_it;
  merged.provenance.strategy = require_string(prov, "strategy");
  merged.provenance.k_spec = require_string(prov, "k_spec");
  merged.provenance.seed = require_uint(prov, "seed");
  if (!prov.contains("rank_tol") || !prov["rank_tol"].is_number()) {
    throw Error(ErrorCode::CorruptFile, "missing rank_tol");
  }
  merged.provenance.rank_tol = prov["rank_tol"].get<double>();
  if (!prov.contains("final_svd") || !prov["final_svd"].is_boolean()) {
    throw Error(ErrorCode::CorruptFile, "missing final_svd flag");
  }
  merged.provenance.final_svd = prov["final_svd"].get<bool>();
  if (prov.contains("k_per_layer") && prov["k_per_layer"].is_object()) {
    for (const auto& [key, value] : prov["k_per_layer"].items()) {
      if (!value.is_number_unsigned()) {
        throw Error(ErrorCode::CorruptFile, "bad k_per_layer entry");
      }
      merged.provenance.k_per_layer[key] = value.get<std::size_t>();
    }
  }
  if (prov.contains("source_ids") && prov["source_ids"].is_array()) {
    for (const json& id : prov["source_ids"]) {
      if (!id.is_string()) {
        throw Error(ErrorCode::CorruptFile, "bad source id");
      }
      merged.provenance.source_ids.push_back(id.get<std::string>());
    }
  }
  if (prov.contains("warnings") && prov["warnings"].is_array()) {
    for (const json& w : prov["warnings"]) {
      if (w.is_string()) merged.provenance.warnings.push_back(w.get<std::string>());
    }
  }

  std::map<std::string, std::map<std::string, const ContainerTensor*>> groups;
  for (const ContainerTensor& t : doc.tensors) {
    std::string layer;
    std::string part;
    if (split_factor_name(t.name, layer, part)) {
      if (!groups[layer].emplace(part, &t).second) {
        throw Error(ErrorCode::CorruptFile, "duplicate tensor name: " + t.name);
      }
    } else {
      if (t.kind != Kind::VectorKind) {
        throw Error(ErrorCode::CorruptFile,
                    "non-factor tensor must be vector-kind: " + t.name);
      }
      if (!merged.vector_deltas.emplace(t.name, to_tensor(t)).second) {
        throw Error(ErrorCode::CorruptFile, "duplicate tensor name: " + t.name);
      }
    }
  }
  for (const auto& [layer, parts] : groups) {
    auto u_it = parts.find("U");
    auto s_it = parts.find("s");
    auto v_it = parts.find("V");
    if (u_it == parts.end() || s_it == parts.end() || v_it == parts.end() ||
        parts.size() != 3) {
      throw Error(ErrorCode::CorruptFile,
                  "incomplete factor triple for layer: " + layer);
    }
    MergedDelta::LayerFactors factors;
    factors.u = to_matrix(*u_it->second);
    factors.v = to_matrix(*v_it->second);
    factors.s = s_it->second->values;
    if (factors.u.cols() != factors.s.size() ||
        factors.v.cols() != factors.s.size()) {
      throw Error(ErrorCode::CorruptFile,
                  "factor widths disagree for layer: " + layer);
    }
    merged.layers.emplace(layer, std::move(factors));
  }
  return merged;
}

AdaptState adapt_state_from_doc(const ContainerDoc& doc) {
  require_object_type(doc, "adapt_state");
  AdaptState state;
  if (!doc.meta.contains("n_fraction") || !doc.meta["n_fraction"].is_number()) {
    throw Error(ErrorCode::CorruptFile, "missing n_fraction");
  }
  state.n_fraction = doc.meta["n_fraction"].get<double>();
  if (!(state.n_fraction > 0.0) || state.n_fraction > 1.0) {
    throw Error(ErrorCode::CorruptFile, "n_fraction out of range");
  }

  std::map<std::string, std::map<std::string, const ContainerTensor*>> groups;
  for (const ContainerTensor& t : doc.tensors) {
    std::string layer;
    std::string part;
    if (split_factor_name(t.name, layer, part)) {
      if (!groups[layer].emplace(part, &t).second) {
        throw Error(ErrorCode::CorruptFile, "duplicate tensor name: " + t.name);
      }
    } else {
      if (t.kind != Kind::VectorKind) {
        throw Error(ErrorCode::CorruptFile,
                    "non-factor tensor must be vector-kind: " + t.name);
      }
      if (!state.vector_deltas.emplace(t.name, to_tensor(t)).second) {
        throw Error(ErrorCode::CorruptFile, "duplicate tensor name: " + t.name);
      }
    }
  }
  for (const auto& [layer, parts] : groups) {
    auto u_it = parts.find("U");
    auto v_it = parts.find("V");
    auto l_it = parts.find("lambda");
    auto f_it = parts.find("s_frozen");
    if (u_it == parts.end() || v_it == parts.end() || l_it == parts.end() ||
        f_it == parts.end() || parts.size() != 4) {
      throw Error(ErrorCode::CorruptFile,
                  "incomplete adapt factors for layer: " + layer);
    }
    AdaptState::Layer al;
    al.u = to_matrix(*u_it->second);
    al.v = to_matrix(*v_it->second);
    al.lambda = l_it->second->values;
    al.s_frozen = f_it->second->values;
    if (al.u.cols() != al.v.cols() ||
        al.lambda.size() + al.s_frozen.size() != al.u.cols()) {
      throw Error(ErrorCode::CorruptFile,
                  "adapt factor widths disagree for layer: " + layer);
    }
    state.layers.emplace(layer, std::move(al));
  }
  return state;
}

ParamSet read_param_set(const std::string& path) {
  return param_set_from_doc(read_container(path));
}

TaskVector read_task_vector(const std::string& path) {
  return task_vector_from_doc(read_container(path));
}

MergedDelta read_merged_delta(const std::string& path) {
  return merged_delta_from_doc(read_container(path));
}

AdaptState read_adapt_state(const std::string& path) {
  return adapt_state_from_doc(read_container(path));
}

}  // namespace axis::io
