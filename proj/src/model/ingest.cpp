#include <fstream>
#include <map>
#include <queue>
#include <sstream>

#include <json.hpp>

#include "hsv/error.hpp"
#include "hsv/model.hpp"

namespace hsv::model {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& msg) {
  throw Error(ErrorCode::SchemaError, where + ": " + msg);
}

std::vector<std::uint32_t> read_shape(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) fail(where, "shape must be a non-empty array");
  std::vector<std::uint32_t> s;
  for (const auto& d : j) {
    if (!d.is_number_unsigned() || d.get<std::uint64_t>() == 0 || d.get<std::uint64_t>() > 0xFFFFFFFFULL) {
      fail(where, "dimensions must be positive 32-bit integers");
    }
    s.push_back(d.get<std::uint32_t>());
  }
  return s;
}

const std::map<std::string, umf::Attr>& attr_names() {
  static const std::map<std::string, umf::Attr> m = {{"kernel", umf::Attr::Kernel},
                                                     {"stride", umf::Attr::Stride},
                                                     {"padding", umf::Attr::Padding},
                                                     {"groups", umf::Attr::Groups},
                                                     {"axis", umf::Attr::Axis}};
  return m;
}

ModelClass infer_class(const json& layers) {
  for (const auto& l : layers) {
    const auto op = l.value("op", "");
    if (op == "Softmax" || op == "LayerNorm") return ModelClass::Transformer;
  }
  return ModelClass::CNN;
}

}  // namespace

ModelGraph ingest_graph(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaError, std::string("malformed description: ") + e.what());
  }
  if (!doc.is_object()) fail("document", "top level must be an object");
  if (!doc.contains("layers") || !doc["layers"].is_array() || doc["layers"].empty()) {
    fail("document", "'layers' must be a non-empty array");
  }
  if (!doc.contains("inputs") || !doc["inputs"].is_array() || doc["inputs"].empty()) {
    fail("document", "'inputs' must be a non-empty array");
  }
  const auto& layers = doc["layers"];

  Precision precision = Precision::INT8;
  if (doc.contains("precision")) {
    if (!doc["precision"].is_string() || !umf::parse_precision(doc["precision"].get<std::string>(), precision)) {
      fail("document", "precision must be one of INT8, FP16, FP32");
    }
  }
  ModelClass cls = infer_class(layers);
  if (doc.contains("class")) {
    const auto c = doc["class"].get<std::string>();
    if (c == "CNN") cls = ModelClass::CNN;
    else if (c == "Transformer") cls = ModelClass::Transformer;
    else fail("document", "class must be CNN or Transformer");
  }
  GraphBuilder b(doc.value("name", std::string("model")), cls, precision,
                 doc.value("model_id", std::uint32_t{0}));

  std::map<std::string, std::uint32_t> tensor_of;  // resolved names
  for (std::size_t i = 0; i < doc["inputs"].size(); ++i) {
    const auto& in = doc["inputs"][i];
    const std::string where = "inputs[" + std::to_string(i) + "]";
    if (!in.is_object() || !in.contains("name") || !in["name"].is_string()) fail(where, "needs a name");
    const auto name = in["name"].get<std::string>();
    if (!in.contains("shape")) fail(where, "needs a shape");
    if (!tensor_of.emplace(name, b.input(read_shape(in["shape"], where))).second) {
      fail(where, "duplicate name '" + name + "'");
    }
  }

  // Resolve layer names first so forward references order correctly.
  std::map<std::string, std::size_t> layer_index;
  std::vector<std::string> where(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    where[i] = "layers[" + std::to_string(i) + "]";
    if (!l.is_object() || !l.contains("name") || !l["name"].is_string()) fail(where[i], "needs a name");
    const auto name = l["name"].get<std::string>();
    where[i] += " ('" + name + "')";
    if (tensor_of.count(name) || !layer_index.emplace(name, i).second) {
      fail(where[i], "duplicate name");
    }
    if (!l.contains("op") || !l["op"].is_string()) fail(where[i], "needs an op");
    if (!l.contains("inputs") || !l["inputs"].is_array()) fail(where[i], "needs an inputs array");
  }

  std::vector<std::vector<std::size_t>> users(layers.size());
  std::vector<std::size_t> indegree(layers.size(), 0);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (const auto& ref : layers[i]["inputs"]) {
      if (!ref.is_string()) fail(where[i], "inputs must be names");
      const auto name = ref.get<std::string>();
      if (tensor_of.count(name)) continue;
      auto it = layer_index.find(name);
      if (it == layer_index.end()) fail(where[i], "unknown input '" + name + "'");
      users[it->second].push_back(i);
      ++indegree[i];
    }
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (indegree[i] == 0) ready.push(i);
  }
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    const auto i = ready.top();
    ready.pop();
    order.push_back(i);
    for (auto u : users[i]) {
      if (--indegree[u] == 0) ready.push(u);
    }
  }
  if (order.size() != layers.size()) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (indegree[i] != 0) {
        throw Error(ErrorCode::CycleDetected, where[i] + ": part of a dependency cycle");
      }
    }
  }

  for (auto i : order) {
    const auto& l = layers[i];
    LayerSpec spec;
    spec.name = l["name"].get<std::string>();
    if (!umf::parse_op_type(l["op"].get<std::string>(), spec.op)) {
      fail(where[i], "unknown op '" + l["op"].get<std::string>() + "'");
    }
    for (const auto& ref : l["inputs"]) spec.activations.push_back(tensor_of.at(ref.get<std::string>()));
    if (l.contains("weights")) {
      if (!l["weights"].is_array()) fail(where[i], "weights must be a list of shapes");
      for (const auto& w : l["weights"]) spec.weight_shapes.push_back(read_shape(w, where[i]));
    }
    if (l.contains("attrs")) {
      if (!l["attrs"].is_object()) fail(where[i], "attrs must be an object");
      for (const auto& [key, value] : l["attrs"].items()) {
        auto it = attr_names().find(key);
        if (it == attr_names().end()) fail(where[i], "unknown attribute '" + key + "'");
        if (!value.is_number_unsigned() || value.get<std::uint64_t>() > 0xFFFF) {
          fail(where[i], "attribute '" + key + "' must fit in 16 bits");
        }
        spec.attrs.set(it->second, value.get<std::uint16_t>());
      }
    }
    if (l.contains("shape")) spec.output_shape = read_shape(l["shape"], where[i]);
    try {
      tensor_of[spec.name] = b.add(spec);
    } catch (const Error& e) {
      throw Error(e.code(), where[i] + ": " + e.message());
    }
  }
  return std::move(b).build();
}

ModelGraph ingest_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return ingest_graph(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.message(), e.offset());
  }
}

}  // namespace hsv::model
