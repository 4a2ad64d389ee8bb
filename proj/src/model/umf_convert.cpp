#include <algorithm>
#include <set>

#include "hsv/error.hpp"
#include "hsv/model.hpp"

namespace hsv::model {

umf::UmfFrame to_umf(const ModelGraph& g, const UmfHeaderFields& fields) {
  umf::UmfFrame frame;
  frame.header.packet_type = umf::PacketType::ModelLoad;
  frame.header.user_id = fields.user_id;
  frame.header.transaction_id = fields.transaction_id;
  frame.header.model_id = g.model_id;
  for (const auto& layer : g.layers) {
    umf::InfoPacket p;
    p.layer_id = layer.id;
    p.op_type = layer.op;
    p.attrs = layer.attrs;
    for (auto id : layer.inputs) {
      const auto& t = g.tensor(id);
      p.inputs.push_back(umf::TensorDesc{t.id, t.kind, t.precision, t.shape});
      if (t.kind == TensorKind::Weight) {
        umf::DataPacket d;
        d.tensor_id = t.id;
        d.data_type = umf::DataType::Weight;
        d.precision = t.precision;
        d.payload_size = t.byte_size();
        if (fields.with_bodies) d.payload.assign(d.payload_size, 0);
        frame.data_packets.push_back(std::move(d));
      }
    }
    for (auto id : layer.outputs) {
      const auto& t = g.tensor(id);
      p.outputs.push_back(umf::TensorDesc{t.id, TensorKind::Activation, t.precision, t.shape});
    }
    frame.info_packets.push_back(std::move(p));
  }
  umf::finalize_sizes(frame);
  return frame;
}

ModelGraph from_umf(const umf::UmfFrame& frame) {
  if (frame.header.packet_type != umf::PacketType::ModelLoad) {
    throw Error(ErrorCode::WrongPacketType,
                std::string("expected ModelLoad, got ") + umf::to_string(frame.header.packet_type));
  }
  std::map<std::uint32_t, const umf::DataPacket*> data;
  for (const auto& d : frame.data_packets) data[d.tensor_id] = &d;

  std::map<std::uint32_t, std::size_t> produced_at;
  for (std::size_t i = 0; i < frame.info_packets.size(); ++i) {
    for (const auto& o : frame.info_packets[i].outputs) produced_at.emplace(o.tensor_id, i);
  }

  ModelGraph g;
  g.model_id = frame.header.model_id;
  g.name = "model_" + std::to_string(g.model_id);
  std::set<std::uint32_t> graph_inputs;
  std::map<std::uint32_t, std::uint16_t> producer;
  bool transformer = false;

  auto record = [&](const umf::TensorDesc& d) {
    TensorInfo t{d.tensor_id, d.kind, d.dims, d.precision};
    auto [it, inserted] = g.tensors.emplace(d.tensor_id, t);
    if (!inserted && !(it->second == t)) {
      throw Error(ErrorCode::SchemaError,
                  "tensor " + std::to_string(d.tensor_id) + " described inconsistently");
    }
  };

  for (std::size_t i = 0; i < frame.info_packets.size(); ++i) {
    const auto& p = frame.info_packets[i];
    LayerNode layer;
    layer.id = p.layer_id;
    layer.name = "layer_" + std::to_string(p.layer_id);
    layer.op = p.op_type;
    layer.attrs = p.attrs;
    if (p.op_type == OpType::Softmax || p.op_type == OpType::LayerNorm) transformer = true;
    for (const auto& in : p.inputs) {
      if (in.kind == TensorKind::Weight) {
        auto it = data.find(in.tensor_id);
        if (it == data.end()) {
          throw Error(ErrorCode::DanglingTensorRef,
                      "layer " + std::to_string(p.layer_id) + " references weight tensor " +
                          std::to_string(in.tensor_id) + " with no data packet");
        }
        TensorInfo probe{in.tensor_id, in.kind, in.dims, in.precision};
        if (it->second->payload_size != probe.byte_size()) {
          throw Error(ErrorCode::ShapeMismatch,
                      "weight tensor " + std::to_string(in.tensor_id) + " payload size " +
                          std::to_string(it->second->payload_size) + " != shape bytes " +
                          std::to_string(probe.byte_size()));
        }
      } else {
        auto prod = produced_at.find(in.tensor_id);
        if (prod == produced_at.end()) {
          graph_inputs.insert(in.tensor_id);
        } else if (prod->second >= i) {
          throw Error(ErrorCode::DanglingTensorRef,
                      "layer " + std::to_string(p.layer_id) + " reads tensor " +
                          std::to_string(in.tensor_id) + " before it is produced");
        } else {
          const auto pred = producer.at(in.tensor_id);
          if (std::find(layer.predecessors.begin(), layer.predecessors.end(), pred) ==
              layer.predecessors.end()) {
            layer.predecessors.push_back(pred);
          }
        }
      }
      record(in);
      layer.inputs.push_back(in.tensor_id);
    }
    for (const auto& out : p.outputs) {
      record(out);
      layer.outputs.push_back(out.tensor_id);
      producer[out.tensor_id] = layer.id;
    }
    g.layers.push_back(std::move(layer));
  }
  g.inputs.assign(graph_inputs.begin(), graph_inputs.end());
  g.model_class = transformer ? ModelClass::Transformer : ModelClass::CNN;
  validate_graph(g);
  return g;
}

}  // namespace hsv::model
