#include <algorithm>

#include "hsv/error.hpp"
#include "hsv/model.hpp"

namespace hsv::model {

namespace {

std::string idx(const std::string& prefix, int i) { return prefix + std::to_string(i); }

void vgg16(GraphBuilder& b, std::uint32_t x) {
  const int cfg[] = {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0};
  int conv = 0, pool = 0;
  for (int c : cfg) {
    if (c == 0) {
      x = b.pool(idx("pool", ++pool), x, 2, 2);
    } else {
      ++conv;
      x = b.conv(idx("conv", conv), x, static_cast<std::uint32_t>(c), 3, 1, 1);
      x = b.activation(idx("relu", conv), x);
    }
  }
  x = b.gemm("fc6", x, 4096);
  x = b.activation("relu_fc6", x);
  x = b.gemm("fc7", x, 4096);
  x = b.activation("relu_fc7", x);
  b.gemm("fc8", x, 1000);
}

void alexnet(GraphBuilder& b, std::uint32_t x) {
  x = b.conv("conv1", x, 64, 11, 4, 2);
  x = b.activation("relu1", x);
  x = b.pool("pool1", x, 3, 2);
  x = b.conv("conv2", x, 192, 5, 1, 2);
  x = b.activation("relu2", x);
  x = b.pool("pool2", x, 3, 2);
  x = b.conv("conv3", x, 384, 3, 1, 1);
  x = b.activation("relu3", x);
  x = b.conv("conv4", x, 256, 3, 1, 1);
  x = b.activation("relu4", x);
  x = b.conv("conv5", x, 256, 3, 1, 1);
  x = b.activation("relu5", x);
  x = b.pool("pool5", x, 3, 2);
  x = b.gemm("fc6", x, 4096);
  x = b.activation("relu6", x);
  x = b.gemm("fc7", x, 4096);
  x = b.activation("relu7", x);
  b.gemm("fc8", x, 1000);
}

void resnet50(GraphBuilder& b, std::uint32_t x) {
  x = b.conv("stem_conv", x, 64, 7, 2, 3);
  x = b.activation("stem_relu", x);
  x = b.pool("stem_pool", x, 3, 2, 1);
  const int blocks[] = {3, 4, 6, 3};
  const std::uint32_t widths[] = {64, 128, 256, 512};
  for (int stage = 0; stage < 4; ++stage) {
    for (int blk = 0; blk < blocks[stage]; ++blk) {
      const std::string p = "s" + std::to_string(stage + 1) + "b" + std::to_string(blk + 1) + "_";
      const std::uint32_t w = widths[stage];
      const std::uint16_t stride = (blk == 0 && stage > 0) ? 2 : 1;
      std::uint32_t y = b.conv(p + "conv1", x, w, 1);
      y = b.activation(p + "relu1", y);
      y = b.conv(p + "conv2", y, w, 3, stride, 1);
      y = b.activation(p + "relu2", y);
      y = b.conv(p + "conv3", y, w * 4, 1);
      std::uint32_t shortcut = x;
      if (blk == 0) shortcut = b.conv(p + "downsample", x, w * 4, 1, stride);
      y = b.residual_add(p + "add", y, shortcut);
      x = b.activation(p + "relu3", y);
    }
  }
  x = b.global_pool("avgpool", x);
  b.gemm("fc", x, 1000);
}

void mobilenetv2(GraphBuilder& b, std::uint32_t x) {
  x = b.conv("stem_conv", x, 32, 3, 2, 1);
  x = b.activation("stem_relu", x);
  struct Setting { std::uint32_t t, c, n; std::uint16_t s; };
  const Setting settings[] = {{1, 16, 1, 1},  {6, 24, 2, 2},  {6, 32, 3, 2}, {6, 64, 4, 2},
                              {6, 96, 3, 1},  {6, 160, 3, 2}, {6, 320, 1, 1}};
  std::uint32_t in_c = 32;
  int block = 0;
  for (const auto& st : settings) {
    for (std::uint32_t i = 0; i < st.n; ++i) {
      const std::string p = "ir" + std::to_string(++block) + "_";
      const std::uint16_t stride = i == 0 ? st.s : 1;
      const std::uint32_t hidden = in_c * st.t;
      std::uint32_t y = x;
      if (st.t != 1) {
        y = b.conv(p + "expand", y, hidden, 1);
        y = b.activation(p + "relu_a", y);
      }
      y = b.conv(p + "dwconv", y, hidden, 3, stride, 1, static_cast<std::uint16_t>(hidden));
      y = b.activation(p + "relu_b", y);
      y = b.conv(p + "project", y, st.c, 1);
      if (stride == 1 && in_c == st.c) y = b.residual_add(p + "add", y, x);
      x = y;
      in_c = st.c;
    }
  }
  x = b.conv("head_conv", x, 1280, 1);
  x = b.activation("head_relu", x);
  x = b.global_pool("avgpool", x);
  b.gemm("classifier", x, 1000);
}

struct TransformerDims {
  std::uint32_t layers, hidden, heads, ffn;
  bool pre_norm;       // gpt2-style
  std::uint32_t vocab; // LM head width, 0 for none
};

std::uint32_t attention_block(GraphBuilder& b, const std::string& p, std::uint32_t x,
                              std::uint32_t batch, std::uint32_t seq, const TransformerDims& d) {
  const std::uint32_t dh = d.hidden / d.heads;
  const std::uint32_t heads = d.heads * batch;
  const std::uint32_t q = b.gemm(p + "q_proj", x, d.hidden);
  const std::uint32_t k = b.gemm(p + "k_proj", x, d.hidden);
  const std::uint32_t v = b.gemm(p + "v_proj", x, d.hidden);
  const std::uint32_t qh = b.reshape(p + "q_heads", q, {heads, seq, dh});
  const std::uint32_t kh = b.reshape(p + "k_heads", k, {heads, seq, dh});
  const std::uint32_t kt = b.transpose(p + "k_transpose", kh, {heads, dh, seq});
  const std::uint32_t vh = b.reshape(p + "v_heads", v, {heads, seq, dh});
  std::uint32_t s = b.matmul(p + "qk", qh, kt);
  s = b.softmax(p + "softmax", s);
  const std::uint32_t ctx = b.matmul(p + "attn_v", s, vh);
  const std::uint32_t merged = b.reshape(p + "merge_heads", ctx, {batch * seq, d.hidden});
  return b.gemm(p + "out_proj", merged, d.hidden);
}

std::uint32_t ffn_block(GraphBuilder& b, const std::string& p, std::uint32_t x,
                        const TransformerDims& d) {
  std::uint32_t y = b.gemm(p + "ffn_up", x, d.ffn);
  y = b.activation(p + "gelu", y);
  return b.gemm(p + "ffn_down", y, d.hidden);
}

void transformer(GraphBuilder& b, std::uint32_t x, std::uint32_t batch, std::uint32_t seq,
                 const TransformerDims& d) {
  for (std::uint32_t i = 0; i < d.layers; ++i) {
    const std::string p = "h" + std::to_string(i) + "_";
    if (d.pre_norm) {
      std::uint32_t n = b.layer_norm(p + "ln1", x);
      std::uint32_t a = attention_block(b, p, n, batch, seq, d);
      x = b.residual_add(p + "add1", a, x);
      n = b.layer_norm(p + "ln2", x);
      std::uint32_t f = ffn_block(b, p, n, d);
      x = b.residual_add(p + "add2", f, x);
    } else {
      std::uint32_t a = attention_block(b, p, x, batch, seq, d);
      a = b.residual_add(p + "add1", a, x);
      x = b.layer_norm(p + "ln1", a);
      std::uint32_t f = ffn_block(b, p, x, d);
      f = b.residual_add(p + "add2", f, x);
      x = b.layer_norm(p + "ln2", f);
    }
  }
  if (d.pre_norm) x = b.layer_norm("ln_f", x);
  if (d.vocab) b.gemm("lm_head", x, d.vocab);
}

}  // namespace

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names = {"resnet50", "vgg16",     "mobilenetv2",
                                                 "alexnet",  "bert_base", "bert_large",
                                                 "gpt2",     "gpt2_medium"};
  return names;
}

bool is_cnn_name(const std::string& name) {
  return name == "resnet50" || name == "vgg16" || name == "mobilenetv2" || name == "alexnet";
}

ModelGraph builtin_model(const std::string& name, const BuiltinOptions& opts) {
  const auto& names = builtin_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw Error(ErrorCode::UnknownModel, "no builtin model named '" + name + "'");
  }
  const bool cnn = is_cnn_name(name);
  const Precision precision = opts.precision.value_or(cnn ? Precision::INT8 : Precision::FP16);
  GraphBuilder b(name, cnn ? ModelClass::CNN : ModelClass::Transformer, precision, opts.model_id);
  const std::uint32_t batch = std::max<std::uint32_t>(1, opts.batch);
  if (cnn) {
    const std::uint32_t img = opts.size ? opts.size : 224;
    std::vector<std::uint32_t> shape{3, img, img};
    if (batch > 1) shape.insert(shape.begin(), batch);
    const auto x = b.input(shape);
    if (name == "resnet50") resnet50(b, x);
    else if (name == "vgg16") vgg16(b, x);
    else if (name == "mobilenetv2") mobilenetv2(b, x);
    else alexnet(b, x);
  } else {
    const std::uint32_t seq = opts.size ? opts.size : 128;
    TransformerDims d{};
    if (name == "bert_base") d = {12, 768, 12, 3072, false, 0};
    else if (name == "bert_large") d = {24, 1024, 16, 4096, false, 0};
    else if (name == "gpt2") d = {12, 768, 12, 3072, true, 50257};
    else d = {24, 1024, 16, 4096, true, 50257};
    const auto x = b.input({batch * seq, d.hidden});
    transformer(b, x, batch, seq, d);
  }
  return std::move(b).build();
}

}  // namespace hsv::model
