#pragma once

// Pre-LN transformer encoders used for both the policy and the critic.
//
// FC inputs are cut into fixed-width chunks (one token per 144 values) and
// get a learned positional embedding. OC inputs give one token per object row
// per slab and get only a slab embedding, so the network treats objects as an
// unordered set within a slab.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gohr/autodiff.hpp"
#include "gohr/encoders.hpp"
#include "gohr/random.hpp"

namespace gohr {

struct TransformerConfig {
  int d_model = 64;
  int n_heads = 4;
  int n_layers = 2;
  int ff_width = 128;
  bool zero_head = true;  // zero-initialized output layer: uniform initial policy, V = 0

  void validate() const {
    if (d_model < 1 || n_heads < 1 || n_layers < 0 || ff_width < 1)
      throw ConfigError("transformer sizes must be positive");
    if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  }
};

inline nlohmann::json to_json(const TransformerConfig& c) {
  return {{"d_model", c.d_model}, {"n_heads", c.n_heads}, {"n_layers", c.n_layers},
          {"ff_width", c.ff_width}, {"zero_head", c.zero_head}};
}

inline TransformerConfig transformer_config_from_json(const nlohmann::json& j, TransformerConfig c = {}) {
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.ff_width = j.value("ff_width", c.ff_width);
  c.zero_head = j.value("zero_head", c.zero_head);
  c.validate();
  return c;
}

inline constexpr int kFcTokenWidth = 144;

/// How an encoded input becomes a token matrix.
struct TokenScheme {
  Representation representation = Representation::FC;
  int tokens = 20;
  int width = kFcTokenWidth;
  int slabs = 1;
  int objects = 9;

  static TokenScheme for_encoder(const Encoder& enc) {
    TokenScheme t;
    t.representation = enc.config().representation;
    if (t.representation == Representation::FC) {
      t.width = kFcTokenWidth;
      t.tokens = static_cast<int>(enc.input_size()) / kFcTokenWidth;
    } else {
      t.width = kOcRowSize;
      t.slabs = enc.config().history + 1;
      t.objects = enc.config().objects;
      t.tokens = t.slabs * t.objects;
    }
    return t;
  }
};

enum class HeadKind { Policy, Value };

/// Ordered named parameters; the order is the serialization order.
using ParamList = std::vector<std::pair<std::string, ad::Var>>;

namespace nn {

inline ad::Mat random_normal(Eigen::Index r, Eigen::Index c, double sd, Rng& rng) {
  ad::Mat m(r, c);
  // column-major fill order is part of the determinism contract
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = sd * standard_normal(rng);
  return m;
}

struct Linear {
  ad::Var w, b;
  Linear() = default;
  Linear(int in, int out, Rng& rng, bool zero = false)
      : w(ad::parameter(zero ? ad::Mat::Zero(in, out) : random_normal(in, out, 1.0 / std::sqrt(in), rng))),
        b(ad::parameter(ad::Mat::Zero(1, out))) {}
  ad::Var operator()(const ad::Var& x) const { return ad::add_row(ad::matmul(x, w), b); }
  void collect(ParamList& out, const std::string& name) const {
    out.emplace_back(name + ".w", w);
    out.emplace_back(name + ".b", b);
  }
};

struct LayerNorm {
  ad::Var g, b;
  LayerNorm() = default;
  explicit LayerNorm(int d) : g(ad::parameter(ad::Mat::Ones(1, d))), b(ad::parameter(ad::Mat::Zero(1, d))) {}
  ad::Var operator()(const ad::Var& x) const { return ad::layer_norm(x, g, b); }
  void collect(ParamList& out, const std::string& name) const {
    out.emplace_back(name + ".g", g);
    out.emplace_back(name + ".b", b);
  }
};

struct Block {
  LayerNorm ln1, ln2;
  Linear qkv, proj, ff1, ff2;
  int heads = 1;

  Block() = default;
  Block(const TransformerConfig& c, Rng& rng)
      : ln1(c.d_model), ln2(c.d_model), qkv(c.d_model, 3 * c.d_model, rng), proj(c.d_model, c.d_model, rng),
        ff1(c.d_model, c.ff_width, rng), ff2(c.ff_width, c.d_model, rng), heads(c.n_heads) {}

  ad::Var attention(const ad::Var& x) const {
    const auto d = x.cols();
    const auto dh = d / heads;
    const ad::Var t = qkv(x);
    std::vector<ad::Var> outs;
    for (int h = 0; h < heads; ++h) {
      const auto q = ad::slice_cols(t, h * dh, dh);
      const auto k = ad::slice_cols(t, d + h * dh, dh);
      const auto v = ad::slice_cols(t, 2 * d + h * dh, dh);
      const auto s = ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(double(dh))));
      outs.push_back(ad::matmul(s, v));
    }
    return proj(heads == 1 ? outs[0] : ad::concat_cols(outs));
  }

  ad::Var operator()(const ad::Var& x) const {
    const ad::Var h = ad::add(x, attention(ln1(x)));
    return ad::add(h, ff2(ad::gelu(ff1(ln2(h)))));
  }

  void collect(ParamList& out, const std::string& name) const {
    ln1.collect(out, name + ".ln1");
    qkv.collect(out, name + ".qkv");
    proj.collect(out, name + ".proj");
    ln2.collect(out, name + ".ln2");
    ff1.collect(out, name + ".ff1");
    ff2.collect(out, name + ".ff2");
  }
};

}  // namespace nn

class TransformerNet {
 public:
  TransformerNet(const TokenScheme& scheme, const TransformerConfig& cfg, HeadKind head, Rng& rng)
      : scheme_(scheme), cfg_(cfg), head_(head) {
    cfg_.validate();
    embed_ = nn::Linear(scheme.width, cfg.d_model, rng);
    const int rows = scheme.representation == Representation::FC ? scheme.tokens : scheme.slabs;
    position_ = ad::parameter(nn::random_normal(rows, cfg.d_model, 0.1, rng));
    for (int l = 0; l < cfg.n_layers; ++l) blocks_.emplace_back(cfg, rng);
    final_ln_ = nn::LayerNorm(cfg.d_model);
    int out = 1;
    if (head == HeadKind::Policy) out = scheme.representation == Representation::FC ? kFcActions : kNumBuckets;
    out_ = nn::Linear(cfg.d_model, out, rng, cfg.zero_head);

    if (scheme.representation == Representation::OC) {
      ad::Mat sel = ad::Mat::Zero(scheme.tokens, scheme.slabs);
      for (int t = 0; t < scheme.tokens; ++t) sel(t, t / scheme.objects) = 1.0;
      slab_selector_ = ad::constant(std::move(sel));
    }
  }

  const TokenScheme& scheme() const { return scheme_; }
  const TransformerConfig& config() const { return cfg_; }
  HeadKind head() const { return head_; }

  /// Policy: 1 x |actions| logits. Value: 1 x 1.
  ad::Var forward(const std::vector<double>& input) const {
    if (input.size() != static_cast<std::size_t>(scheme_.tokens) * scheme_.width)
      throw DomainError("network input has the wrong length");
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const ad::Mat tokens = Eigen::Map<const RowMajor>(input.data(), scheme_.tokens, scheme_.width);
    ad::Var x = embed_(ad::constant(tokens));
    if (scheme_.representation == Representation::FC)
      x = ad::add(x, position_);
    else
      x = ad::add(x, ad::matmul(slab_selector_, position_));
    for (const auto& b : blocks_) x = b(x);
    x = final_ln_(x);

    if (head_ == HeadKind::Policy && scheme_.representation == Representation::OC)
      return ad::flatten_row(out_(ad::slice_rows(x, 0, scheme_.objects)));
    return out_(ad::mean_rows(x));
  }

  ParamList parameters() const {
    ParamList out;
    embed_.collect(out, "embed");
    out.emplace_back(scheme_.representation == Representation::FC ? "pos" : "slab", position_);
    for (std::size_t l = 0; l < blocks_.size(); ++l) blocks_[l].collect(out, "block" + std::to_string(l));
    final_ln_.collect(out, "ln_f");
    out_.collect(out, "head");
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, v] : parameters()) n += static_cast<std::size_t>(v.value().size());
    return n;
  }

  void zero_grad() {
    for (auto& [name, v] : parameters()) v.zero_grad();
  }

 private:
  TokenScheme scheme_;
  TransformerConfig cfg_;
  HeadKind head_;
  nn::Linear embed_;
  ad::Var position_;
  std::vector<nn::Block> blocks_;
  nn::LayerNorm final_ln_;
  nn::Linear out_;
  ad::Var slab_selector_;
};

}  // namespace gohr
