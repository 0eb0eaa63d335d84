#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "binsem/corpus.hpp"
#include "binsem/tensor.hpp"

namespace binsem {

struct EncoderConfig {
  int vocab_size = 0;
  int d_embed = 256;
  int d_hidden = 128;
  int n_layers = 8;
  int n_heads = 8;
  int max_seq = 256;
  double dropout_pos = 0.1;
  double dropout_conv = 0.2;
  double dropout_ffn = 0.1;
  double dropout_attn = 0.1;
  int n_conv_layers = 3;
  int conv_kernel = 5;
  bool conv_enabled = true;
  double mask_rate = 0.15;
  int d_ffn = 0;  // 0 means 4 * d_hidden

  int ffn_width() const { return d_ffn > 0 ? d_ffn : 4 * d_hidden; }

  void validate() const {
    if (vocab_size < Vocabulary::first_regular_id) throw ValidationError("vocab_size must cover the special tokens");
    if (d_embed <= 0 || d_hidden <= 0 || n_layers <= 0 || n_heads <= 0 || max_seq < 2)
      throw ValidationError("encoder dimensions must be positive");
    if (d_hidden % n_heads != 0) throw ValidationError("d_hidden must be divisible by n_heads");
    if (mask_rate <= 0.0 || mask_rate >= 1.0) throw ValidationError("mask_rate must lie in (0,1)");
    if (conv_enabled && conv_kernel % 2 == 0) throw ValidationError("conv_kernel must be odd");
    if (conv_enabled && n_conv_layers <= 0) throw ValidationError("conv stack enabled but has no layers");
    for (double p : {dropout_pos, dropout_conv, dropout_ffn, dropout_attn})
      if (p < 0.0 || p >= 1.0) throw ValidationError("dropout rates must lie in [0,1)");
  }

  json to_json() const {
    return {{"vocab_size", vocab_size}, {"d_embed", d_embed},       {"d_hidden", d_hidden},
            {"n_layers", n_layers},     {"n_heads", n_heads},       {"max_seq", max_seq},
            {"dropout_pos", dropout_pos}, {"dropout_conv", dropout_conv}, {"dropout_ffn", dropout_ffn},
            {"dropout_attn", dropout_attn}, {"n_conv_layers", n_conv_layers}, {"conv_kernel", conv_kernel},
            {"conv_enabled", conv_enabled}, {"mask_rate", mask_rate}, {"d_ffn", d_ffn}};
  }

  static EncoderConfig from_json(const json& j) {
    EncoderConfig c;
    auto get = [&](const char* k, auto& field) {
      if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
    };
    get("vocab_size", c.vocab_size), get("d_embed", c.d_embed), get("d_hidden", c.d_hidden);
    get("n_layers", c.n_layers), get("n_heads", c.n_heads), get("max_seq", c.max_seq);
    get("dropout_pos", c.dropout_pos), get("dropout_conv", c.dropout_conv);
    get("dropout_ffn", c.dropout_ffn), get("dropout_attn", c.dropout_attn);
    get("n_conv_layers", c.n_conv_layers), get("conv_kernel", c.conv_kernel), get("conv_enabled", c.conv_enabled);
    get("mask_rate", c.mask_rate), get("d_ffn", c.d_ffn);
    return c;
  }
};

struct OptimizerConfig {
  double lr = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double eps = 1e-6;
  double warmup_fraction = 0.1;  // of total optimizer steps, linear
  int epochs = 5;
  int batch_size = 96;

  void validate() const {
    if (lr < 0) throw ValidationError("learning rate must be nonnegative");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ValidationError("Adam betas must lie in [0,1)");
    if (epochs <= 0 || batch_size <= 0) throw ValidationError("epochs and batch_size must be positive");
    if (warmup_fraction < 0 || warmup_fraction > 1) throw ValidationError("warmup_fraction must lie in [0,1]");
  }

  json to_json() const {
    return {{"lr", lr},   {"beta1", beta1},     {"beta2", beta2},           {"weight_decay", weight_decay},
            {"eps", eps}, {"warmup_fraction", warmup_fraction}, {"epochs", epochs}, {"batch_size", batch_size}};
  }

  static OptimizerConfig from_json(const json& j) {
    OptimizerConfig c;
    auto get = [&](const char* k, auto& field) {
      if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
    };
    get("lr", c.lr), get("beta1", c.beta1), get("beta2", c.beta2), get("weight_decay", c.weight_decay);
    get("eps", c.eps), get("warmup_fraction", c.warmup_fraction), get("epochs", c.epochs), get("batch_size", c.batch_size);
    return c;
  }
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

class EncoderModel {
public:
  struct Layer {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln1_g, ln1_b;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    Tensor ln2_g, ln2_b;
  };

  EncoderConfig cfg;
  Tensor tok_emb;                // vocab × d_embed
  Tensor pos_emb;                // max_seq × d_embed
  std::vector<Tensor> conv_w;    // (kernel·in) × out per conv layer
  std::vector<Tensor> conv_b;    // 1 × out
  Tensor proj_w;                 // d_embed × d_hidden when the conv stack is off
  std::vector<Layer> layers;
  Tensor mlm_w;                  // d_hidden × vocab
  Tensor mlm_b;                  // 1 × vocab

  bool has_proj() const { return !cfg.conv_enabled && cfg.d_embed != cfg.d_hidden; }

  static EncoderModel build(const EncoderConfig& cfg, uint64_t seed) {
    cfg.validate();
    EncoderModel m;
    m.cfg = cfg;
    std::mt19937_64 rng(seed);

    // Fan-in-scaled init keeps pre-layer-norm activations near unit scale;
    // a flat small stddev starves the first layer norm numerically.
    m.tok_emb.name = "tok_emb";
    m.tok_emb.init_normal(cfg.vocab_size, cfg.d_embed, 0.1, rng);
    m.tok_emb.decay = false;
    m.pos_emb.name = "pos_emb";
    m.pos_emb.init_normal(cfg.max_seq, cfg.d_embed, 0.1, rng);
    m.pos_emb.decay = false;

    if (cfg.conv_enabled) {
      for (int l = 0; l < cfg.n_conv_layers; ++l) {
        int cin = l == 0 ? cfg.d_embed : cfg.d_hidden;
        Tensor w, b;
        w.name = "conv" + std::to_string(l) + ".w";
        w.init_normal(static_cast<Eigen::Index>(cfg.conv_kernel) * cin, cfg.d_hidden,
                      std::sqrt(2.0 / (static_cast<double>(cfg.conv_kernel) * cin)), rng);
        b.name = "conv" + std::to_string(l) + ".b";
        b.init_zero(1, cfg.d_hidden);
        b.decay = false;
        m.conv_w.push_back(std::move(w));
        m.conv_b.push_back(std::move(b));
      }
    } else if (cfg.d_embed != cfg.d_hidden) {
      m.proj_w.name = "proj.w";
      m.proj_w.init_normal(cfg.d_embed, cfg.d_hidden, std::sqrt(1.0 / cfg.d_embed), rng);
    }

    for (int l = 0; l < cfg.n_layers; ++l) {
      Layer layer;
      std::string p = "layer" + std::to_string(l) + ".";
      auto winit = [&](Tensor& t, const std::string& name, int rows, int cols) {
        t.name = p + name;
        t.init_normal(rows, cols, std::sqrt((name.substr(0, 6) == "ffn.w1" ? 2.0 : 1.0) / rows), rng);
      };
      auto binit = [&](Tensor& t, const std::string& name, int cols, double fill = 0.0) {
        t.name = p + name;
        t.init_const(1, cols, fill);
        t.decay = false;
      };
      winit(layer.wq, "attn.wq", cfg.d_hidden, cfg.d_hidden);
      binit(layer.bq, "attn.bq", cfg.d_hidden);
      winit(layer.wk, "attn.wk", cfg.d_hidden, cfg.d_hidden);
      binit(layer.bk, "attn.bk", cfg.d_hidden);
      winit(layer.wv, "attn.wv", cfg.d_hidden, cfg.d_hidden);
      binit(layer.bv, "attn.bv", cfg.d_hidden);
      winit(layer.wo, "attn.wo", cfg.d_hidden, cfg.d_hidden);
      binit(layer.bo, "attn.bo", cfg.d_hidden);
      binit(layer.ln1_g, "ln1.g", cfg.d_hidden, 1.0);
      binit(layer.ln1_b, "ln1.b", cfg.d_hidden);
      winit(layer.ffn_w1, "ffn.w1", cfg.d_hidden, cfg.ffn_width());
      binit(layer.ffn_b1, "ffn.b1", cfg.ffn_width());
      winit(layer.ffn_w2, "ffn.w2", cfg.ffn_width(), cfg.d_hidden);
      binit(layer.ffn_b2, "ffn.b2", cfg.d_hidden);
      binit(layer.ln2_g, "ln2.g", cfg.d_hidden, 1.0);
      binit(layer.ln2_b, "ln2.b", cfg.d_hidden);
      m.layers.push_back(std::move(layer));
    }

    m.mlm_w.name = "mlm.w";
    m.mlm_w.init_normal(cfg.d_hidden, cfg.vocab_size, std::sqrt(1.0 / cfg.d_hidden), rng);
    m.mlm_b.name = "mlm.b";
    m.mlm_b.init_zero(1, cfg.vocab_size);
    m.mlm_b.decay = false;
    return m;
  }

  std::vector<Tensor*> tensors() {
    std::vector<Tensor*> out = {&tok_emb, &pos_emb};
    for (size_t l = 0; l < conv_w.size(); ++l) {
      out.push_back(&conv_w[l]);
      out.push_back(&conv_b[l]);
    }
    if (has_proj()) out.push_back(&proj_w);
    for (auto& layer : layers)
      for (Tensor* t : {&layer.wq, &layer.bq, &layer.wk, &layer.bk, &layer.wv, &layer.bv, &layer.wo, &layer.bo,
                        &layer.ln1_g, &layer.ln1_b, &layer.ffn_w1, &layer.ffn_b1, &layer.ffn_w2, &layer.ffn_b2,
                        &layer.ln2_g, &layer.ln2_b})
        out.push_back(t);
    out.push_back(&mlm_w);
    out.push_back(&mlm_b);
    return out;
  }

  std::vector<const Tensor*> tensors() const {
    auto list = const_cast<EncoderModel*>(this)->tensors();
    return {list.begin(), list.end()};
  }

  size_t parameter_count() const {
    size_t n = 0;
    for (const Tensor* t : tensors()) n += t->count();
    return n;
  }

  void zero_grads() {
    for (Tensor* t : tensors()) t->grad.setZero();
  }
};

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

namespace detail {

constexpr double kLnEps = 1e-12;

inline void layer_norm_forward(const Mat& in, const Tensor& g, const Tensor& b, Mat& out, Mat& xhat,
                               std::vector<double>& inv) {
  Eigen::Index rows = in.rows(), cols = in.cols();
  out.resize(rows, cols);
  xhat.resize(rows, cols);
  inv.resize(static_cast<size_t>(rows));
  for (Eigen::Index i = 0; i < rows; ++i) {
    double mu = in.row(i).mean();
    double var = (in.row(i).array() - mu).square().mean();
    double iv = 1.0 / std::sqrt(var + kLnEps);
    inv[static_cast<size_t>(i)] = iv;
    xhat.row(i) = (in.row(i).array() - mu) * iv;
    out.row(i) = xhat.row(i).cwiseProduct(g.value.row(0)) + b.value.row(0);
  }
}

inline void layer_norm_backward(const Mat& dout, const Mat& xhat, const std::vector<double>& inv, Tensor& g,
                                Tensor& b, Mat& din) {
  Eigen::Index rows = dout.rows(), cols = dout.cols();
  din.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    Eigen::RowVectorXd dxhat = dout.row(i).cwiseProduct(g.value.row(0));
    double m1 = dxhat.mean();
    double m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
    din.row(i) = inv[static_cast<size_t>(i)] * (dxhat.array() - m1 - xhat.row(i).array() * m2);
    g.grad.row(0) += dout.row(i).cwiseProduct(xhat.row(i));
    b.grad.row(0) += dout.row(i);
  }
}

// im2col over the token axis with zero padding at both ends
inline Mat conv_columns(const Mat& in, int kernel) {
  Eigen::Index L = in.rows(), C = in.cols();
  int half = kernel / 2;
  Mat cols = Mat::Zero(L, static_cast<Eigen::Index>(kernel) * C);
  for (Eigen::Index t = 0; t < L; ++t)
    for (int k = 0; k < kernel; ++k) {
      Eigen::Index src = t + k - half;
      if (src < 0 || src >= L) continue;
      cols.block(t, static_cast<Eigen::Index>(k) * C, 1, C) = in.row(src);
    }
  return cols;
}

inline void conv_columns_backward(const Mat& dcols, int kernel, Mat& din) {
  Eigen::Index L = dcols.rows();
  Eigen::Index C = dcols.cols() / kernel;
  int half = kernel / 2;
  din = Mat::Zero(L, C);
  for (Eigen::Index t = 0; t < L; ++t)
    for (int k = 0; k < kernel; ++k) {
      Eigen::Index src = t + k - half;
      if (src < 0 || src >= L) continue;
      din.row(src) += dcols.block(t, static_cast<Eigen::Index>(k) * C, 1, C);
    }
}

}  // namespace detail

struct LayerCache {
  Mat x_in;
  Mat q, k, v;
  std::vector<Mat> probs;       // per head, post-softmax
  std::vector<Mat> prob_drop;   // per head dropout masks (train only)
  Mat context;                  // concatenated head outputs
  Mat attn_out;
  Mat ln1_in, ln1_xhat, ln1_out;
  std::vector<double> ln1_inv;
  Mat ffn_pre, ffn_act, ffn_drop, ffn_out;
  Mat ln2_in, ln2_xhat, ln2_out;
  std::vector<double> ln2_inv;
};

struct SeqCache {
  std::vector<int32_t> ids;
  int true_len = 0;
  std::vector<uint8_t> keep;    // 1 at non-PAD positions
  Mat emb;                      // token+position embeddings, PAD rows zeroed
  Mat emb_drop;                 // dropout_pos mask (train only)
  std::vector<Mat> conv_in, conv_cols, conv_pre, conv_drop;
  Mat stack_in;
  std::vector<LayerCache> layers;
  Mat hidden;                   // final layer output
};

// Standalone scaled dot-product attention; key_keep masks PAD keys.
inline Mat attention(const Mat& Q, const Mat& K, const Mat& V, const std::vector<uint8_t>* key_keep = nullptr) {
  if (Q.cols() != K.cols()) throw ValidationError("attention: Q and K widths differ");
  if (K.rows() != V.rows()) throw ValidationError("attention: K and V row counts differ");
  if (key_keep && static_cast<Eigen::Index>(key_keep->size()) != K.rows())
    throw ValidationError("attention: key mask length mismatch");
  Mat scores = Q * K.transpose() / std::sqrt(static_cast<double>(Q.cols()));
  return softmax_rows(scores, key_keep) * V;
}

// Full encoder forward over one sequence (any length <= max_seq). Dropout is
// applied only in train mode; the cache is filled when `cache` is non-null.
inline Mat encoder_forward(const EncoderModel& m, const TokenSequence& seq, bool train = false,
                           std::mt19937_64* rng = nullptr, SeqCache* cache = nullptr) {
  const EncoderConfig& cfg = m.cfg;
  Eigen::Index L = static_cast<Eigen::Index>(seq.ids.size());
  if (L > cfg.max_seq) throw ValidationError("sequence longer than max_seq");
  if (train && !rng) throw ValidationError("train-mode forward needs an rng");

  std::vector<uint8_t> keep(static_cast<size_t>(L));
  Mat emb(L, cfg.d_embed);
  for (Eigen::Index t = 0; t < L; ++t) {
    int32_t id = seq.ids[static_cast<size_t>(t)];
    if (id < 0 || id >= cfg.vocab_size) throw ValidationError("token id out of vocab range: " + std::to_string(id));
    bool pad = id == Vocabulary::pad_id;
    keep[static_cast<size_t>(t)] = !pad;
    if (pad)
      emb.row(t).setZero();  // PAD positions contribute nothing anywhere
    else
      emb.row(t) = m.tok_emb.value.row(id) + m.pos_emb.value.row(t);
  }

  Mat x = emb;
  Mat emb_drop;
  if (train && cfg.dropout_pos > 0) {
    emb_drop = dropout_mask(L, cfg.d_embed, cfg.dropout_pos, *rng);
    x = x.cwiseProduct(emb_drop);
  }

  if (cache) {
    cache->ids.assign(seq.ids.begin(), seq.ids.end());
    cache->true_len = seq.true_len;
    cache->keep = keep;
    cache->emb = emb;
    cache->emb_drop = emb_drop;
    cache->conv_in.clear();
    cache->conv_cols.clear();
    cache->conv_pre.clear();
    cache->conv_drop.clear();
    cache->layers.assign(static_cast<size_t>(cfg.n_layers), {});
  }

  if (cfg.conv_enabled) {
    for (size_t l = 0; l < m.conv_w.size(); ++l) {
      Mat cols = detail::conv_columns(x, cfg.conv_kernel);
      Mat pre = cols * m.conv_w[l].value;
      pre.rowwise() += m.conv_b[l].value.row(0);
      Mat act = relu(pre);
      Mat drop;
      if (train && cfg.dropout_conv > 0) {
        drop = dropout_mask(act.rows(), act.cols(), cfg.dropout_conv, *rng);
        act = act.cwiseProduct(drop);
      }
      if (cache) {
        cache->conv_in.push_back(x);
        cache->conv_cols.push_back(cols);
        cache->conv_pre.push_back(pre);
        cache->conv_drop.push_back(drop);
      }
      x = std::move(act);
    }
  } else if (m.has_proj()) {
    if (cache) cache->conv_in.push_back(x);
    x = x * m.proj_w.value;
  }
  if (cache) cache->stack_in = x;

  int dk = cfg.d_hidden / cfg.n_heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& ly = m.layers[static_cast<size_t>(l)];
    LayerCache* lc = cache ? &cache->layers[static_cast<size_t>(l)] : nullptr;
    if (lc) lc->x_in = x;

    Mat q = x * ly.wq.value;
    q.rowwise() += ly.bq.value.row(0);
    Mat k = x * ly.wk.value;
    k.rowwise() += ly.bk.value.row(0);
    Mat v = x * ly.wv.value;
    v.rowwise() += ly.bv.value.row(0);

    Mat context(L, cfg.d_hidden);
    std::vector<Mat> probs, prob_drop;
    for (int h = 0; h < cfg.n_heads; ++h) {
      Eigen::Index off = static_cast<Eigen::Index>(h) * dk;
      Mat qh = q.middleCols(off, dk);
      Mat kh = k.middleCols(off, dk);
      Mat vh = v.middleCols(off, dk);
      Mat scores = qh * kh.transpose() * scale;
      Mat p = softmax_rows(scores, &keep);
      Mat pd = p;
      Mat dm;
      if (train && cfg.dropout_attn > 0) {
        dm = dropout_mask(L, L, cfg.dropout_attn, *rng);
        pd = pd.cwiseProduct(dm);
      }
      context.middleCols(off, dk) = pd * vh;
      if (lc) {
        probs.push_back(std::move(p));
        prob_drop.push_back(std::move(dm));
      }
    }

    Mat attn_out = context * ly.wo.value;
    attn_out.rowwise() += ly.bo.value.row(0);

    Mat ln1_in = x + attn_out;
    Mat ln1_out, ln1_xhat;
    std::vector<double> ln1_inv;
    detail::layer_norm_forward(ln1_in, ly.ln1_g, ly.ln1_b, ln1_out, ln1_xhat, ln1_inv);

    Mat ffn_pre = ln1_out * ly.ffn_w1.value;
    ffn_pre.rowwise() += ly.ffn_b1.value.row(0);
    Mat ffn_act = relu(ffn_pre);
    Mat ffn_drop;
    if (train && cfg.dropout_ffn > 0) {
      ffn_drop = dropout_mask(ffn_act.rows(), ffn_act.cols(), cfg.dropout_ffn, *rng);
      ffn_act = ffn_act.cwiseProduct(ffn_drop);
    }
    Mat ffn_out = ffn_act * ly.ffn_w2.value;
    ffn_out.rowwise() += ly.ffn_b2.value.row(0);

    Mat ln2_in = ln1_out + ffn_out;
    Mat ln2_out, ln2_xhat;
    std::vector<double> ln2_inv;
    detail::layer_norm_forward(ln2_in, ly.ln2_g, ly.ln2_b, ln2_out, ln2_xhat, ln2_inv);

    if (lc) {
      lc->q = std::move(q);
      lc->k = std::move(k);
      lc->v = std::move(v);
      lc->probs = std::move(probs);
      lc->prob_drop = std::move(prob_drop);
      lc->context = std::move(context);
      lc->attn_out = std::move(attn_out);
      lc->ln1_in = std::move(ln1_in);
      lc->ln1_xhat = std::move(ln1_xhat);
      lc->ln1_inv = std::move(ln1_inv);
      lc->ln1_out = ln1_out;
      lc->ffn_pre = std::move(ffn_pre);
      lc->ffn_act = std::move(ffn_act);
      lc->ffn_drop = std::move(ffn_drop);
      lc->ffn_out = std::move(ffn_out);
      lc->ln2_in = std::move(ln2_in);
      lc->ln2_xhat = std::move(ln2_xhat);
      lc->ln2_inv = std::move(ln2_inv);
      lc->ln2_out = ln2_out;
    }
    x = std::move(ln2_out);
  }

  if (cache) cache->hidden = x;
  return x;
}

// Accumulates parameter gradients given d(loss)/d(hidden states).
inline void encoder_backward(EncoderModel& m, const SeqCache& cache, const Mat& d_hidden) {
  const EncoderConfig& cfg = m.cfg;
  Eigen::Index L = d_hidden.rows();
  int dk = cfg.d_hidden / cfg.n_heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Mat dx = d_hidden;
  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    auto& ly = m.layers[static_cast<size_t>(l)];
    const LayerCache& lc = cache.layers[static_cast<size_t>(l)];

    Mat d_ln2_in;
    detail::layer_norm_backward(dx, lc.ln2_xhat, lc.ln2_inv, ly.ln2_g, ly.ln2_b, d_ln2_in);

    // ln2_in = ln1_out + ffn_out
    Mat d_ln1_out = d_ln2_in;
    const Mat& d_ffn_out = d_ln2_in;

    ly.ffn_w2.grad += lc.ffn_act.transpose() * d_ffn_out;
    ly.ffn_b2.grad.row(0) += d_ffn_out.colwise().sum();
    Mat d_act = d_ffn_out * ly.ffn_w2.value.transpose();
    if (lc.ffn_drop.size() > 0) d_act = d_act.cwiseProduct(lc.ffn_drop);
    Mat d_pre = d_act.cwiseProduct((lc.ffn_pre.array() > 0.0).cast<double>().matrix());
    ly.ffn_w1.grad += lc.ln1_out.transpose() * d_pre;
    ly.ffn_b1.grad.row(0) += d_pre.colwise().sum();
    d_ln1_out += d_pre * ly.ffn_w1.value.transpose();

    Mat d_ln1_in;
    detail::layer_norm_backward(d_ln1_out, lc.ln1_xhat, lc.ln1_inv, ly.ln1_g, ly.ln1_b, d_ln1_in);

    // ln1_in = x_in + attn_out
    Mat d_x = d_ln1_in;
    const Mat& d_attn_out = d_ln1_in;

    ly.wo.grad += lc.context.transpose() * d_attn_out;
    ly.bo.grad.row(0) += d_attn_out.colwise().sum();
    Mat d_context = d_attn_out * ly.wo.value.transpose();

    Mat dq(L, cfg.d_hidden), dkm(L, cfg.d_hidden), dv(L, cfg.d_hidden);
    for (int h = 0; h < cfg.n_heads; ++h) {
      Eigen::Index off = static_cast<Eigen::Index>(h) * dk;
      Mat d_ch = d_context.middleCols(off, dk);
      const Mat& p = lc.probs[static_cast<size_t>(h)];
      Mat pd = p;
      if (lc.prob_drop[static_cast<size_t>(h)].size() > 0) pd = pd.cwiseProduct(lc.prob_drop[static_cast<size_t>(h)]);

      Mat vh = lc.v.middleCols(off, dk);
      Mat d_pd = d_ch * vh.transpose();
      dv.middleCols(off, dk) = pd.transpose() * d_ch;
      Mat d_p = d_pd;
      if (lc.prob_drop[static_cast<size_t>(h)].size() > 0) d_p = d_p.cwiseProduct(lc.prob_drop[static_cast<size_t>(h)]);

      // softmax backward: dS = P .* (dP - rowsum(dP .* P))
      Mat d_s(L, L);
      for (Eigen::Index i = 0; i < L; ++i) {
        double dot = d_p.row(i).cwiseProduct(p.row(i)).sum();
        d_s.row(i) = p.row(i).cwiseProduct((d_p.row(i).array() - dot).matrix());
      }
      Mat qh = lc.q.middleCols(off, dk);
      Mat kh = lc.k.middleCols(off, dk);
      dq.middleCols(off, dk) = d_s * kh * scale;
      dkm.middleCols(off, dk) = d_s.transpose() * qh * scale;
    }

    ly.wq.grad += lc.x_in.transpose() * dq;
    ly.bq.grad.row(0) += dq.colwise().sum();
    ly.wk.grad += lc.x_in.transpose() * dkm;
    ly.bk.grad.row(0) += dkm.colwise().sum();
    ly.wv.grad += lc.x_in.transpose() * dv;
    ly.bv.grad.row(0) += dv.colwise().sum();

    d_x += dq * ly.wq.value.transpose() + dkm * ly.wk.value.transpose() + dv * ly.wv.value.transpose();
    dx = std::move(d_x);
  }

  if (cfg.conv_enabled) {
    for (int l = static_cast<int>(m.conv_w.size()) - 1; l >= 0; --l) {
      auto& w = m.conv_w[static_cast<size_t>(l)];
      auto& b = m.conv_b[static_cast<size_t>(l)];
      const Mat& pre = cache.conv_pre[static_cast<size_t>(l)];
      if (cache.conv_drop[static_cast<size_t>(l)].size() > 0)
        dx = dx.cwiseProduct(cache.conv_drop[static_cast<size_t>(l)]);
      Mat d_pre = dx.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
      w.grad += cache.conv_cols[static_cast<size_t>(l)].transpose() * d_pre;
      b.grad.row(0) += d_pre.colwise().sum();
      Mat d_cols = d_pre * w.value.transpose();
      detail::conv_columns_backward(d_cols, cfg.conv_kernel, dx);
    }
  } else if (m.has_proj()) {
    m.proj_w.grad += cache.conv_in[0].transpose() * dx;
    dx = dx * m.proj_w.value.transpose();
  }

  if (cache.emb_drop.size() > 0) dx = dx.cwiseProduct(cache.emb_drop);
  for (Eigen::Index t = 0; t < L; ++t) {
    if (!cache.keep[static_cast<size_t>(t)]) continue;
    m.tok_emb.grad.row(cache.ids[static_cast<size_t>(t)]) += dx.row(t);
    m.pos_emb.grad.row(t) += dx.row(t);
  }
}

// ---------------------------------------------------------------------------
// MLM objective
// ---------------------------------------------------------------------------

struct MLMBatch {
  static constexpr int32_t no_target = -1;
  std::vector<TokenSequence> inputs;                 // ids after masking
  std::vector<std::vector<int32_t>> targets;         // original ids, -1 where unmasked
  std::vector<std::vector<uint8_t>> mask_positions;

  size_t masked_count() const {
    size_t n = 0;
    for (const auto& row : mask_positions)
      for (uint8_t b : row) n += b;
    return n;
  }
};

// BERT-style masking: each content position is selected independently with
// p = mask_rate; selected positions become [MASK] 80% of the time, a random
// non-special token 10%, and stay unchanged 10%. SOS/EOS/PAD are never
// touched.
inline MLMBatch mask_batch(const std::vector<TokenSequence>& seqs, const EncoderConfig& cfg, std::mt19937_64& rng) {
  MLMBatch batch;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool have_regular = cfg.vocab_size > Vocabulary::first_regular_id;
  std::uniform_int_distribution<int32_t> random_tok(Vocabulary::first_regular_id,
                                                    std::max(cfg.vocab_size - 1, Vocabulary::first_regular_id));
  for (const auto& seq : seqs) {
    TokenSequence input = seq;
    std::vector<int32_t> targets(seq.ids.size(), MLMBatch::no_target);
    std::vector<uint8_t> positions(seq.ids.size(), 0);
    for (int t = 1; t + 1 < seq.true_len; ++t) {
      if (u(rng) >= cfg.mask_rate) continue;
      positions[static_cast<size_t>(t)] = 1;
      targets[static_cast<size_t>(t)] = seq.ids[static_cast<size_t>(t)];
      double r = u(rng);
      if (r < 0.8)
        input.ids[static_cast<size_t>(t)] = Vocabulary::mask_id;
      else if (r < 0.9 && have_regular)
        input.ids[static_cast<size_t>(t)] = random_tok(rng);
      // else: keep the original token
    }
    batch.inputs.push_back(std::move(input));
    batch.targets.push_back(std::move(targets));
    batch.mask_positions.push_back(std::move(positions));
  }
  return batch;
}

struct MLMStats {
  double loss = 0;
  size_t masked = 0;
  size_t correct = 0;

  double accuracy() const { return masked ? static_cast<double>(correct) / static_cast<double>(masked) : 0.0; }
};

// Mean cross-entropy of the MLM projections over masked positions only.
inline MLMStats mlm_forward(const EncoderModel& m, const MLMBatch& batch, bool train = false,
                            std::mt19937_64* rng = nullptr, std::vector<SeqCache>* caches = nullptr) {
  size_t total_masked = batch.masked_count();
  if (total_masked == 0) throw ValidationError("MLM batch has zero masked positions");
  if (caches) caches->assign(batch.inputs.size(), {});

  MLMStats stats;
  stats.masked = total_masked;
  for (size_t s = 0; s < batch.inputs.size(); ++s) {
    SeqCache* cache = caches ? &(*caches)[s] : nullptr;
    SeqCache local;
    if (!cache) cache = &local;
    Mat hidden = encoder_forward(m, batch.inputs[s], train, rng, cache);
    for (size_t t = 0; t < batch.targets[s].size(); ++t) {
      if (!batch.mask_positions[s][t]) continue;
      Eigen::RowVectorXd logits = hidden.row(static_cast<Eigen::Index>(t)) * m.mlm_w.value;
      logits += m.mlm_b.value.row(0);
      double mx = logits.maxCoeff();
      double lse = std::log((logits.array() - mx).exp().sum()) + mx;
      int32_t target = batch.targets[s][t];
      stats.loss += lse - logits(target);
      Eigen::Index arg;
      logits.maxCoeff(&arg);
      stats.correct += arg == target;
    }
  }
  stats.loss /= static_cast<double>(total_masked);
  return stats;
}

inline double mlm_loss(const EncoderModel& m, const MLMBatch& batch) { return mlm_forward(m, batch).loss; }

// Backward pass matching mlm_forward(train) with the given caches.
inline void mlm_backward(EncoderModel& m, const MLMBatch& batch, const std::vector<SeqCache>& caches) {
  size_t total_masked = batch.masked_count();
  if (total_masked == 0) throw ValidationError("MLM batch has zero masked positions");
  double inv_n = 1.0 / static_cast<double>(total_masked);

  for (size_t s = 0; s < batch.inputs.size(); ++s) {
    const SeqCache& cache = caches[s];
    const Mat& hidden = cache.hidden;
    Mat d_hidden = Mat::Zero(hidden.rows(), hidden.cols());
    for (size_t t = 0; t < batch.targets[s].size(); ++t) {
      if (!batch.mask_positions[s][t]) continue;
      Eigen::RowVectorXd logits = hidden.row(static_cast<Eigen::Index>(t)) * m.mlm_w.value;
      logits += m.mlm_b.value.row(0);
      double mx = logits.maxCoeff();
      Eigen::RowVectorXd probs = (logits.array() - mx).exp();
      probs /= probs.sum();
      probs(batch.targets[s][t]) -= 1.0;
      probs *= inv_n;
      m.mlm_w.grad += hidden.row(static_cast<Eigen::Index>(t)).transpose() * probs;
      m.mlm_b.grad.row(0) += probs;
      d_hidden.row(static_cast<Eigen::Index>(t)) = probs * m.mlm_w.value.transpose();
    }
    encoder_backward(m, cache, d_hidden);
  }
}

// ---------------------------------------------------------------------------
// Optimizer and pre-training loop
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<Mat> m, v;
  long t = 0;

  void init(const std::vector<Tensor*>& params) {
    m.clear();
    v.clear();
    for (const Tensor* p : params) {
      m.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      v.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
    t = 0;
  }
};

// Adam with decoupled weight decay; decay skips biases and layer norms.
inline void adam_step(std::vector<Tensor*>& params, AdamState& st, const OptimizerConfig& oc, double lr) {
  ++st.t;
  double bc1 = 1.0 - std::pow(oc.beta1, static_cast<double>(st.t));
  double bc2 = 1.0 - std::pow(oc.beta2, static_cast<double>(st.t));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    st.m[i] = oc.beta1 * st.m[i] + (1.0 - oc.beta1) * p.grad;
    st.v[i] = oc.beta2 * st.v[i] + (1.0 - oc.beta2) * p.grad.cwiseProduct(p.grad);
    Mat mhat = st.m[i] / bc1;
    Mat vhat = st.v[i] / bc2;
    p.value -= lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + oc.eps).matrix());
    if (p.decay && oc.weight_decay > 0) p.value -= lr * oc.weight_decay * p.value;
  }
}

// Linear warmup to the peak rate, then linear decay to zero.
inline double schedule_lr(const OptimizerConfig& oc, long step, long total_steps) {
  if (total_steps <= 0) return oc.lr;
  long warmup = std::lround(oc.warmup_fraction * static_cast<double>(total_steps));
  if (warmup > 0 && step <= warmup) return oc.lr * static_cast<double>(step) / static_cast<double>(warmup);
  long decay_span = total_steps - warmup;
  if (decay_span <= 0) return oc.lr;
  return oc.lr * static_cast<double>(total_steps - step) / static_cast<double>(decay_span);
}

struct TrainLogEntry {
  int epoch = 0;
  long step = 0;
  double loss = 0;
  double lr = 0;

  json to_json() const {
    json j;
    j["epoch"] = epoch;
    j["step"] = step;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", loss);
    j["loss"] = json::parse(buf);
    std::snprintf(buf, sizeof(buf), "%.17g", lr);
    j["lr"] = json::parse(buf);
    return j;
  }
};

struct PretrainResult {
  EncoderModel model;
  std::vector<TrainLogEntry> log;
  std::vector<double> epoch_loss;  // mean step loss per epoch
};

using EpochCallback = std::function<void(int epoch, const EncoderModel&, const std::vector<TrainLogEntry>&)>;

// DS-Pre: masked-language-model pre-training. The batch stream (order,
// masking, dropout) is derived from the seed and replayed identically every
// epoch, so runs are bit-reproducible and a zero learning rate leaves the
// loss sequence constant.
inline PretrainResult pretrain(const std::vector<TokenSequence>& corpus, const EncoderConfig& cfg,
                               const OptimizerConfig& oc, uint64_t seed, const EpochCallback& per_epoch = {}) {
  cfg.validate();
  oc.validate();
  if (corpus.empty()) throw ValidationError("pre-training corpus is empty");

  PretrainResult res;
  res.model = EncoderModel::build(cfg, seed);
  auto params = res.model.tensors();
  AdamState adam;
  adam.init(params);

  std::vector<size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(fnv1a("shuffle", seed));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  long steps_per_epoch = static_cast<long>((corpus.size() + oc.batch_size - 1) / static_cast<size_t>(oc.batch_size));
  long total_steps = steps_per_epoch * oc.epochs;
  long step = 0;

  for (int epoch = 1; epoch <= oc.epochs; ++epoch) {
    // identical mask/dropout stream every epoch
    std::mt19937_64 epoch_rng(fnv1a("mask", seed));
    double epoch_sum = 0;
    long epoch_steps = 0;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(oc.batch_size)) {
      std::vector<TokenSequence> chunk;
      for (size_t i = at; i < std::min(order.size(), at + static_cast<size_t>(oc.batch_size)); ++i)
        chunk.push_back(corpus[order[i]]);
      MLMBatch batch = mask_batch(chunk, cfg, epoch_rng);
      if (batch.masked_count() == 0) continue;

      ++step;
      double lr = schedule_lr(oc, step, total_steps);
      res.model.zero_grads();
      std::vector<SeqCache> caches;
      MLMStats stats = mlm_forward(res.model, batch, true, &epoch_rng, &caches);
      if (!std::isfinite(stats.loss))
        throw std::runtime_error("MLM loss diverged (non-finite) at epoch " + std::to_string(epoch) + " step " +
                                 std::to_string(step));
      mlm_backward(res.model, batch, caches);
      adam_step(params, adam, oc, lr);

      res.log.push_back({epoch, step, stats.loss, lr});
      epoch_sum += stats.loss;
      ++epoch_steps;
    }
    if (epoch_steps == 0) throw ValidationError("no trainable batches: every batch masked zero positions");
    res.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_steps));
    if (per_epoch) per_epoch(epoch, res.model, res.log);
  }
  return res;
}

// Masked-token accuracy under a seed-deterministic masking of `seqs`.
inline MLMStats mlm_evaluate(const EncoderModel& m, const std::vector<TokenSequence>& seqs, uint64_t seed) {
  std::mt19937_64 rng(fnv1a("mask", seed));
  MLMBatch batch = mask_batch(seqs, m.cfg, rng);
  return mlm_forward(m, batch);
}

// ---------------------------------------------------------------------------
// Embedding extraction and attention export
// ---------------------------------------------------------------------------

// Mean of the final-layer hidden states over non-PAD positions.
inline Eigen::RowVectorXd embed_function(const EncoderModel& m, const TokenSequence& seq) {
  Mat hidden = encoder_forward(m, seq);
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(hidden.cols());
  int n = 0;
  for (Eigen::Index t = 0; t < hidden.rows(); ++t) {
    if (seq.ids[static_cast<size_t>(t)] == Vocabulary::pad_id) continue;
    sum += hidden.row(t);
    ++n;
  }
  return n ? Eigen::RowVectorXd(sum / n) : sum;
}

// Raw per-layer per-head attention matrices, row-stochastic over non-PAD
// keys, for external visualization.
inline std::vector<std::vector<Mat>> export_attention(const EncoderModel& m, const TokenSequence& seq) {
  SeqCache cache;
  encoder_forward(m, seq, false, nullptr, &cache);
  std::vector<std::vector<Mat>> out;
  for (const auto& layer : cache.layers) out.push_back(layer.probs);
  return out;
}

inline json attention_to_json(const std::vector<std::vector<Mat>>& attn) {
  json layers = json::array();
  for (const auto& layer : attn) {
    json heads = json::array();
    for (const Mat& p : layer) {
      json rows = json::array();
      for (Eigen::Index i = 0; i < p.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < p.cols(); ++j) row.push_back(p(i, j));
        rows.push_back(std::move(row));
      }
      heads.push_back(std::move(rows));
    }
    layers.push_back(std::move(heads));
  }
  return {{"layers", layers}};
}

}  // namespace binsem
