#pragma once

// LSTM-Autoencoder: stacked LSTM encoder whose final hidden state is the
// latent code, a mirrored LSTM decoder fed the repeated code, and a linear
// read-out per timestep. Trained on mean squared reconstruction error with
// Adam and validation early stopping.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sliceguard/common.hpp"
#include "sliceguard/features.hpp"
#include "sliceguard/lstm.hpp"

namespace sliceguard::nn {

using json = nlohmann::json;

struct AutoencoderArch {
  std::size_t input_width = features::kNumFeatures;
  std::vector<std::size_t> encoder = {100, 50};
  std::vector<std::size_t> decoder = {50, 100};
  std::size_t lookback = 1;

  std::size_t code_width() const { return encoder.back(); }

  // {100, 50, 50, 50, 100}: encoder widths, code, mirrored decoder widths.
  static AutoencoderArch from_widths(const std::vector<std::size_t>& widths, std::size_t input_width,
                                     std::size_t lookback = 1) {
    if (widths.size() < 3 || widths.size() % 2 == 0)
      throw ConfigError("arch", "expected an odd number (>= 3) of layer widths");
    const std::size_t half = widths.size() / 2;
    AutoencoderArch a;
    a.input_width = input_width;
    a.lookback = lookback;
    a.encoder.assign(widths.begin(), widths.begin() + static_cast<std::ptrdiff_t>(half));
    if (widths[half] != a.encoder.back()) throw ConfigError("arch", "code width must equal the last encoder width");
    a.decoder.assign(widths.begin() + static_cast<std::ptrdiff_t>(half) + 1, widths.end());
    a.validate();
    return a;
  }

  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w = encoder;
    w.push_back(code_width());
    w.insert(w.end(), decoder.begin(), decoder.end());
    return w;
  }

  void validate() const {
    if (input_width == 0) throw ConfigError("arch.input_width", "must be positive");
    if (encoder.empty() || decoder.empty()) throw ConfigError("arch", "encoder and decoder need at least one layer");
    for (auto w : encoder)
      if (w == 0) throw ConfigError("arch.encoder", "widths must be positive");
    for (auto w : decoder)
      if (w == 0) throw ConfigError("arch.decoder", "widths must be positive");
    if (lookback == 0) throw ConfigError("arch.lookback", "must be at least 1");
    if (encoder.size() != decoder.size()) throw ConfigError("arch", "decoder must mirror the encoder depth");
    for (std::size_t i = 0; i < encoder.size(); ++i)
      if (decoder[i] != encoder[encoder.size() - 1 - i])
        throw ConfigError("arch", "decoder widths must mirror the encoder");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AutoencoderArch, input_width, encoder, decoder, lookback)

// outputs:   every layer output, latent code included
// decoder:   decoder layer outputs only
// recurrent: h_{t-1} feeding the gates of every LSTM (inert at lookback 1)
enum class DropoutPlacement { Outputs, Decoder, Recurrent };

NLOHMANN_JSON_SERIALIZE_ENUM(DropoutPlacement, {{DropoutPlacement::Outputs, "outputs"},
                                                {DropoutPlacement::Decoder, "decoder"},
                                                {DropoutPlacement::Recurrent, "recurrent"}})

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double dropout = 0.2;
  DropoutPlacement dropout_placement = DropoutPlacement::Outputs;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  double validation_fraction = 0.2;
  std::size_t k_folds = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate", "must be positive");
    if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout", "must lie in [0, 1)");
    if (max_epochs == 0) throw ConfigError("max_epochs", "must be positive");
    if (patience >= max_epochs) throw ConfigError("patience", "must be below max_epochs");
    if (!(validation_fraction > 0 && validation_fraction < 1))
      throw ConfigError("validation_fraction", "must lie in (0, 1)");
    if (k_folds < 2) throw ConfigError("k_folds", "must be at least 2");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, batch_size, learning_rate, beta1, beta2, epsilon, dropout,
                                                dropout_placement, max_epochs, patience, validation_fraction, k_folds, seed)

template <class S>
struct Dense {
  Mat<S> W;
  Vec<S> b;
};

// Parameters of the network. The same type doubles as a gradient buffer.
template <class S>
struct Autoencoder {
  AutoencoderArch arch;
  std::vector<LstmParams<S>> encoder;
  std::vector<LstmParams<S>> decoder;
  Dense<S> out;

  Autoencoder() = default;

  explicit Autoencoder(const AutoencoderArch& a) : arch(a) {
    arch.validate();
    auto in = static_cast<Eigen::Index>(a.input_width);
    for (auto w : a.encoder) {
      encoder.emplace_back(in, static_cast<Eigen::Index>(w));
      in = static_cast<Eigen::Index>(w);
    }
    for (auto w : a.decoder) {
      decoder.emplace_back(in, static_cast<Eigen::Index>(w));
      in = static_cast<Eigen::Index>(w);
    }
    out.W = Mat<S>::Zero(static_cast<Eigen::Index>(a.input_width), in);
    out.b = Vec<S>::Zero(static_cast<Eigen::Index>(a.input_width));
  }

  // Every parameter block as (pointer, length), in a fixed order.
  std::vector<std::pair<S*, Eigen::Index>> blocks() {
    std::vector<std::pair<S*, Eigen::Index>> v;
    for (auto* layers : {&encoder, &decoder})
      for (auto& l : *layers) {
        v.emplace_back(l.W.data(), l.W.size());
        v.emplace_back(l.U.data(), l.U.size());
        v.emplace_back(l.b.data(), l.b.size());
      }
    v.emplace_back(out.W.data(), out.W.size());
    v.emplace_back(out.b.data(), out.b.size());
    return v;
  }

  std::vector<std::pair<const S*, Eigen::Index>> blocks() const {
    std::vector<std::pair<const S*, Eigen::Index>> v;
    for (auto& [p, n] : const_cast<Autoencoder*>(this)->blocks()) v.emplace_back(p, n);
    return v;
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& [p, len] : blocks()) n += len;
    return n;
  }

  void set_zero() {
    for (auto& [p, n] : blocks()) std::fill(p, p + n, S(0));
  }

  // Uniform in +-1/sqrt(fan_in) for weights; zero biases.
  void init_uniform(Rng& rng) {
    auto fill = [&](Mat<S>& m, double fan_in) {
      const double k = 1.0 / std::sqrt(fan_in);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(rng.uniform(-k, k));
    };
    for (auto* layers : {&encoder, &decoder})
      for (auto& l : *layers) {
        fill(l.W, static_cast<double>(l.input()));
        fill(l.U, static_cast<double>(l.hidden()));
        l.b.setZero();
      }
    fill(out.W, static_cast<double>(out.W.cols()));
    out.b.setZero();
  }

  template <class T>
  Autoencoder<T> cast() const {
    Autoencoder<T> a;
    a.arch = arch;
    for (const auto& l : encoder) a.encoder.push_back(l.template cast<T>());
    for (const auto& l : decoder) a.decoder.push_back(l.template cast<T>());
    a.out.W = out.W.template cast<T>();
    a.out.b = out.b.template cast<T>();
    return a;
  }
};

// Inverted-dropout masks; an empty matrix means no dropout at that spot.
template <class S>
struct DropoutMasks {
  std::vector<std::vector<Mat<S>>> encoder;  // [layer][t], layer outputs
  std::vector<std::vector<Mat<S>>> decoder;
  std::vector<Mat<S>> enc_rec, dec_rec;      // [layer], recurrent
};

template <class S>
struct ForwardState {
  std::vector<LstmCache<S>> enc, dec;
  std::vector<std::vector<Mat<S>>> enc_act, dec_act;  // post ReLU + dropout
  Mat<S> code;
  std::vector<Mat<S>> y;
};

namespace detail {

template <class S>
Mat<S> relu(const Mat<S>& h) {
  return h.cwiseMax(S(0));
}

template <class S>
Mat<S> relu_grad(const Mat<S>& h, const Mat<S>& upstream) {
  return (h.array() > S(0)).select(upstream, Mat<S>::Zero(h.rows(), h.cols()));
}

template <class S>
DropoutMasks<S> sample_masks(const Autoencoder<S>& net, std::size_t T, Eigen::Index B, double rate,
                             DropoutPlacement where, Rng& rng) {
  DropoutMasks<S> m;
  const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
  auto make = [&](Eigen::Index H) {
    Mat<S> mask(H, B);
    for (Eigen::Index k = 0; k < mask.size(); ++k) mask.data()[k] = rng.uniform() < rate ? S(0) : keep_scale;
    return mask;
  };
  const bool outputs = where == DropoutPlacement::Outputs;
  const bool rec = where == DropoutPlacement::Recurrent;
  for (std::size_t l = 0; l < net.encoder.size(); ++l) {
    m.encoder.emplace_back(T);
    const bool last = l + 1 == net.encoder.size();
    if (outputs)
      for (std::size_t t = 0; t < T; ++t)
        if (!last || t + 1 == T) m.encoder.back()[t] = make(net.encoder[l].hidden());
    m.enc_rec.push_back(rec && T > 1 ? make(net.encoder[l].hidden()) : Mat<S>());
  }
  for (const auto& layer : net.decoder) {
    m.decoder.emplace_back(T);
    if (!rec)
      for (std::size_t t = 0; t < T; ++t) m.decoder.back()[t] = make(layer.hidden());
    m.dec_rec.push_back(rec && T > 1 ? make(layer.hidden()) : Mat<S>());
  }
  return m;
}

}  // namespace detail

// Full forward pass over a batch (one matrix per timestep, samples as columns).
template <class S>
void forward(const Autoencoder<S>& net, const std::vector<Mat<S>>& xs, ForwardState<S>& st,
             const DropoutMasks<S>* masks = nullptr) {
  const std::size_t T = xs.size();
  if (T != net.arch.lookback) throw Error("autoencoder: sequence length must equal lookback");
  for (const auto& x : xs)
    if (static_cast<std::size_t>(x.rows()) != net.arch.input_width) throw Error("autoencoder: input width mismatch");
  st.enc.resize(net.encoder.size());
  st.dec.resize(net.decoder.size());
  st.enc_act.assign(net.encoder.size(), {});
  st.dec_act.assign(net.decoder.size(), {});

  const std::vector<Mat<S>>* in = &xs;
  for (std::size_t l = 0; l < net.encoder.size(); ++l) {
    const auto& hs = lstm_forward(net.encoder[l], *in, st.enc[l], masks ? masks->enc_rec[l] : Mat<S>());
    const bool last = l + 1 == net.encoder.size();
    auto& act = st.enc_act[l];
    act.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
      if (last && t + 1 != T) continue;
      act[t] = detail::relu(hs[t]);
      if (masks && masks->encoder[l][t].size()) act[t].array() *= masks->encoder[l][t].array();
    }
    in = &act;
  }
  st.code = st.enc_act.back()[T - 1];
  std::vector<Mat<S>> repeated(T, st.code);
  in = &repeated;
  for (std::size_t l = 0; l < net.decoder.size(); ++l) {
    const auto& hs = lstm_forward(net.decoder[l], *in, st.dec[l], masks ? masks->dec_rec[l] : Mat<S>());
    auto& act = st.dec_act[l];
    act.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
      act[t] = detail::relu(hs[t]);
      if (masks && masks->decoder[l][t].size()) act[t].array() *= masks->decoder[l][t].array();
    }
    in = &act;
  }
  st.y.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    st.y[t].noalias() = net.out.W * (*in)[t];
    st.y[t].colwise() += net.out.b;
  }
}

// Mean squared error over every element of the sequence batch.
template <class S>
double reconstruction_loss(const std::vector<Mat<S>>& xs, const std::vector<Mat<S>>& ys) {
  double sum = 0.0;
  double n = 0.0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    sum += static_cast<double>((ys[t] - xs[t]).squaredNorm());
    n += static_cast<double>(xs[t].size());
  }
  return sum / n;
}

// Gradient of reconstruction_loss w.r.t. every parameter, accumulated into `grad`.
template <class S>
void backward(const Autoencoder<S>& net, const std::vector<Mat<S>>& xs, const ForwardState<S>& st,
              Autoencoder<S>& grad, const DropoutMasks<S>* masks = nullptr) {
  const std::size_t T = xs.size();
  double n = 0.0;
  for (const auto& x : xs) n += static_cast<double>(x.size());
  const S scale = static_cast<S>(2.0 / n);

  const std::size_t nd = net.decoder.size();
  std::vector<Mat<S>> d_act(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Mat<S> dy = scale * (st.y[t] - xs[t]);
    grad.out.W.noalias() += dy * st.dec_act[nd - 1][t].transpose();
    grad.out.b += dy.rowwise().sum();
    d_act[t].noalias() = net.out.W.transpose() * dy;
  }
  for (std::size_t l = nd; l-- > 0;) {
    std::vector<Mat<S>> dh(T);
    for (std::size_t t = 0; t < T; ++t) {
      Mat<S> up = d_act[t];
      if (masks && masks->decoder[l][t].size()) up.array() *= masks->decoder[l][t].array();
      dh[t] = detail::relu_grad(st.dec[l].h[t], up);
    }
    d_act = lstm_backward(net.decoder[l], st.dec[l], dh, grad.decoder[l]);
  }
  Mat<S> d_code = d_act[0];
  for (std::size_t t = 1; t < T; ++t) d_code += d_act[t];

  const std::size_t ne = net.encoder.size();
  for (std::size_t l = ne; l-- > 0;) {
    std::vector<Mat<S>> dh(T);
    for (std::size_t t = 0; t < T; ++t) {
      Mat<S> up;
      if (l + 1 == ne) {
        if (t + 1 != T) continue;
        up = d_code;
      } else {
        up = d_act[t];
      }
      if (masks && masks->encoder[l][t].size()) up.array() *= masks->encoder[l][t].array();
      dh[t] = detail::relu_grad(st.enc[l].h[t], up);
    }
    d_act = lstm_backward(net.encoder[l], st.enc[l], dh, grad.encoder[l]);
  }
}

// ---------------------------------------------------------------------------
// Sequence data: `steps[t]` is width x N, one column per sample.

struct SequenceSet {
  std::vector<Mat<float>> steps;

  std::size_t size() const { return steps.empty() ? 0 : static_cast<std::size_t>(steps[0].cols()); }
  std::size_t width() const { return steps.empty() ? 0 : static_cast<std::size_t>(steps[0].rows()); }
  std::size_t lookback() const { return steps.size(); }

  SequenceSet gather(const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) const {
    SequenceSet out;
    for (const auto& s : steps) {
      Mat<float> m(s.rows(), static_cast<Eigen::Index>(end - begin));
      for (std::size_t k = begin; k < end; ++k) m.col(static_cast<Eigen::Index>(k - begin)) = s.col(static_cast<Eigen::Index>(idx[k]));
      out.steps.push_back(std::move(m));
    }
    return out;
  }

  SequenceSet slice(std::size_t begin, std::size_t end) const {
    SequenceSet out;
    for (const auto& s : steps)
      out.steps.push_back(s.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)));
    return out;
  }
};

// Rows of `x` (N x width) as length-1 sequences.
inline SequenceSet make_sequences(const Eigen::MatrixXd& x) {
  SequenceSet s;
  s.steps.push_back(x.transpose().cast<float>());
  return s;
}

// Feature sequences after column selection and normalization.
inline SequenceSet make_sequences(const std::vector<features::Sequence>& seqs, const std::vector<std::size_t>& selected,
                                  const features::NormalizerParams& norm) {
  SequenceSet s;
  if (seqs.empty()) return s;
  const std::size_t T = seqs.front().steps.size();
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<features::FeatureVector> rows;
    rows.reserve(seqs.size());
    for (const auto& q : seqs) {
      if (q.steps.size() != T) throw Error("make_sequences: ragged sequences");
      rows.push_back(q.steps[t]);
    }
    const auto x = features::apply_normalizer(features::select_columns(features::to_matrix(rows), selected), norm);
    s.steps.push_back(x.transpose().cast<float>());
  }
  return s;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double best_val_loss = 0.0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EpochRecord, epoch, train_loss, val_loss, best_val_loss)

struct AutoencoderModel {
  Autoencoder<float> net;
  TrainConfig config;
  std::vector<std::size_t> selected;  // feature columns fed to the network
  features::NormalizerParams normalizer;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;

  const AutoencoderArch& arch() const { return net.arch; }
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

namespace detail {

class Adam {
 public:
  Adam(const Autoencoder<float>& shape, const TrainConfig& cfg) : cfg_(cfg), m_(shape), v_(shape) {
    m_.set_zero();
    v_.set_zero();
  }

  void step(Autoencoder<float>& net, Autoencoder<float>& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const auto lr = static_cast<float>(cfg_.learning_rate * std::sqrt(c2) / c1);
    const auto b1 = static_cast<float>(cfg_.beta1);
    const auto b2 = static_cast<float>(cfg_.beta2);
    const auto eps = static_cast<float>(cfg_.epsilon * std::sqrt(c2));
    auto p = net.blocks();
    auto g = grad.blocks();
    auto m = m_.blocks();
    auto v = v_.blocks();
    for (std::size_t k = 0; k < p.size(); ++k) {
      Eigen::Map<Eigen::ArrayXf> P(p[k].first, p[k].second), G(g[k].first, g[k].second), M(m[k].first, m[k].second),
          V(v[k].first, v[k].second);
      M = b1 * M + (1.0f - b1) * G;
      V = b2 * V + (1.0f - b2) * G.square();
      P -= lr * M / (V.sqrt() + eps);
    }
  }

 private:
  TrainConfig cfg_;
  Autoencoder<float> m_, v_;
  std::uint64_t t_ = 0;
};

inline double evaluate_loss(const Autoencoder<float>& net, const SequenceSet& data, std::size_t chunk = 1024) {
  if (data.size() == 0) return 0.0;
  double sum = 0.0;
  ForwardState<float> st;
  for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
    const std::size_t end = std::min(data.size(), begin + chunk);
    const auto part = data.slice(begin, end);
    forward(net, part.steps, st);
    sum += reconstruction_loss(part.steps, st.y) * static_cast<double>(end - begin);
  }
  return sum / static_cast<double>(data.size());
}

struct FitResult {
  Autoencoder<float> best;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

inline FitResult fit(const SequenceSet& data, const std::vector<std::size_t>& train_idx,
                     const std::vector<std::size_t>& val_idx, const AutoencoderArch& arch, const TrainConfig& cfg,
                     Rng& rng) {
  Autoencoder<float> net(arch);
  net.init_uniform(rng);
  Autoencoder<float> grad(arch);
  Adam adam(net, cfg);
  const SequenceSet val = data.gather(val_idx, 0, val_idx.size());
  FitResult res;
  res.best = net;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> order = train_idx;
  ForwardState<float> st;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double train_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const auto batch = data.gather(order, begin, end);
      std::optional<DropoutMasks<float>> masks;
      if (cfg.dropout > 0)
        masks = sample_masks(net, batch.lookback(), static_cast<Eigen::Index>(end - begin), cfg.dropout,
                             cfg.dropout_placement, rng);
      forward(net, batch.steps, st, masks ? &*masks : nullptr);
      const double loss = reconstruction_loss(batch.steps, st.y);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", batch starting at " << begin
            << " (learning_rate=" << cfg.learning_rate << ")";
        throw TrainingError(msg.str());
      }
      train_sum += loss * static_cast<double>(end - begin);
      grad.set_zero();
      backward(net, batch.steps, st, grad, masks ? &*masks : nullptr);
      adam.step(net, grad);
    }
    const double val_loss = val.size() > 0 ? evaluate_loss(net, val) : train_sum / static_cast<double>(order.size());
    if (!std::isfinite(val_loss))
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    if (val_loss < best) {
      best = val_loss;
      res.best = net;
      res.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    res.history.push_back({epoch, train_sum / static_cast<double>(order.size()), val_loss, best});
    if (since_best >= cfg.patience) break;
  }
  return res;
}

}  // namespace detail

// Trains on every row of `data`; a seeded 20% of rows is held out for early
// stopping and the best-validation parameters are returned.
inline AutoencoderModel train_autoencoder(const SequenceSet& data, const AutoencoderArch& arch, const TrainConfig& cfg) {
  cfg.validate();
  arch.validate();
  if (data.size() < 2) throw Error("train_autoencoder: need at least two sequences");
  if (data.width() != arch.input_width) throw Error("train_autoencoder: data width does not match arch.input_width");
  if (data.lookback() != arch.lookback) throw Error("train_autoencoder: sequence length does not match lookback");
  Rng rng(cfg.seed);
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(idx);
  auto n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(idx.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, idx.size() - 1);
  const std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  const std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  auto res = detail::fit(data, train, val, arch, cfg, rng);
  AutoencoderModel model;
  model.net = std::move(res.best);
  model.config = cfg;
  model.history = std::move(res.history);
  model.best_epoch = res.best_epoch;
  return model;
}

struct FoldResult {
  std::size_t fold = 0;
  std::size_t best_epoch = 0;
  double val_loss = 0.0;
};

// k-fold cross-validation for hyperparameter audits: each fold is held out
// once and its best reconstruction loss reported.
inline std::vector<FoldResult> kfold_audit(const SequenceSet& data, const AutoencoderArch& arch, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() < cfg.k_folds) throw Error("kfold_audit: fewer sequences than folds");
  Rng rng(cfg.seed);
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(idx);
  std::vector<FoldResult> out;
  for (std::size_t k = 0; k < cfg.k_folds; ++k) {
    std::vector<std::size_t> train, val;
    for (std::size_t i = 0; i < idx.size(); ++i) (i % cfg.k_folds == k ? val : train).push_back(idx[i]);
    Rng fold_rng = rng.fork(k);
    auto res = detail::fit(data, train, val, arch, cfg, fold_rng);
    out.push_back({k, res.best_epoch, res.history[res.best_epoch - 1].val_loss});
  }
  return out;
}

// Latent codes (N x code_width), dropout disabled.
inline Eigen::MatrixXd encode(const AutoencoderModel& model, const SequenceSet& data, std::size_t chunk = 1024) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(model.arch().code_width()));
  ForwardState<float> st;
  for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
    const std::size_t end = std::min(data.size(), begin + chunk);
    forward(model.net, data.slice(begin, end).steps, st);
    out.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) =
        st.code.transpose().cast<double>();
  }
  return out;
}

// Per-sequence mean squared reconstruction error.
inline std::vector<double> reconstruction_errors(const AutoencoderModel& model, const SequenceSet& data,
                                                 std::size_t chunk = 1024) {
  std::vector<double> out;
  out.reserve(data.size());
  ForwardState<float> st;
  for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
    const std::size_t end = std::min(data.size(), begin + chunk);
    const auto part = data.slice(begin, end);
    forward(model.net, part.steps, st);
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(end - begin); ++c) {
      double sum = 0.0;
      for (std::size_t t = 0; t < part.steps.size(); ++t)
        sum += static_cast<double>((st.y[t].col(c) - part.steps[t].col(c)).squaredNorm());
      out.push_back(sum / static_cast<double>(part.steps.size() * part.width()));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization. Float weights survive the double round trip exactly.

namespace detail {

template <class M>
json matrix_to_json(const M& m) {
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) v[static_cast<std::size_t>(i)] = static_cast<double>(m.data()[i]);
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", v}};
}

template <class M>
void matrix_from_json(const json& j, M& m) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw Error("model: matrix payload size mismatch");
  if (m.rows() != rows || m.cols() != cols) throw Error("model: matrix shape inconsistent with arch");
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<typename M::Scalar>(data[static_cast<std::size_t>(i)].get<double>());
}

inline json layer_to_json(const LstmParams<float>& l) {
  return json{{"W", matrix_to_json(l.W)}, {"U", matrix_to_json(l.U)}, {"b", matrix_to_json(l.b)}};
}

inline void layer_from_json(const json& j, LstmParams<float>& l) {
  matrix_from_json(j.at("W"), l.W);
  matrix_from_json(j.at("U"), l.U);
  matrix_from_json(j.at("b"), l.b);
}

}  // namespace detail

inline json model_to_json(const AutoencoderModel& m) {
  json j;
  j["arch"] = m.arch();
  j["config"] = m.config;
  j["selected"] = m.selected;
  j["normalizer"] = m.normalizer;
  j["history"] = m.history;
  j["best_epoch"] = m.best_epoch;
  json enc = json::array(), dec = json::array();
  for (const auto& l : m.net.encoder) enc.push_back(detail::layer_to_json(l));
  for (const auto& l : m.net.decoder) dec.push_back(detail::layer_to_json(l));
  j["encoder"] = enc;
  j["decoder"] = dec;
  j["output"] = json{{"W", detail::matrix_to_json(m.net.out.W)}, {"b", detail::matrix_to_json(m.net.out.b)}};
  return j;
}

inline AutoencoderModel model_from_json(const json& j) {
  AutoencoderModel m;
  m.net = Autoencoder<float>(j.at("arch").get<AutoencoderArch>());
  m.config = j.at("config").get<TrainConfig>();
  m.selected = j.at("selected").get<std::vector<std::size_t>>();
  m.normalizer = j.at("normalizer").get<features::NormalizerParams>();
  m.history = j.at("history").get<std::vector<EpochRecord>>();
  m.best_epoch = j.at("best_epoch").get<std::size_t>();
  if (m.selected.size() != m.arch().input_width || m.normalizer.width() != m.selected.size())
    throw Error("model: feature selection inconsistent with arch");
  const auto& enc = j.at("encoder");
  const auto& dec = j.at("decoder");
  if (enc.size() != m.net.encoder.size() || dec.size() != m.net.decoder.size())
    throw Error("model: layer count inconsistent with arch");
  for (std::size_t l = 0; l < enc.size(); ++l) detail::layer_from_json(enc[l], m.net.encoder[l]);
  for (std::size_t l = 0; l < dec.size(); ++l) detail::layer_from_json(dec[l], m.net.decoder[l]);
  detail::matrix_from_json(j.at("output").at("W"), m.net.out.W);
  detail::matrix_from_json(j.at("output").at("b"), m.net.out.b);
  return m;
}

}  // namespace sliceguard::nn
