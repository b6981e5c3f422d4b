#include "creep/models.hpp"

#include <cmath>
#include <string>

#include "creep/error.hpp"

namespace creep {

std::string_view to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::Baseline:
      return "baseline";
    case ModelKind::Transformer:
      return "transformer";
    case ModelKind::Vae:
      return "vae";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "baseline") return ModelKind::Baseline;
  if (text == "transformer") return ModelKind::Transformer;
  if (text == "vae") return ModelKind::Vae;
  throw Error(ErrorKind::InvalidArgument, "unknown model kind '" + std::string(text) +
                                              "' (expected baseline, transformer or vae)");
}

ModelConfig ModelConfig::defaults(ModelKind kind) {
  ModelConfig config;
  config.kind = kind;
  return config;
}

template <typename T>
Tensor<T> Model<T>::predict(const Tensor<T>& x) const {
  NoGradGuard guard;
  SeededRng unused(0);
  return forward(x, false, unused);
}

template <typename T>
LossTerms<T> Model<T>::loss(const Tensor<T>& x, const Tensor<T>& y, bool training, SeededRng& rng, double) const {
  auto recon = mse_loss(forward(x, training, rng), y);
  return {recon, recon, Tensor<T>()};
}

template <typename T>
void Model<T>::check_input(const Tensor<T>& x) const {
  if (x.rank() != 3 || x.dim(2) != config_.input_dim || x.dim(1) == 0) {
    throw Error(ErrorKind::ShapeMismatch, "model input must be (B, L, " + std::to_string(config_.input_dim) +
                                              "), got " + shape_str(x.shape()));
  }
}

// ---------------------------------------------------------------------------

template <typename T>
BaselineLstm<T>::BaselineLstm(const ModelConfig& config, SeededRng& rng)
    : Model<T>(config), lstm(config.input_dim, config.hidden_dim, rng), head(config.hidden_dim, 1, rng) {}

template <typename T>
Tensor<T> BaselineLstm<T>::forward(const Tensor<T>& x, bool training, SeededRng& rng) const {
  this->check_input(x);
  return head.forward(dropout(lstm.forward(x), this->config().dropout, training, rng));
}

template <typename T>
void BaselineLstm<T>::collect(NamedParams<T>& out) const {
  lstm.collect("lstm", out);
  head.collect("head", out);
}

// ---------------------------------------------------------------------------

template <typename T>
BiLstmTransformer<T>::BiLstmTransformer(const ModelConfig& config, SeededRng& rng)
    : Model<T>(config),
      feature_attn(config.channel_attention ? 1 : config.input_dim, 1, rng),
      bilstm(config.input_dim, config.hidden_dim, rng),
      encoder(2 * config.hidden_dim, config.encoder_heads, config.ff_dim, config.dropout, rng),
      head(2 * config.hidden_dim, 1, rng) {
  feature_attn.block_rows = config.attention_block_rows;
  encoder.self_attn.block_rows = config.attention_block_rows;
}

template <typename T>
Tensor<T> BiLstmTransformer<T>::attend_features(const Tensor<T>& x) const {
  if (!this->config().channel_attention) return feature_attn.forward(x, x, x);
  const Shape shape = x.shape();
  const auto tokens = reshape(x, {shape[0] * shape[1], shape[2], 1});
  return reshape(feature_attn.forward(tokens, tokens, tokens), shape);
}

template <typename T>
TransformerStages<T> BiLstmTransformer<T>::forward_stages(const Tensor<T>& x, bool training, SeededRng& rng) const {
  this->check_input(x);
  const std::size_t length = x.dim(1);
  const std::size_t d_model = 2 * this->config().hidden_dim;
  const auto pe = positional_encoding<T>(length, d_model, this->config().max_length);
  TransformerStages<T> s;
  s.attended = attend_features(x);
  s.recurrent = bilstm.forward(s.attended);
  s.dropped = dropout(s.recurrent, this->config().dropout, training, rng);
  s.encoded = add(s.dropped, pe);
  s.refined = encoder.forward(s.encoded, training, rng);
  s.output = head.forward(s.refined);
  return s;
}

template <typename T>
Tensor<T> BiLstmTransformer<T>::forward(const Tensor<T>& x, bool training, SeededRng& rng) const {
  return forward_stages(x, training, rng).output;
}

template <typename T>
void BiLstmTransformer<T>::collect(NamedParams<T>& out) const {
  feature_attn.collect("feature_attn", out);
  bilstm.collect("bilstm", out);
  encoder.collect("encoder", out);
  head.collect("head", out);
}

// ---------------------------------------------------------------------------

template <typename T>
BiLstmVae<T>::BiLstmVae(const ModelConfig& config, SeededRng& rng)
    : Model<T>(config),
      encoder(config.input_dim, config.hidden_dim, rng),
      mu_proj(2 * config.hidden_dim, config.latent_dim, rng),
      logvar_proj(2 * config.hidden_dim, config.latent_dim, rng),
      decoder(config.input_dim + config.latent_dim, config.hidden_dim, rng),
      head(config.hidden_dim, 1, rng) {}

template <typename T>
VaeOutput<T> BiLstmVae<T>::forward_full(const Tensor<T>& x, bool training, SeededRng& rng) const {
  auto enc = vae_encode(*this, x);
  const auto z = training ? reparameterize(enc.mu, enc.logvar, rng) : enc.mu;
  auto y_hat = vae_decode(*this, x, z, training, rng);
  return {std::move(y_hat), std::move(enc.mu), std::move(enc.logvar)};
}

template <typename T>
Tensor<T> BiLstmVae<T>::forward(const Tensor<T>& x, bool training, SeededRng& rng) const {
  return forward_full(x, training, rng).y_hat;
}

template <typename T>
LossTerms<T> BiLstmVae<T>::loss(const Tensor<T>& x, const Tensor<T>& y, bool training, SeededRng& rng,
                                double beta) const {
  const auto out = forward_full(x, training, rng);
  return vae_loss(out.y_hat, y, out.mu, out.logvar, beta);
}

template <typename T>
void BiLstmVae<T>::collect(NamedParams<T>& out) const {
  encoder.collect("encoder", out);
  mu_proj.collect("mu_proj", out);
  logvar_proj.collect("logvar_proj", out);
  decoder.collect("decoder", out);
  head.collect("head", out);
}

template <typename T>
std::unique_ptr<Model<T>> make_model(const ModelConfig& config, SeededRng& rng) {
  switch (config.kind) {
    case ModelKind::Baseline:
      return std::make_unique<BaselineLstm<T>>(config, rng);
    case ModelKind::Transformer:
      return std::make_unique<BiLstmTransformer<T>>(config, rng);
    case ModelKind::Vae:
      return std::make_unique<BiLstmVae<T>>(config, rng);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown model kind");
}

// ---------------------------------------------------------------------------

template <typename T>
VaeEncoding<T> vae_encode(const BiLstmVae<T>& model, const Tensor<T>& x) {
  if (x.rank() != 3 || x.dim(2) != model.config().input_dim) {
    throw Error(ErrorKind::ShapeMismatch, "vae input " + shape_str(x.shape()));
  }
  const auto h = model.encoder.forward(x);
  return {model.mu_proj.forward(h), model.logvar_proj.forward(h)};
}

template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& logvar, const Tensor<T>& eps) {
  if (mu.shape() != logvar.shape() || eps.shape() != mu.shape()) {
    throw Error(ErrorKind::ShapeMismatch, "reparameterize: " + shape_str(mu.shape()) + " vs " +
                                              shape_str(logvar.shape()) + " vs " + shape_str(eps.shape()));
  }
  return add(mu, mul(eps, exp(scale(logvar, T(0.5)))));
}

template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& logvar, SeededRng& rng) {
  if (mu.shape() != logvar.shape()) {
    throw Error(ErrorKind::ShapeMismatch, "reparameterize: " + shape_str(mu.shape()) + " vs " +
                                              shape_str(logvar.shape()));
  }
  return reparameterize(mu, logvar, standard_normal<T>(mu.shape(), rng));
}

template <typename T>
Tensor<T> vae_decode(const BiLstmVae<T>& model, const Tensor<T>& x, const Tensor<T>& z, bool training,
                     SeededRng& rng) {
  if (z.rank() != 3 || x.rank() != 3 || z.dim(0) != x.dim(0) || z.dim(1) != x.dim(1) ||
      z.dim(2) != model.config().latent_dim) {
    throw Error(ErrorKind::ShapeMismatch, "vae decode: x " + shape_str(x.shape()) + ", z " + shape_str(z.shape()));
  }
  const auto joined = concat<T>({x, z}, -1);
  const auto h = model.decoder.forward(joined);
  return model.head.forward(dropout(h, model.config().dropout, training, rng));
}

template <typename T>
Tensor<T> kl_divergence(const Tensor<T>& mu, const Tensor<T>& logvar) {
  if (mu.shape() != logvar.shape()) {
    throw Error(ErrorKind::ShapeMismatch, "kl_divergence: " + shape_str(mu.shape()) + " vs " +
                                              shape_str(logvar.shape()));
  }
  // Same value as -0.5 (1 + lv - mu^2 - e^lv), but expm1 keeps small lv exact.
  const auto inner = add(square(mu), sub(expm1(logvar), logvar));
  return scale(mean(inner), T(0.5));
}

template <typename T>
LossTerms<T> vae_loss(const Tensor<T>& y_hat, const Tensor<T>& y_true, const Tensor<T>& mu, const Tensor<T>& logvar,
                      double beta) {
  auto recon = mse_loss(y_hat, y_true);
  auto kl = kl_divergence(mu, logvar);
  auto total = add(recon, scale(kl, static_cast<T>(beta)));
  return {std::move(total), std::move(recon), std::move(kl)};
}

template <typename T>
PredictiveMoments<T> sample_predictions(const BiLstmVae<T>& model, const Tensor<T>& x, const Tensor<T>& mu,
                                        const Tensor<T>& logvar, std::size_t k, const NoiseSource<T>& noise) {
  if (k < 2) throw Error(ErrorKind::InvalidK, "need at least 2 latent draws, got " + std::to_string(k));
  NoGradGuard guard;
  SeededRng unused(0);
  Shape out_shape;
  std::vector<std::vector<T>> draws;
  draws.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto z = reparameterize(mu, logvar, noise(mu.shape()));
    const auto y = vae_decode(model, x, z, false, unused);
    out_shape = y.shape();
    draws.push_back(y.values());
  }
  const std::size_t n = draws.front().size();
  std::vector<T> mean_v(n);
  std::vector<T> std_v(n);
  for (std::size_t j = 0; j < n; ++j) {
    double m = 0.0;
    for (const auto& d : draws) m += static_cast<double>(d[j]);
    m /= static_cast<double>(k);
    double ss = 0.0;
    for (const auto& d : draws) {
      const double diff = static_cast<double>(d[j]) - m;
      ss += diff * diff;
    }
    mean_v[j] = static_cast<T>(m);
    std_v[j] = static_cast<T>(std::sqrt(ss / static_cast<double>(k - 1)));
  }
  return {Tensor<T>(out_shape, std::move(mean_v)), Tensor<T>(out_shape, std::move(std_v))};
}

template <typename T>
PredictiveMoments<T> sample_predictions(const BiLstmVae<T>& model, const Tensor<T>& x, std::size_t k,
                                        SeededRng& rng) {
  if (k < 2) throw Error(ErrorKind::InvalidK, "need at least 2 latent draws, got " + std::to_string(k));
  NoGradGuard guard;
  const auto enc = vae_encode(model, x);
  return sample_predictions<T>(model, x, enc.mu, enc.logvar, k,
                               [&rng](const Shape& shape) { return standard_normal<T>(shape, rng); });
}

#define CREEP_INSTANTIATE_MODELS(T)                                                                               \
  template class Model<T>;                                                                                        \
  template class BaselineLstm<T>;                                                                                 \
  template class BiLstmTransformer<T>;                                                                            \
  template class BiLstmVae<T>;                                                                                    \
  template std::unique_ptr<Model<T>> make_model<T>(const ModelConfig&, SeededRng&);                               \
  template VaeEncoding<T> vae_encode(const BiLstmVae<T>&, const Tensor<T>&);                                      \
  template Tensor<T> reparameterize(const Tensor<T>&, const Tensor<T>&, SeededRng&);                              \
  template Tensor<T> reparameterize(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> vae_decode(const BiLstmVae<T>&, const Tensor<T>&, const Tensor<T>&, bool, SeededRng&);       \
  template Tensor<T> kl_divergence(const Tensor<T>&, const Tensor<T>&);                                           \
  template LossTerms<T> vae_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double); \
  template PredictiveMoments<T> sample_predictions(const BiLstmVae<T>&, const Tensor<T>&, std::size_t,            \
                                                   SeededRng&);                                                   \
  template PredictiveMoments<T> sample_predictions(const BiLstmVae<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                                   const Tensor<T>&, std::size_t, const NoiseSource<T>&);

CREEP_INSTANTIATE_MODELS(float)
CREEP_INSTANTIATE_MODELS(double)

#undef CREEP_INSTANTIATE_MODELS

}  // namespace creep
