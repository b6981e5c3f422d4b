#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string_view>

#include "creep/layers.hpp"

namespace creep {

enum class ModelKind { Baseline, Transformer, Vae };

std::string_view to_string(ModelKind kind) noexcept;
/// Accepts "baseline", "transformer", "vae".
ModelKind parse_model_kind(std::string_view text);

struct ModelConfig {
  ModelKind kind = ModelKind::Transformer;
  std::size_t input_dim = 3;
  std::size_t hidden_dim = 32;
  double dropout = 0.1;
  std::size_t latent_dim = 20;
  std::size_t encoder_heads = 4;
  std::size_t ff_dim = 256;
  std::size_t max_length = kDefaultMaxLength;
  /// Feature attention over the 3 input channels of each step instead of
  /// over time positions.
  bool channel_attention = false;
  std::size_t attention_block_rows = 512;

  static ModelConfig defaults(ModelKind kind);
};

template <typename T>
struct LossTerms {
  Tensor<T> total;
  Tensor<T> recon;
  /// Undefined for deterministic models.
  Tensor<T> kl;
};

/// Common surface of the three sequence regressors. All map (B, L, 3) scaled
/// features to (B, L, 1) scaled log-strain.
template <typename T>
class Model {
 public:
  explicit Model(ModelConfig config) : config_(config) {}
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  ModelKind kind() const noexcept { return config_.kind; }
  const ModelConfig& config() const noexcept { return config_; }

  NamedParams<T> parameters() const {
    NamedParams<T> out;
    collect(out);
    return out;
  }

  virtual Tensor<T> forward(const Tensor<T>& x, bool training, SeededRng& rng) const = 0;

  /// Eval-mode forward without gradient recording.
  Tensor<T> predict(const Tensor<T>& x) const;

  /// MSE for the deterministic models; MSE + beta * KL for the VAE.
  virtual LossTerms<T> loss(const Tensor<T>& x, const Tensor<T>& y, bool training, SeededRng& rng,
                            double beta) const;

 protected:
  virtual void collect(NamedParams<T>& out) const = 0;
  void check_input(const Tensor<T>& x) const;

 private:
  ModelConfig config_;
};

/// LSTM(3 -> H) -> dropout -> Linear(H -> 1).
template <typename T>
class BaselineLstm final : public Model<T> {
 public:
  BaselineLstm(const ModelConfig& config, SeededRng& rng);

  Tensor<T> forward(const Tensor<T>& x, bool training, SeededRng& rng) const override;

  Lstm<T> lstm;
  Linear<T> head;

 protected:
  void collect(NamedParams<T>& out) const override;
};

template <typename T>
struct TransformerStages {
  Tensor<T> attended;   // (B, L, 3)
  Tensor<T> recurrent;  // (B, L, 2H)
  Tensor<T> dropped;    // (B, L, 2H)
  Tensor<T> encoded;    // (B, L, 2H) with positions added
  Tensor<T> refined;    // (B, L, 2H)
  Tensor<T> output;     // (B, L, 1)
};

/// Feature attention -> BiLSTM -> dropout -> + positional encoding ->
/// encoder layer -> Linear(2H -> 1).
template <typename T>
class BiLstmTransformer final : public Model<T> {
 public:
  BiLstmTransformer(const ModelConfig& config, SeededRng& rng);

  Tensor<T> forward(const Tensor<T>& x, bool training, SeededRng& rng) const override;
  TransformerStages<T> forward_stages(const Tensor<T>& x, bool training, SeededRng& rng) const;

  MultiHeadAttention<T> feature_attn;
  BiLstm<T> bilstm;
  TransformerEncoderLayer<T> encoder;
  Linear<T> head;

 protected:
  void collect(NamedParams<T>& out) const override;

 private:
  Tensor<T> attend_features(const Tensor<T>& x) const;
};

template <typename T>
struct VaeOutput {
  Tensor<T> y_hat;
  Tensor<T> mu;
  Tensor<T> logvar;
};

/// BiLSTM encoder -> per-step (mu, logvar) -> z -> LSTM decoder over [x; z]
/// -> dropout -> Linear(H -> 1).
template <typename T>
class BiLstmVae final : public Model<T> {
 public:
  BiLstmVae(const ModelConfig& config, SeededRng& rng);

  /// Training samples z; eval uses z = mu.
  Tensor<T> forward(const Tensor<T>& x, bool training, SeededRng& rng) const override;
  VaeOutput<T> forward_full(const Tensor<T>& x, bool training, SeededRng& rng) const;
  LossTerms<T> loss(const Tensor<T>& x, const Tensor<T>& y, bool training, SeededRng& rng,
                    double beta) const override;

  BiLstm<T> encoder;
  Linear<T> mu_proj;
  Linear<T> logvar_proj;
  Lstm<T> decoder;
  Linear<T> head;

 protected:
  void collect(NamedParams<T>& out) const override;
};

template <typename T>
std::unique_ptr<Model<T>> make_model(const ModelConfig& config, SeededRng& rng);

/// Parameter totals for the default configurations.
inline constexpr std::size_t kBaselineParameterCount = 4769;
inline constexpr std::size_t kTransformerParameterCount = 59569;
inline constexpr std::size_t kVaeParameterCount = 19401;

template <typename T>
struct VaeEncoding {
  Tensor<T> mu;
  Tensor<T> logvar;
};

template <typename T>
VaeEncoding<T> vae_encode(const BiLstmVae<T>& model, const Tensor<T>& x);

/// z = mu + eps * exp(0.5 * logvar) with eps drawn from `rng`.
template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& logvar, SeededRng& rng);
/// Same with caller-supplied eps.
template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& logvar, const Tensor<T>& eps);

template <typename T>
Tensor<T> vae_decode(const BiLstmVae<T>& model, const Tensor<T>& x, const Tensor<T>& z, bool training,
                     SeededRng& rng);

/// mean over all elements of -0.5 (1 + logvar - mu^2 - exp(logvar)).
template <typename T>
Tensor<T> kl_divergence(const Tensor<T>& mu, const Tensor<T>& logvar);

template <typename T>
LossTerms<T> vae_loss(const Tensor<T>& y_hat, const Tensor<T>& y_true, const Tensor<T>& mu, const Tensor<T>& logvar,
                      double beta);

template <typename T>
struct PredictiveMoments {
  Tensor<T> mean;
  Tensor<T> std;
};

/// Supplies eps for one latent draw; the default draws standard normals.
template <typename T>
using NoiseSource = std::function<Tensor<T>(const Shape&)>;

/// Encodes once, then decodes k latent draws in eval mode; std uses the n-1
/// denominator. Throws InvalidK for k < 2.
template <typename T>
PredictiveMoments<T> sample_predictions(const BiLstmVae<T>& model, const Tensor<T>& x, std::size_t k,
                                        SeededRng& rng);
template <typename T>
PredictiveMoments<T> sample_predictions(const BiLstmVae<T>& model, const Tensor<T>& x, const Tensor<T>& mu,
                                        const Tensor<T>& logvar, std::size_t k, const NoiseSource<T>& noise);

}  // namespace creep
