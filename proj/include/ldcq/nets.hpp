#pragma once

#include <string>
#include <vector>

#include "ldcq/params.hpp"

namespace ldcq::nn {

enum class Act { Linear, ReLU, GELU, SoftPlus, Tanh, Sigmoid };

Var activate(Var v, Act a);
Mat activate_raw(const Mat& v, Act a);

// Plain dense net. Hidden layers share one activation; LayerNorm (with
// learned gain/bias) sits before each hidden activation when enabled.
struct MlpSpec {
  int input = 0;
  std::vector<int> hidden;
  int output = 0;
  Act hidden_act = Act::ReLU;
  Act output_act = Act::Linear;
  bool layer_norm = false;

  int layer_count() const { return static_cast<int>(hidden.size()) + 1; }
  void validate() const;
};

void init_mlp(ParameterBundle& bundle, const std::string& prefix, const MlpSpec& spec,
              Rng& rng);
Var mlp_forward(const MlpSpec& spec, const BoundParams& p, const std::string& prefix,
                Var x);
Mat mlp_forward_raw(const MlpSpec& spec, const ParameterBundle& b,
                    const std::string& prefix, const Mat& x);

// Stacked bidirectional GRU encoder. Both directions of every layer run over
// the per-step inputs; the encoder output is the concatenation of the final
// forward state and the final backward state of the top layer (width
// 2*hidden). Gate form: r,u from sigmoid, candidate n = tanh(Wx + b_in +
// r.(Uh + b_h)), h' = (1-u).n + u.h.
struct BiGruSpec {
  int input = 0;
  int hidden = 0;
  int layers = 2;
  void validate() const;
};

void init_bigru(ParameterBundle& bundle, const std::string& prefix, const BiGruSpec& spec,
                Rng& rng);
Var bigru_encode(const BiGruSpec& spec, const BoundParams& p, const std::string& prefix,
                 const std::vector<Var>& seq);
Mat bigru_encode_raw(const BiGruSpec& spec, const ParameterBundle& b,
                     const std::string& prefix, const std::vector<Mat>& seq);

// Alternating sin/cos encoding of an integer timestep: first half sin(t*f_i),
// second half cos(t*f_i) with f_i = base^(-2i/dim). dim must be even.
Eigen::VectorXd sinusoidal_embed(long t, int dim, double base = 10000.0);

// Residual denoiser: a chain of dense blocks, each fed the previous features
// concatenated with the state and timestep encodings; blocks of equal width
// are skip-connected across the bottleneck, U-Net style.
struct DenoiserSpec {
  int latent_dim = 0;
  int cond_dim = 0;
  int time_dim = 128;
  int enc_hidden = 128;
  std::vector<int> blocks = {128, 32, 16, 8, 16, 32, 128};
  void validate() const;
};

void init_denoiser(ParameterBundle& bundle, const std::string& prefix,
                   const DenoiserSpec& spec, Rng& rng);
// z_t: latent_dim x B; cond: cond_dim x B (zeros = null token); t_embed:
// time_dim x B of precomputed sinusoidal columns
Var denoiser_forward(const DenoiserSpec& spec, const BoundParams& p,
                     const std::string& prefix, Var z_t, Var cond, Var t_embed);
Mat denoiser_forward_raw(const DenoiserSpec& spec, const ParameterBundle& b,
                         const std::string& prefix, const Mat& z_t, const Mat& cond,
                         const Mat& t_embed);

}  // namespace ldcq::nn
