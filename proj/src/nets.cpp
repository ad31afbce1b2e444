#include "ldcq/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace ldcq::nn {

namespace {

constexpr double kLayerNormEps = 1e-5;

Mat uniform_init(int rows, int cols, double limit, Rng& rng) {
  Mat m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = rng.uniform(-limit, limit);
  return m;
}

// He-style for ReLU paths, Glorot-style otherwise; both uniform.
Mat init_weight(int out_dim, int in_dim, Act downstream, Rng& rng) {
  const double limit = downstream == Act::ReLU
                           ? std::sqrt(6.0 / in_dim)
                           : std::sqrt(6.0 / (in_dim + out_dim));
  return uniform_init(out_dim, in_dim, limit, rng);
}

std::string wname(const std::string& prefix, int i) { return prefix + ".W" + std::to_string(i); }
std::string bname(const std::string& prefix, int i) { return prefix + ".b" + std::to_string(i); }

Var layer_norm(Var pre, Var gain, Var bias) {
  Graph& g = *pre.graph();
  const auto r = pre.rows();
  Var mu = scale(matmul(g.input(Mat::Ones(1, r)), pre), 1.0 / static_cast<double>(r));
  Var centered = sub(pre, matmul(g.input(Mat::Ones(r, 1)), mu));
  Var var = scale(matmul(g.input(Mat::Ones(1, r)), mul(centered, centered)),
                  1.0 / static_cast<double>(r));
  Var inv_std = cdiv(g.input(Mat::Ones(1, pre.cols())),
                     sqrt_(add_scalar(var, kLayerNormEps)));
  Var norm = mul_row_broadcast(centered, inv_std);
  return add_col_broadcast(mul_col_broadcast(norm, gain), bias);
}

Mat layer_norm_raw(const Mat& pre, const Mat& gain, const Mat& bias) {
  const auto r = pre.rows();
  Eigen::RowVectorXd mu = pre.colwise().sum() / static_cast<double>(r);
  Mat centered = pre.rowwise() - mu;
  Eigen::RowVectorXd var =
      centered.cwiseProduct(centered).colwise().sum() / static_cast<double>(r);
  Eigen::RowVectorXd inv_std = (var.array() + kLayerNormEps).sqrt().inverse();
  Mat norm = centered.array().rowwise() * inv_std.array();
  Mat out = norm.array().colwise() * gain.col(0).array();
  out.colwise() += bias.col(0);
  return out;
}

}  // namespace

Var activate(Var v, Act a) {
  switch (a) {
    case Act::Linear: return v;
    case Act::ReLU: return relu(v);
    case Act::GELU: return gelu(v);
    case Act::SoftPlus: return softplus(v);
    case Act::Tanh: return tanh_(v);
    case Act::Sigmoid: return sigmoid(v);
  }
  throw std::logic_error("activate: unknown kind");
}

Mat activate_raw(const Mat& v, Act a) {
  switch (a) {
    case Act::Linear: return v;
    case Act::ReLU: return v.cwiseMax(0.0);
    case Act::GELU:
      return v.unaryExpr([](double x) {
        return x * 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
      });
    case Act::SoftPlus:
      return v.unaryExpr([](double x) {
        return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
      });
    case Act::Tanh: return v.array().tanh();
    case Act::Sigmoid:
      return v.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  }
  throw std::logic_error("activate_raw: unknown kind");
}

void MlpSpec::validate() const {
  if (input <= 0 || output <= 0)
    throw std::invalid_argument("MlpSpec: input/output width must be positive");
  for (int h : hidden)
    if (h <= 0) throw std::invalid_argument("MlpSpec: hidden width must be positive");
}

void init_mlp(ParameterBundle& bundle, const std::string& prefix, const MlpSpec& spec,
              Rng& rng) {
  spec.validate();
  int in = spec.input;
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    const int out = spec.hidden[i];
    bundle.add(wname(prefix, static_cast<int>(i)),
               init_weight(out, in, spec.hidden_act, rng));
    bundle.add(bname(prefix, static_cast<int>(i)), Mat::Zero(out, 1));
    if (spec.layer_norm) {
      bundle.add(prefix + ".ln" + std::to_string(i) + ".g", Mat::Ones(out, 1));
      bundle.add(prefix + ".ln" + std::to_string(i) + ".b", Mat::Zero(out, 1));
    }
    in = out;
  }
  const int last = static_cast<int>(spec.hidden.size());
  bundle.add(wname(prefix, last), init_weight(spec.output, in, spec.output_act, rng));
  bundle.add(bname(prefix, last), Mat::Zero(spec.output, 1));
}

Var mlp_forward(const MlpSpec& spec, const BoundParams& p, const std::string& prefix,
                Var x) {
  if (x.rows() != spec.input)
    throw std::invalid_argument("mlp_forward: input width mismatch");
  Var h = x;
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    Var pre = add_col_broadcast(matmul(p[wname(prefix, static_cast<int>(i))], h),
                                p[bname(prefix, static_cast<int>(i))]);
    if (spec.layer_norm)
      pre = layer_norm(pre, p[prefix + ".ln" + std::to_string(i) + ".g"],
                       p[prefix + ".ln" + std::to_string(i) + ".b"]);
    h = activate(pre, spec.hidden_act);
  }
  const int last = static_cast<int>(spec.hidden.size());
  Var out = add_col_broadcast(matmul(p[wname(prefix, last)], h), p[bname(prefix, last)]);
  return activate(out, spec.output_act);
}

Mat mlp_forward_raw(const MlpSpec& spec, const ParameterBundle& b,
                    const std::string& prefix, const Mat& x) {
  if (x.rows() != spec.input)
    throw std::invalid_argument("mlp_forward_raw: input width mismatch");
  Mat h = x;
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    Mat pre = b.at(wname(prefix, static_cast<int>(i))) * h;
    pre.colwise() += b.at(bname(prefix, static_cast<int>(i))).col(0);
    if (spec.layer_norm)
      pre = layer_norm_raw(pre, b.at(prefix + ".ln" + std::to_string(i) + ".g"),
                           b.at(prefix + ".ln" + std::to_string(i) + ".b"));
    h = activate_raw(pre, spec.hidden_act);
  }
  const int last = static_cast<int>(spec.hidden.size());
  Mat out = b.at(wname(prefix, last)) * h;
  out.colwise() += b.at(bname(prefix, last)).col(0);
  return activate_raw(out, spec.output_act);
}

void BiGruSpec::validate() const {
  if (input <= 0 || hidden <= 0 || layers <= 0)
    throw std::invalid_argument("BiGruSpec: dimensions must be positive");
}

namespace {

const char* kDirs[2] = {"f", "b"};

std::string gru_prefix(const std::string& prefix, int layer, int dir) {
  return prefix + ".l" + std::to_string(layer) + "." + kDirs[dir] + ".";
}

void init_gru_cell(ParameterBundle& bundle, const std::string& cp, int in, int hidden,
                   Rng& rng) {
  bundle.add(cp + "Wr", init_weight(hidden, in, Act::Sigmoid, rng));
  bundle.add(cp + "Ur", init_weight(hidden, hidden, Act::Sigmoid, rng));
  bundle.add(cp + "br", Mat::Zero(hidden, 1));
  bundle.add(cp + "Wz", init_weight(hidden, in, Act::Sigmoid, rng));
  bundle.add(cp + "Uz", init_weight(hidden, hidden, Act::Sigmoid, rng));
  bundle.add(cp + "bz", Mat::Zero(hidden, 1));
  bundle.add(cp + "Wn", init_weight(hidden, in, Act::Tanh, rng));
  bundle.add(cp + "bn_in", Mat::Zero(hidden, 1));
  bundle.add(cp + "Un", init_weight(hidden, hidden, Act::Tanh, rng));
  bundle.add(cp + "bn_h", Mat::Zero(hidden, 1));
}

Var gru_cell(const BoundParams& p, const std::string& cp, Var x, Var h) {
  Var r = sigmoid(add_col_broadcast(add(matmul(p[cp + "Wr"], x), matmul(p[cp + "Ur"], h)),
                                    p[cp + "br"]));
  Var u = sigmoid(add_col_broadcast(add(matmul(p[cp + "Wz"], x), matmul(p[cp + "Uz"], h)),
                                    p[cp + "bz"]));
  Var n = tanh_(add(add_col_broadcast(matmul(p[cp + "Wn"], x), p[cp + "bn_in"]),
                    mul(r, add_col_broadcast(matmul(p[cp + "Un"], h), p[cp + "bn_h"]))));
  // h' = n + u.(h - n)
  return add(n, mul(u, sub(h, n)));
}

Mat gru_cell_raw(const ParameterBundle& b, const std::string& cp, const Mat& x,
                 const Mat& h) {
  auto sig = [](const Mat& m) {
    return Mat(m.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); }));
  };
  Mat r = b.at(cp + "Wr") * x + b.at(cp + "Ur") * h;
  r.colwise() += b.at(cp + "br").col(0);
  r = sig(r);
  Mat u = b.at(cp + "Wz") * x + b.at(cp + "Uz") * h;
  u.colwise() += b.at(cp + "bz").col(0);
  u = sig(u);
  Mat inner = b.at(cp + "Un") * h;
  inner.colwise() += b.at(cp + "bn_h").col(0);
  Mat n = b.at(cp + "Wn") * x;
  n.colwise() += b.at(cp + "bn_in").col(0);
  n = (n + r.cwiseProduct(inner)).array().tanh();
  return n + u.cwiseProduct(h - n);
}

}  // namespace

void init_bigru(ParameterBundle& bundle, const std::string& prefix, const BiGruSpec& spec,
                Rng& rng) {
  spec.validate();
  for (int l = 0; l < spec.layers; ++l) {
    const int in = l == 0 ? spec.input : 2 * spec.hidden;
    for (int d = 0; d < 2; ++d)
      init_gru_cell(bundle, gru_prefix(prefix, l, d), in, spec.hidden, rng);
  }
}

Var bigru_encode(const BiGruSpec& spec, const BoundParams& p, const std::string& prefix,
                 const std::vector<Var>& seq) {
  if (seq.empty()) throw std::invalid_argument("bigru_encode: empty sequence");
  Graph& g = *seq[0].graph();
  const auto cols = seq[0].cols();
  for (Var v : seq)
    if (v.rows() != seq[0].rows() || v.cols() != cols)
      throw std::invalid_argument("bigru_encode: ragged sequence");
  const int L = static_cast<int>(seq.size());
  std::vector<Var> inputs = seq;
  Var fwd_final, bwd_final;
  for (int l = 0; l < spec.layers; ++l) {
    const std::string fp = gru_prefix(prefix, l, 0);
    const std::string bp = gru_prefix(prefix, l, 1);
    std::vector<Var> fwd(L), bwd(L);
    Var h = g.input(Mat::Zero(spec.hidden, cols));
    for (int t = 0; t < L; ++t) fwd[t] = h = gru_cell(p, fp, inputs[t], h);
    h = g.input(Mat::Zero(spec.hidden, cols));
    for (int t = L - 1; t >= 0; --t) bwd[t] = h = gru_cell(p, bp, inputs[t], h);
    std::vector<Var> next(L);
    for (int t = 0; t < L; ++t) next[t] = concat_rows({fwd[t], bwd[t]});
    inputs = std::move(next);
    fwd_final = fwd[L - 1];
    bwd_final = bwd[0];
  }
  return concat_rows({fwd_final, bwd_final});
}

Mat bigru_encode_raw(const BiGruSpec& spec, const ParameterBundle& b,
                     const std::string& prefix, const std::vector<Mat>& seq) {
  if (seq.empty()) throw std::invalid_argument("bigru_encode_raw: empty sequence");
  const auto cols = seq[0].cols();
  const int L = static_cast<int>(seq.size());
  std::vector<Mat> inputs = seq;
  Mat fwd_final, bwd_final;
  for (int l = 0; l < spec.layers; ++l) {
    const std::string fp = gru_prefix(prefix, l, 0);
    const std::string bp = gru_prefix(prefix, l, 1);
    std::vector<Mat> fwd(L), bwd(L);
    Mat h = Mat::Zero(spec.hidden, cols);
    for (int t = 0; t < L; ++t) fwd[t] = h = gru_cell_raw(b, fp, inputs[t], h);
    h = Mat::Zero(spec.hidden, cols);
    for (int t = L - 1; t >= 0; --t) bwd[t] = h = gru_cell_raw(b, bp, inputs[t], h);
    for (int t = 0; t < L; ++t) {
      Mat joined(2 * spec.hidden, cols);
      joined.topRows(spec.hidden) = fwd[t];
      joined.bottomRows(spec.hidden) = bwd[t];
      inputs[t] = std::move(joined);
    }
    fwd_final = fwd[L - 1];
    bwd_final = bwd[0];
  }
  Mat out(2 * spec.hidden, cols);
  out.topRows(spec.hidden) = fwd_final;
  out.bottomRows(spec.hidden) = bwd_final;
  return out;
}

Eigen::VectorXd sinusoidal_embed(long t, int dim, double base) {
  if (t < 0) throw std::invalid_argument("sinusoidal_embed: t must be >= 0");
  if (dim <= 0 || dim % 2 != 0)
    throw std::invalid_argument("sinusoidal_embed: dim must be positive and even");
  Eigen::VectorXd out(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(base, -2.0 * i / dim);
    out(i) = std::sin(t * freq);
    out(half + i) = std::cos(t * freq);
  }
  return out;
}

void DenoiserSpec::validate() const {
  if (latent_dim <= 0) throw std::invalid_argument("DenoiserSpec: latent_dim");
  if (cond_dim <= 0) throw std::invalid_argument("DenoiserSpec: cond_dim");
  if (time_dim <= 0 || time_dim % 2 != 0)
    throw std::invalid_argument("DenoiserSpec: time_dim must be even");
  if (enc_hidden <= 0 || blocks.empty())
    throw std::invalid_argument("DenoiserSpec: blocks/enc_hidden");
  for (int w : blocks)
    if (w <= 0) throw std::invalid_argument("DenoiserSpec: block width");
}

namespace {

MlpSpec denoiser_enc_spec(int in, int hidden) {
  return MlpSpec{in, {hidden}, hidden, Act::ReLU, Act::ReLU, false};
}

}  // namespace

void init_denoiser(ParameterBundle& bundle, const std::string& prefix,
                   const DenoiserSpec& spec, Rng& rng) {
  spec.validate();
  init_mlp(bundle, prefix + ".t_enc", denoiser_enc_spec(spec.time_dim, spec.enc_hidden),
           rng);
  init_mlp(bundle, prefix + ".s_enc", denoiser_enc_spec(spec.cond_dim, spec.enc_hidden),
           rng);
  int prev = spec.latent_dim;
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    const int in = prev + 2 * spec.enc_hidden;
    bundle.add(prefix + ".blk" + std::to_string(i) + ".W",
               init_weight(spec.blocks[i], in, Act::ReLU, rng));
    bundle.add(prefix + ".blk" + std::to_string(i) + ".b", Mat::Zero(spec.blocks[i], 1));
    prev = spec.blocks[i];
  }
  bundle.add(prefix + ".out.W", init_weight(spec.latent_dim, prev, Act::Linear, rng));
  bundle.add(prefix + ".out.b", Mat::Zero(spec.latent_dim, 1));
}

Var denoiser_forward(const DenoiserSpec& spec, const BoundParams& p,
                     const std::string& prefix, Var z_t, Var cond, Var t_embed) {
  if (z_t.rows() != spec.latent_dim || cond.rows() != spec.cond_dim ||
      t_embed.rows() != spec.time_dim)
    throw std::invalid_argument("denoiser_forward: input width mismatch");
  Var t_enc = mlp_forward(denoiser_enc_spec(spec.time_dim, spec.enc_hidden), p,
                          prefix + ".t_enc", t_embed);
  Var s_enc = mlp_forward(denoiser_enc_spec(spec.cond_dim, spec.enc_hidden), p,
                          prefix + ".s_enc", cond);
  const int K = static_cast<int>(spec.blocks.size());
  std::vector<Var> outs(K);
  Var h = z_t;
  for (int i = 0; i < K; ++i) {
    Var pre = add_col_broadcast(
        matmul(p[prefix + ".blk" + std::to_string(i) + ".W"],
               concat_rows({h, s_enc, t_enc})),
        p[prefix + ".blk" + std::to_string(i) + ".b"]);
    Var act = relu(pre);
    const int mirror = K - 1 - i;
    if (mirror < i && spec.blocks[mirror] == spec.blocks[i])
      act = add(act, outs[mirror]);
    outs[i] = act;
    h = act;
  }
  return add_col_broadcast(matmul(p[prefix + ".out.W"], h), p[prefix + ".out.b"]);
}

Mat denoiser_forward_raw(const DenoiserSpec& spec, const ParameterBundle& b,
                         const std::string& prefix, const Mat& z_t, const Mat& cond,
                         const Mat& t_embed) {
  if (z_t.rows() != spec.latent_dim || cond.rows() != spec.cond_dim ||
      t_embed.rows() != spec.time_dim)
    throw std::invalid_argument("denoiser_forward_raw: input width mismatch");
  Mat t_enc = mlp_forward_raw(denoiser_enc_spec(spec.time_dim, spec.enc_hidden), b,
                              prefix + ".t_enc", t_embed);
  Mat s_enc = mlp_forward_raw(denoiser_enc_spec(spec.cond_dim, spec.enc_hidden), b,
                              prefix + ".s_enc", cond);
  const int K = static_cast<int>(spec.blocks.size());
  const auto cols = z_t.cols();
  std::vector<Mat> outs(K);
  Mat h = z_t;
  for (int i = 0; i < K; ++i) {
    Mat joined(h.rows() + 2 * spec.enc_hidden, cols);
    joined.topRows(h.rows()) = h;
    joined.middleRows(h.rows(), spec.enc_hidden) = s_enc;
    joined.bottomRows(spec.enc_hidden) = t_enc;
    Mat pre = b.at(prefix + ".blk" + std::to_string(i) + ".W") * joined;
    pre.colwise() += b.at(prefix + ".blk" + std::to_string(i) + ".b").col(0);
    Mat act = pre.cwiseMax(0.0);
    const int mirror = K - 1 - i;
    if (mirror < i && spec.blocks[mirror] == spec.blocks[i]) act += outs[mirror];
    outs[i] = act;
    h = act;
  }
  Mat out = b.at(prefix + ".out.W") * h;
  out.colwise() += b.at(prefix + ".out.b").col(0);
  return out;
}

}  // namespace ldcq::nn
