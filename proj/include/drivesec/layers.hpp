#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "drivesec/rng.hpp"
#include "drivesec/tensor.hpp"

namespace drivesec {

enum class LayerKind { Dense, LstmCell, GruCell, Conv1d, GlobalPool };
enum class Activation { Linear, Relu, Sigmoid, Tanh };

inline std::string layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "dense";
    case LayerKind::LstmCell: return "lstm_cell";
    case LayerKind::GruCell: return "gru_cell";
    case LayerKind::Conv1d: return "conv1d";
    case LayerKind::GlobalPool: return "global_pool";
  }
  return "?";
}

// One layer's parameters. Weight/bias layout per kind:
//   Dense:      weights {W [out,in]},                biases {b [out]}
//   LstmCell:   weights {Wx [4h,in], Wh [4h,h]},     biases {b [4h]}   gates i,f,g,o
//   GruCell:    weights {Wx [3h,in], Wh [3h,h]},     biases {b [3h]}   gates z,r,n
//   Conv1d:     weights {K [out,in,k]},              biases {b [out]}  same padding
//   GlobalPool: none (mean over time)
struct LayerParams {
  LayerKind kind = LayerKind::Dense;
  Activation act = Activation::Linear;  // Dense / Conv1d only
  int in = 0;
  int out = 0;     // hidden size for recurrent cells
  int kernel = 1;  // Conv1d
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
};

// Gradients mirror the owning LayerParams tensor-for-tensor.
struct LayerGrads {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
};

// Hidden (and, for LSTM, cell) state carried across time steps.
struct RecState {
  Tensor h;
  Tensor c;
};

// Values stashed by forward for the matching backward call.
struct LayerCache {
  LayerKind kind = LayerKind::Dense;
  int in = 0, out = 0, kernel = 1;
  bool valid = false;
  std::vector<Tensor> blobs;
};

inline LayerGrads zero_grads(const LayerParams& p) {
  LayerGrads g;
  for (const Tensor& w : p.weights) g.weights.push_back(zeros_like(w));
  for (const Tensor& b : p.biases) g.biases.push_back(zeros_like(b));
  return g;
}

inline void accumulate(LayerGrads& into, const LayerGrads& g) {
  require(into.weights.size() == g.weights.size() &&
              into.biases.size() == g.biases.size(),
          "gradient accumulation: mismatched structure");
  for (size_t i = 0; i < g.weights.size(); ++i)
    for (long j = 0; j < g.weights[i].size(); ++j)
      into.weights[i][j] += g.weights[i][j];
  for (size_t i = 0; i < g.biases.size(); ++i)
    for (long j = 0; j < g.biases[i].size(); ++j)
      into.biases[i][j] += g.biases[i][j];
}

inline void scale_grads(LayerGrads& g, double s) {
  for (Tensor& w : g.weights)
    for (long j = 0; j < w.size(); ++j) w[j] *= s;
  for (Tensor& b : g.biases)
    for (long j = 0; j < b.size(); ++j) b[j] *= s;
}

// --- construction ---------------------------------------------------------

namespace detail {
inline void init_uniform(Tensor& t, int fan_in, Rng& rng, double gain = 1.0) {
  double bound = gain / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
  for (long i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
}
}  // namespace detail

inline LayerParams make_dense(int in, int out, Activation act, Rng& rng,
                              double init_gain = 1.0) {
  require(in > 0 && out > 0, "dense: dims must be positive");
  LayerParams p;
  p.kind = LayerKind::Dense;
  p.act = act;
  p.in = in;
  p.out = out;
  p.weights.push_back(Tensor({out, in}));
  p.biases.push_back(Tensor({out}));
  detail::init_uniform(p.weights[0], in, rng, init_gain);
  return p;
}

inline LayerParams make_lstm_cell(int in, int hidden, Rng& rng) {
  require(in > 0 && hidden > 0, "lstm_cell: dims must be positive");
  LayerParams p;
  p.kind = LayerKind::LstmCell;
  p.in = in;
  p.out = hidden;
  p.weights.push_back(Tensor({4 * hidden, in}));
  p.weights.push_back(Tensor({4 * hidden, hidden}));
  p.biases.push_back(Tensor({4 * hidden}));
  detail::init_uniform(p.weights[0], in, rng);
  detail::init_uniform(p.weights[1], hidden, rng);
  return p;
}

inline LayerParams make_gru_cell(int in, int hidden, Rng& rng) {
  require(in > 0 && hidden > 0, "gru_cell: dims must be positive");
  LayerParams p;
  p.kind = LayerKind::GruCell;
  p.in = in;
  p.out = hidden;
  p.weights.push_back(Tensor({3 * hidden, in}));
  p.weights.push_back(Tensor({3 * hidden, hidden}));
  p.biases.push_back(Tensor({3 * hidden}));
  detail::init_uniform(p.weights[0], in, rng);
  detail::init_uniform(p.weights[1], hidden, rng);
  return p;
}

inline LayerParams make_conv1d(int in, int out, int kernel, Activation act,
                               Rng& rng) {
  require(in > 0 && out > 0 && kernel > 0, "conv1d: dims must be positive");
  LayerParams p;
  p.kind = LayerKind::Conv1d;
  p.act = act;
  p.in = in;
  p.out = out;
  p.kernel = kernel;
  p.weights.push_back(Tensor({out, in, kernel}));
  p.biases.push_back(Tensor({out}));
  detail::init_uniform(p.weights[0], in * kernel, rng);
  return p;
}

inline LayerParams make_global_pool(int channels) {
  require(channels > 0, "global_pool: channels must be positive");
  LayerParams p;
  p.kind = LayerKind::GlobalPool;
  p.in = channels;
  p.out = channels;
  return p;
}

inline long param_count(const LayerParams& p) {
  long n = 0;
  for (const Tensor& w : p.weights) n += w.size();
  for (const Tensor& b : p.biases) n += b.size();
  return n;
}

inline long param_count(const std::vector<LayerParams>& ps) {
  long n = 0;
  for (const LayerParams& p : ps) n += param_count(p);
  return n;
}

// --- activations ----------------------------------------------------------

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double apply_act(Activation a, double x) {
  switch (a) {
    case Activation::Linear: return x;
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Tanh: return std::tanh(x);
  }
  return x;
}

// Derivative expressed through the activation output.
inline double act_grad_from_out(Activation a, double out) {
  switch (a) {
    case Activation::Linear: return 1.0;
    case Activation::Relu: return out > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid: return out * (1.0 - out);
    case Activation::Tanh: return 1.0 - out * out;
  }
  return 1.0;
}

// y += M x  for M [rows,cols], x [cols], y [rows]
inline void matvec_add(const Tensor& M, const double* x, double* y, int rows,
                       int cols) {
  const double* m = M.data.data();
  for (int r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* row = m + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

// y += M^T d  for M [rows,cols], d [rows], y [cols]
inline void matvec_t_add(const Tensor& M, const double* d, double* y, int rows,
                         int cols) {
  const double* m = M.data.data();
  for (int r = 0; r < rows; ++r) {
    double dr = d[r];
    if (dr == 0.0) continue;
    const double* row = m + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) y[c] += dr * row[c];
  }
}

// G += d x^T  for G [rows,cols]
inline void outer_add(Tensor& G, const double* d, const double* x, int rows,
                      int cols) {
  double* g = G.data.data();
  for (int r = 0; r < rows; ++r) {
    double dr = d[r];
    if (dr == 0.0) continue;
    double* row = g + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) row[c] += dr * x[c];
  }
}

}  // namespace detail

// --- forward --------------------------------------------------------------

struct ForwardOut {
  Tensor output;
  RecState state;  // recurrent cells only
  LayerCache cache;
};

// Dense/recurrent cells take a rank-1 input; Conv1d/GlobalPool take [T,C].
// Recurrent cells read `state` (zero state when null) and emit the new one.
inline ForwardOut layer_forward(const LayerParams& p, const Tensor& input,
                                const RecState* state = nullptr) {
  ForwardOut r;
  r.cache.kind = p.kind;
  r.cache.in = p.in;
  r.cache.out = p.out;
  r.cache.kernel = p.kernel;
  r.cache.valid = true;

  switch (p.kind) {
    case LayerKind::Dense: {
      check_shape(input, {p.in}, "dense input");
      Tensor pre({p.out});
      for (int o = 0; o < p.out; ++o) pre[o] = p.biases[0][o];
      detail::matvec_add(p.weights[0], input.data.data(), pre.data.data(), p.out,
                         p.in);
      r.output = Tensor({p.out});
      for (int o = 0; o < p.out; ++o)
        r.output[o] = detail::apply_act(p.act, pre[o]);
      r.cache.blobs = {input, r.output};
      return r;
    }
    case LayerKind::LstmCell: {
      check_shape(input, {p.in}, "lstm input");
      int h = p.out;
      Tensor hp({h}), cp({h});
      if (state && state->h.size() > 0) {
        check_shape(state->h, {h}, "lstm hidden state");
        check_shape(state->c, {h}, "lstm cell state");
        hp = state->h;
        cp = state->c;
      }
      Tensor z({4 * h});
      for (int i = 0; i < 4 * h; ++i) z[i] = p.biases[0][i];
      detail::matvec_add(p.weights[0], input.data.data(), z.data.data(), 4 * h,
                         p.in);
      detail::matvec_add(p.weights[1], hp.data.data(), z.data.data(), 4 * h, h);
      Tensor gi({h}), gf({h}), gg({h}), go({h}), cn({h}), tc({h});
      for (int i = 0; i < h; ++i) {
        gi[i] = detail::sigmoid(z[i]);
        gf[i] = detail::sigmoid(z[h + i]);
        gg[i] = std::tanh(z[2 * h + i]);
        go[i] = detail::sigmoid(z[3 * h + i]);
        cn[i] = gf[i] * cp[i] + gi[i] * gg[i];
        tc[i] = std::tanh(cn[i]);
      }
      r.output = Tensor({h});
      for (int i = 0; i < h; ++i) r.output[i] = go[i] * tc[i];
      r.state.h = r.output;
      r.state.c = cn;
      r.cache.blobs = {input, hp, cp, gi, gf, gg, go, cn, tc};
      return r;
    }
    case LayerKind::GruCell: {
      // Update-gate convention: h' = (1-z)*h + z*n.
      check_shape(input, {p.in}, "gru input");
      int h = p.out;
      Tensor hp({h});
      if (state && state->h.size() > 0) {
        check_shape(state->h, {h}, "gru hidden state");
        hp = state->h;
      }
      Tensor ax({3 * h}), ah({2 * h});
      for (int i = 0; i < 3 * h; ++i) ax[i] = p.biases[0][i];
      detail::matvec_add(p.weights[0], input.data.data(), ax.data.data(), 3 * h,
                         p.in);
      // Only the z and r gates see h directly; the candidate sees r*h below.
      detail::matvec_add(p.weights[1], hp.data.data(), ah.data.data(), 2 * h, h);
      Tensor gz({h}), gr({h}), rh({h}), gn({h});
      for (int i = 0; i < h; ++i) {
        gz[i] = detail::sigmoid(ax[i] + ah[i]);
        gr[i] = detail::sigmoid(ax[h + i] + ah[h + i]);
        rh[i] = gr[i] * hp[i];
      }
      // Candidate: n = tanh(Wn x + bn + Un (r*h)); the r*h product goes back
      // through rows 2h..3h of Wh.
      Tensor an({h});
      for (int i = 0; i < h; ++i) an[i] = ax[2 * h + i];
      {
        const double* m = p.weights[1].data.data();
        for (int i = 0; i < h; ++i) {
          const double* row = m + (static_cast<size_t>(2 * h) + i) * h;
          double acc = 0.0;
          for (int j = 0; j < h; ++j) acc += row[j] * rh[j];
          an[i] += acc;
        }
      }
      for (int i = 0; i < h; ++i) gn[i] = std::tanh(an[i]);
      r.output = Tensor({h});
      for (int i = 0; i < h; ++i)
        r.output[i] = (1.0 - gz[i]) * hp[i] + gz[i] * gn[i];
      r.state.h = r.output;
      r.cache.blobs = {input, hp, gz, gr, rh, gn};
      return r;
    }
    case LayerKind::Conv1d: {
      require(input.rank() == 2 && input.dim(1) == p.in,
              "conv1d input must be [T," + std::to_string(p.in) + "]");
      int T = input.dim(0);
      int k = p.kernel;
      int pad = (k - 1) / 2;  // same padding; even kernels pad one more on the right
      Tensor pre({T, p.out});
      const Tensor& K = p.weights[0];
      for (int t = 0; t < T; ++t) {
        for (int o = 0; o < p.out; ++o) {
          double acc = p.biases[0][o];
          for (int j = 0; j < k; ++j) {
            int src = t + j - pad;
            if (src < 0 || src >= T) continue;
            for (int ci = 0; ci < p.in; ++ci)
              acc += K.at(o, ci, j) * input.at(src, ci);
          }
          pre.at(t, o) = acc;
        }
      }
      r.output = Tensor({T, p.out});
      for (long i = 0; i < pre.size(); ++i)
        r.output[i] = detail::apply_act(p.act, pre[i]);
      r.cache.blobs = {input, r.output};
      return r;
    }
    case LayerKind::GlobalPool: {
      require(input.rank() == 2 && input.dim(1) == p.in,
              "global_pool input must be [T," + std::to_string(p.in) + "]");
      int T = input.dim(0);
      require(T > 0, "global_pool: empty sequence");
      r.output = Tensor({p.in});
      for (int t = 0; t < T; ++t)
        for (int c = 0; c < p.in; ++c) r.output[c] += input.at(t, c);
      for (int c = 0; c < p.in; ++c) r.output[c] /= T;
      Tensor tlen({1});
      tlen[0] = T;
      r.cache.blobs = {tlen};
      return r;
    }
  }
  fail("unknown layer kind");
}

// --- backward -------------------------------------------------------------

struct BackwardOut {
  LayerGrads grads;
  Tensor input_grad;
  RecState state_grad;  // recurrent cells only
};

namespace detail {
inline void check_cache(const LayerParams& p, const LayerCache& c) {
  if (!c.valid || c.kind != p.kind || c.in != p.in || c.out != p.out ||
      c.kernel != p.kernel)
    fail("stale cache: backward does not match the producing forward call");
}
}  // namespace detail

// `upstream` is dLoss/dOutput; for recurrent cells `state_upstream` carries
// dLoss/dState flowing back from the future time step.
inline BackwardOut layer_backward(const LayerParams& p, const LayerCache& cache,
                                  const Tensor& upstream,
                                  const RecState* state_upstream = nullptr) {
  detail::check_cache(p, cache);
  BackwardOut r;
  r.grads = zero_grads(p);

  switch (p.kind) {
    case LayerKind::Dense: {
      const Tensor& x = cache.blobs[0];
      const Tensor& y = cache.blobs[1];
      check_shape(upstream, {p.out}, "dense upstream");
      Tensor dpre({p.out});
      for (int o = 0; o < p.out; ++o)
        dpre[o] = upstream[o] * detail::act_grad_from_out(p.act, y[o]);
      detail::outer_add(r.grads.weights[0], dpre.data.data(), x.data.data(),
                        p.out, p.in);
      for (int o = 0; o < p.out; ++o) r.grads.biases[0][o] += dpre[o];
      r.input_grad = Tensor({p.in});
      detail::matvec_t_add(p.weights[0], dpre.data.data(),
                           r.input_grad.data.data(), p.out, p.in);
      return r;
    }
    case LayerKind::LstmCell: {
      int h = p.out;
      const Tensor& x = cache.blobs[0];
      const Tensor& hp = cache.blobs[1];
      const Tensor& cp = cache.blobs[2];
      const Tensor& gi = cache.blobs[3];
      const Tensor& gf = cache.blobs[4];
      const Tensor& gg = cache.blobs[5];
      const Tensor& go = cache.blobs[6];
      const Tensor& tc = cache.blobs[8];
      check_shape(upstream, {h}, "lstm upstream");
      Tensor dh = upstream;
      Tensor dc({h});
      if (state_upstream) {
        if (state_upstream->h.size() == h)
          for (int i = 0; i < h; ++i) dh[i] += state_upstream->h[i];
        if (state_upstream->c.size() == h)
          for (int i = 0; i < h; ++i) dc[i] += state_upstream->c[i];
      }
      Tensor dz({4 * h});
      Tensor dc_prev({h});
      for (int i = 0; i < h; ++i) {
        double d_o = dh[i] * tc[i];
        double d_c = dc[i] + dh[i] * go[i] * (1.0 - tc[i] * tc[i]);
        double d_i = d_c * gg[i];
        double d_f = d_c * cp[i];
        double d_g = d_c * gi[i];
        dc_prev[i] = d_c * gf[i];
        dz[i] = d_i * gi[i] * (1.0 - gi[i]);
        dz[h + i] = d_f * gf[i] * (1.0 - gf[i]);
        dz[2 * h + i] = d_g * (1.0 - gg[i] * gg[i]);
        dz[3 * h + i] = d_o * go[i] * (1.0 - go[i]);
      }
      detail::outer_add(r.grads.weights[0], dz.data.data(), x.data.data(),
                        4 * h, p.in);
      detail::outer_add(r.grads.weights[1], dz.data.data(), hp.data.data(),
                        4 * h, h);
      for (int i = 0; i < 4 * h; ++i) r.grads.biases[0][i] += dz[i];
      r.input_grad = Tensor({p.in});
      detail::matvec_t_add(p.weights[0], dz.data.data(),
                           r.input_grad.data.data(), 4 * h, p.in);
      r.state_grad.h = Tensor({h});
      detail::matvec_t_add(p.weights[1], dz.data.data(),
                           r.state_grad.h.data.data(), 4 * h, h);
      r.state_grad.c = dc_prev;
      return r;
    }
    case LayerKind::GruCell: {
      int h = p.out;
      const Tensor& x = cache.blobs[0];
      const Tensor& hp = cache.blobs[1];
      const Tensor& gz = cache.blobs[2];
      const Tensor& gr = cache.blobs[3];
      const Tensor& rh = cache.blobs[4];
      const Tensor& gn = cache.blobs[5];
      check_shape(upstream, {h}, "gru upstream");
      Tensor dh = upstream;
      if (state_upstream && state_upstream->h.size() == h)
        for (int i = 0; i < h; ++i) dh[i] += state_upstream->h[i];
      Tensor dzpre({h}), dnpre({h}), drh({h}), dh_prev({h});
      for (int i = 0; i < h; ++i) {
        double d_zgate = dh[i] * (gn[i] - hp[i]);
        double d_n = dh[i] * gz[i];
        dh_prev[i] = dh[i] * (1.0 - gz[i]);
        dzpre[i] = d_zgate * gz[i] * (1.0 - gz[i]);
        dnpre[i] = d_n * (1.0 - gn[i] * gn[i]);
      }
      // Candidate path: an = Wn x + bn + Un (r*h); Un is rows 2h..3h of Wh.
      {
        const double* m = p.weights[1].data.data();
        double* gm = r.grads.weights[1].data.data();
        for (int i = 0; i < h; ++i) {
          double d = dnpre[i];
          const double* row = m + (static_cast<size_t>(2 * h) + i) * h;
          double* grow = gm + (static_cast<size_t>(2 * h) + i) * h;
          for (int j = 0; j < h; ++j) {
            grow[j] += d * rh[j];
            drh[j] += d * row[j];
          }
        }
      }
      Tensor drpre({h});
      for (int i = 0; i < h; ++i) {
        double d_r = drh[i] * hp[i];
        dh_prev[i] += drh[i] * gr[i];
        drpre[i] = d_r * gr[i] * (1.0 - gr[i]);
      }
      // Gate pre-activations stacked as (z, r, n) to mirror the weight layout.
      Tensor dstack({3 * h});
      for (int i = 0; i < h; ++i) {
        dstack[i] = dzpre[i];
        dstack[h + i] = drpre[i];
        dstack[2 * h + i] = dnpre[i];
      }
      detail::outer_add(r.grads.weights[0], dstack.data.data(), x.data.data(),
                        3 * h, p.in);
      for (int i = 0; i < 3 * h; ++i) r.grads.biases[0][i] += dstack[i];
      // z and r gates also feed from h_prev through rows 0..2h of Wh.
      {
        const double* m = p.weights[1].data.data();
        double* gm = r.grads.weights[1].data.data();
        for (int i = 0; i < 2 * h; ++i) {
          double d = dstack[i];
          const double* row = m + static_cast<size_t>(i) * h;
          double* grow = gm + static_cast<size_t>(i) * h;
          for (int j = 0; j < h; ++j) {
            grow[j] += d * hp[j];
            dh_prev[j] += d * row[j];
          }
        }
      }
      r.input_grad = Tensor({p.in});
      detail::matvec_t_add(p.weights[0], dstack.data.data(),
                           r.input_grad.data.data(), 3 * h, p.in);
      r.state_grad.h = dh_prev;
      return r;
    }
    case LayerKind::Conv1d: {
      const Tensor& x = cache.blobs[0];
      const Tensor& y = cache.blobs[1];
      int T = x.dim(0);
      int k = p.kernel;
      int pad = (k - 1) / 2;
      check_shape(upstream, {T, p.out}, "conv1d upstream");
      Tensor dpre({T, p.out});
      for (long i = 0; i < dpre.size(); ++i)
        dpre[i] = upstream[i] * detail::act_grad_from_out(p.act, y[i]);
      Tensor& dK = r.grads.weights[0];
      r.input_grad = Tensor({T, p.in});
      const Tensor& K = p.weights[0];
      for (int t = 0; t < T; ++t) {
        for (int o = 0; o < p.out; ++o) {
          double d = dpre.at(t, o);
          if (d == 0.0) continue;
          r.grads.biases[0][o] += d;
          for (int j = 0; j < k; ++j) {
            int src = t + j - pad;
            if (src < 0 || src >= T) continue;
            for (int ci = 0; ci < p.in; ++ci) {
              dK.at(o, ci, j) += d * x.at(src, ci);
              r.input_grad.at(src, ci) += d * K.at(o, ci, j);
            }
          }
        }
      }
      return r;
    }
    case LayerKind::GlobalPool: {
      int T = static_cast<int>(cache.blobs[0][0]);
      check_shape(upstream, {p.in}, "global_pool upstream");
      r.input_grad = Tensor({T, p.in});
      for (int t = 0; t < T; ++t)
        for (int c = 0; c < p.in; ++c) r.input_grad.at(t, c) = upstream[c] / T;
      return r;
    }
  }
  fail("unknown layer kind");
}

}  // namespace drivesec
