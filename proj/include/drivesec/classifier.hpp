#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "drivesec/data.hpp"
#include "drivesec/layers.hpp"
#include "drivesec/loss.hpp"
#include "drivesec/optim.hpp"
#include "drivesec/rng.hpp"

namespace drivesec {

enum class ArchKind { LstmFcn, Lstm, RnnGru };

inline std::string arch_name(ArchKind k) {
  switch (k) {
    case ArchKind::LstmFcn: return "lstm_fcn";
    case ArchKind::Lstm: return "lstm";
    case ArchKind::RnnGru: return "rnn_gru";
  }
  return "?";
}

inline ArchKind parse_arch(const std::string& s) {
  if (s == "lstm_fcn") return ArchKind::LstmFcn;
  if (s == "lstm") return ArchKind::Lstm;
  if (s == "rnn_gru") return ArchKind::RnnGru;
  fail("unknown architecture: " + s);
}

struct ArchSpec {
  ArchKind kind = ArchKind::Lstm;
  std::vector<int> hidden = {64};
  std::vector<int> conv_widths = {128, 256, 128};  // LstmFcn only
  std::vector<int> conv_kernels = {8, 5, 3};       // LstmFcn only
  int classes = 0;
  int features = 46;
};

// A classifier network over one window [T, features].
//   Lstm / RnnGru: recurrent stack -> dense head on the last hidden state.
//   LstmFcn: recurrent stack in parallel with a conv stack (ReLU, same
//   padding) ending in global average pooling; the two branch outputs are
//   concatenated as [recurrent ; pooled] before the head.
// Layer order in `layers`: recurrent cells, conv layers, pool, head.
struct ClassifierNet {
  ArchSpec arch;
  std::vector<LayerParams> layers;

  int n_rec() const { return static_cast<int>(arch.hidden.size()); }
  int n_conv() const {
    return arch.kind == ArchKind::LstmFcn
               ? static_cast<int>(arch.conv_widths.size())
               : 0;
  }
  const LayerParams& head() const { return layers.back(); }
};

inline ClassifierNet build_net(const ArchSpec& arch, std::uint64_t seed) {
  require(arch.classes >= 2, "need >=2 classes");
  require(arch.features > 0, "need >=1 feature");
  require(!arch.hidden.empty(), "need at least one recurrent layer");
  if (arch.kind == ArchKind::LstmFcn) {
    require(!arch.conv_widths.empty(), "lstm_fcn needs conv widths");
    require(arch.conv_widths.size() == arch.conv_kernels.size(),
            "conv widths/kernels length mismatch");
  }
  Rng rng(derive_seed(seed, "net/" + arch_name(arch.kind)));
  ClassifierNet net;
  net.arch = arch;
  int in = arch.features;
  for (int h : arch.hidden) {
    if (arch.kind == ArchKind::RnnGru)
      net.layers.push_back(make_gru_cell(in, h, rng));
    else
      net.layers.push_back(make_lstm_cell(in, h, rng));
    in = h;
  }
  int head_in = arch.hidden.back();
  if (arch.kind == ArchKind::LstmFcn) {
    int c = arch.features;
    for (size_t i = 0; i < arch.conv_widths.size(); ++i) {
      net.layers.push_back(make_conv1d(c, arch.conv_widths[i],
                                       arch.conv_kernels[i], Activation::Relu,
                                       rng));
      c = arch.conv_widths[i];
    }
    net.layers.push_back(make_global_pool(c));
    head_in += c;
  }
  net.layers.push_back(make_dense(head_in, arch.classes, Activation::Linear, rng));
  return net;
}

// --- forward / backward over one window -----------------------------------

struct NetCache {
  std::vector<std::vector<LayerCache>> rec;  // [rec layer][t]
  std::vector<LayerCache> conv;
  LayerCache pool;
  LayerCache head;
  int T = 0;
};

struct NetForward {
  Tensor logits;
  NetCache cache;
};

inline NetForward net_forward(const ClassifierNet& net, const Tensor& window) {
  require(window.rank() == 2, "classifier input must be [T, features]");
  require(window.dim(1) == net.arch.features,
          "feature-count mismatch: input has " + std::to_string(window.dim(1)) +
              ", model expects " + std::to_string(net.arch.features));
  int T = window.dim(0);
  require(T > 0, "classifier input has no rows");

  NetForward r;
  r.cache.T = T;
  int nr = net.n_rec(), nc = net.n_conv();

  // Recurrent branch.
  std::vector<Tensor> seq(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    seq[static_cast<size_t>(t)] = Tensor({net.arch.features});
    for (int f = 0; f < net.arch.features; ++f)
      seq[static_cast<size_t>(t)][f] = window.at(t, f);
  }
  r.cache.rec.resize(static_cast<size_t>(nr));
  for (int l = 0; l < nr; ++l) {
    r.cache.rec[static_cast<size_t>(l)].resize(static_cast<size_t>(T));
    RecState state;
    for (int t = 0; t < T; ++t) {
      ForwardOut fo = layer_forward(net.layers[static_cast<size_t>(l)],
                                    seq[static_cast<size_t>(t)], &state);
      state = fo.state;
      seq[static_cast<size_t>(t)] = fo.output;
      r.cache.rec[static_cast<size_t>(l)][static_cast<size_t>(t)] =
          std::move(fo.cache);
    }
  }
  Tensor head_in = seq[static_cast<size_t>(T - 1)];

  // Convolutional branch (LstmFcn).
  if (nc > 0) {
    Tensor x = window;
    for (int l = 0; l < nc; ++l) {
      ForwardOut fo = layer_forward(net.layers[static_cast<size_t>(nr + l)], x);
      x = fo.output;
      r.cache.conv.push_back(std::move(fo.cache));
    }
    ForwardOut po = layer_forward(net.layers[static_cast<size_t>(nr + nc)], x);
    r.cache.pool = std::move(po.cache);
    Tensor joined({head_in.dim(0) + po.output.dim(0)});
    for (int i = 0; i < head_in.dim(0); ++i) joined[i] = head_in[i];
    for (int i = 0; i < po.output.dim(0); ++i)
      joined[head_in.dim(0) + i] = po.output[i];
    head_in = joined;
  }

  ForwardOut ho = layer_forward(net.layers.back(), head_in);
  r.logits = ho.output;
  r.cache.head = std::move(ho.cache);
  return r;
}

struct NetBackward {
  std::vector<LayerGrads> grads;  // parallel to net.layers
  Tensor input_grad;              // [T, features]
};

inline NetBackward net_backward(const ClassifierNet& net, const NetCache& cache,
                                const Tensor& dlogits) {
  int T = cache.T;
  int nr = net.n_rec(), nc = net.n_conv();
  NetBackward r;
  r.grads.reserve(net.layers.size());
  for (const LayerParams& p : net.layers) r.grads.push_back(zero_grads(p));
  r.input_grad = Tensor({T, net.arch.features});

  BackwardOut hb = layer_backward(net.layers.back(), cache.head, dlogits);
  r.grads.back() = std::move(hb.grads);

  int rec_out = net.arch.hidden.back();
  Tensor d_rec_last({rec_out});
  for (int i = 0; i < rec_out; ++i) d_rec_last[i] = hb.input_grad[i];

  // Conv branch backward.
  if (nc > 0) {
    int pooled = net.layers[static_cast<size_t>(nr + nc)].in;
    Tensor d_pool({pooled});
    for (int i = 0; i < pooled; ++i) d_pool[i] = hb.input_grad[rec_out + i];
    BackwardOut pb = layer_backward(net.layers[static_cast<size_t>(nr + nc)],
                                    cache.pool, d_pool);
    Tensor d_seq = std::move(pb.input_grad);
    for (int l = nc - 1; l >= 0; --l) {
      BackwardOut cb = layer_backward(net.layers[static_cast<size_t>(nr + l)],
                                      cache.conv[static_cast<size_t>(l)], d_seq);
      r.grads[static_cast<size_t>(nr + l)] = std::move(cb.grads);
      d_seq = std::move(cb.input_grad);
    }
    for (int t = 0; t < T; ++t)
      for (int f = 0; f < net.arch.features; ++f)
        r.input_grad.at(t, f) += d_seq.at(t, f);
  }

  // Recurrent branch: backpropagation through time, top layer first.
  std::vector<Tensor> seq_grad(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t)
    seq_grad[static_cast<size_t>(t)] = Tensor({rec_out});
  seq_grad[static_cast<size_t>(T - 1)] = d_rec_last;
  for (int l = nr - 1; l >= 0; --l) {
    const LayerParams& p = net.layers[static_cast<size_t>(l)];
    std::vector<Tensor> below(static_cast<size_t>(T));
    RecState from_future;
    for (int t = T - 1; t >= 0; --t) {
      BackwardOut bo =
          layer_backward(p, cache.rec[static_cast<size_t>(l)][static_cast<size_t>(t)],
                         seq_grad[static_cast<size_t>(t)], &from_future);
      accumulate(r.grads[static_cast<size_t>(l)], bo.grads);
      below[static_cast<size_t>(t)] = std::move(bo.input_grad);
      from_future = std::move(bo.state_grad);
    }
    seq_grad = std::move(below);
  }
  for (int t = 0; t < T; ++t)
    for (int f = 0; f < net.arch.features; ++f)
      r.input_grad.at(t, f) += seq_grad[static_cast<size_t>(t)][f];
  return r;
}

// --- trained model / prediction -------------------------------------------

struct EpochStat {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainedModel {
  ClassifierNet net;
  NormStats norm;  // stats the model expects its inputs normalized with
  std::vector<EpochStat> history;
};

struct Prediction {
  Tensor probs;
  int label = 0;
};

inline int argmax(const Tensor& v) {
  int best = 0;
  for (long i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

inline TrainedModel build_model(const ArchSpec& arch, std::uint64_t seed) {
  TrainedModel m;
  m.net = build_net(arch, seed);
  return m;
}

inline Prediction predict_window(const TrainedModel& m, const Tensor& window) {
  Prediction p;
  p.probs = softmax(net_forward(m.net, window).logits);
  p.label = argmax(p.probs);
  return p;
}

// Per-window probabilities averaged over the batch's windows, then argmax
// (lowest index on exact ties, which argmax's strict compare provides).
inline Prediction predict_batch(const TrainedModel& m, const Batch& b) {
  require(!b.windows.empty(), "predict_batch: empty batch");
  Prediction p;
  p.probs = Tensor({m.net.arch.classes});
  for (const Window& w : b.windows) {
    Tensor probs = softmax(net_forward(m.net, w.values).logits);
    for (long i = 0; i < probs.size(); ++i) p.probs[i] += probs[i];
  }
  for (long i = 0; i < p.probs.size(); ++i)
    p.probs[i] /= static_cast<double>(b.windows.size());
  p.label = argmax(p.probs);
  return p;
}

// --- training -------------------------------------------------------------

inline double eval_window_accuracy(const ClassifierNet& net,
                                   const std::vector<Window>& ws) {
  if (ws.empty()) return 0.0;
  long correct = 0;
  for (const Window& w : ws) {
    Tensor logits = net_forward(net, w.values).logits;
    if (argmax(logits) == w.driver_id) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ws.size());
}

// Supervised per-window training (window -> driver label) with minibatch
// gradient averaging; returns the parameters of the best validation epoch.
inline TrainedModel train_model(TrainedModel m, const std::vector<Window>& train_ws,
                                const std::vector<Window>& val_ws,
                                int epochs = 120, double lr = 0.001,
                                std::uint64_t seed = 0, int minibatch = 32,
                                OptimState::Mode mode = OptimState::Mode::Adaptive) {
  require(!train_ws.empty(), "train_model: empty training set");
  require(epochs >= 0, "train_model: negative epoch count");
  require(minibatch > 0, "train_model: minibatch must be positive");
  for (const Window& w : train_ws)
    require(w.driver_id >= 0 && w.driver_id < m.net.arch.classes,
            "train_model: window label out of range");

  OptimState opt = make_optimizer(lr, mode);
  std::vector<size_t> order(train_ws.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<LayerParams> best_params = m.net.layers;
  double best_val = -1.0;

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, "train/epoch", static_cast<std::uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(shuffle_rng.uniform_int(i));
      std::swap(order[i - 1], order[j]);
    }
    double loss_sum = 0.0;
    size_t done = 0;
    while (done < order.size()) {
      size_t take = std::min(static_cast<size_t>(minibatch), order.size() - done);
      std::vector<LayerGrads> acc;
      acc.reserve(m.net.layers.size());
      for (const LayerParams& p : m.net.layers) acc.push_back(zero_grads(p));
      for (size_t k = 0; k < take; ++k) {
        const Window& w = train_ws[order[done + k]];
        NetForward fo = net_forward(m.net, w.values);
        LossOut lo = softmax_xent(fo.logits, w.driver_id);
        if (!std::isfinite(lo.loss)) fail("training diverged: non-finite loss");
        loss_sum += lo.loss;
        NetBackward bo = net_backward(m.net, fo.cache, lo.logit_grad);
        for (size_t l = 0; l < acc.size(); ++l) accumulate(acc[l], bo.grads[l]);
      }
      for (LayerGrads& g : acc) scale_grads(g, 1.0 / static_cast<double>(take));
      optimizer_step(opt, m.net.layers, acc);
      done += take;
    }
    EpochStat st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(train_ws.size());
    st.val_accuracy = eval_window_accuracy(m.net, val_ws);
    m.history.push_back(st);
    if (val_ws.empty()) {
      best_params = m.net.layers;  // no validation data: keep the final epoch
    } else if (st.val_accuracy > best_val) {
      best_val = st.val_accuracy;
      best_params = m.net.layers;
    }
  }
  m.net.layers = std::move(best_params);
  return m;
}

// --- checkpoint IO (value-exact text format) ------------------------------

namespace detail {

inline void dump_tensor(std::ostringstream& out, const Tensor& t) {
  out << "tensor " << t.rank();
  for (int d : t.shape) out << " " << d;
  for (long i = 0; i < t.size(); ++i) out << " " << hex_double(t[i]);
  out << "\n";
}

class TokenReader {
 public:
  explicit TokenReader(const std::string& text) : in_(text) {}
  std::string next() {
    std::string tok;
    if (!(in_ >> tok)) fail("checkpoint truncated");
    return tok;
  }
  long next_long() { return parse_long(next()); }
  double next_double() {
    std::string tok = next();
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') fail("checkpoint: bad number " + tok);
    return v;
  }
  void expect(const std::string& want) {
    std::string got = next();
    if (got != want) fail("checkpoint: expected '" + want + "', got '" + got + "'");
  }

 private:
  std::istringstream in_;
};

inline Tensor read_tensor(TokenReader& r) {
  r.expect("tensor");
  long rank = r.next_long();
  std::vector<int> shape;
  for (long i = 0; i < rank; ++i) shape.push_back(static_cast<int>(r.next_long()));
  Tensor t(shape);
  for (long i = 0; i < t.size(); ++i) t[i] = r.next_double();
  return t;
}

inline std::string act_token(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
  }
  return "?";
}

inline Activation parse_act(const std::string& s) {
  if (s == "linear") return Activation::Linear;
  if (s == "relu") return Activation::Relu;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "tanh") return Activation::Tanh;
  fail("checkpoint: unknown activation " + s);
}

}  // namespace detail

inline std::string serialize_model(const TrainedModel& m) {
  std::ostringstream out;
  out << "drivesec-model 1\n";
  out << "arch " << arch_name(m.net.arch.kind) << "\n";
  out << "classes " << m.net.arch.classes << "\n";
  out << "features " << m.net.arch.features << "\n";
  out << "hidden " << m.net.arch.hidden.size();
  for (int h : m.net.arch.hidden) out << " " << h;
  out << "\n";
  out << "conv " << m.net.arch.conv_widths.size();
  for (int c : m.net.arch.conv_widths) out << " " << c;
  for (int k : m.net.arch.conv_kernels) out << " " << k;
  out << "\n";
  out << "norm " << m.norm.min.size();
  for (double v : m.norm.min) out << " " << hex_double(v);
  for (double v : m.norm.max) out << " " << hex_double(v);
  out << "\n";
  out << "layers " << m.net.layers.size() << "\n";
  for (const LayerParams& p : m.net.layers) {
    out << "layer " << layer_kind_name(p.kind) << " " << detail::act_token(p.act)
        << " " << p.in << " " << p.out << " " << p.kernel << " "
        << p.weights.size() << " " << p.biases.size() << "\n";
    for (const Tensor& w : p.weights) detail::dump_tensor(out, w);
    for (const Tensor& b : p.biases) detail::dump_tensor(out, b);
  }
  out << "history " << m.history.size() << "\n";
  for (const EpochStat& s : m.history)
    out << s.epoch << " " << hex_double(s.train_loss) << " "
        << hex_double(s.val_accuracy) << "\n";
  out << "end\n";
  return out.str();
}

inline void save_model(const TrainedModel& m, const std::string& path) {
  write_text_file(path, serialize_model(m));
}

inline TrainedModel deserialize_model(const std::string& text) {
  detail::TokenReader r(text);
  r.expect("drivesec-model");
  long version = r.next_long();
  require(version == 1, "unsupported checkpoint version");
  TrainedModel m;
  r.expect("arch");
  m.net.arch.kind = parse_arch(r.next());
  r.expect("classes");
  m.net.arch.classes = static_cast<int>(r.next_long());
  r.expect("features");
  m.net.arch.features = static_cast<int>(r.next_long());
  r.expect("hidden");
  long nh = r.next_long();
  m.net.arch.hidden.clear();
  for (long i = 0; i < nh; ++i)
    m.net.arch.hidden.push_back(static_cast<int>(r.next_long()));
  r.expect("conv");
  long ncv = r.next_long();
  m.net.arch.conv_widths.clear();
  m.net.arch.conv_kernels.clear();
  for (long i = 0; i < ncv; ++i)
    m.net.arch.conv_widths.push_back(static_cast<int>(r.next_long()));
  for (long i = 0; i < ncv; ++i)
    m.net.arch.conv_kernels.push_back(static_cast<int>(r.next_long()));
  r.expect("norm");
  long nn = r.next_long();
  m.norm.min.clear();
  m.norm.max.clear();
  for (long i = 0; i < nn; ++i) m.norm.min.push_back(r.next_double());
  for (long i = 0; i < nn; ++i) m.norm.max.push_back(r.next_double());
  r.expect("layers");
  long nl = r.next_long();
  for (long i = 0; i < nl; ++i) {
    r.expect("layer");
    LayerParams p;
    std::string kind = r.next();
    p.act = detail::parse_act(r.next());
    p.in = static_cast<int>(r.next_long());
    p.out = static_cast<int>(r.next_long());
    p.kernel = static_cast<int>(r.next_long());
    long nw = r.next_long();
    long nb = r.next_long();
    if (kind == "dense") p.kind = LayerKind::Dense;
    else if (kind == "lstm_cell") p.kind = LayerKind::LstmCell;
    else if (kind == "gru_cell") p.kind = LayerKind::GruCell;
    else if (kind == "conv1d") p.kind = LayerKind::Conv1d;
    else if (kind == "global_pool") p.kind = LayerKind::GlobalPool;
    else fail("checkpoint: unknown layer kind " + kind);
    for (long w = 0; w < nw; ++w) p.weights.push_back(detail::read_tensor(r));
    for (long b = 0; b < nb; ++b) p.biases.push_back(detail::read_tensor(r));
    m.net.layers.push_back(std::move(p));
  }
  r.expect("history");
  long nhist = r.next_long();
  for (long i = 0; i < nhist; ++i) {
    EpochStat s;
    s.epoch = static_cast<int>(r.next_long());
    s.train_loss = r.next_double();
    s.val_accuracy = r.next_double();
    m.history.push_back(s);
  }
  r.expect("end");
  return m;
}

inline TrainedModel load_model(const std::string& path) {
  return deserialize_model(read_text_file(path));
}

// Per-epoch training report: epoch, train_loss, val_accuracy.
inline std::string history_csv(const TrainedModel& m) {
  std::string out = "epoch,train_loss,val_accuracy\n";
  for (const EpochStat& s : m.history)
    out += std::to_string(s.epoch) + "," + format_fixed(s.train_loss) + "," +
           format_fixed(s.val_accuracy) + "\n";
  return out;
}

}  // namespace drivesec
