#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "drivesec/layers.hpp"
#include "drivesec/optim.hpp"
#include "drivesec/oracle.hpp"
#include "drivesec/taxonomy.hpp"

namespace drivesec {

// Crafts the modifiable slice of one batch: latent -> dense tanh -> dense
// sigmoid -> [windows, rows, modifiable signals], values already in the
// normalized [0,1] range the classifiers consume.
struct GeneratorModel {
  int latent_dim = 64;
  int windows = 4;
  int rows = 16;
  int signals = 22;
  std::vector<LayerParams> layers;

  int slice_size() const { return windows * rows * signals; }
};

inline GeneratorModel make_generator(int latent_dim, int hidden, int windows,
                                     int rows, int signals, std::uint64_t seed,
                                     double out_gain = 2.5) {
  require(latent_dim > 0 && hidden > 0 && windows > 0 && rows > 0 && signals > 0,
          "generator dimensions must be positive");
  GeneratorModel g;
  g.latent_dim = latent_dim;
  g.windows = windows;
  g.rows = rows;
  g.signals = signals;
  Rng rng(derive_seed(seed, "generator"));
  g.layers.push_back(make_dense(latent_dim, hidden, Activation::Tanh, rng));
  LayerParams out = make_dense(hidden, g.slice_size(), Activation::Sigmoid, rng, out_gain);
  // Untrained drafts should look like traffic, not static. Every output
  // position of a signal starts from one shared latent-to-level pattern plus
  // a little per-position texture, so a fresh draft is a smooth per-signal
  // level profile with the out_gain spreading those levels across the value
  // range. Independent per-position noise drafts all collapse into one or two
  // drivers' labels (classifiers shrug at off-manifold static); smooth drafts
  // scatter across every driver's acceptance region, which is what gives a
  // label-only search its first hits.
  double bound = out_gain / std::sqrt(static_cast<double>(hidden));
  Tensor shared({signals, hidden});
  for (long i = 0; i < shared.size(); ++i) shared[i] = rng.uniform(-bound, bound);
  Tensor& w = out.weights[0];
  for (int o = 0; o < g.slice_size(); ++o)
    for (int i = 0; i < hidden; ++i)
      w.at(o, i) = shared.at(o % signals, i) + 0.15 * rng.uniform(-bound, bound);
  g.layers.push_back(std::move(out));
  return g;
}

struct GenForward {
  Tensor slice;  // [windows, rows, signals]
  std::vector<LayerCache> caches;
};

inline GenForward generator_forward(const GeneratorModel& g, const Tensor& latent) {
  check_shape(latent, {g.latent_dim}, "generator latent");
  GenForward r;
  Tensor x = latent;
  for (const LayerParams& p : g.layers) {
    ForwardOut fo = layer_forward(p, x);
    x = std::move(fo.output);
    r.caches.push_back(std::move(fo.cache));
  }
  r.slice = Tensor({g.windows, g.rows, g.signals});
  for (long i = 0; i < r.slice.size(); ++i) r.slice[i] = x[i];
  return r;
}

// One optimizer step from a gradient w.r.t. the emitted slice. head_only
// confines the update to the output layer: label-only training needs the
// latent pathway to stay untouched, otherwise every corrective step regrows
// the draft variance that the exploration schedule is annealing away.
inline void generator_apply_grad(GeneratorModel& g, const std::vector<LayerCache>& caches,
                                 const Tensor& dslice, OptimState& opt,
                                 bool head_only = false) {
  require(caches.size() == g.layers.size(), "generator cache/layer mismatch");
  Tensor up({g.slice_size()});
  for (long i = 0; i < up.size(); ++i) up[i] = dslice[i];
  std::vector<LayerGrads> grads(g.layers.size());
  for (size_t li = g.layers.size(); li-- > 0;) {
    BackwardOut bo = layer_backward(g.layers[li], caches[li], up);
    grads[li] = std::move(bo.grads);
    up = std::move(bo.input_grad);
  }
  if (head_only)
    for (size_t li = 0; li + 1 < g.layers.size(); ++li) {
      for (Tensor& t : grads[li].weights)
        for (long i = 0; i < t.size(); ++i) t[i] = 0.0;
      for (Tensor& t : grads[li].biases)
        for (long i = 0; i < t.size(); ++i) t[i] = 0.0;
    }
  optimizer_step(opt, g.layers, grads);
}

// Paste a crafted slice over the modifiable columns of a context batch.
// Everything outside the mask keeps the attacker's own (plausible) driving.
inline Batch apply_slice(const Batch& context, const Tensor& slice, const SafetyMask& mask) {
  require(!context.windows.empty(), "context batch has no windows");
  int T = context.windows.front().values.dim(0);
  int F = context.windows.front().values.dim(1);
  require(static_cast<int>(mask.by_index.size()) == F, "safety mask size mismatch");
  check_shape(slice, {static_cast<int>(context.windows.size()), T,
                      static_cast<int>(mask.modifiable.size())},
              "crafted slice");
  Batch out = context;
  for (size_t wi = 0; wi < out.windows.size(); ++wi)
    for (int t = 0; t < T; ++t)
      for (size_t k = 0; k < mask.modifiable.size(); ++k)
        out.windows[wi].values.at(t, mask.modifiable[k]) =
            slice.at(static_cast<long>(wi), t, static_cast<long>(k));
  return out;
}

// --- latent-space policy search -------------------------------------------

struct RlConfig {
  double alpha = 0.01;        // latent step size
  double gamma = 0.9;         // per-step discount inside an episode
  int max_episode_length = 5; // oracle queries per episode
  int num_episodes = 150;
  double noise_scale = 1.0;
  double learning_rate = 0.05;  // generator parameter updates
  int streak_to_converge = 3;   // consecutive accepted episodes = converged
};

struct EpisodeState {
  Tensor latent;
  double episode_reward = 0.0;  // cumulative reward collected so far
  double reward = 0.0;          // reward of the step about to be applied
  double td_error = 0.0;        // last applied reward - episode_reward
  int step = 0;
};

// latent += (alpha * td * gamma^step) (.) latent (.) noise, then book-keeping.
// td compares this step's reward against the reward accumulated before it, so
// a step that merely repeats past performance moves nothing.
inline void rl_latent_update(EpisodeState& s, const RlConfig& cfg, Rng& rng) {
  require(cfg.alpha > 0.0, "alpha must be positive");
  require(cfg.gamma > 0.0 && cfg.gamma <= 1.0, "gamma must be in (0, 1]");
  require(s.step < cfg.max_episode_length, "episode already finished");
  double td = s.reward - s.episode_reward;
  double factor = cfg.alpha * td * std::pow(cfg.gamma, s.step);
  for (long i = 0; i < s.latent.size(); ++i)
    s.latent[i] += factor * s.latent[i] * (rng.normal() * cfg.noise_scale);
  s.td_error = td;
  s.step += 1;
  s.episode_reward += s.reward;
}

// Gradient of -log(mean batch prob of `target`) w.r.t. the modifiable slice,
// pushed through every member net of the surrogate. Mean is over members and
// windows, matching how the vote's tie-break probabilities are formed.
inline Tensor surrogate_slice_grad(const Ensemble& e, const Batch& b, int target,
                                   const SafetyMask& mask) {
  require(target >= 0 && target < e.classes(), "target class out of range");
  const int M = static_cast<int>(e.models.size());
  const int W = static_cast<int>(b.windows.size());
  const int T = b.windows.front().values.dim(0);
  const int C = e.classes();
  std::vector<std::vector<Tensor>> probs(static_cast<size_t>(M));
  std::vector<std::vector<NetCache>> caches(static_cast<size_t>(M));
  Tensor mean({C});
  for (int m = 0; m < M; ++m) {
    for (int w = 0; w < W; ++w) {
      NetForward fo = net_forward(e.models[static_cast<size_t>(m)].net,
                                  b.windows[static_cast<size_t>(w)].values);
      Tensor p = softmax(fo.logits);
      for (int j = 0; j < C; ++j) mean[j] += p[j];
      probs[static_cast<size_t>(m)].push_back(std::move(p));
      caches[static_cast<size_t>(m)].push_back(std::move(fo.cache));
    }
  }
  for (int j = 0; j < C; ++j) mean[j] /= static_cast<double>(M * W);
  double pt = std::max(mean[target], 1e-12);

  Tensor dslice({W, T, static_cast<int>(mask.modifiable.size())});
  for (int m = 0; m < M; ++m) {
    for (int w = 0; w < W; ++w) {
      const Tensor& p = probs[static_cast<size_t>(m)][static_cast<size_t>(w)];
      Tensor dlog({C});
      for (int j = 0; j < C; ++j)
        dlog[j] = (-1.0 / (pt * static_cast<double>(M * W))) * p[target] *
                  ((j == target ? 1.0 : 0.0) - p[j]);
      NetBackward bo =
          net_backward(e.models[static_cast<size_t>(m)].net,
                       caches[static_cast<size_t>(m)][static_cast<size_t>(w)], dlog);
      for (int t = 0; t < T; ++t)
        for (size_t k = 0; k < mask.modifiable.size(); ++k)
          dslice.at(w, t, static_cast<long>(k)) +=
              bo.input_grad.at(t, mask.modifiable[k]);
    }
  }
  return dslice;
}

struct TrainGenResult {
  GeneratorModel model;
  int convergence_episode = -1;  // 1-based first episode of the winning streak
  long episodes_run = 0;
  std::vector<double> episode_rewards;
};

// Per-episode: probe the oracle up to max_episode_length times while nudging
// the latent, then spend one parameter update on the final query's evidence.
//
// White box (FullProbs surrogate): cross-entropy backprop through the member
// nets; trains the full episode budget since queries are free.
//
// Black box (LabelOnly): the only continuous signal is the cross-entropy of
// the oracle's one-hot verdict, which is flat almost everywhere, so the label
// alone cannot orient a parameter gradient. The verdict still names a driver,
// and that is worth something: every rejection pins down where in slice space
// some wrong driver's acceptance basin lies. Until the target has been hit
// once, drafts are pushed away from every wrong basin seen so far (nearest
// basin pushes hardest), which walks the generator out of the attacker's own
// basin and through the others until a draft lands on the target. From then
// on the last accepted slice is the anchor and the generator is pulled toward
// it, scaled by the verdict cross-entropy: wrong answers pull hard, right
// answers barely at all. Stops once the convergence streak is in hand - every
// extra query costs 40 s of exposure on the real bus.
inline TrainGenResult train_generator(GeneratorModel g, OracleHandle& oracle, int target,
                                      const RlConfig& cfg, const std::vector<Batch>& contexts,
                                      const SafetyMask& mask, std::uint64_t seed) {
  require(!contexts.empty(), "generator training needs at least one context batch");
  require(cfg.num_episodes > 0, "num_episodes must be positive");
  require(cfg.max_episode_length > 0, "max_episode_length must be positive");
  require(cfg.streak_to_converge > 0, "streak_to_converge must be positive");
  const Ensemble* sur = oracle.surrogate();
  OptimState opt = make_optimizer(
      cfg.learning_rate, sur ? OptimState::Mode::Adaptive : OptimState::Mode::Plain);

  TrainGenResult res;
  int streak = 0;
  int fail_run = 0;
  double recent_rate = 0.0;  // trailing success rate, damps late corrections
  Tensor anchor;
  bool have_anchor = false;
  // First slice observed in each wrong driver's basin; first-seen wins so the
  // repulsion keeps pointing outward as later drafts drift within a basin.
  std::map<int, Tensor> wrong_basin;
  for (int ep = 1; ep <= cfg.num_episodes; ++ep) {
    Rng rng(derive_seed(seed, "gen/episode", ep));
    const Batch& ctx = contexts[static_cast<size_t>((ep - 1) % static_cast<int>(contexts.size()))];
    EpisodeState st;
    st.latent = Tensor({g.latent_dim});
    for (long i = 0; i < st.latent.size(); ++i) st.latent[i] = rng.normal();

    Tensor last_slice;
    std::vector<LayerCache> last_caches;
    Batch crafted;
    OracleResponse last;
    for (int step = 0; step < cfg.max_episode_length; ++step) {
      GenForward fo = generator_forward(g, st.latent);
      last_slice = std::move(fo.slice);
      last_caches = std::move(fo.caches);
      crafted = apply_slice(ctx, last_slice, mask);
      last = oracle.query(crafted);
      if (sur) {
        int hits = 0;
        for (int wl : last.window_labels)
          if (wl == target) ++hits;
        st.reward = static_cast<double>(hits) / static_cast<double>(last.window_labels.size());
      } else {
        st.reward = last.label == target ? 1.0 : 0.0;
      }
      rl_latent_update(st, cfg, rng);
    }
    bool success = last.label == target;
    res.episode_rewards.push_back(st.episode_reward);

    if (sur) {
      Tensor dslice = surrogate_slice_grad(*sur, crafted, target, mask);
      generator_apply_grad(g, last_caches, dslice, opt);
    } else {
      // The one-hot verdict CE is flat almost everywhere, so its parameter
      // gradient is honestly zero on success (loss ~0) and before any success
      // has shown where the target's basin lies: in both cases the parameters
      // are left alone. The anchor is a recent-weighted mean of the accepted
      // slices. A failure triggers one corrective step, pulling toward the
      // anchor and away from every wrong basin seen so far (nearest repels
      // hardest); because the repulsion overshoots the anchor and successes
      // never pull back, accepted slices ratchet ever deeper into the
      // target's basin. Directions are RMS-normalized and the failure step
      // grows with consecutive failures, so one step size serves targets
      // whose basins sit at very different distances.
      auto unit_rms = [](Tensor& t) {
        double rms = 0.0;
        for (long i = 0; i < t.size(); ++i) rms += t[i] * t[i];
        rms = std::sqrt(rms / static_cast<double>(t.size()));
        if (rms > 1e-12)
          for (long i = 0; i < t.size(); ++i) t[i] /= rms;
      };
      constexpr double eps = 1e-3;
      if (success) {
        if (!have_anchor) {
          anchor = last_slice;
          have_anchor = true;
        } else {
          // Accepted slices only move the anchor; the parameters stay put so
          // nothing drags a winning draft back toward shallower ground.
          for (long i = 0; i < anchor.size(); ++i)
            anchor[i] = 0.5 * anchor[i] + 0.5 * last_slice[i];
        }
        fail_run = 0;
      } else {
        auto [it, fresh] = wrong_basin.try_emplace(last.label, last_slice);
        // Track each wrong basin as a trailing mean, not a stale first sight:
        // late in training the drafts have moved far from where a basin was
        // first met, and repulsion from an outdated snapshot points nowhere
        // useful. The trailing mean lags the current draft enough to still
        // give a direction.
        if (!fresh)
          for (long i = 0; i < it->second.size(); ++i)
            it->second[i] = 0.7 * it->second[i] + 0.3 * last_slice[i];
        if (have_anchor) {
          ++fail_run;
          double ce = -std::log(eps);
          Tensor pull = zeros_like(last_slice);
          for (long i = 0; i < pull.size(); ++i)
            pull[i] = last_slice[i] - anchor[i];
          // The one direction the attacker can always compute: away from
          // their own modifiable pattern. Every accepted driver but the
          // target rebuts crafted traffic that still smells like the
          // attacker, so this axis gives the walk a stable inward pressure
          // that trailing averages of its own recent positions cannot.
          Tensor rep = zeros_like(last_slice);
          for (size_t wi = 0; wi < ctx.windows.size(); ++wi)
            for (int t = 0; t < g.rows; ++t)
              for (size_t k = 0; k < mask.modifiable.size(); ++k) {
                long i = (static_cast<long>(wi) * g.rows + t) * g.signals +
                         static_cast<long>(k);
                rep[i] = last_slice[i] -
                         ctx.windows[wi].values.at(t, mask.modifiable[k]);
              }
          unit_rms(rep);
          for (const auto& [c, basin] : wrong_basin) {
            double msd = 0.0;
            for (long i = 0; i < last_slice.size(); ++i) {
              double diff = last_slice[i] - basin[i];
              msd += diff * diff;
            }
            msd = msd / static_cast<double>(last_slice.size()) + 0.05;
            for (long i = 0; i < rep.size(); ++i)
              rep[i] -= (last_slice[i] - basin[i]) / msd;
          }
          double prms = 0.0;
          for (long i = 0; i < pull.size(); ++i) prms += pull[i] * pull[i];
          prms = std::sqrt(prms / static_cast<double>(pull.size()));
          unit_rms(rep);
          // Imitation leads and the repulsion tilts it past the anchor, in a
          // fixed 0.3 proportion. The floor keeps the repulsion meaningful
          // when the draft already sits on the anchor - there the pull is
          // pure numerical noise and must not be blown up to full size.
          Tensor dslice = zeros_like(last_slice);
          for (long i = 0; i < dslice.size(); ++i)
            dslice[i] = pull[i] + 0.3 * std::max(prms, 0.02) * rep[i];
          // Driving signals are near-stationary within a batch (the attacker
          // can see that much in their own traffic), so the identity evidence
          // lives in per-signal levels. Searching per-position values wastes
          // queries on texture; flatten the step to one move per signal.
          const long positions = dslice.size() / g.signals;
          for (int k = 0; k < g.signals; ++k) {
            double level = 0.0;
            for (long p = 0; p < positions; ++p) level += dslice[p * g.signals + k];
            level /= static_cast<double>(positions);
            for (long p = 0; p < positions; ++p) dslice[p * g.signals + k] = level;
          }
          unit_rms(dslice);
          // A draft that already wins most episodes should not be yanked
          // around by the odd loss - aggressive late corrections are how a
          // nearly-converged slice falls back out of its basin.
          double scale = ce * std::min(fail_run, 8) * (1.0 - recent_rate);
          for (long i = 0; i < dslice.size(); ++i) dslice[i] *= scale;
          generator_apply_grad(g, last_caches, dslice, opt, /*head_only=*/true);
        }
      }
      // Exploration-to-exploitation schedule: once a draft has been accepted,
      // damp the latent's influence a little every episode. Early on the
      // latent variance is what finds the basin; from then on it only
      // randomizes drafts away from what worked, and each 40-second query is
      // too expensive to spend on re-rolling dice.
      if (have_anchor) {
        constexpr double anneal = 0.85;
        for (Tensor& t : g.layers.front().weights)
          for (long i = 0; i < t.size(); ++i) t[i] *= anneal;
        for (Tensor& t : g.layers.front().biases)
          for (long i = 0; i < t.size(); ++i) t[i] *= anneal;
      }
    }

    streak = success ? streak + 1 : 0;
    recent_rate = 0.9 * recent_rate + 0.1 * (success ? 1.0 : 0.0);
    res.episodes_run = ep;
    if (streak >= cfg.streak_to_converge && res.convergence_episode < 0)
      res.convergence_episode = ep - cfg.streak_to_converge + 1;
    // Label-only training stops once converged and confirmed: either the
    // streak has run twice the convergence length, or the trailing success
    // rate shows the generator keeps winning as fresh latents and contexts
    // roll by. Every further query would buy 40 s of exposure for nothing.
    if (!sur && res.convergence_episode > 0 &&
        (streak >= 2 * cfg.streak_to_converge || recent_rate >= 0.65))
      break;
  }
  res.model = std::move(g);
  return res;
}

// Labels the ensemble assigns to generator-crafted batches, one fresh latent
// per context. Depends only on (g, contexts, seed), never on a target, so the
// same crafted set serves every target's ASR and the per-target successes of
// an untrained generator sum to exactly one per batch.
// One crafted batch per (context, latent repeat); labels depend on the
// generator, contexts and seed but never on any particular target driver.
inline std::vector<int> crafted_labels(const GeneratorModel& g, const Ensemble& e,
                                       const std::vector<Batch>& contexts,
                                       const SafetyMask& mask, std::uint64_t seed,
                                       int repeats = 1) {
  require(!contexts.empty(), "no context batches to evaluate");
  require(repeats > 0, "need at least one latent draw per context");
  Rng rng(derive_seed(seed, "gen/eval"));
  std::vector<int> out;
  out.reserve(contexts.size() * static_cast<size_t>(repeats));
  for (const Batch& b : contexts) {
    for (int r = 0; r < repeats; ++r) {
      Tensor z({g.latent_dim});
      for (long i = 0; i < z.size(); ++i) z[i] = rng.normal();
      Batch crafted = apply_slice(b, generator_forward(g, z).slice, mask);
      out.push_back(ensemble_vote(e, crafted).label);
    }
  }
  return out;
}

inline double generator_asr(const GeneratorModel& g, const Ensemble& e, int target,
                            const std::vector<Batch>& contexts, const SafetyMask& mask,
                            std::uint64_t seed, int repeats = 1) {
  std::vector<int> labels = crafted_labels(g, e, contexts, mask, seed, repeats);
  long hit = 0;
  for (int l : labels)
    if (l == target) ++hit;
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace drivesec
