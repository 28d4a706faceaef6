#include "tba/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "tba/errors.hpp"

namespace tba {

Action greedy_action(std::span<const double> qvals) {
  if (qvals.empty()) throw std::domain_error("empty q-value vector");
  int best = 0;
  for (int i = 1; i < static_cast<int>(qvals.size()); ++i) {
    if (qvals[i] > qvals[best]) best = i;
  }
  return {best};
}

Action select_action(std::span<const double> qvals, double eps, Rng& rng) {
  if (eps < 0.0 || eps > 1.0) throw std::domain_error("epsilon outside [0,1]");
  for (double q : qvals) {
    if (!std::isfinite(q)) throw NumericError("non-finite q-value in action selection");
  }
  if (eps > 0.0 && rng.uniform() < eps) {
    return {static_cast<int>(rng.bounded(qvals.size()))};
  }
  return greedy_action(qvals);
}

std::vector<double> td_targets(std::span<const Transition> batch, const QNetwork& target_net,
                               double gamma) {
  if (batch.empty()) throw std::domain_error("empty batch");
  std::vector<double> out;
  out.reserve(batch.size());
  for (const Transition& tr : batch) {
    double t = tr.reward;
    if (!tr.done) {
      const std::vector<double> q = q_values(target_net, *tr.next_state);
      t += gamma * *std::max_element(q.begin(), q.end());
    }
    out.push_back(t);
  }
  return out;
}

double train_step(QNetwork& net, const QNetwork& target_net, std::span<const Transition> batch,
                  double lr, double gamma) {
  if (batch.empty()) throw std::domain_error("empty batch");
  const std::vector<double> targets = td_targets(batch, target_net, gamma);

  static thread_local QNetwork::Workspace ws;
  std::vector<double> grad(net.param_count(), 0.0);
  std::vector<double> d_q(net.topology().n_actions, 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  double loss = 0.0;
  for (size_t i = 0; i < batch.size(); ++i) {
    const Transition& tr = batch[i];
    const std::vector<double> q =
        net.forward_cached(tr.state.local, tr.state.global_vec, ws);
    const double delta = q[tr.action.index] - targets[i];
    loss += delta * delta;
    std::fill(d_q.begin(), d_q.end(), 0.0);
    d_q[tr.action.index] = 2.0 * delta * inv_b;
    net.backward(ws, d_q, grad);
  }
  loss *= inv_b;
  if (!std::isfinite(loss)) throw NumericError("non-finite training loss");

  auto p = net.params();
  for (size_t i = 0; i < p.size(); ++i) p[i] -= lr * grad[i];
  return loss;
}

namespace {

// Replay storage: states are rebuilt from (frame, ctu, neighbor QPs) on
// sampling, so the buffer stays small at full capacity.
struct StoredTransition {
  const FrameContext* ctx;
  int ctu;
  uint8_t qp_left, qp_above;
  uint8_t next_qp_left, next_qp_above;
  uint8_t action;
  bool done;
  double reward;
};

int qp_from_feature(double f) { return kQpAnchor + static_cast<int>(std::llround(f * 29.0)); }

StoredTransition compact(const FrameContext& ctx, const Transition& tr) {
  StoredTransition st;
  st.ctx = &ctx;
  st.ctu = tr.state.ctu_index;
  st.qp_left = static_cast<uint8_t>(qp_from_feature(tr.state.global_vec[13]));
  st.qp_above = static_cast<uint8_t>(qp_from_feature(tr.state.global_vec[14]));
  if (tr.next_state) {
    st.next_qp_left = static_cast<uint8_t>(qp_from_feature(tr.next_state->global_vec[13]));
    st.next_qp_above = static_cast<uint8_t>(qp_from_feature(tr.next_state->global_vec[14]));
  } else {
    st.next_qp_left = st.next_qp_above = kQpAnchor;
  }
  st.action = static_cast<uint8_t>(tr.action.index);
  st.done = tr.done;
  st.reward = tr.reward;
  return st;
}

Transition expand(const StoredTransition& st) {
  Transition tr;
  tr.state = assemble_state(*st.ctx, st.ctu, st.qp_left, st.qp_above);
  tr.action = {st.action};
  tr.reward = st.reward;
  tr.done = st.done;
  if (!st.done) {
    tr.next_state = assemble_state(*st.ctx, st.ctu + 1, st.next_qp_left, st.next_qp_above);
  }
  return tr;
}

}  // namespace

TrainResult train(const TBACache& cache, const Corpus& corpus, const TrainConfig& cfg,
                  const RewardParams& params) {
  const std::vector<std::string> train_ids = cache.frame_ids(SplitSet::train);
  if (train_ids.empty()) throw ConfigError("cache has no train split");
  const std::vector<FramePtr> train_frames = corpus.select(train_ids);

  TrainResult res{QNetwork{}, {}};
  res.net.init_params(Rng::derive(cfg.seed, 1));
  QNetwork target = res.net;

  Rng rng(Rng::derive(cfg.seed, 2));
  ReplayBuffer<StoredTransition> buffer(cfg.buffer_capacity);
  CacheCosts costs(cache);

  std::deque<double> recent_returns;
  std::vector<size_t> deck;
  size_t deck_pos = 0;
  long long step = 0;

  while (step < cfg.total_steps) {
    if (deck_pos == deck.size()) {
      deck.resize(train_frames.size());
      for (size_t i = 0; i < deck.size(); ++i) deck[i] = i;
      rng.shuffle(deck);
      deck_pos = 0;
    }
    const FrameContext& ctx = *train_frames[deck[deck_pos++]];
    Episode ep(ctx, costs, params);

    double ep_return = 0.0;
    double ep_loss = 0.0;
    long long ep_train_steps = 0;

    while (!ep.done() && step < cfg.total_steps) {
      const double eps = cfg.eps.at(step);
      const std::vector<double> qv = q_values(res.net, ep.state());
      const Action a = select_action(qv, eps, rng);
      const Transition tr = ep.step(a);
      ep_return += tr.reward;
      buffer.push(compact(ctx, tr));
      step += 1;

      if (buffer.size() >= cfg.warmup) {
        const std::vector<StoredTransition> raw =
            buffer.sample(static_cast<size_t>(cfg.batch_size), rng);
        std::vector<Transition> batch;
        batch.reserve(raw.size());
        for (const auto& st : raw) batch.push_back(expand(st));
        ep_loss += train_step(res.net, target, batch, cfg.lr, cfg.gamma);
        ep_train_steps += 1;
      }
      if (step % cfg.target_sync == 0) sync_target(res.net, target);
    }

    recent_returns.push_back(ep_return);
    if (recent_returns.size() > 100) recent_returns.pop_front();
    double mean_ret = 0.0;
    for (double r : recent_returns) mean_ret += r;
    mean_ret /= static_cast<double>(recent_returns.size());

    res.log.push_back({step, cfg.eps.at(step),
                       ep_train_steps > 0 ? ep_loss / static_cast<double>(ep_train_steps) : 0.0,
                       mean_ret});
  }
  return res;
}

void sync_target(const QNetwork& net, QNetwork& target_net) {
  if (!(net.topology() == target_net.topology())) {
    throw std::domain_error("target topology mismatch");
  }
  std::copy(net.params().begin(), net.params().end(), target_net.params().begin());
}

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::string out = "step,epsilon,loss,mean_return\n";
  char buf[128];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g\n", r.step, r.epsilon, r.loss,
                  r.mean_return);
    out += buf;
  }
  return out;
}

}  // namespace tba
