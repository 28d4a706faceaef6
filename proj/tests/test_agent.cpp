#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "support.hpp"
#include "tba/agent.hpp"
#include "tba/dataset.hpp"
#include "tba/errors.hpp"

using namespace tba;

namespace {

// Training-shaped state with arbitrary content.
State dummy_state(uint64_t seed, int ctu_index = 0) {
  Rng rng(seed);
  State s;
  s.ctu_index = ctu_index;
  s.frame_id = "dummy";
  s.local.resize(2 * 64 * 64);
  for (auto& v : s.local) v = rng.uniform();
  for (auto& v : s.global_vec) v = rng.uniform();
  return s;
}

Transition dummy_transition(uint64_t seed, int action, double reward_v, bool done) {
  Transition tr;
  tr.state = dummy_state(seed);
  tr.action = {action};
  tr.reward = reward_v;
  tr.done = done;
  if (!done) tr.next_state = dummy_state(seed + 1, 1);
  return tr;
}

}  // namespace

TEST_CASE("replay buffer is a bounded fifo with uniform sampling") {
  ReplayBuffer<int> buf(5);
  for (int i = 0; i < 8; ++i) buf.push(i);
  CHECK(buf.size() == 5);
  CHECK(buf.capacity() == 5);
  // after capacity+k pushes the first k entries are gone
  for (size_t i = 0; i < 5; ++i) CHECK(buf.at(i) == static_cast<int>(i) + 3);

  Rng rng(1);
  const std::vector<int> sample = buf.sample(1000, rng);
  CHECK(sample.size() == 1000);
  int counts[8] = {};
  for (int v : sample) counts[v]++;
  for (int v = 0; v < 3; ++v) CHECK(counts[v] == 0);  // evicted
  for (int v = 3; v < 8; ++v) CHECK(counts[v] > 120);  // roughly uniform over 5
}

TEST_CASE("greedy action takes the lowest index on ties") {
  CHECK(greedy_action(std::vector<double>{0.1, 0.9, 0.3}).index == 1);
  CHECK(greedy_action(std::vector<double>{0.0, 0.5, 0.2, 0.5}).index == 1);
  CHECK(greedy_action(std::vector<double>(30, 0.0)).index == 0);
}

TEST_CASE("select_action is greedy at eps 0 and uniform at eps 1") {
  Rng rng(77);
  std::vector<double> q(30, 0.0);
  q[7] = 1.0;
  CHECK(select_action(q, 0.0, rng).index == 7);

  int counts[30] = {};
  for (int i = 0; i < 30000; ++i) counts[select_action(q, 1.0, rng).index]++;
  for (int a = 0; a < 30; ++a) {
    CHECK(counts[a] > 800);
    CHECK(counts[a] < 1200);
  }

  q[3] = std::nan("");
  CHECK_THROWS_AS(select_action(q, 0.5, rng), NumericError);
}

TEST_CASE("epsilon schedule endpoints") {
  const EpsSchedule eps{1.0, 0.05, 20000};
  CHECK(eps.at(0) == 1.0);
  CHECK(eps.at(20000) == 0.05);
  CHECK(eps.at(999999) == 0.05);
  CHECK(eps.at(10000) == doctest::Approx(0.525));
}

TEST_CASE("td targets") {
  QNetwork target;  // zero params -> Q_target == 0
  std::vector<Transition> batch;
  batch.push_back(dummy_transition(1, 3, 0.5, true));
  batch.push_back(dummy_transition(2, 4, 1.0, false));

  const std::vector<double> t0 = td_targets(batch, target, 0.9);
  CHECK(t0[0] == 0.5);        // terminal: r
  CHECK(t0[1] == 1.0);        // zero target net
  CHECK(td_targets(batch, target, 0.0)[1] == 1.0);  // gamma 0: r always

  // non-zero target net: r + gamma * max_a Q
  target.init_params(9);
  const std::vector<double> q = q_values(target, *batch[1].next_state);
  const double max_q = *std::max_element(q.begin(), q.end());
  const std::vector<double> t1 = td_targets(batch, target, 1.0);
  CHECK(t1[1] == doctest::Approx(1.0 + max_q).epsilon(1e-12));
  CHECK(t1[0] == 0.5);
}

TEST_CASE("train_step with already-correct predictions leaves parameters alone") {
  QNetwork net;  // zero params: Q == 0 everywhere
  QNetwork target = net;
  std::vector<Transition> batch;
  batch.push_back(dummy_transition(5, 2, 0.0, true));   // target 0 == prediction
  batch.push_back(dummy_transition(6, 11, 0.0, true));

  const std::vector<double> before(net.params().begin(), net.params().end());
  const double loss = train_step(net, target, batch, 0.05, 0.9);
  CHECK(loss == 0.0);
  CHECK(std::equal(net.params().begin(), net.params().end(), before.begin()));
}

TEST_CASE("train_step regresses toward the td target") {
  QNetwork net;
  net.init_params(4);
  QNetwork target = net;
  std::vector<Transition> batch;
  for (uint64_t i = 0; i < 8; ++i) {
    batch.push_back(dummy_transition(100 + i, static_cast<int>(i % 30), 1.0, true));
  }
  double prev = 1e30;
  for (int it = 0; it < 400; ++it) {
    const double loss = train_step(net, target, batch, 0.05, 0.9);
    CHECK(loss < prev + 1e-9);
    prev = loss;
  }
  CHECK(prev < 0.02);
}

TEST_CASE("train_step applies exactly minus lr times the loss gradient") {
  // tiny net so whole-loss finite differences stay cheap
  Topology t;
  t.local_channels = 2;
  t.local_size = 16;
  t.conv_channels = {2, 3, 3, 4};
  t.global_dim = 15;
  t.vec_features = 5;
  t.head_widths = {8, 6};
  t.n_actions = 30;

  QNetwork net(t);
  net.init_params(21);
  QNetwork target(t);
  target.init_params(22);

  Rng rng(404);
  std::vector<Transition> batch;
  for (int i = 0; i < 4; ++i) {
    Transition tr;
    tr.state.local.resize(2 * 16 * 16);
    for (auto& v : tr.state.local) v = rng.uniform();
    for (auto& v : tr.state.global_vec) v = rng.uniform();
    tr.action = {static_cast<int>(rng.bounded(30))};
    tr.reward = rng.uniform() * 2.0 - 1.0;
    tr.done = i % 2 == 0;
    if (!tr.done) {
      tr.next_state = tr.state;
      for (auto& v : tr.next_state->local) v = rng.uniform();
    }
    batch.push_back(std::move(tr));
  }

  const double gamma = 0.9;
  const std::vector<double> targets = td_targets(batch, target, gamma);
  auto loss_at = [&](QNetwork& n) {
    double acc = 0.0;
    for (size_t i = 0; i < batch.size(); ++i) {
      const std::vector<double> q = n.forward(batch[i].state.local, batch[i].state.global_vec);
      const double d = q[batch[i].action.index] - targets[i];
      acc += d * d;
    }
    return acc / static_cast<double>(batch.size());
  };

  QNetwork stepped = net;
  const double reported = train_step(stepped, target, batch, 1.0, gamma);  // lr 1
  CHECK(reported == doctest::Approx(loss_at(net)).epsilon(1e-12));

  // grad[i] = before[i] - after[i] at lr 1; compare against central FD
  const double h = 1e-5;
  const size_t stride = std::max<size_t>(1, net.param_count() / 120);
  for (size_t i = 0; i < net.param_count(); i += stride) {
    const double analytic = net.params()[i] - stepped.params()[i];
    const double keep = net.params()[i];
    net.params()[i] = keep + h;
    const double up = loss_at(net);
    net.params()[i] = keep - h;
    const double dn = loss_at(net);
    net.params()[i] = keep;
    const double fd = (up - dn) / (2.0 * h);
    const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-3});
    CHECK(std::abs(analytic - fd) / denom < 1e-4);
  }
}

TEST_CASE("identical seeds give identical loss sequences") {
  QNetwork target;
  target.init_params(1);
  auto run = [&]() {
    QNetwork net;
    net.init_params(55);
    Rng rng(66);
    std::vector<double> losses;
    for (int it = 0; it < 5; ++it) {
      std::vector<Transition> batch;
      for (int i = 0; i < 4; ++i) {
        batch.push_back(dummy_transition(rng.next_u64() % 1000, static_cast<int>(rng.bounded(30)),
                                         rng.uniform(), true));
      }
      losses.push_back(train_step(net, target, batch, 1e-3, 0.9));
    }
    return losses;
  };
  CHECK(run() == run());
}

TEST_CASE("zero training steps return the initialized network unchanged") {
  const std::string dir = tba::testing::scratch_dir("agent_zero_steps");
  tba::testing::SynthCorpusOptions opt;
  opt.n_frames = 3;
  opt.width = 128;
  opt.height = 128;
  opt.seed = 61;
  const MapSpecFile spec = tba::testing::generate_corpus(dir, opt);
  tba::testing::render_maps(spec, dir + "/maps");
  const Corpus corpus = Corpus::load(dir, dir + "/maps");
  TBACache cache = build_cache(corpus, 22, 51, 2);
  split_cache(cache, 0.8, 5);

  TrainConfig cfg;
  cfg.total_steps = 0;
  cfg.seed = 99;
  const TrainResult res = train(cache, corpus, cfg, RewardParams{1.0, 1.0});
  CHECK(res.log.empty());

  QNetwork fresh;
  fresh.init_params(Rng::derive(99, 1));
  CHECK(std::equal(res.net.params().begin(), res.net.params().end(), fresh.params().begin()));
}

TEST_CASE("short training runs are seed-deterministic end to end") {
  const std::string dir = tba::testing::scratch_dir("agent_det");
  tba::testing::SynthCorpusOptions opt;
  opt.n_frames = 3;
  opt.width = 128;
  opt.height = 128;
  opt.seed = 62;
  const MapSpecFile spec = tba::testing::generate_corpus(dir, opt);
  tba::testing::render_maps(spec, dir + "/maps");
  const Corpus corpus = Corpus::load(dir, dir + "/maps");
  TBACache cache = build_cache(corpus, 22, 51, 2);
  split_cache(cache, 0.8, 5);

  TrainConfig cfg;
  cfg.total_steps = 30;
  cfg.warmup = 8;
  cfg.batch_size = 4;
  cfg.seed = 7;
  const TrainResult a = train(cache, corpus, cfg, RewardParams{1.0, 1.0});
  const TrainResult b = train(cache, corpus, cfg, RewardParams{1.0, 1.0});
  CHECK(std::equal(a.net.params().begin(), a.net.params().end(), b.net.params().begin()));
  REQUIRE(a.log.size() == b.log.size());
  for (size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].loss == b.log[i].loss);
    CHECK(a.log[i].mean_return == b.log[i].mean_return);
  }
  CHECK(train_log_csv(a.log) == train_log_csv(b.log));
}

TEST_CASE("sync target copies and then decouples") {
  QNetwork net;
  net.init_params(2);
  QNetwork target;
  sync_target(net, target);
  CHECK(std::equal(net.params().begin(), net.params().end(), target.params().begin()));

  const State s = dummy_state(3);
  CHECK(q_values(net, s) == q_values(target, s));

  // an online update leaves the target untouched
  std::vector<Transition> batch = {dummy_transition(9, 1, 2.0, true)};
  const std::vector<double> target_before(target.params().begin(), target.params().end());
  train_step(net, target, batch, 0.01, 0.9);
  CHECK(std::equal(target.params().begin(), target.params().end(), target_before.begin()));
  CHECK_FALSE(std::equal(net.params().begin(), net.params().end(), target.params().begin()));

  // idempotent
  sync_target(net, target);
  const std::vector<double> once(target.params().begin(), target.params().end());
  sync_target(net, target);
  CHECK(std::equal(target.params().begin(), target.params().end(), once.begin()));
}
