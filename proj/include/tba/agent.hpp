#pragma once

#include <deque>
#include <span>
#include <string>
#include <vector>

#include "tba/env.hpp"
#include "tba/qnet.hpp"
#include "tba/rng.hpp"

namespace tba {

// Bounded FIFO with uniform sampling (with replacement).
template <class T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::domain_error("replay capacity must be positive");
  }

  void push(T t) {
    if (buf_.size() == capacity_) buf_.pop_front();
    buf_.push_back(std::move(t));
  }

  size_t size() const { return buf_.size(); }
  size_t capacity() const { return capacity_; }
  const T& at(size_t i) const { return buf_.at(i); }  // 0 = oldest

  std::vector<T> sample(size_t n, Rng& rng) const {
    if (buf_.empty()) throw std::domain_error("sampling from empty replay buffer");
    std::vector<T> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) out.push_back(buf_[rng.bounded(buf_.size())]);
    return out;
  }

 private:
  size_t capacity_;
  std::deque<T> buf_;
};

// Linear decay from start to end over decay_steps environment steps.
struct EpsSchedule {
  double start = 1.0;
  double end = 0.05;
  long long decay_steps = 20000;

  double at(long long step) const {
    if (step >= decay_steps) return end;
    return start + (end - start) * static_cast<double>(step) / static_cast<double>(decay_steps);
  }
};

struct TrainConfig {
  double gamma = 0.9;
  EpsSchedule eps;
  double lr = 1e-3;
  int batch_size = 64;
  long long target_sync = 500;
  long long total_steps = 10000;
  size_t buffer_capacity = 50000;
  size_t warmup = 1000;
  uint64_t seed = 1;
};

// Greedy argmax; ties resolve to the lowest index (lowest QP).
Action greedy_action(std::span<const double> qvals);

// epsilon-greedy over 30 Q-values.
Action select_action(std::span<const double> qvals, double eps, Rng& rng);

inline std::vector<double> q_values(const QNetwork& net, const State& s) {
  return net.forward(s.local, s.global_vec);
}

// r for terminal transitions, r + gamma * max_a Q_target(s', a) otherwise.
std::vector<double> td_targets(std::span<const Transition> batch, const QNetwork& target_net,
                               double gamma);

// One batch of squared-error TD regression with a plain gradient step.
// Returns the pre-update loss.
double train_step(QNetwork& net, const QNetwork& target_net, std::span<const Transition> batch,
                  double lr, double gamma);

void sync_target(const QNetwork& net, QNetwork& target_net);

struct TrainLogRow {
  long long step = 0;
  double epsilon = 0.0;
  double loss = 0.0;
  double mean_return = 0.0;
};

struct TrainResult {
  QNetwork net;
  std::vector<TrainLogRow> log;  // one row per episode
};

// Runs DQN over the cache's train split: seeded shuffled frame order,
// epsilon-greedy enactment, replay, one train_step per environment step
// after warmup, periodic target sync.
TrainResult train(const TBACache& cache, const Corpus& corpus, const TrainConfig& cfg,
                  const RewardParams& params);

std::string train_log_csv(const std::vector<TrainLogRow>& log);

}  // namespace tba
