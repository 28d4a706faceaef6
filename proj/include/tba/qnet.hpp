#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tba {

inline constexpr double kLeakySlope = 0.01;

// Two-branch value network: the local 2x64x64 input runs through four
// 3x3 stride-2 convolutions (channels 8-16-32-32, zero padding 1) and is
// flattened; the 15-d global vector is lifted to 64 features by one
// fully-connected layer; both are concatenated and fed through
// fully-connected layers 256 and 128 into 30 linear outputs. Hidden
// activations are LeakyReLU (slope 0.01).
//
// Dimensions are parameters so that small instances of the same topology
// can be checked against finite differences.
struct Topology {
  int local_channels = 2;
  int local_size = 64;
  std::vector<int> conv_channels = {8, 16, 32, 32};
  int global_dim = 15;
  int vec_features = 64;
  std::vector<int> head_widths = {256, 128};
  int n_actions = 30;

  int conv_out_size() const;  // spatial size after the conv stack
  int flatten_dim() const;
  int concat_dim() const { return flatten_dim() + vec_features; }
  bool operator==(const Topology&) const = default;
};

class QNetwork {
 public:
  explicit QNetwork(Topology topo = {});

  // Seeded uniform init scaled by 1/sqrt(fan_in); biases zero.
  void init_params(uint64_t seed);

  std::vector<double> forward(std::span<const double> local,
                              std::span<const double> global) const;

  // Training path: forward keeping activations, then gradient
  // accumulation from d(loss)/d(q) into a flat gradient vector.
  struct Workspace;
  std::vector<double> forward_cached(std::span<const double> local,
                                     std::span<const double> global, Workspace& ws) const;
  void backward(Workspace& ws, std::span<const double> d_q, std::span<double> grad) const;

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  size_t param_count() const { return params_.size(); }
  const Topology& topology() const { return topo_; }

 private:
  struct ConvLayer {
    int in_c, out_c, in_s, out_s;
    size_t w_off, b_off;
  };
  struct FcLayer {
    int in_f, out_f;
    size_t w_off, b_off;
  };

  Topology topo_;
  std::vector<ConvLayer> convs_;
  FcLayer fc_vec_;
  std::vector<FcLayer> head_;  // hidden head layers + output layer last
  std::vector<double> params_;
};

// Per-sample activation cache, reusable across samples.
struct QNetwork::Workspace {
  std::vector<std::vector<double>> conv_in;   // input of each conv
  std::vector<std::vector<double>> cols;      // im2col patches per conv
  std::vector<std::vector<double>> conv_z;    // pre-activations per conv
  std::vector<double> global_in;
  std::vector<double> vec_z;
  std::vector<double> cat;                    // [flatten | vec activations]
  std::vector<std::vector<double>> head_z;
  std::vector<std::vector<double>> head_in;   // input of each head layer
  // scratch for backward
  std::vector<double> d_a, d_z, d_cols, d_buf;
};

// Little-endian binary model file: magic "TBAQ" + version + dimension
// table + parameters as 64-bit floats in declaration order.
void save_model(const QNetwork& net, const std::string& path);
QNetwork load_model(const std::string& path);

}  // namespace tba
