#include "tba/qnet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "tba/errors.hpp"
#include "tba/pgm.hpp"
#include "tba/rng.hpp"

namespace tba {

namespace {

constexpr int kKernel = 3;
constexpr int kStride = 2;
constexpr int kPad = 1;

int conv_out(int in_s) { return (in_s - 1) / kStride + 1; }

void leaky_forward(std::span<const double> z, std::span<double> a) {
  for (size_t i = 0; i < z.size(); ++i) a[i] = z[i] > 0.0 ? z[i] : kLeakySlope * z[i];
}

// d_z = d_a * lrelu'(z), in place over d_a
void leaky_backward(std::span<const double> z, std::span<double> d_a) {
  for (size_t i = 0; i < z.size(); ++i) {
    if (z[i] <= 0.0) d_a[i] *= kLeakySlope;
  }
}

// patches[(ic*9 + ky*3 + kx) * N + n] with n = oy*out_s + ox
void im2col(const double* in, int channels, int in_s, int out_s, double* cols) {
  const int N = out_s * out_s;
  for (int ic = 0; ic < channels; ++ic) {
    const double* src = in + static_cast<size_t>(ic) * in_s * in_s;
    for (int ky = 0; ky < kKernel; ++ky) {
      for (int kx = 0; kx < kKernel; ++kx) {
        double* row = cols + (static_cast<size_t>(ic) * 9 + ky * 3 + kx) * N;
        for (int oy = 0; oy < out_s; ++oy) {
          const int y = oy * kStride + ky - kPad;
          double* dst = row + static_cast<size_t>(oy) * out_s;
          if (y < 0 || y >= in_s) {
            std::memset(dst, 0, sizeof(double) * out_s);
            continue;
          }
          const double* line = src + static_cast<size_t>(y) * in_s;
          for (int ox = 0; ox < out_s; ++ox) {
            const int x = ox * kStride + kx - kPad;
            dst[ox] = (x >= 0 && x < in_s) ? line[x] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, int channels, int in_s, int out_s, double* d_in) {
  const int N = out_s * out_s;
  std::memset(d_in, 0, sizeof(double) * channels * in_s * in_s);
  for (int ic = 0; ic < channels; ++ic) {
    double* dst = d_in + static_cast<size_t>(ic) * in_s * in_s;
    for (int ky = 0; ky < kKernel; ++ky) {
      for (int kx = 0; kx < kKernel; ++kx) {
        const double* row = cols + (static_cast<size_t>(ic) * 9 + ky * 3 + kx) * N;
        for (int oy = 0; oy < out_s; ++oy) {
          const int y = oy * kStride + ky - kPad;
          if (y < 0 || y >= in_s) continue;
          double* line = dst + static_cast<size_t>(y) * in_s;
          const double* srow = row + static_cast<size_t>(oy) * out_s;
          for (int ox = 0; ox < out_s; ++ox) {
            const int x = ox * kStride + kx - kPad;
            if (x >= 0 && x < in_s) line[x] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace

int Topology::conv_out_size() const {
  int s = local_size;
  for (size_t i = 0; i < conv_channels.size(); ++i) s = conv_out(s);
  return s;
}

int Topology::flatten_dim() const {
  const int s = conv_out_size();
  return (conv_channels.empty() ? local_channels : conv_channels.back()) * s * s;
}

QNetwork::QNetwork(Topology topo) : topo_(std::move(topo)) {
  if (topo_.local_channels <= 0 || topo_.local_size <= 0 || topo_.global_dim <= 0 ||
      topo_.vec_features <= 0 || topo_.n_actions <= 0 || topo_.conv_channels.empty()) {
    throw std::domain_error("bad network topology");
  }

  size_t off = 0;
  int in_c = topo_.local_channels;
  int in_s = topo_.local_size;
  for (int out_c : topo_.conv_channels) {
    ConvLayer l{in_c, out_c, in_s, conv_out(in_s), off, 0};
    off += static_cast<size_t>(out_c) * in_c * 9;
    l.b_off = off;
    off += static_cast<size_t>(out_c);
    convs_.push_back(l);
    in_c = out_c;
    in_s = l.out_s;
  }

  fc_vec_ = {topo_.global_dim, topo_.vec_features, off, 0};
  off += static_cast<size_t>(topo_.vec_features) * topo_.global_dim;
  fc_vec_.b_off = off;
  off += static_cast<size_t>(topo_.vec_features);

  int in_f = topo_.concat_dim();
  for (int w : topo_.head_widths) {
    FcLayer l{in_f, w, off, 0};
    off += static_cast<size_t>(w) * in_f;
    l.b_off = off;
    off += static_cast<size_t>(w);
    head_.push_back(l);
    in_f = w;
  }
  FcLayer out{in_f, topo_.n_actions, off, 0};
  off += static_cast<size_t>(topo_.n_actions) * in_f;
  out.b_off = off;
  off += static_cast<size_t>(topo_.n_actions);
  head_.push_back(out);

  params_.assign(off, 0.0);
}

void QNetwork::init_params(uint64_t seed) {
  Rng rng(seed);
  auto fill = [&](size_t w_off, size_t count, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (size_t i = 0; i < count; ++i) {
      params_[w_off + i] = (2.0 * rng.uniform() - 1.0) * bound;
    }
  };
  for (const auto& l : convs_) {
    fill(l.w_off, static_cast<size_t>(l.out_c) * l.in_c * 9, l.in_c * 9);
    std::fill_n(params_.begin() + l.b_off, l.out_c, 0.0);
  }
  fill(fc_vec_.w_off, static_cast<size_t>(fc_vec_.out_f) * fc_vec_.in_f, fc_vec_.in_f);
  std::fill_n(params_.begin() + fc_vec_.b_off, fc_vec_.out_f, 0.0);
  for (const auto& l : head_) {
    fill(l.w_off, static_cast<size_t>(l.out_f) * l.in_f, l.in_f);
    std::fill_n(params_.begin() + l.b_off, l.out_f, 0.0);
  }
}

std::vector<double> QNetwork::forward_cached(std::span<const double> local,
                                             std::span<const double> global,
                                             Workspace& ws) const {
  if (local.size() !=
      static_cast<size_t>(topo_.local_channels) * topo_.local_size * topo_.local_size) {
    throw std::domain_error("local input size mismatch");
  }
  if (global.size() != static_cast<size_t>(topo_.global_dim)) {
    throw std::domain_error("global input size mismatch");
  }

  const size_t n_conv = convs_.size();
  ws.conv_in.resize(n_conv);
  ws.cols.resize(n_conv);
  ws.conv_z.resize(n_conv);

  ws.conv_in[0].assign(local.begin(), local.end());
  for (size_t li = 0; li < n_conv; ++li) {
    const ConvLayer& l = convs_[li];
    const int N = l.out_s * l.out_s;
    const int K = l.in_c * 9;
    ws.cols[li].resize(static_cast<size_t>(K) * N);
    im2col(ws.conv_in[li].data(), l.in_c, l.in_s, l.out_s, ws.cols[li].data());

    ws.conv_z[li].resize(static_cast<size_t>(l.out_c) * N);
    const double* W = &params_[l.w_off];
    const double* B = &params_[l.b_off];
    const double* cols = ws.cols[li].data();
    int oc = 0;
    for (; oc + 1 < l.out_c; oc += 2) {
      double* z0 = &ws.conv_z[li][static_cast<size_t>(oc) * N];
      double* z1 = z0 + N;
      std::fill_n(z0, N, B[oc]);
      std::fill_n(z1, N, B[oc + 1]);
      const double* w0 = W + static_cast<size_t>(oc) * K;
      const double* w1 = w0 + K;
      for (int k = 0; k < K; ++k) {
        const double a = w0[k];
        const double b = w1[k];
        const double* col = cols + static_cast<size_t>(k) * N;
        for (int n = 0; n < N; ++n) {
          z0[n] += a * col[n];
          z1[n] += b * col[n];
        }
      }
    }
    for (; oc < l.out_c; ++oc) {
      double* z = &ws.conv_z[li][static_cast<size_t>(oc) * N];
      std::fill_n(z, N, B[oc]);
      const double* wrow = W + static_cast<size_t>(oc) * K;
      for (int k = 0; k < K; ++k) {
        const double w = wrow[k];
        const double* col = cols + static_cast<size_t>(k) * N;
        for (int n = 0; n < N; ++n) z[n] += w * col[n];
      }
    }

    if (li + 1 < n_conv) {
      ws.conv_in[li + 1].resize(ws.conv_z[li].size());
      leaky_forward(ws.conv_z[li], ws.conv_in[li + 1]);
    }
  }

  // concat buffer: [conv flatten | vec branch]
  const int flat = topo_.flatten_dim();
  ws.cat.resize(static_cast<size_t>(topo_.concat_dim()));
  leaky_forward(ws.conv_z.back(), std::span<double>(ws.cat.data(), flat));

  ws.global_in.assign(global.begin(), global.end());
  ws.vec_z.resize(static_cast<size_t>(fc_vec_.out_f));
  {
    const double* W = &params_[fc_vec_.w_off];
    const double* B = &params_[fc_vec_.b_off];
    for (int o = 0; o < fc_vec_.out_f; ++o) {
      double acc = B[o];
      const double* wrow = W + static_cast<size_t>(o) * fc_vec_.in_f;
      for (int i = 0; i < fc_vec_.in_f; ++i) acc += wrow[i] * global[i];
      ws.vec_z[o] = acc;
    }
  }
  leaky_forward(ws.vec_z, std::span<double>(ws.cat.data() + flat, fc_vec_.out_f));

  // head
  ws.head_z.resize(head_.size());
  ws.head_in.resize(head_.size());
  ws.head_in[0] = ws.cat;
  for (size_t li = 0; li < head_.size(); ++li) {
    const FcLayer& l = head_[li];
    const std::vector<double>& x = ws.head_in[li];
    ws.head_z[li].resize(static_cast<size_t>(l.out_f));
    const double* W = &params_[l.w_off];
    const double* B = &params_[l.b_off];
    int o = 0;
    for (; o + 1 < l.out_f; o += 2) {
      double acc0 = B[o];
      double acc1 = B[o + 1];
      const double* w0 = W + static_cast<size_t>(o) * l.in_f;
      const double* w1 = w0 + l.in_f;
      for (int i = 0; i < l.in_f; ++i) {
        acc0 += w0[i] * x[i];
        acc1 += w1[i] * x[i];
      }
      ws.head_z[li][o] = acc0;
      ws.head_z[li][o + 1] = acc1;
    }
    for (; o < l.out_f; ++o) {
      double acc = B[o];
      const double* wrow = W + static_cast<size_t>(o) * l.in_f;
      for (int i = 0; i < l.in_f; ++i) acc += wrow[i] * x[i];
      ws.head_z[li][o] = acc;
    }
    if (li + 1 < head_.size()) {
      ws.head_in[li + 1].resize(ws.head_z[li].size());
      leaky_forward(ws.head_z[li], ws.head_in[li + 1]);
    }
  }
  return ws.head_z.back();  // output layer is linear
}

std::vector<double> QNetwork::forward(std::span<const double> local,
                                      std::span<const double> global) const {
  static thread_local Workspace ws;
  return forward_cached(local, global, ws);
}

void QNetwork::backward(Workspace& ws, std::span<const double> d_q,
                        std::span<double> grad) const {
  if (d_q.size() != static_cast<size_t>(topo_.n_actions) || grad.size() != params_.size()) {
    throw std::domain_error("backward buffer size mismatch");
  }

  // head, last layer (linear) first
  ws.d_a.assign(d_q.begin(), d_q.end());
  for (size_t li = head_.size(); li-- > 0;) {
    const FcLayer& l = head_[li];
    // d_a currently holds d(loss)/d(z) for the linear output layer, or
    // d(loss)/d(activation) for hidden layers
    if (li + 1 < head_.size()) leaky_backward(ws.head_z[li], ws.d_a);
    const std::vector<double>& x = ws.head_in[li];
    double* d_w = grad.data() + l.w_off;
    double* d_b = grad.data() + l.b_off;
    ws.d_buf.assign(l.in_f, 0.0);
    const double* W = &params_[l.w_off];
    int o = 0;
    for (; o + 1 < l.out_f; o += 2) {
      const double g0 = ws.d_a[o];
      const double g1 = ws.d_a[o + 1];
      d_b[o] += g0;
      d_b[o + 1] += g1;
      double* dw0 = d_w + static_cast<size_t>(o) * l.in_f;
      double* dw1 = dw0 + l.in_f;
      const double* w0 = W + static_cast<size_t>(o) * l.in_f;
      const double* w1 = w0 + l.in_f;
      for (int i = 0; i < l.in_f; ++i) {
        dw0[i] += g0 * x[i];
        dw1[i] += g1 * x[i];
        ws.d_buf[i] += g0 * w0[i] + g1 * w1[i];
      }
    }
    for (; o < l.out_f; ++o) {
      const double g = ws.d_a[o];
      d_b[o] += g;
      double* dwr = d_w + static_cast<size_t>(o) * l.in_f;
      const double* wrow = W + static_cast<size_t>(o) * l.in_f;
      for (int i = 0; i < l.in_f; ++i) {
        dwr[i] += g * x[i];
        ws.d_buf[i] += g * wrow[i];
      }
    }
    std::swap(ws.d_a, ws.d_buf);
  }

  // split concat gradient
  const int flat = topo_.flatten_dim();
  std::vector<double> d_flat(ws.d_a.begin(), ws.d_a.begin() + flat);
  std::vector<double> d_vec(ws.d_a.begin() + flat, ws.d_a.end());

  // vector branch
  leaky_backward(ws.vec_z, d_vec);
  {
    double* d_w = grad.data() + fc_vec_.w_off;
    double* d_b = grad.data() + fc_vec_.b_off;
    for (int o = 0; o < fc_vec_.out_f; ++o) {
      const double g = d_vec[o];
      d_b[o] += g;
      double* wrow = d_w + static_cast<size_t>(o) * fc_vec_.in_f;
      for (int i = 0; i < fc_vec_.in_f; ++i) wrow[i] += g * ws.global_in[i];
    }
  }

  // conv stack
  ws.d_a = std::move(d_flat);
  for (size_t li = convs_.size(); li-- > 0;) {
    const ConvLayer& l = convs_[li];
    const int N = l.out_s * l.out_s;
    const int K = l.in_c * 9;
    leaky_backward(ws.conv_z[li], ws.d_a);

    double* d_w = grad.data() + l.w_off;
    double* d_b = grad.data() + l.b_off;
    const double* cols = ws.cols[li].data();
    const double* W = &params_[l.w_off];
    ws.d_cols.assign(static_cast<size_t>(K) * N, 0.0);
    int oc = 0;
    for (; oc + 1 < l.out_c; oc += 2) {
      const double* dz0 = &ws.d_a[static_cast<size_t>(oc) * N];
      const double* dz1 = dz0 + N;
      double acc_b0 = 0.0, acc_b1 = 0.0;
      for (int n = 0; n < N; ++n) {
        acc_b0 += dz0[n];
        acc_b1 += dz1[n];
      }
      d_b[oc] += acc_b0;
      d_b[oc + 1] += acc_b1;
      double* dw0 = d_w + static_cast<size_t>(oc) * K;
      double* dw1 = dw0 + K;
      const double* w0 = W + static_cast<size_t>(oc) * K;
      const double* w1 = w0 + K;
      for (int k = 0; k < K; ++k) {
        const double* col = cols + static_cast<size_t>(k) * N;
        double* dcol = &ws.d_cols[static_cast<size_t>(k) * N];
        const double a = w0[k];
        const double b = w1[k];
        double acc0 = 0.0, acc1 = 0.0;
        for (int n = 0; n < N; ++n) {
          acc0 += dz0[n] * col[n];
          acc1 += dz1[n] * col[n];
          dcol[n] += a * dz0[n] + b * dz1[n];
        }
        dw0[k] += acc0;
        dw1[k] += acc1;
      }
    }
    for (; oc < l.out_c; ++oc) {
      const double* dz = &ws.d_a[static_cast<size_t>(oc) * N];
      double acc_b = 0.0;
      for (int n = 0; n < N; ++n) acc_b += dz[n];
      d_b[oc] += acc_b;
      double* dwr = d_w + static_cast<size_t>(oc) * K;
      const double* wrow = W + static_cast<size_t>(oc) * K;
      for (int k = 0; k < K; ++k) {
        const double* col = cols + static_cast<size_t>(k) * N;
        double* dcol = &ws.d_cols[static_cast<size_t>(k) * N];
        const double w = wrow[k];
        double acc = 0.0;
        for (int n = 0; n < N; ++n) {
          acc += dz[n] * col[n];
          dcol[n] += w * dz[n];
        }
        dwr[k] += acc;
      }
    }
    ws.d_buf.resize(static_cast<size_t>(l.in_c) * l.in_s * l.in_s);
    col2im(ws.d_cols.data(), l.in_c, l.in_s, l.out_s, ws.d_buf.data());
    std::swap(ws.d_a, ws.d_buf);
  }
}

namespace {

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(out, v);
}

struct ByteReader {
  const std::string& data;
  size_t pos = 0;
  const std::string& path;

  void need(size_t n) {
    if (pos + n > data.size()) throw FormatError(path + ": truncated model file");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(data[pos++])) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(data[pos++])) << (8 * i);
    return v;
  }
  double f64() {
    const uint64_t v = u64();
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
};

constexpr uint32_t kModelVersion = 1;

}  // namespace

void save_model(const QNetwork& net, const std::string& path) {
  const Topology& t = net.topology();
  std::string out;
  out.reserve(64 + net.param_count() * 8);
  out += "TBAQ";
  put_u32(out, kModelVersion);
  put_u32(out, static_cast<uint32_t>(t.local_channels));
  put_u32(out, static_cast<uint32_t>(t.local_size));
  put_u32(out, static_cast<uint32_t>(t.conv_channels.size()));
  for (int c : t.conv_channels) put_u32(out, static_cast<uint32_t>(c));
  put_u32(out, static_cast<uint32_t>(t.global_dim));
  put_u32(out, static_cast<uint32_t>(t.vec_features));
  put_u32(out, static_cast<uint32_t>(t.head_widths.size()));
  for (int w : t.head_widths) put_u32(out, static_cast<uint32_t>(w));
  put_u32(out, static_cast<uint32_t>(t.n_actions));
  put_u64(out, net.param_count());
  for (double p : net.params()) put_f64(out, p);
  atomic_write_file(path, out);
}

QNetwork load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  ByteReader r{data, 0, path};
  r.need(4);
  if (data.compare(0, 4, "TBAQ") != 0) throw FormatError(path + ": bad model magic");
  r.pos = 4;
  if (r.u32() != kModelVersion) throw FormatError(path + ": unsupported model version");

  Topology t;
  t.local_channels = static_cast<int>(r.u32());
  t.local_size = static_cast<int>(r.u32());
  const uint32_t n_conv = r.u32();
  if (n_conv == 0 || n_conv > 64) throw FormatError(path + ": bad conv layer count");
  t.conv_channels.clear();
  for (uint32_t i = 0; i < n_conv; ++i) t.conv_channels.push_back(static_cast<int>(r.u32()));
  t.global_dim = static_cast<int>(r.u32());
  t.vec_features = static_cast<int>(r.u32());
  const uint32_t n_head = r.u32();
  if (n_head > 64) throw FormatError(path + ": bad head layer count");
  t.head_widths.clear();
  for (uint32_t i = 0; i < n_head; ++i) t.head_widths.push_back(static_cast<int>(r.u32()));
  t.n_actions = static_cast<int>(r.u32());

  QNetwork net(t);
  const uint64_t count = r.u64();
  if (count != net.param_count()) {
    throw FormatError(path + ": parameter count does not match dimensions");
  }
  for (size_t i = 0; i < count; ++i) net.params()[i] = r.f64();
  if (r.pos != data.size()) throw FormatError(path + ": trailing bytes in model file");
  return net;
}

}  // namespace tba
