#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "tba/errors.hpp"
#include "tba/qnet.hpp"
#include "tba/rng.hpp"

using namespace tba;

namespace {

Topology tiny_topology(Rng& rng) {
  Topology t;
  t.local_channels = rng.range(1, 2);
  t.local_size = 16;
  t.conv_channels = {rng.range(2, 3), rng.range(2, 4), rng.range(2, 4), rng.range(2, 4)};
  t.global_dim = rng.range(3, 6);
  t.vec_features = rng.range(3, 8);
  t.head_widths = {rng.range(4, 10), rng.range(4, 8)};
  t.n_actions = rng.range(2, 6);
  return t;
}

std::vector<double> random_vec(size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = (rng.uniform() * 2.0 - 1.0) * scale;
  return v;
}

// Scalar loss used by the finite-difference check: squared error of one
// output against a fixed target plus a linear probe over the rest.
double probe_loss(const QNetwork& net, std::span<const double> local,
                  std::span<const double> global, std::span<const double> probe, int a,
                  double target) {
  const std::vector<double> q = net.forward(local, global);
  double loss = (q[a] - target) * (q[a] - target);
  for (size_t i = 0; i < q.size(); ++i) loss += probe[i] * q[i];
  return loss;
}

double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-3});
  return std::abs(a - b) / denom;
}

}  // namespace

TEST_CASE("default topology matches the published shape") {
  const Topology t;
  CHECK(t.conv_out_size() == 4);
  CHECK(t.flatten_dim() == 512);
  CHECK(t.concat_dim() == 576);
  const QNetwork net(t);
  // conv params + vec branch + head
  const size_t conv = (8 * 2 + 16 * 8 + 32 * 16 + 32 * 32) * 9 + 8 + 16 + 32 + 32;
  const size_t vec = 64 * 15 + 64;
  const size_t head = 256 * 576 + 256 + 128 * 256 + 128 + 30 * 128 + 30;
  CHECK(net.param_count() == conv + vec + head);
}

TEST_CASE("zero parameters give zero q-values") {
  QNetwork net;
  Rng rng(5);
  const auto local = random_vec(2 * 64 * 64, rng);
  const auto global = random_vec(15, rng);
  const std::vector<double> q = net.forward(local, global);
  REQUIRE(q.size() == 30);
  for (double v : q) CHECK(v == 0.0);
}

TEST_CASE("forward is deterministic") {
  QNetwork net;
  net.init_params(11);
  Rng rng(6);
  const auto local = random_vec(2 * 64 * 64, rng, 0.5);
  const auto global = random_vec(15, rng, 0.5);
  CHECK(net.forward(local, global) == net.forward(local, global));
}

TEST_CASE("init draws weights within 1/sqrt(fan_in) and zero biases") {
  Topology t;
  QNetwork net(t);
  net.init_params(77);
  const auto p = net.params();

  // first conv: weights 8x2x9 bounded by 1/sqrt(18), then 8 zero biases
  const double bound1 = 1.0 / std::sqrt(18.0);
  size_t off = 0;
  bool nonzero = false;
  for (size_t i = 0; i < 8u * 2u * 9u; ++i) {
    CHECK(std::abs(p[off + i]) <= bound1);
    nonzero = nonzero || p[off + i] != 0.0;
  }
  CHECK(nonzero);
  off += 8u * 2u * 9u;
  for (size_t i = 0; i < 8; ++i) CHECK(p[off + i] == 0.0);

  // output layer: last 30 params are its biases, zero after init
  for (size_t i = p.size() - 30; i < p.size(); ++i) CHECK(p[i] == 0.0);
}

TEST_CASE("seeded init is reproducible") {
  QNetwork a, b;
  a.init_params(42);
  b.init_params(42);
  CHECK(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
  b.init_params(43);
  CHECK_FALSE(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
}

TEST_CASE("scaling the output layer scales q-values and keeps the argmax") {
  Rng rng(17);
  Topology t = tiny_topology(rng);
  QNetwork net(t);
  net.init_params(3);
  const auto local =
      random_vec(static_cast<size_t>(t.local_channels) * t.local_size * t.local_size, rng);
  const auto global = random_vec(t.global_dim, rng);
  const std::vector<double> before = net.forward(local, global);

  // the output layer owns the trailing (n_actions * in + n_actions) params
  const size_t out_params = static_cast<size_t>(t.n_actions) * (t.head_widths.back() + 1);
  auto p = net.params();
  for (size_t i = p.size() - out_params; i < p.size(); ++i) p[i] *= 2.0;

  const std::vector<double> after = net.forward(local, global);
  int arg_before = 0, arg_after = 0;
  for (size_t i = 0; i < before.size(); ++i) {
    CHECK(after[i] == doctest::Approx(2.0 * before[i]).epsilon(1e-12));
    if (before[i] > before[arg_before]) arg_before = static_cast<int>(i);
    if (after[i] > after[arg_after]) arg_after = static_cast<int>(i);
  }
  CHECK(arg_before == arg_after);
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(2024);
  const double h = 1e-5;
  int checked_params = 0;

  for (int inst = 0; inst < 20; ++inst) {
    Topology t = tiny_topology(rng);
    QNetwork net(t);
    net.init_params(rng.next_u64());

    // central differences need the loss to be smooth within +-h, so
    // redraw inputs that park a pre-activation on a LeakyReLU kink
    std::vector<double> local, global;
    QNetwork::Workspace ws;
    for (;;) {
      local = random_vec(static_cast<size_t>(t.local_channels) * t.local_size * t.local_size,
                         rng);
      global = random_vec(t.global_dim, rng);
      net.forward_cached(local, global, ws);
      double min_abs_z = 1e300;
      for (const auto& zs : ws.conv_z) {
        for (double z : zs) min_abs_z = std::min(min_abs_z, std::abs(z));
      }
      for (double z : ws.vec_z) min_abs_z = std::min(min_abs_z, std::abs(z));
      for (size_t li = 0; li + 1 < ws.head_z.size(); ++li) {
        for (double z : ws.head_z[li]) min_abs_z = std::min(min_abs_z, std::abs(z));
      }
      if (min_abs_z > 1e-4) break;
    }

    const auto probe = random_vec(t.n_actions, rng);
    const int a = static_cast<int>(rng.bounded(t.n_actions));
    const double target = rng.uniform() * 2.0 - 1.0;

    // analytic gradient of probe_loss
    const std::vector<double> q = net.forward_cached(local, global, ws);
    std::vector<double> d_q(probe.begin(), probe.end());
    d_q[a] += 2.0 * (q[a] - target);
    std::vector<double> grad(net.param_count(), 0.0);
    net.backward(ws, d_q, grad);

    // spot-check a subset of parameters per instance, always including
    // every layer: stride chosen so ~150 params are touched
    const size_t stride = std::max<size_t>(1, net.param_count() / 150);
    auto params = net.params();
    double max_rel = 0.0;
    for (size_t i = 0; i < params.size(); i += stride) {
      const double keep = params[i];
      params[i] = keep + h;
      const double up = probe_loss(net, local, global, probe, a, target);
      params[i] = keep - h;
      const double dn = probe_loss(net, local, global, probe, a, target);
      params[i] = keep;
      const double fd = (up - dn) / (2.0 * h);
      max_rel = std::max(max_rel, rel_err(grad[i], fd));
      ++checked_params;
    }
    CHECK(max_rel < 1e-4);
  }
  CHECK(checked_params > 1000);
}

TEST_CASE("model save/load round trip is bitwise") {
  const std::string dir = tba::testing::scratch_dir("qnet_io");
  Rng rng(31);
  const Topology t = tiny_topology(rng);
  QNetwork net(t);
  net.init_params(8);

  save_model(net, dir + "/m.tbaq");
  const QNetwork back = load_model(dir + "/m.tbaq");
  CHECK(back.topology() == t);
  REQUIRE(back.param_count() == net.param_count());
  for (size_t i = 0; i < net.param_count(); ++i) {
    CHECK(back.params()[i] == net.params()[i]);
  }

  const auto local =
      random_vec(static_cast<size_t>(t.local_channels) * t.local_size * t.local_size, rng);
  const auto global = random_vec(t.global_dim, rng);
  CHECK(net.forward(local, global) == back.forward(local, global));
}

TEST_CASE("model file is fixed little-endian layout") {
  const std::string dir = tba::testing::scratch_dir("qnet_bytes");
  QNetwork net;  // default topology, zero params
  save_model(net, dir + "/m.tbaq");
  std::ifstream in(dir + "/m.tbaq", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  REQUIRE(bytes.size() > 16);
  CHECK(bytes.substr(0, 4) == "TBAQ");
  CHECK(static_cast<uint8_t>(bytes[4]) == 1);  // version LE
  CHECK(static_cast<uint8_t>(bytes[5]) == 0);
  CHECK(static_cast<uint8_t>(bytes[8]) == 2);   // local channels
  CHECK(static_cast<uint8_t>(bytes[12]) == 64); // local size
}

TEST_CASE("corrupted model header is rejected") {
  const std::string dir = tba::testing::scratch_dir("qnet_bad");
  QNetwork net;
  save_model(net, dir + "/m.tbaq");

  std::ifstream in(dir + "/m.tbaq", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  in.close();

  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  atomic_write_file(dir + "/magic.tbaq", wrong_magic);
  CHECK_THROWS_AS(load_model(dir + "/magic.tbaq"), FormatError);

  atomic_write_file(dir + "/trunc.tbaq", bytes.substr(0, bytes.size() - 9));
  CHECK_THROWS_AS(load_model(dir + "/trunc.tbaq"), FormatError);

  atomic_write_file(dir + "/extra.tbaq", bytes + "zz");
  CHECK_THROWS_AS(load_model(dir + "/extra.tbaq"), FormatError);
}
