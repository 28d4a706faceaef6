#include "tba/codec.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tba/errors.hpp"

namespace tba {

namespace {

// 2^(r/6) for r = 0..5, rounded to nearest double.
constexpr double kSexticRoot[6] = {
    1.0,
    1.122462048309373,
    1.2599210498948732,
    1.414213562373095,
    1.5874010519681995,
    1.7817974362806786,
};

// cos(n*pi/16) for n = 0..8, rounded to nearest double. Fixed table keeps
// the transform bit-identical across libm implementations.
constexpr double kCos16[9] = {
    1.0,
    0.98078528040323045,
    0.92387953251128676,
    0.83146961230254524,
    0.70710678118654752,
    0.55557023301960222,
    0.38268343236508977,
    0.19509032201612827,
    0.0,
};

double cos_n_pi_16(int n) {
  n %= 32;
  if (n < 0) n += 32;
  if (n <= 8) return kCos16[n];
  if (n <= 16) return -kCos16[16 - n];
  if (n <= 24) return -kCos16[n - 16];
  return kCos16[32 - n];
}

struct DctBasis {
  // basis[u][i] = a(u) * cos((2i+1) u pi / 16), a(0)=sqrt(1/8), a(u>0)=1/2
  double b[kBlockSize][kBlockSize];
  DctBasis() {
    const double a0 = 0.35355339059327376;  // sqrt(1/8)
    for (int u = 0; u < kBlockSize; ++u) {
      const double au = u == 0 ? a0 : 0.5;
      for (int i = 0; i < kBlockSize; ++i) b[u][i] = au * cos_n_pi_16((2 * i + 1) * u);
    }
  }
};

const DctBasis kBasis;

// JPEG-style zig-zag scan over an 8x8 block.
constexpr int kZigZag[64] = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
};

void require_finite(const double* block) {
  for (int i = 0; i < 64; ++i) {
    if (!std::isfinite(block[i])) throw std::domain_error("non-finite sample in 8x8 block");
  }
}

// out = B * in * B^T  (rows then columns)
void apply_separable(const double* in, double* out, bool inverse) {
  double tmp[64];
  // rows: tmp[u][j] = sum_i basis[u][i] * in[i][j]   (or transposed basis)
  for (int u = 0; u < 8; ++u) {
    for (int j = 0; j < 8; ++j) {
      double acc = 0.0;
      for (int i = 0; i < 8; ++i) {
        const double w = inverse ? kBasis.b[i][u] : kBasis.b[u][i];
        acc += w * in[i * 8 + j];
      }
      tmp[u * 8 + j] = acc;
    }
  }
  // columns
  for (int u = 0; u < 8; ++u) {
    for (int v = 0; v < 8; ++v) {
      double acc = 0.0;
      for (int j = 0; j < 8; ++j) {
        const double w = inverse ? kBasis.b[j][v] : kBasis.b[v][j];
        acc += w * tmp[u * 8 + j];
      }
      out[u * 8 + v] = acc;
    }
  }
}

}  // namespace

double qp_to_qstep(int qp) {
  if (qp < kQpFloor || qp > kQpCeil) {
    throw std::domain_error("qp " + std::to_string(qp) + " outside [1,51]");
  }
  const int e = qp - 4;
  int k = e / 6;
  int r = e % 6;
  if (r < 0) {
    r += 6;
    k -= 1;
  }
  return std::ldexp(kSexticRoot[r], k);
}

void dct2_8x8(const double* in, double* out) {
  require_finite(in);
  apply_separable(in, out, false);
}

void idct2_8x8(const double* in, double* out) {
  require_finite(in);
  apply_separable(in, out, true);
}

int signed_exp_golomb_bits(long long level) {
  const unsigned long long n =
      level > 0 ? 2ULL * static_cast<unsigned long long>(level) - 1
                : 2ULL * static_cast<unsigned long long>(-level);
  const int w = std::bit_width(n + 1);
  return 2 * w - 1;
}

CtuCodingResult encode_ctu(std::span<const uint8_t> ctu, int qp) {
  if (ctu.size() != static_cast<size_t>(kCtuPixels)) {
    throw std::domain_error("encode_ctu expects a 64x64 block");
  }
  const double qstep = qp_to_qstep(qp);

  CtuCodingResult res;
  res.recon.resize(kCtuPixels);

  double block[64];
  double coeff[64];
  double pix[64];
  double sse = 0.0;

  for (int by = 0; by < kCtuSize; by += kBlockSize) {
    for (int bx = 0; bx < kCtuSize; bx += kBlockSize) {
      for (int y = 0; y < kBlockSize; ++y) {
        for (int x = 0; x < kBlockSize; ++x) {
          block[y * 8 + x] = static_cast<double>(ctu[(by + y) * kCtuSize + bx + x]);
        }
      }
      apply_separable(block, coeff, false);
      // quantize in zig-zag order, count bits, dequantize in place
      for (int k = 0; k < 64; ++k) {
        const int idx = kZigZag[k];
        const long long level = std::llround(coeff[idx] / qstep);
        res.bits += signed_exp_golomb_bits(level);
        coeff[idx] = static_cast<double>(level) * qstep;
      }
      apply_separable(coeff, pix, true);
      for (int y = 0; y < kBlockSize; ++y) {
        for (int x = 0; x < kBlockSize; ++x) {
          long long v = std::llround(pix[y * 8 + x]);
          if (v < 0) v = 0;
          if (v > 255) v = 255;
          const size_t p = static_cast<size_t>(by + y) * kCtuSize + bx + x;
          res.recon[p] = static_cast<uint8_t>(v);
          const double d = static_cast<double>(ctu[p]) - static_cast<double>(v);
          sse += d * d;
        }
      }
    }
  }
  res.mse = sse / kCtuPixels;
  res.bpp = static_cast<double>(res.bits) / kCtuPixels;
  return res;
}

FrameCodingResult encode_frame(const LumaFrame& frame, std::span<const int> qps) {
  const CtuGrid grid = CtuGrid::for_frame(frame);
  if (qps.size() != static_cast<size_t>(grid.total())) {
    throw std::domain_error("qps length " + std::to_string(qps.size()) + " != ctu count " +
                            std::to_string(grid.total()));
  }

  FrameCodingResult out;
  out.recon = frame;
  out.ctus.reserve(qps.size());
  for (int c = 0; c < grid.total(); ++c) {
    CtuCodingResult r = encode_ctu(extract_ctu(frame, c), qps[c]);
    out.total_bits += r.bits;
    const CtuRect rect = grid.rect(c);
    for (int y = 0; y < kCtuSize; ++y) {
      const uint8_t* src = &r.recon[static_cast<size_t>(y) * kCtuSize];
      std::copy(src, src + kCtuSize,
                &out.recon.samples[static_cast<size_t>(rect.y + y) * frame.width + rect.x]);
    }
    out.ctus.push_back(std::move(r));
  }
  out.bpp = static_cast<double>(out.total_bits) /
            (static_cast<double>(frame.width) * frame.height);
  return out;
}

}  // namespace tba
