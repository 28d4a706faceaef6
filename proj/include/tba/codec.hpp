#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "tba/frame.hpp"

namespace tba {

inline constexpr int kBlockSize = 8;
inline constexpr int kQpFloor = 1;
inline constexpr int kQpCeil = 51;
inline constexpr int kCtuPixels = kCtuSize * kCtuSize;  // 4096

// Quantizer step size, doubling every 6 QP: 2^((qp-4)/6).
// Built from ldexp and a fixed sextic-root table so results are identical
// on every platform.
double qp_to_qstep(int qp);

// Orthonormal 2-D DCT-II over an 8x8 block and its inverse.
// Round trip is identity to well under 1e-9 per sample in double precision.
void dct2_8x8(const double* in, double* out);
void idct2_8x8(const double* in, double* out);

// Code length of one quantizer level under signed order-0 exp-Golomb.
// Level 0 costs exactly one bit.
int signed_exp_golomb_bits(long long level);

struct CtuCodingResult {
  long long bits = 0;
  double bpp = 0.0;  // bits / 4096
  double mse = 0.0;
  std::vector<uint8_t> recon;  // 64x64, clamped to [0,255]
};

// Transform + uniform quantization + exp-Golomb bit counting over the 64
// 8x8 sub-blocks of one CTU. Quantization rounds half away from zero,
// which makes the bit count monotone non-increasing in QP.
CtuCodingResult encode_ctu(std::span<const uint8_t> ctu, int qp);

struct FrameCodingResult {
  long long total_bits = 0;
  double bpp = 0.0;  // total_bits / padded pixel count
  LumaFrame recon;
  std::vector<CtuCodingResult> ctus;  // raster order
};

FrameCodingResult encode_frame(const LumaFrame& frame, std::span<const int> qps);

}  // namespace tba
