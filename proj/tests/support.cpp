#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "tba/frame.hpp"
#include "tba/pgm.hpp"

namespace fs = std::filesystem;

namespace tba::testing {

namespace {

uint8_t clamp_pixel(double v) {
  long long r = std::llround(v);
  if (r < 0) r = 0;
  if (r > 255) r = 255;
  return static_cast<uint8_t>(r);
}

}  // namespace

MapSpecFile generate_corpus(const std::string& corpus_dir, const SynthCorpusOptions& opt) {
  fs::create_directories(corpus_dir);

  MapSpecFile spec;
  spec.seed = opt.seed;

  for (int fi = 0; fi < opt.n_frames; ++fi) {
    Rng rng(Rng::derive(opt.seed, 1000 + static_cast<uint64_t>(fi)));

    const double c00 = 70 + rng.uniform() * 110;
    const double c10 = 70 + rng.uniform() * 110;
    const double c01 = 70 + rng.uniform() * 110;
    const double c11 = 70 + rng.uniform() * 110;

    PgmImage img;
    img.width = opt.width;
    img.height = opt.height;
    img.pixels.resize(static_cast<size_t>(opt.width) * opt.height);

    for (int y = 0; y < opt.height; ++y) {
      const double fy = static_cast<double>(y) / (opt.height - 1);
      for (int x = 0; x < opt.width; ++x) {
        const double fx = static_cast<double>(x) / (opt.width - 1);
        const double base = c00 * (1 - fx) * (1 - fy) + c10 * fx * (1 - fy) +
                            c01 * (1 - fx) * fy + c11 * fx * fy;
        const double noise = (rng.uniform() * 2.0 - 1.0) * opt.bg_noise;
        img.pixels[static_cast<size_t>(y) * opt.width + x] = clamp_pixel(base + noise);
      }
    }

    FrameMapSpec fspec;
    char id[16];
    std::snprintf(id, sizeof(id), "f%04d", fi);
    fspec.frame_id = id;
    fspec.width = opt.width;
    fspec.height = opt.height;

    // objects sit in distinct cells of a 3x3 partition so their textures
    // never stack
    std::vector<int> cells(9);
    for (int i = 0; i < 9; ++i) cells[i] = i;
    rng.shuffle(cells);
    const int cell_w = opt.width / 3;
    const int cell_h = opt.height / 3;

    const int n_obj = std::min(rng.range(opt.min_objects, opt.max_objects), 9);
    for (int k = 0; k < n_obj; ++k) {
      auto obj_dim = [&](int cell_dim) {
        int lo = std::min(96, cell_dim / 2);
        int hi = std::min(160, cell_dim - 12);
        lo = std::max(lo, 8);
        hi = std::max(hi, lo);
        return rng.range(lo, hi);
      };
      const int bw = obj_dim(cell_w);
      const int bh = obj_dim(cell_h);
      const int cx0 = (cells[k] % 3) * cell_w;
      const int cy0 = (cells[k] / 3) * cell_h;
      const int bx = cx0 + rng.range(0, std::max(0, cell_w - bw));
      const int by = cy0 + rng.range(0, std::max(0, cell_h - bh));

      // textured object: checker pattern plus noise
      const int cell = rng.range(3, 6);
      const double amp = opt.obj_amp_lo + rng.uniform() * (opt.obj_amp_hi - opt.obj_amp_lo);
      for (int y = by; y < by + bh; ++y) {
        for (int x = bx; x < bx + bw; ++x) {
          const size_t p = static_cast<size_t>(y) * opt.width + x;
          const double sign = ((x / cell) + (y / cell)) % 2 == 0 ? 1.0 : -1.0;
          const double noise = (rng.uniform() * 2.0 - 1.0) * opt.obj_noise;
          img.pixels[p] = clamp_pixel(img.pixels[p] + sign * amp + noise);
        }
      }

      fspec.blobs.push_back({bx + bw / 2.0, by + bh / 2.0, 0.38 * std::min(bw, bh), 1.0});
      fspec.boxes.push_back({bx, by, bw, bh, k + 1});
    }

    save_pgm(img, (fs::path(corpus_dir) / (fspec.frame_id + ".pgm")).string());
    spec.frames.push_back(std::move(fspec));
  }
  return spec;
}

void render_maps(const MapSpecFile& spec, const std::string& maps_dir) {
  fs::create_directories(maps_dir);
  for (const auto& f : spec.frames) {
    auto [imp, inst] = synth_maps(f);
    save_pgm(PgmImage{imp.width, imp.height, imp.values},
             importance_map_path(maps_dir, f.frame_id));
    save_pgm(PgmImage{inst.width, inst.height, inst.ids},
             instance_map_path(maps_dir, f.frame_id));
  }
}

std::string scratch_dir(const std::string& name) {
  const fs::path dir = fs::path("scratch") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  auto ranks = [&](const std::vector<double>& v) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (size_t k = i; k <= j; ++k) r[idx[k]] = mid;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> rx = ranks(x);
  const std::vector<double> ry = ranks(y);
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::vector<uint8_t> textured_ctu(uint64_t seed, int amplitude) {
  Rng rng(seed);
  std::vector<uint8_t> ctu(static_cast<size_t>(kCtuSize) * kCtuSize);
  for (auto& p : ctu) {
    p = clamp_pixel(128.0 + (rng.uniform() * 2.0 - 1.0) * amplitude);
  }
  return ctu;
}

}  // namespace tba::testing
