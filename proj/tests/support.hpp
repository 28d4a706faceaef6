#pragma once

#include <string>
#include <vector>

#include "tba/corpus.hpp"
#include "tba/importance.hpp"
#include "tba/rng.hpp"

namespace tba::testing {

// Seeded synthetic corpus: smooth ramp background with mild noise plus a
// few strongly textured boxes; each box gets a Gaussian importance blob
// and an instance-map rectangle. Frames go to corpus_dir as PGM, the map
// descriptors are returned for gen-maps / synth_maps.
struct SynthCorpusOptions {
  int n_frames = 10;
  int width = 576;
  int height = 576;
  uint64_t seed = 1;
  int min_objects = 2;
  int max_objects = 4;
  double bg_noise = 8.0;       // uniform background noise amplitude
  double obj_amp_lo = 10.0;    // object checker contrast range
  double obj_amp_hi = 18.0;
  double obj_noise = 5.0;
};

MapSpecFile generate_corpus(const std::string& corpus_dir, const SynthCorpusOptions& opt);

// Renders every map of the spec into maps_dir (what the CLI gen-maps
// command does, usable directly from tests).
void render_maps(const MapSpecFile& spec, const std::string& maps_dir);

// Fresh scratch directory under the build tree.
std::string scratch_dir(const std::string& name);

// Spearman rank correlation with midranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// Single synthetic CTU with tunable texture amplitude.
std::vector<uint8_t> textured_ctu(uint64_t seed, int amplitude);

}  // namespace tba::testing
