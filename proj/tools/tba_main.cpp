#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tba/agent.hpp"
#include "tba/dataset.hpp"
#include "tba/env.hpp"
#include "tba/errors.hpp"
#include "tba/eval.hpp"
#include "tba/importance.hpp"
#include "tba/pgm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
  std::string corpus_dir;
  std::string maps_dir;
  std::string cache_path = "cache.csv";
  std::string manifest_path;  // derived from cache_path when empty
  std::string model_path = "model.tbaq";
  std::string out_dir = "out";
  std::string map_spec;
  std::string eval_split = "test";  // train | test | all
  double lambda = 1.0;
  double distortion_scale = 0.0;  // 0 = anchor mean mse from the manifest
  int qp_min = 22;
  int qp_max = 51;
  double split_ratio = 0.8;
  int jobs = 1;
  bool has_seed = false;
  uint64_t seed = 0;
  tba::TrainConfig train;
};

RunConfig load_config(const std::string& path) {
  RunConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw tba::ConfigError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw tba::FormatError(path + ": " + e.what());
  }
  try {
    cfg.corpus_dir = j.value("corpus_dir", cfg.corpus_dir);
    cfg.maps_dir = j.value("maps_dir", cfg.maps_dir);
    cfg.cache_path = j.value("cache", cfg.cache_path);
    cfg.manifest_path = j.value("manifest", cfg.manifest_path);
    cfg.model_path = j.value("model", cfg.model_path);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.map_spec = j.value("map_spec", cfg.map_spec);
    cfg.eval_split = j.value("eval_split", cfg.eval_split);
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.distortion_scale = j.value("distortion_scale", cfg.distortion_scale);
    cfg.qp_min = j.value("qp_min", cfg.qp_min);
    cfg.qp_max = j.value("qp_max", cfg.qp_max);
    cfg.split_ratio = j.value("split_ratio", cfg.split_ratio);
    cfg.jobs = j.value("jobs", cfg.jobs);
    if (j.contains("seed")) {
      cfg.seed = j.at("seed").get<uint64_t>();
      cfg.has_seed = true;
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      cfg.train.gamma = t.value("gamma", cfg.train.gamma);
      cfg.train.eps.start = t.value("eps_start", cfg.train.eps.start);
      cfg.train.eps.end = t.value("eps_end", cfg.train.eps.end);
      cfg.train.eps.decay_steps = t.value("eps_decay_steps", cfg.train.eps.decay_steps);
      cfg.train.lr = t.value("lr", cfg.train.lr);
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
      cfg.train.target_sync = t.value("target_sync", cfg.train.target_sync);
      cfg.train.total_steps = t.value("total_steps", cfg.train.total_steps);
      cfg.train.buffer_capacity = t.value("buffer_capacity", cfg.train.buffer_capacity);
      cfg.train.warmup = t.value("warmup", cfg.train.warmup);
    }
  } catch (const json::exception& e) {
    throw tba::FormatError(path + ": " + e.what());
  }
  return cfg;
}

std::string manifest_of(const RunConfig& cfg) {
  return cfg.manifest_path.empty() ? tba::default_manifest_path(cfg.cache_path)
                                   : cfg.manifest_path;
}

uint64_t require_seed(const RunConfig& cfg) {
  if (!cfg.has_seed) {
    throw tba::ConfigError("seed is required (set \"seed\" in the config or pass --seed)");
  }
  return cfg.seed;
}

tba::RewardParams reward_params(const RunConfig& cfg, const tba::TBACache& cache) {
  tba::RewardParams p;
  p.lambda = cfg.lambda;
  p.distortion_scale = cfg.distortion_scale > 0.0 ? cfg.distortion_scale
                       : cache.anchor_mean_mse > 0.0 ? cache.anchor_mean_mse
                                                     : 1.0;
  return p;
}

std::vector<tba::FramePtr> eval_frames(const RunConfig& cfg, const tba::TBACache& cache,
                                       const tba::Corpus& corpus) {
  if (cfg.eval_split == "all" || cache.split.empty()) {
    return corpus.frames;
  }
  if (cfg.eval_split != "train" && cfg.eval_split != "test") {
    throw tba::ConfigError("eval split must be train, test or all");
  }
  const auto ids = cache.frame_ids(cfg.eval_split == "train" ? tba::SplitSet::train
                                                             : tba::SplitSet::test);
  if (ids.empty()) throw tba::ConfigError("eval split '" + cfg.eval_split + "' is empty");
  return corpus.select(ids);
}

int cmd_gen_maps(const RunConfig& cfg) {
  if (cfg.map_spec.empty()) throw tba::ConfigError("gen-maps needs a map spec (--spec)");
  const tba::MapSpecFile spec = tba::load_map_spec(cfg.map_spec);
  fs::create_directories(cfg.maps_dir);
  for (const auto& f : spec.frames) {
    auto [imp, inst] = tba::synth_maps(f);
    tba::save_pgm(tba::PgmImage{imp.width, imp.height, imp.values},
                  tba::importance_map_path(cfg.maps_dir, f.frame_id));
    tba::save_pgm(tba::PgmImage{inst.width, inst.height, inst.ids},
                  tba::instance_map_path(cfg.maps_dir, f.frame_id));
  }
  std::printf("gen-maps: wrote %zu map pairs to %s\n", spec.frames.size(),
              cfg.maps_dir.c_str());
  return 0;
}

int cmd_build_dataset(const RunConfig& cfg) {
  const uint64_t seed = require_seed(cfg);
  const tba::Corpus corpus = tba::Corpus::load(cfg.corpus_dir, cfg.maps_dir);
  tba::TBACache cache = tba::build_cache(corpus, cfg.qp_min, cfg.qp_max, cfg.jobs);
  if (cache.frames.size() >= 2) {
    tba::split_cache(cache, cfg.split_ratio, tba::Rng::derive(seed, 10));
  }
  tba::save_cache(cache, cfg.cache_path, manifest_of(cfg));
  std::printf("build-dataset: %zu records over %zu frames -> %s\n", cache.records.size(),
              cache.frames.size(), cfg.cache_path.c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const uint64_t seed = require_seed(cfg);
  const tba::TBACache cache = tba::load_cache(cfg.cache_path, manifest_of(cfg));
  if (cache.qp_lo > tba::kActionQpMin || cache.qp_hi < tba::kActionQpMax) {
    throw tba::ConfigError("cache qp range does not cover the action space 22..51");
  }
  const tba::Corpus corpus = tba::Corpus::load(cfg.corpus_dir, cfg.maps_dir);

  tba::TrainConfig tc = cfg.train;
  tc.seed = tba::Rng::derive(seed, 20);
  const tba::RewardParams params = reward_params(cfg, cache);

  const tba::TrainResult result = tba::train(cache, corpus, tc, params);
  tba::save_model(result.net, cfg.model_path);
  fs::create_directories(cfg.out_dir);
  tba::atomic_write_file((fs::path(cfg.out_dir) / "train_log.csv").string(),
                         tba::train_log_csv(result.log));
  std::printf("train: %lld steps, %zu episodes, model -> %s\n", tc.total_steps,
              result.log.size(), cfg.model_path.c_str());
  return 0;
}

int cmd_allocate(const RunConfig& cfg, const std::vector<std::string>& frame_ids) {
  const tba::QNetwork net = tba::load_model(cfg.model_path);
  const tba::Corpus corpus = tba::Corpus::load(cfg.corpus_dir, cfg.maps_dir);
  const std::vector<tba::FramePtr> frames =
      frame_ids.empty() ? corpus.frames : corpus.select(frame_ids);

  // live codec costs: allocation works without a prebuilt cache
  tba::CodecCosts costs;
  tba::RewardParams params;
  params.lambda = cfg.lambda;
  params.distortion_scale = cfg.distortion_scale > 0.0 ? cfg.distortion_scale : 1.0;

  const auto runs = tba::agent_run(net, frames, costs, params);
  fs::create_directories(cfg.out_dir);
  const std::string path = (fs::path(cfg.out_dir) / "allocation.csv").string();
  tba::atomic_write_file(path, tba::allocation_csv(runs));
  std::printf("allocate: %zu frames -> %s\n", runs.size(), path.c_str());
  return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
  const tba::TBACache cache = tba::load_cache(cfg.cache_path, manifest_of(cfg));
  if (cache.qp_lo > tba::kActionQpMin || cache.qp_hi < tba::kActionQpMax) {
    throw tba::ConfigError("cache qp range does not cover the action space 22..51");
  }
  const tba::Corpus corpus = tba::Corpus::load(cfg.corpus_dir, cfg.maps_dir);
  const tba::QNetwork net = tba::load_model(cfg.model_path);
  const std::vector<tba::FramePtr> frames = eval_frames(cfg, cache, corpus);
  const tba::RewardParams params = reward_params(cfg, cache);

  tba::CacheCosts costs(cache);
  const auto anchor = tba::fixed_qp_run(frames, costs, tba::kQpAnchor);

  auto proposed = tba::agent_run(net, frames, costs, params);
  tba::finalize_against_anchor(proposed, anchor);
  const tba::RunSummary sum_prop = tba::summarize(proposed, anchor, params.distortion_scale);

  auto baseline = tba::find_equivalent_rate_baseline(frames, costs, sum_prop.mean_bpp);
  tba::finalize_against_anchor(baseline.runs, anchor);
  const tba::RunSummary sum_base = tba::summarize(baseline.runs, anchor, params.distortion_scale);

  auto baseline_star =
      tba::find_equivalent_distortion_baseline(frames, costs, sum_prop.mean_wdist);
  tba::finalize_against_anchor(baseline_star.runs, anchor);
  const tba::RunSummary sum_star =
      tba::summarize(baseline_star.runs, anchor, params.distortion_scale);

  auto oracle = tba::oracle_allocation(frames, cache, params);
  tba::finalize_against_anchor(oracle, anchor);
  const tba::RunSummary sum_oracle = tba::summarize(oracle, anchor, params.distortion_scale);

  const tba::Report report = tba::make_report(
      {"anchor", 0.0, 0.0, tba::kQpAnchor},
      {"proposed", 100.0 * sum_prop.br, sum_prop.dist_pct, -1},
      {"baseline", 100.0 * sum_base.br, sum_base.dist_pct, baseline.qp},
      {"baseline*", 100.0 * sum_star.br, sum_star.dist_pct, baseline_star.qp});

  // mean chosen qp by importance bucket, for the behavioral check
  double qp_high = 0, qp_low = 0;
  long n_high = 0, n_low = 0;
  for (const auto& run : proposed) {
    const tba::FrameInfo& info = cache.frame_info(run.frame_id);
    for (size_t c = 0; c < run.qps.size(); ++c) {
      if (info.ctu_mask_ratio[c] > 0.5) {
        qp_high += run.qps[c];
        ++n_high;
      } else if (info.ctu_mask_ratio[c] < 0.05) {
        qp_low += run.qps[c];
        ++n_low;
      }
    }
  }

  json metrics;
  metrics["frames"] = frames.size();
  metrics["split"] = cfg.eval_split;
  metrics["lambda"] = params.lambda;
  metrics["distortion_scale"] = params.distortion_scale;
  metrics["agent_mean_return"] = sum_prop.mean_return;
  metrics["oracle_mean_return"] = sum_oracle.mean_return;
  metrics["proposed_br_pct"] = 100.0 * sum_prop.br;
  metrics["proposed_dist_pct"] = sum_prop.dist_pct;
  metrics["baseline_qp"] = baseline.qp;
  metrics["baseline_br_pct"] = 100.0 * sum_base.br;
  metrics["baseline_dist_pct"] = sum_base.dist_pct;
  metrics["baseline_star_qp"] = baseline_star.qp;
  metrics["baseline_star_br_pct"] = 100.0 * sum_star.br;
  metrics["baseline_star_dist_pct"] = sum_star.dist_pct;
  metrics["relative_saving_pct"] = report.relative_saving_pct;
  metrics["mean_qp_high_mask"] = n_high > 0 ? json(qp_high / n_high) : json();
  metrics["mean_qp_low_mask"] = n_low > 0 ? json(qp_low / n_low) : json();

  fs::create_directories(cfg.out_dir);
  tba::atomic_write_file((fs::path(cfg.out_dir) / "report.txt").string(), report.text);
  tba::atomic_write_file((fs::path(cfg.out_dir) / "report.csv").string(), report.csv);
  tba::atomic_write_file((fs::path(cfg.out_dir) / "metrics.json").string(),
                         metrics.dump(2) + "\n");

  std::fputs(report.text.c_str(), stdout);
  std::printf("agent return %.6g / oracle %.6g over %zu frames\n", sum_prop.mean_return,
              sum_oracle.mean_return, frames.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"task-importance-driven per-CTU bit allocation over a toy intra codec"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  if (const char* env = std::getenv("TBA_CONFIG")) config_path = env;
  app.add_option("-c,--config", config_path, "JSON config file (env TBA_CONFIG)");

  // flag overrides, applied after the config file loads
  std::optional<uint64_t> seed;
  std::optional<double> lambda;
  std::optional<int> qp_min, qp_max, jobs;
  std::optional<long long> steps;
  std::optional<std::string> cache_path, model_path, out_dir, corpus_dir, maps_dir, spec_path,
      split;
  app.add_option("--seed", seed, "global seed (required for build-dataset/train)");
  app.add_option("--lambda", lambda, "reward lambda");
  app.add_option("--qp-min", qp_min, "low end of the dataset qp sweep");
  app.add_option("--qp-max", qp_max, "high end of the dataset qp sweep");
  app.add_option("--cache", cache_path, "cache csv path");
  app.add_option("--model", model_path, "model path");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--corpus", corpus_dir, "frame directory (PGM)");
  app.add_option("--maps", maps_dir, "map directory");
  app.add_option("--jobs", jobs, "worker threads for dataset builds");
  app.add_option("--steps", steps, "training steps override");

  CLI::App* gen = app.add_subcommand("gen-maps", "render synthetic importance/instance maps");
  gen->add_option("--spec", spec_path, "map spec json");
  CLI::App* build = app.add_subcommand("build-dataset", "encode the qp sweep into a cache");
  CLI::App* train_cmd = app.add_subcommand("train", "train the allocation agent");
  CLI::App* alloc = app.add_subcommand("allocate", "greedy allocation dump for frames");
  std::vector<std::string> alloc_frames;
  alloc->add_option("frames", alloc_frames, "frame ids (default: whole corpus)");
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "anchor, baselines, oracle and report");
  eval_cmd->add_option("--split", split, "train | test | all");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = load_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.has_seed = true;
    }
    if (lambda) cfg.lambda = *lambda;
    if (qp_min) cfg.qp_min = *qp_min;
    if (qp_max) cfg.qp_max = *qp_max;
    if (cache_path) cfg.cache_path = *cache_path;
    if (model_path) cfg.model_path = *model_path;
    if (out_dir) cfg.out_dir = *out_dir;
    if (corpus_dir) cfg.corpus_dir = *corpus_dir;
    if (maps_dir) cfg.maps_dir = *maps_dir;
    if (jobs) cfg.jobs = *jobs;
    if (steps) cfg.train.total_steps = *steps;
    if (spec_path) cfg.map_spec = *spec_path;
    if (split) cfg.eval_split = *split;

    if (gen->parsed()) return cmd_gen_maps(cfg);
    if (build->parsed()) return cmd_build_dataset(cfg);
    if (train_cmd->parsed()) return cmd_train(cfg);
    if (alloc->parsed()) return cmd_allocate(cfg, alloc_frames);
    if (eval_cmd->parsed()) return cmd_evaluate(cfg);
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
