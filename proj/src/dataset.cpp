#include "tba/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>
#include <utility>

#include <json.hpp>

#include "tba/codec.hpp"
#include "tba/errors.hpp"
#include "tba/rng.hpp"

namespace tba {

namespace {

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// Runs fn(0..n-1) across `jobs` threads. Tasks write disjoint slots, so
// results are independent of scheduling.
void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  const int k = std::min<size_t>(static_cast<size_t>(jobs), n);
  std::vector<std::exception_ptr> errors(k);
  for (int t = 0; t < k; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

double round9(double v) {
  return std::strtod(fmt9(v).c_str(), nullptr);
}

const FrameInfo& TBACache::frame_info(const std::string& frame_id) const {
  const auto it = frame_pos_.find(frame_id);
  if (it == frame_pos_.end()) throw ConfigError("frame '" + frame_id + "' not in cache");
  return frames[it->second];
}

bool TBACache::has(const std::string& frame_id) const {
  return frame_pos_.contains(frame_id);
}

const TBARecord& TBACache::at(const std::string& frame_id, int ctu_index, int qp) const {
  const auto it = frame_base_.find(frame_id);
  const int nq = qp_count();
  if (it != frame_base_.end() && qp >= qp_lo && qp <= qp_hi) {
    const FrameInfo& info = frames[frame_pos_.at(frame_id)];
    const int total = info.grid_cols * info.grid_rows;
    if (ctu_index >= 0 && ctu_index < total) {
      return records[it->second + static_cast<size_t>(ctu_index) * nq + (qp - qp_lo)];
    }
  }
  throw ConfigError("cache miss for (" + frame_id + ", ctu " + std::to_string(ctu_index) +
                    ", qp " + std::to_string(qp) + ")");
}

TBARecord& TBACache::at_mut(const std::string& frame_id, int ctu_index, int qp) {
  return const_cast<TBARecord&>(std::as_const(*this).at(frame_id, ctu_index, qp));
}

std::vector<std::string> TBACache::frame_ids(SplitSet set) const {
  std::vector<std::string> out;
  for (const auto& [id, s] : split) {
    if (s == set) out.push_back(id);
  }
  return out;
}

void TBACache::rebuild_index() {
  frame_base_.clear();
  frame_pos_.clear();
  size_t base = 0;
  for (size_t i = 0; i < frames.size(); ++i) {
    frame_pos_[frames[i].frame_id] = i;
    frame_base_[frames[i].frame_id] = base;
    base += static_cast<size_t>(frames[i].grid_cols) * frames[i].grid_rows * qp_count();
  }
  if (base != records.size()) {
    throw FormatError("cache record count " + std::to_string(records.size()) +
                      " does not match manifest (" + std::to_string(base) + " expected)");
  }
}

TBACache build_cache(const Corpus& corpus, int qp_lo, int qp_hi, int jobs) {
  if (qp_lo < kQpFloor || qp_hi > kQpCeil || qp_lo > qp_hi) {
    throw std::domain_error("bad qp range");
  }

  TBACache cache;
  cache.qp_lo = qp_lo;
  cache.qp_hi = qp_hi;
  const int nq = cache.qp_count();

  size_t total_records = 0;
  for (const auto& f : corpus.frames) {
    FrameInfo info;
    info.frame_id = f->frame.frame_id;
    info.source_width = f->frame.source_width;
    info.source_height = f->frame.source_height;
    info.width = f->frame.width;
    info.height = f->frame.height;
    info.grid_cols = f->grid.cols;
    info.grid_rows = f->grid.rows;
    info.importance_map = f->importance_path;
    info.instance_map = f->instance_path;
    info.frame_mask_ratio = f->frame_mask_ratio;
    info.ctu_mask_ratio = f->ctu_mask_ratio;
    cache.frames.push_back(std::move(info));
    total_records += static_cast<size_t>(f->grid.total()) * nq;
  }
  cache.records.resize(total_records);

  // frame offsets into the flat record vector
  std::vector<size_t> base(corpus.frames.size() + 1, 0);
  for (size_t i = 0; i < corpus.frames.size(); ++i) {
    base[i + 1] = base[i] + static_cast<size_t>(corpus.frames[i]->grid.total()) * nq;
  }

  // one task per (frame, qp): encode the frame once at that uniform QP
  const size_t tasks = corpus.frames.size() * static_cast<size_t>(nq);
  parallel_for(tasks, jobs, [&](size_t task) {
    const size_t fi = task / nq;
    const int qi = static_cast<int>(task % nq);
    const int qp = qp_lo + qi;
    const FrameContext& ctx = *corpus.frames[fi];
    const int total = ctx.grid.total();
    for (int c = 0; c < total; ++c) {
      const std::vector<uint8_t> ctu = extract_ctu(ctx.frame, c);
      const CtuCodingResult r = encode_ctu(ctu, qp);
      TBARecord& rec = cache.records[base[fi] + static_cast<size_t>(c) * nq + qi];
      rec.frame_id = ctx.frame.frame_id;
      rec.ctu_index = c;
      rec.qp = qp;
      rec.bits = r.bits;
      rec.bpp = r.bpp;
      rec.mse = round9(r.mse);
      rec.wdist = round9(weighted_distortion(ctu, r.recon, ctx.imp, ctx.grid.rect(c)));
    }
  });

  // corpus mean MSE at the QP 22 anchor (fallback: lowest QP in range)
  const int anchor = (qp_lo <= 22 && 22 <= qp_hi) ? 22 : qp_lo;
  double acc = 0.0;
  size_t n = 0;
  for (size_t fi = 0; fi < corpus.frames.size(); ++fi) {
    const int total = corpus.frames[fi]->grid.total();
    for (int c = 0; c < total; ++c) {
      acc += cache.records[base[fi] + static_cast<size_t>(c) * nq + (anchor - qp_lo)].mse;
      ++n;
    }
  }
  cache.anchor_mean_mse = n > 0 ? round9(acc / static_cast<double>(n)) : 0.0;

  cache.rebuild_index();
  return cache;
}

void split_cache(TBACache& cache, double ratio, uint64_t seed) {
  if (cache.frames.size() < 2) throw std::domain_error("split needs at least 2 frames");
  if (ratio <= 0.0 || ratio >= 1.0) throw std::domain_error("split ratio outside (0,1)");

  std::vector<std::string> ids;
  ids.reserve(cache.frames.size());
  for (const auto& f : cache.frames) ids.push_back(f.frame_id);

  Rng rng(seed);
  rng.shuffle(ids);

  const size_t n_train = static_cast<size_t>(ratio * static_cast<double>(ids.size()));
  cache.split.clear();
  for (size_t i = 0; i < ids.size(); ++i) {
    cache.split[ids[i]] = i < n_train ? SplitSet::train : SplitSet::test;
  }
  cache.split_seed = seed;
  cache.split_ratio = ratio;
}

void ingest_task_distortion(TBACache& cache, const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw ConfigError("cannot open " + csv_path);

  std::string line;
  int lineno = 0;
  if (!std::getline(in, line) || line != "frame_id,qp,distortion") {
    throw FormatError(csv_path + ":1: expected header 'frame_id,qp,distortion'");
  }
  lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string frame_id, qp_s, dist_s;
    if (!std::getline(row, frame_id, ',') || !std::getline(row, qp_s, ',') ||
        !std::getline(row, dist_s)) {
      throw FormatError(csv_path + ":" + std::to_string(lineno) + ": expected 3 fields");
    }
    char* end = nullptr;
    const int qp = static_cast<int>(std::strtol(qp_s.c_str(), &end, 10));
    if (*end) throw FormatError(csv_path + ":" + std::to_string(lineno) + ": bad qp");
    const double dist = std::strtod(dist_s.c_str(), &end);
    if (*end) throw FormatError(csv_path + ":" + std::to_string(lineno) + ": bad distortion");
    if (!cache.has(frame_id)) {
      throw ConfigError(csv_path + ":" + std::to_string(lineno) + ": unknown frame '" +
                        frame_id + "'");
    }
    if (dist < 0.0) {
      throw std::domain_error(csv_path + ":" + std::to_string(lineno) +
                              ": negative distortion");
    }
    const FrameInfo& info = cache.frame_info(frame_id);
    const int total = info.grid_cols * info.grid_rows;

    std::vector<double> share(total);
    double sum = 0.0;
    for (int c = 0; c < total; ++c) {
      share[c] = info.ctu_mask_ratio[c] * cache.at(frame_id, c, qp).mse;
      sum += share[c];
    }
    for (int c = 0; c < total; ++c) {
      const double w = sum > 0.0 ? dist * share[c] / sum : dist / total;
      cache.at_mut(frame_id, c, qp).wdist = round9(w);
    }
  }
}

void save_cache(const TBACache& cache, const std::string& csv_path,
                const std::string& manifest_path) {
  std::string csv;
  csv.reserve(cache.records.size() * 48 + 64);
  csv += "frame_id,ctu_index,qp,bits,bpp,mse,wdist\n";
  for (const auto& r : cache.records) {
    csv += r.frame_id;
    csv += ',';
    csv += std::to_string(r.ctu_index);
    csv += ',';
    csv += std::to_string(r.qp);
    csv += ',';
    csv += std::to_string(r.bits);
    csv += ',';
    csv += fmt9(r.bpp);
    csv += ',';
    csv += fmt9(r.mse);
    csv += ',';
    csv += fmt9(r.wdist);
    csv += '\n';
  }
  atomic_write_file(csv_path, csv);

  nlohmann::json j;
  j["qp_lo"] = cache.qp_lo;
  j["qp_hi"] = cache.qp_hi;
  j["anchor_mean_mse"] = cache.anchor_mean_mse;
  j["split_seed"] = cache.split_seed;
  j["split_ratio"] = cache.split_ratio;
  j["frames"] = nlohmann::json::array();
  for (const auto& f : cache.frames) {
    nlohmann::json jf;
    jf["frame_id"] = f.frame_id;
    jf["source_width"] = f.source_width;
    jf["source_height"] = f.source_height;
    jf["width"] = f.width;
    jf["height"] = f.height;
    jf["grid_cols"] = f.grid_cols;
    jf["grid_rows"] = f.grid_rows;
    jf["importance_map"] = f.importance_map;
    jf["instance_map"] = f.instance_map;
    jf["frame_mask_ratio"] = f.frame_mask_ratio;
    jf["ctu_mask_ratio"] = f.ctu_mask_ratio;
    j["frames"].push_back(std::move(jf));
  }
  nlohmann::json js = nlohmann::json::object();
  for (const auto& [id, s] : cache.split) js[id] = s == SplitSet::train ? "train" : "test";
  j["split"] = std::move(js);
  atomic_write_file(manifest_path, j.dump(2) + "\n");
}

TBACache load_cache(const std::string& csv_path, const std::string& manifest_path) {
  TBACache cache;

  {
    std::ifstream in(manifest_path);
    if (!in) throw ConfigError("cannot open " + manifest_path);
    nlohmann::json j;
    try {
      in >> j;
      cache.qp_lo = j.at("qp_lo").get<int>();
      cache.qp_hi = j.at("qp_hi").get<int>();
      cache.anchor_mean_mse = j.at("anchor_mean_mse").get<double>();
      cache.split_seed = j.at("split_seed").get<uint64_t>();
      cache.split_ratio = j.at("split_ratio").get<double>();
      for (const auto& jf : j.at("frames")) {
        FrameInfo f;
        f.frame_id = jf.at("frame_id").get<std::string>();
        f.source_width = jf.at("source_width").get<int>();
        f.source_height = jf.at("source_height").get<int>();
        f.width = jf.at("width").get<int>();
        f.height = jf.at("height").get<int>();
        f.grid_cols = jf.at("grid_cols").get<int>();
        f.grid_rows = jf.at("grid_rows").get<int>();
        f.importance_map = jf.at("importance_map").get<std::string>();
        f.instance_map = jf.at("instance_map").get<std::string>();
        f.frame_mask_ratio = jf.at("frame_mask_ratio").get<double>();
        f.ctu_mask_ratio = jf.at("ctu_mask_ratio").get<std::vector<double>>();
        cache.frames.push_back(std::move(f));
      }
      for (const auto& [id, s] : j.at("split").items()) {
        cache.split[id] = s.get<std::string>() == "train" ? SplitSet::train : SplitSet::test;
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(manifest_path + ": " + e.what());
    }
  }

  std::ifstream in(csv_path);
  if (!in) throw ConfigError("cannot open " + csv_path);
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line) || line != "frame_id,ctu_index,qp,bits,bpp,mse,wdist") {
    throw FormatError(csv_path + ":1: bad cache header");
  }
  lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string f[7];
    for (int i = 0; i < 7; ++i) {
      if (!std::getline(row, f[i], i == 6 ? '\n' : ',')) {
        throw FormatError(csv_path + ":" + std::to_string(lineno) + ": expected 7 fields");
      }
    }
    TBARecord r;
    r.frame_id = f[0];
    char* end = nullptr;
    r.ctu_index = static_cast<int>(std::strtol(f[1].c_str(), &end, 10));
    if (*end) throw FormatError(csv_path + ":" + std::to_string(lineno) + ": bad ctu_index");
    r.qp = static_cast<int>(std::strtol(f[2].c_str(), &end, 10));
    if (*end) throw FormatError(csv_path + ":" + std::to_string(lineno) + ": bad qp");
    r.bits = std::strtoll(f[3].c_str(), &end, 10);
    if (*end) throw FormatError(csv_path + ":" + std::to_string(lineno) + ": bad bits");
    r.mse = std::strtod(f[5].c_str(), &end);
    if (*end) throw FormatError(csv_path + ":" + std::to_string(lineno) + ": bad mse");
    r.wdist = std::strtod(f[6].c_str(), &end);
    if (*end) throw FormatError(csv_path + ":" + std::to_string(lineno) + ": bad wdist");
    // bpp is display-only in the file; recompute exactly from bits
    r.bpp = static_cast<double>(r.bits) / kCtuPixels;
    cache.records.push_back(std::move(r));
  }
  cache.rebuild_index();  // throws FormatError when counts mismatch
  return cache;
}

std::string default_manifest_path(const std::string& csv_path) {
  const auto dot = csv_path.rfind('.');
  const std::string stem = dot == std::string::npos ? csv_path : csv_path.substr(0, dot);
  return stem + ".manifest.json";
}

}  // namespace tba
