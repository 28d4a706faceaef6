#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tba/agent.hpp"
#include "tba/codec.hpp"
#include "tba/dataset.hpp"
#include "tba/env.hpp"
#include "tba/eval.hpp"
#include "tba/importance.hpp"
#include "tba/qnet.hpp"

namespace py = pybind11;
using namespace tba;

namespace {

std::vector<uint8_t> as_u8_block(const py::array_t<uint8_t>& arr, int side) {
  const auto buf = arr.request();
  if (buf.ndim != 2 || buf.shape[0] != side || buf.shape[1] != side) {
    throw std::domain_error("expected a " + std::to_string(side) + "x" + std::to_string(side) +
                            " uint8 array");
  }
  std::vector<uint8_t> out(static_cast<size_t>(side) * side);
  const auto view = arr.unchecked<2>();
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) out[static_cast<size_t>(y) * side + x] = view(y, x);
  }
  return out;
}

py::array_t<uint8_t> to_u8_2d(const std::vector<uint8_t>& v, int h, int w) {
  py::array_t<uint8_t> arr({h, w});
  auto view = arr.mutable_unchecked<2>();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) view(y, x) = v[static_cast<size_t>(y) * w + x];
  }
  return arr;
}

LumaFrame frame_from_array(const py::array_t<uint8_t>& arr, const std::string& frame_id) {
  const auto buf = arr.request();
  if (buf.ndim != 2) throw std::domain_error("expected a 2-d uint8 array");
  PgmImage img;
  img.height = static_cast<int>(buf.shape[0]);
  img.width = static_cast<int>(buf.shape[1]);
  img.pixels.resize(static_cast<size_t>(img.width) * img.height);
  const auto view = arr.unchecked<2>();
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      img.pixels[static_cast<size_t>(y) * img.width + x] = view(y, x);
    }
  }
  return frame_from_pgm(img, frame_id);
}

ImportanceMap importance_from_array(const py::array_t<uint8_t>& arr, const LumaFrame& frame) {
  const auto buf = arr.request();
  if (buf.ndim != 2) throw std::domain_error("expected a 2-d uint8 array");
  ImportanceMap m;
  m.height = frame.height;
  m.width = frame.width;
  PgmImage img;
  img.height = static_cast<int>(buf.shape[0]);
  img.width = static_cast<int>(buf.shape[1]);
  img.pixels.resize(static_cast<size_t>(img.width) * img.height);
  const auto view = arr.unchecked<2>();
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      img.pixels[static_cast<size_t>(y) * img.width + x] = view(y, x);
    }
  }
  if (img.width < frame.source_width || img.height < frame.source_height) {
    throw std::domain_error("importance array smaller than the frame");
  }
  m.values.resize(static_cast<size_t>(frame.width) * frame.height);
  for (int y = 0; y < frame.height; ++y) {
    const int sy = y < img.height ? y : img.height - 1;
    for (int x = 0; x < frame.width; ++x) {
      const int sx = x < img.width ? x : img.width - 1;
      m.values[static_cast<size_t>(y) * frame.width + x] = img.at(sx, sy);
    }
  }
  return m;
}

}  // namespace

PYBIND11_MODULE(_tba, m) {
  m.doc() = "importance-driven per-CTU bit allocation: toy codec, DQN agent, evaluation";

  m.def("qp_to_qstep", &qp_to_qstep, py::arg("qp"));
  m.def("signed_exp_golomb_bits", &signed_exp_golomb_bits, py::arg("level"));

  m.def(
      "dct2_8x8",
      [](const py::array_t<double>& block) {
        const auto buf = block.request();
        if (buf.ndim != 2 || buf.shape[0] != 8 || buf.shape[1] != 8) {
          throw std::domain_error("expected an 8x8 array");
        }
        double in[64], out[64];
        const auto view = block.unchecked<2>();
        for (int y = 0; y < 8; ++y) {
          for (int x = 0; x < 8; ++x) in[y * 8 + x] = view(y, x);
        }
        dct2_8x8(in, out);
        py::array_t<double> res({8, 8});
        auto rview = res.mutable_unchecked<2>();
        for (int y = 0; y < 8; ++y) {
          for (int x = 0; x < 8; ++x) rview(y, x) = out[y * 8 + x];
        }
        return res;
      },
      py::arg("block"));

  m.def(
      "encode_ctu",
      [](const py::array_t<uint8_t>& ctu, int qp) {
        const CtuCodingResult r = encode_ctu(as_u8_block(ctu, kCtuSize), qp);
        py::dict d;
        d["bits"] = r.bits;
        d["bpp"] = r.bpp;
        d["mse"] = r.mse;
        d["recon"] = to_u8_2d(r.recon, kCtuSize, kCtuSize);
        return d;
      },
      py::arg("ctu"), py::arg("qp"));

  m.def(
      "encode_frame",
      [](const py::array_t<uint8_t>& frame, const std::vector<int>& qps,
         const std::string& frame_id) {
        const LumaFrame f = frame_from_array(frame, frame_id);
        const FrameCodingResult r = encode_frame(f, qps);
        py::dict d;
        d["total_bits"] = r.total_bits;
        d["bpp"] = r.bpp;
        d["recon"] = to_u8_2d(r.recon.samples, r.recon.height, r.recon.width);
        py::list ctus;
        for (const auto& c : r.ctus) {
          py::dict cd;
          cd["bits"] = c.bits;
          cd["bpp"] = c.bpp;
          cd["mse"] = c.mse;
          ctus.append(cd);
        }
        d["ctus"] = ctus;
        return d;
      },
      py::arg("frame"), py::arg("qps"), py::arg("frame_id") = "frame");

  m.def(
      "weighted_distortion",
      [](const py::array_t<uint8_t>& orig, const py::array_t<uint8_t>& recon,
         const py::array_t<uint8_t>& weights) {
        const auto o = as_u8_block(orig, kCtuSize);
        const auto r = as_u8_block(recon, kCtuSize);
        const auto w = as_u8_block(weights, kCtuSize);
        const ImportanceMap map{kCtuSize, kCtuSize, w};
        return weighted_distortion(o, r, map, CtuRect{0, 0, kCtuSize, kCtuSize});
      },
      py::arg("orig"), py::arg("recon"), py::arg("weights"),
      "importance-weighted squared error over one 64x64 block (weights are 0..255)");

  m.def("reward",
        [](double bpp_anchor, double bpp_chosen, double wdist_chosen, double wdist_anchor,
           double lam, double scale) {
          return reward(bpp_anchor, bpp_chosen, wdist_chosen, wdist_anchor,
                        RewardParams{lam, scale});
        },
        py::arg("bpp_anchor"), py::arg("bpp_chosen"), py::arg("wdist_chosen"),
        py::arg("wdist_anchor"), py::arg("lambda_") = 1.0, py::arg("scale") = 1.0);

  m.def("relative_saving", &relative_saving, py::arg("br_proposed"), py::arg("br_baseline"));

  py::class_<QNetwork>(m, "QNetwork")
      .def(py::init<>())
      .def("init_params", &QNetwork::init_params, py::arg("seed"))
      .def("param_count", &QNetwork::param_count)
      .def(
          "forward",
          [](const QNetwork& net, const py::array_t<double>& local,
             const py::array_t<double>& global_vec) {
            const auto lb = local.request();
            const auto gb = global_vec.request();
            std::vector<double> l(static_cast<const double*>(lb.ptr),
                                  static_cast<const double*>(lb.ptr) + lb.size);
            std::vector<double> g(static_cast<const double*>(gb.ptr),
                                  static_cast<const double*>(gb.ptr) + gb.size);
            return net.forward(l, g);
          },
          py::arg("local"), py::arg("global_vec"),
          "local: flat 2*64*64 doubles (luma/255 then importance), global_vec: 15 doubles")
      .def("save", &save_model, py::arg("path"))
      .def_static("load", &load_model, py::arg("path"));

  m.def("greedy_qp",
        [](const std::vector<double>& qvals) { return Action{greedy_action(qvals).index}.qp(); },
        py::arg("qvals"));

  m.def(
      "allocate_frame",
      [](const QNetwork& net, const py::array_t<uint8_t>& frame,
         const py::array_t<uint8_t>& importance, double lam, double scale) {
        const LumaFrame f = frame_from_array(frame, "frame");
        ImportanceMap imp = importance_from_array(importance, f);
        InstanceMap inst = all_background(f.width, f.height);
        const FrameContext ctx = FrameContext::make(f, std::move(imp), std::move(inst));
        CodecCosts costs;
        const Policy greedy = [&](const State& s) { return greedy_action(q_values(net, s)); };
        const EpisodeResult ep =
            run_episode(ctx, costs, RewardParams{lam, scale}, greedy);
        py::dict d;
        d["qps"] = ep.qps;
        d["rewards"] = ep.rewards;
        d["episode_return"] = ep.episode_return;
        return d;
      },
      py::arg("net"), py::arg("frame"), py::arg("importance"), py::arg("lambda_") = 1.0,
      py::arg("scale") = 1.0,
      "greedy per-CTU QP allocation for one frame with the live codec");

  m.def("build_cache_files",
        [](const std::string& corpus_dir, const std::string& maps_dir,
           const std::string& cache_csv, const std::string& manifest, int qp_lo, int qp_hi,
           int jobs, double split_ratio, uint64_t seed) {
          const Corpus corpus = Corpus::load(corpus_dir, maps_dir);
          TBACache cache = build_cache(corpus, qp_lo, qp_hi, jobs);
          if (cache.frames.size() >= 2) split_cache(cache, split_ratio, seed);
          save_cache(cache, cache_csv, manifest);
          return cache.records.size();
        },
        py::arg("corpus_dir"), py::arg("maps_dir"), py::arg("cache_csv"), py::arg("manifest"),
        py::arg("qp_lo") = 22, py::arg("qp_hi") = 51, py::arg("jobs") = 1,
        py::arg("split_ratio") = 0.8, py::arg("seed") = 1);
}
