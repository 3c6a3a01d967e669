#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "erl/codebook.hpp"
#include "erl/gradcheck.hpp"
#include "erl/synthetic.hpp"

namespace py = pybind11;
using namespace erl;

namespace {

std::vector<float> to_vec(py::array_t<float, py::array::c_style |
                                                 py::array::forcecast> a) {
  return std::vector<float>(a.data(), a.data() + a.size());
}

py::array_t<float> to_array(const std::vector<float>& v,
                            std::vector<py::ssize_t> shape) {
  py::array_t<float> out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_erlnet, m) {
  m.doc() = "talking-head renderer core bindings";

  m.def("image_metrics",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> a,
           py::array_t<float, py::array::c_style | py::array::forcecast> b) {
          if (a.ndim() != 3 || a.shape(2) != 3)
            throw py::value_error("expected [h,w,3] float arrays");
          if (b.ndim() != 3 || std::equal(a.shape(), a.shape() + 3, b.shape()) == false)
            throw py::value_error("image shapes differ");
          ImageMetrics r = image_metrics(to_vec(a), to_vec(b),
                                         int(a.shape(0)), int(a.shape(1)));
          return py::make_tuple(r.psnr, r.ssim);
        },
        py::arg("a"), py::arg("b"),
        "PSNR/SSIM for two [h,w,3] images in [0,1]");

  m.def("quantize",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> codes,
           py::array_t<float, py::array::c_style | py::array::forcecast> book) {
          if (codes.ndim() != 2 || book.ndim() != 2 ||
              codes.shape(1) != book.shape(1))
            throw py::value_error("codes [n,d] and book [k,d] required");
          Tape t;
          auto res = quantize_nearest(
              t, t.constant({int(codes.shape(0)), int(codes.shape(1))},
                            to_vec(codes)),
              t.constant({int(book.shape(0)), int(book.shape(1))},
                         to_vec(book)));
          return py::make_tuple(
              to_array(res.quantized.value(), {codes.shape(0), codes.shape(1)}),
              res.indices);
        },
        py::arg("codes"), py::arg("book"),
        "nearest codebook entries: (quantized [n,d], indices)");

  m.def("delta_encode",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> poses) {
          if (poses.ndim() != 2 || poses.shape(1) != 6)
            throw py::value_error("poses must be [t,6]");
          auto [first, deltas] = delta_encode(to_vec(poses));
          return py::make_tuple(
              to_array({first.begin(), first.end()}, {6}),
              to_array(deltas, {poses.shape(0) - 1, 6}));
        },
        py::arg("poses"));

  m.def("delta_decode",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> first,
           py::array_t<float, py::array::c_style | py::array::forcecast> deltas) {
          if (first.size() != 6 || deltas.ndim() != 2 || deltas.shape(1) != 6)
            throw py::value_error("first [6] and deltas [t-1,6] required");
          std::array<float, 6> f;
          std::copy(first.data(), first.data() + 6, f.begin());
          std::vector<float> rec = delta_decode(f, to_vec(deltas));
          return to_array(rec, {deltas.shape(0) + 1, 6});
        },
        py::arg("first"), py::arg("deltas"));

  m.def("synth_audio_features",
        [](uint64_t seed, int n) {
          AudioFeatureSeq a = synth_audio_features(seed, n);
          return to_array(a.features, {a.n, kAudioDim});
        },
        py::arg("seed"), py::arg("n"));

  m.def("synthetic_sequences",
        [](uint64_t seed, int t, int emotion) {
          auto [expr, pose] = make_synthetic_sequences(seed, t, emotion);
          return py::make_tuple(to_array(expr.frames, {expr.t, expr.dim}),
                                to_array(pose.frames, {pose.t, pose.dim}));
        },
        py::arg("seed"), py::arg("t"), py::arg("emotion"),
        "(expression [t,53], pose deltas [t-1,6])");

  m.def("synthetic_frame",
        [](uint64_t seed, int n_frames, int size, int frame) {
          SyntheticScene s = make_synthetic_scene(seed, n_frames, size);
          if (frame < 0 || frame >= s.n_frames)
            throw py::value_error("frame out of range");
          return to_array(s.frames[frame].gt, {s.gt_size, s.gt_size, 3});
        },
        py::arg("seed"), py::arg("n_frames"), py::arg("size"),
        py::arg("frame"), "ground-truth image of one synthetic scene frame");

  m.def("gradient_suite",
        [](uint64_t seed) {
          std::vector<std::pair<std::string, double>> out;
          for (const auto& e : run_gradient_suite(seed))
            out.emplace_back(e.name, e.err);
          return out;
        },
        py::arg("seed") = 7,
        "finite-difference check of every autodiff op: [(name, rel_err)]");
}
