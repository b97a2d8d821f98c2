// Python bindings for the core operations: tensors cross the boundary as
// NumPy arrays in (n, c, h, w) layout (leading axes of size 1 may be omitted
// on input).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rapnet/data_io.hpp"
#include "rapnet/metrics.hpp"
#include "rapnet/training.hpp"

namespace py = pybind11;
using namespace rapnet;

namespace {

template <typename T>
Tensor<T> from_numpy(const py::array_t<T, py::array::c_style | py::array::forcecast>& a,
                     const char* what) {
    const auto nd = a.ndim();
    if (nd < 1 || nd > 4)
        throw ShapeError(std::string(what) + ": expected a 1-4D array, got " + std::to_string(nd) +
                         "D");
    int dims[4] = {1, 1, 1, 1};
    for (py::ssize_t i = 0; i < nd; ++i) dims[4 - nd + i] = static_cast<int>(a.shape(i));
    Tensor<T> t(dims[0], dims[1], dims[2], dims[3]);
    std::copy(a.data(), a.data() + a.size(), t.data.begin());
    return t;
}

template <typename T>
py::array_t<T> to_numpy(const Tensor<T>& t) {
    py::array_t<T> out({t.n, t.c, t.h, t.w});
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

using ArrF = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ArrD = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Thin owner of network parameters; all heavy lifting stays in the core.
struct PyNetwork {
    RapNetParams<float> params;

    PyNetwork(int bands, int features, int ratio, int ghbm_hidden, bool ablate_rapconv,
              std::uint64_t seed) {
        Hyper hy;
        hy.bands = bands;
        hy.features = features;
        hy.ratio = ratio;
        hy.ghbm_hidden = ghbm_hidden;
        hy.ablate_rapconv = ablate_rapconv;
        params = RapNetParams<float>::init(hy, seed);
    }
    explicit PyNetwork(RapNetParams<float> p) : params(std::move(p)) {}

    py::array_t<float> fuse(const ArrF& pan, const ArrF& ms) {
        TensorF p = from_numpy(pan, "pan");
        TensorF m = from_numpy(ms, "ms");
        return to_numpy(rapnet_infer(params, p, m));
    }

    std::vector<float> fit(const std::vector<std::tuple<ArrF, ArrF, ArrF>>& triples, double lr,
                           int batch_size, int epochs, std::uint64_t seed) {
        std::vector<FusionPair> pairs;
        for (const auto& [pan, ms, ref] : triples) {
            FusionPair fp;
            fp.pan = from_numpy(pan, "pan");
            fp.ms = from_numpy(ms, "ms");
            fp.ref = from_numpy(ref, "ref");
            fp.ratio = params.hyper.ratio;
            fp.validate();
            pairs.push_back(std::move(fp));
        }
        TrainConfig cfg;
        cfg.lr = lr;
        cfg.batch_size = batch_size;
        cfg.epochs = epochs;
        cfg.seed = seed;
        TrainResult r = train(pairs, cfg, params);
        std::vector<float> losses;
        for (const auto& row : r.curve) losses.push_back(row.loss);
        return losses;
    }

    void save(const std::string& path) { save_checkpoint(params, path); }
    std::int64_t param_count() { return params.param_count(); }
    int bands() const { return params.hyper.bands; }
    int features() const { return params.hyper.features; }
    int ratio() const { return params.hyper.ratio; }
    bool ablated() const { return params.hyper.ablate_rapconv; }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "RAPNet pansharpening core";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ValueError>(m, "ValueError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_IOError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def("set_num_threads", &set_num_threads, py::arg("n"));

    m.def(
        "conv2d",
        [](const ArrD& x, const ArrD& w, py::object bias, int stride, int pad, int groups) {
            TensorD xt = from_numpy(x, "x");
            TensorD wt = from_numpy(w, "w");
            ConvSpec spec{xt.c, wt.n, wt.h, wt.w, stride, pad, groups};
            if (bias.is_none()) return to_numpy(conv2d(xt, wt, nullptr, spec));
            TensorD bt = from_numpy(bias.cast<ArrD>(), "bias");
            return to_numpy(conv2d(xt, wt, &bt, spec));
        },
        py::arg("x"), py::arg("w"), py::arg("bias") = py::none(), py::arg("stride") = 1,
        py::arg("pad") = 0, py::arg("groups") = 1);

    m.def(
        "rapconv",
        [](const ArrD& x, const ArrD& base_kernel, std::uint64_t seed, bool degenerate) {
            TensorD xt = from_numpy(x, "x");
            TensorD kt = from_numpy(base_kernel, "base_kernel");
            Rng rng(seed);
            RapConvParams<double> p = RapConvParams<double>::init(
                xt.c, kt.n, RapConvParams<double>::default_hidden(xt.c), rng);
            p.base_kernel = kt;
            Tape<double> t;
            RapConvNodes nodes = bind_rapconv(t, p, false);
            const int out = rapconv_forward(
                t, t.leaf(xt), nodes,
                degenerate ? RapConvMode::DegenerateTest : RapConvMode::Adaptive);
            return to_numpy(t.value(out));
        },
        py::arg("x"), py::arg("base_kernel"), py::arg("seed") = 0,
        py::arg("degenerate") = false,
        "One receptive-field-adaptive convolution with freshly initialized attention/GHBM");

    m.def(
        "upsample_bilinear",
        [](const ArrD& x, int ratio) { return to_numpy(upsample_bilinear(from_numpy(x, "x"), ratio)); },
        py::arg("x"), py::arg("ratio"));

    // metrics
    m.def("ergas",
          [](const ArrD& f, const ArrD& r, int ratio) {
              return ergas(from_numpy(f, "fused"), from_numpy(r, "ref"), ratio);
          },
          py::arg("fused"), py::arg("ref"), py::arg("ratio") = 4);
    m.def("sam",
          [](const ArrD& f, const ArrD& r) {
              return sam(from_numpy(f, "fused"), from_numpy(r, "ref")).degrees;
          },
          py::arg("fused"), py::arg("ref"));
    m.def("scc",
          [](const ArrD& f, const ArrD& r) {
              return scc(from_numpy(f, "fused"), from_numpy(r, "ref")).value;
          },
          py::arg("fused"), py::arg("ref"));
    m.def("q2n",
          [](const ArrD& f, const ArrD& r, int block, int shift) {
              return q2n(from_numpy(f, "fused"), from_numpy(r, "ref"), block, shift);
          },
          py::arg("fused"), py::arg("ref"), py::arg("block") = 32, py::arg("shift") = 32);
    m.def("full_res_metrics",
          [](const ArrD& f, const ArrD& ms, const ArrD& pan, int ratio, double gnyq) {
              const FullResResult r = full_res_suite(from_numpy(f, "fused"), from_numpy(ms, "ms"),
                                                     from_numpy(pan, "pan"), ratio, gnyq);
              py::dict d;
              d["d_lambda"] = r.d_lambda;
              d["d_s"] = r.d_s;
              d["qnr"] = r.qnr;
              return d;
          },
          py::arg("fused"), py::arg("ms"), py::arg("pan"), py::arg("ratio") = 4,
          py::arg("gnyq") = 0.3);

    // simulation
    m.def("wald_degrade",
          [](const ArrF& hrms, const ArrF& pan, int ratio, double gnyq) {
              DegradeSpec spec;
              spec.ratio = ratio;
              spec.gnyq = gnyq;
              FusionPair p = wald_degrade(from_numpy(hrms, "hrms"), from_numpy(pan, "pan"), spec);
              return py::make_tuple(to_numpy(p.pan), to_numpy(p.ms), to_numpy(*p.ref));
          },
          py::arg("hrms"), py::arg("pan"), py::arg("ratio") = 4, py::arg("gnyq") = 0.3);
    m.def("synth_dataset",
          [](std::uint64_t seed, int count, int size, int bands, int ratio) {
              DegradeSpec spec;
              spec.ratio = ratio;
              py::list out;
              for (auto& p : synth_dataset(seed, count, size, bands, spec))
                  out.append(py::make_tuple(to_numpy(p.pan), to_numpy(p.ms), to_numpy(*p.ref)));
              return out;
          },
          py::arg("seed"), py::arg("count"), py::arg("size"), py::arg("bands"),
          py::arg("ratio") = 4);

    py::class_<PyNetwork>(m, "Network")
        .def(py::init<int, int, int, int, bool, std::uint64_t>(), py::arg("bands"),
             py::arg("features") = 32, py::arg("ratio") = 4, py::arg("ghbm_hidden") = 0,
             py::arg("ablate_rapconv") = false, py::arg("seed") = 0)
        .def_static("load",
                    [](const std::string& path) { return PyNetwork(load_checkpoint(path)); },
                    py::arg("path"))
        .def("save", &PyNetwork::save, py::arg("path"))
        .def("fuse", &PyNetwork::fuse, py::arg("pan"), py::arg("ms"))
        .def("fit", &PyNetwork::fit, py::arg("pairs"), py::arg("lr") = 2.5e-4,
             py::arg("batch_size") = 4, py::arg("epochs") = 1, py::arg("seed") = 0)
        .def("param_count", &PyNetwork::param_count)
        .def_property_readonly("bands", &PyNetwork::bands)
        .def_property_readonly("features", &PyNetwork::features)
        .def_property_readonly("ratio", &PyNetwork::ratio)
        .def_property_readonly("ablated", &PyNetwork::ablated);
}
