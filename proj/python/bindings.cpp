#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mge/io.hpp"
#include "mge/ops.hpp"
#include "mge/pipeline.hpp"

namespace py = pybind11;
using namespace mge;

namespace {

Tensor from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr, DType dt = DType::f64) {
    std::vector<int64_t> shape(arr.ndim());
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[static_cast<size_t>(i)] = arr.shape(i);
    Tensor t(shape, dt);
    const double* src = arr.data();
    for (int64_t i = 0; i < t.numel(); ++i) t.set(i, src[i]);
    return t;
}

py::array_t<double> to_numpy(const Tensor& t) {
    std::vector<py::ssize_t> shape;
    for (int64_t i = 0; i < t.rank(); ++i) shape.push_back(static_cast<py::ssize_t>(t.extent(i)));
    py::array_t<double> arr(shape);
    double* dst = arr.mutable_data();
    for (int64_t i = 0; i < t.numel(); ++i) dst[i] = t.at(i);
    return arr;
}

/// Owns a config plus its parameter store; the object the Python side drives.
struct Model {
    PipelineConfig cfg;
    ParamStore ps;
    OptimizerState opt;

    explicit Model(const std::string& config_text) {
        cfg = parse_config(config_text);
        cfg.validate();
        Rng rng(cfg.seed);
        build_model(ps, cfg, rng);
        opt.total_steps = cfg.train_steps;
    }

    std::vector<Tensor> frames_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& clip) {
        if (clip.ndim() != 4 || clip.shape(3) != 3) throw std::invalid_argument("clip must be [T, H, W, 3]");
        std::vector<Tensor> frames;
        for (py::ssize_t t = 0; t < clip.shape(0); ++t) {
            Tensor f({clip.shape(1), clip.shape(2), 3}, cfg.dtype);
            const double* src = clip.data() + t * f.numel();
            for (int64_t i = 0; i < f.numel(); ++i) f.set(i, src[i]);
            frames.push_back(std::move(f));
        }
        return frames;
    }

    py::dict forward_clip(const py::array_t<double, py::array::c_style | py::array::forcecast>& clip) {
        InteractStats stats;
        ForwardResult r = forward(frames_from_numpy(clip), ps, cfg, &stats);
        py::dict out;
        out["prediction"] = to_numpy(r.prediction);
        out["field"] = to_numpy(r.field);
        out["blocks_spatial"] = stats.spatial;
        out["blocks_forward"] = stats.temporal_forward;
        out["blocks_backward"] = stats.temporal_backward;
        return out;
    }

    py::array_t<double> rollout(const py::array_t<double, py::array::c_style | py::array::forcecast>& clip,
                                int64_t steps) {
        std::vector<Tensor> preds = predict_rollout(frames_from_numpy(clip), ps, cfg, steps);
        std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(preds.size()), static_cast<py::ssize_t>(cfg.H),
                                       static_cast<py::ssize_t>(cfg.W), 3};
        py::array_t<double> arr(shape);
        double* dst = arr.mutable_data();
        for (const Tensor& p : preds)
            for (int64_t i = 0; i < p.numel(); ++i) *dst++ = p.at(i);
        return arr;
    }

    std::vector<double> fit(const std::string& scene_spec, int64_t steps) {
        SyntheticScene s = parse_scene_spec(scene_spec);
        return train({s}, ps, cfg, opt, steps).loss_history;
    }

    std::map<std::string, int64_t> summary() const { return parameter_summary(ps); }

    void save(const std::string& dir) const { save_checkpoint(dir, ps, cfg); }

    static Model load(const std::string& dir) {
        Model m(read_text_file(dir + "/config.txt"));
        ParamStore fresh;
        m.ps = std::move(fresh);
        m.cfg = load_checkpoint(dir, m.ps);
        return m;
    }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Motion-graph video prediction core";

    m.def("default_k", &default_k, py::arg("hs"), py::arg("ws"));

    m.def(
        "pixel_shuffle",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, int r) {
            return to_numpy(ops::pixel_shuffle(from_numpy(x), r));
        },
        py::arg("x"), py::arg("r"));
    m.def(
        "pixel_unshuffle",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, int r) {
            return to_numpy(ops::pixel_unshuffle(from_numpy(x), r));
        },
        py::arg("x"), py::arg("r"));
    m.def(
        "cosine_similarity_rows",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b, double eps) {
            return to_numpy(ops::cosine_similarity_rows(from_numpy(a), from_numpy(b), eps));
        },
        py::arg("a"), py::arg("b"), py::arg("eps") = 1e-8);

    m.def(
        "forward_warp",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& frames,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& field, int64_t k, double gamma,
           double eps) {
            WarpConfig wc;
            wc.gamma = gamma;
            wc.eps = eps;
            return to_numpy(forward_warp(from_numpy(frames), from_numpy(field), k, wc));
        },
        py::arg("frames"), py::arg("field"), py::arg("k"), py::arg("gamma") = 0.5, py::arg("eps") = 1e-6);

    m.def(
        "build_edges",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& view, int64_t T, int64_t hs,
           int64_t ws, int64_t k) {
            GraphDims dims{T, hs, ws};
            EdgeSet es = build_edges(from_numpy(view), dims, k);
            auto table = [&](const DirectedEdges& e) {
                py::dict d;
                d["src"] = e.src;
                d["nbr"] = e.nbr;
                d["weight"] = to_numpy(e.weight);
                return d;
            };
            py::dict out;
            out["spatial"] = table(es.spatial);
            out["forward"] = table(es.forward);
            out["backward"] = table(es.backward);
            return out;
        },
        py::arg("view"), py::arg("T"), py::arg("hs"), py::arg("ws"), py::arg("k"));

    m.def(
        "render_clip",
        [](const std::string& spec) { return to_numpy(render_clip(parse_scene_spec(spec))); },
        py::arg("scene_spec"));

    m.def(
        "metrics",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pred,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& target) {
            Metrics mt = compute_metrics(from_numpy(pred), from_numpy(target));
            return py::make_tuple(mt.psnr, mt.ssim);
        },
        py::arg("pred"), py::arg("target"));

    m.def(
        "bench_memory",
        [](const std::vector<std::pair<int64_t, int64_t>>& sizes, int64_t T, int64_t k) {
            MemoryBenchReport rep = bench_memory(sizes, T, k);
            py::list rows;
            for (const auto& r : rep.rows)
                rows.append(py::make_tuple(r.n, r.graph_bytes, r.dense_bytes));
            py::dict out;
            out["rows"] = rows;
            out["graph_slope"] = rep.graph_slope;
            out["dense_slope"] = rep.dense_slope;
            return out;
        },
        py::arg("sizes"), py::arg("T") = 4, py::arg("k") = 4);

    py::class_<Model>(m, "Model")
        .def(py::init<const std::string&>(), py::arg("config_text"))
        .def("forward", &Model::forward_clip, py::arg("clip"))
        .def("rollout", &Model::rollout, py::arg("clip"), py::arg("steps"))
        .def("fit", &Model::fit, py::arg("scene_spec"), py::arg("steps"))
        .def("summary", &Model::summary)
        .def("save", &Model::save, py::arg("dir"))
        .def_static("load", &Model::load, py::arg("dir"))
        .def_property_readonly("config_text", [](const Model& mm) { return config_to_text(mm.cfg); });
}
