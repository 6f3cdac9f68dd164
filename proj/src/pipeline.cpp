#include "mge/pipeline.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mge {

int64_t default_k(int64_t hs, int64_t ws) {
    int64_t k = static_cast<int64_t>(std::llround(0.01 * static_cast<double>(hs * ws)));
    return std::max<int64_t>(1, std::min<int64_t>(10, k));
}

int64_t PipelineConfig::resolved_k() const { return k > 0 ? k : default_k(Hs(), Ws()); }

void PipelineConfig::validate() const {
    int64_t div = int64_t(1) << M;
    if (H % div != 0 || W % div != 0)
        throw std::invalid_argument("config: 2^M must divide H and W (H=" + std::to_string(H) + ", W=" +
                                    std::to_string(W) + ", M=" + std::to_string(M) + ")");
    if (T < 2) throw std::invalid_argument("config: T must be >= 2");
    if (resolved_k() > Hs() * Ws() - 1)
        throw std::invalid_argument("config: k exceeds Hs*Ws-1");
    if (d_tf < 1 || d_lf < 1 || C_img < 1) throw std::invalid_argument("config: feature widths must be >= 1");
    if (!(slope > 0 && slope < 1)) throw std::invalid_argument("config: slope must be in (0,1)");
}

namespace {

std::string view_prefix(int m) { return "view" + std::to_string(m); }

}  // namespace

void build_model(ParamStore& ps, const PipelineConfig& cfg, Rng& rng) {
    cfg.validate();
    EncoderConfig ec{cfg.M, cfg.C_img, cfg.C_img, cfg.slope};
    add_encoder_params(ps, ec, rng, cfg.dtype);
    for (int m = 1; m <= cfg.M; ++m) {
        add_node_init_params(ps, view_prefix(m) + ".node", cfg.d_tf, cfg.d_lf, rng, cfg.dtype);
        add_interaction_params(ps, view_prefix(m) + ".inter", cfg.d_mf(), rng, cfg.dtype);
    }
    add_fusion_params(ps, cfg.M, cfg.d_mf(), cfg.resolved_c_node(), rng, cfg.dtype);
    add_upsampler_params(ps, cfg.M, cfg.resolved_c_node(), cfg.resolved_c_node(), rng, cfg.dtype);
    add_decoder_params(ps, cfg.resolved_c_node(), cfg.resolved_k_decode(), rng, cfg.dtype);
}

std::map<std::string, int64_t> parameter_summary(const ParamStore& ps) {
    std::map<std::string, int64_t> counts;
    int64_t total = 0;
    for (const auto& p : ps.all()) {
        std::string group = p.name.substr(0, p.name.find('.'));
        counts[group] += p.value.numel();
        total += p.value.numel();
    }
    counts["total"] = total;
    return counts;
}

ForwardResult forward(const std::vector<Tensor>& frames, ParamStore& ps, const PipelineConfig& cfg,
                      InteractStats* stats) {
    cfg.validate();
    if (static_cast<int64_t>(frames.size()) != cfg.T)
        throw std::invalid_argument("forward: expected T=" + std::to_string(cfg.T) + " frames, got " +
                                    std::to_string(frames.size()));
    for (const Tensor& f : frames)
        if (f.rank() != 3 || f.extent(0) != cfg.H || f.extent(1) != cfg.W || f.extent(2) != 3)
            throw std::invalid_argument("forward: frame shape " + f.shape_str() + " does not match config");

    EncoderConfig ec{cfg.M, cfg.C_img, cfg.C_img, cfg.slope};
    std::vector<Tensor> typed;
    for (const Tensor& f : frames) typed.push_back(f.dtype() == cfg.dtype ? f : f.astype(cfg.dtype));
    MultiScaleFeatures feats = encode_clip(typed, ec, ps);
    GraphDims dims{feats.T, feats.Hs, feats.Ws};
    int64_t k = cfg.resolved_k();

    ForwardResult out;
    out.graph.dims = dims;
    InteractionConfig icfg{cfg.slope, cfg.spatial_on, cfg.backward_on, cfg.spatial_edge_mp};
    std::vector<Tensor> updated;
    for (int m = 1; m <= cfg.M; ++m) {
        MotionGraphView view;
        const Tensor& vf = feats.views[static_cast<size_t>(m - 1)];
        view.dyn = init_dynamic_vectors(vf, dims, k, cfg.sim_eps);
        view.node_features = init_node_features(view.dyn, dims, k, ps, view_prefix(m) + ".node", cfg.slope, cfg.dtype,
                                                cfg.location_feature_on);
        view.edges = build_edges(vf, dims, k, cfg.sim_eps, cfg.spatial_on, cfg.backward_on);
        Tensor v = interact(view.node_features, view.edges, dims, ps, view_prefix(m) + ".inter", icfg, stats);
        updated.push_back(v);
        out.graph.views.push_back(std::move(view));
    }
    Tensor fused = fuse_views(updated, ps, cfg.slope);
    Tensor pix = upsample_motion(fused, dims, cfg.M, cfg.resolved_c_node(), ps, cfg.slope);
    out.field = decode_motion(pix, cfg.resolved_k_decode(), cfg.resolved_max_disp(), ps);

    Tensor clip({cfg.T, cfg.H, cfg.W, 3}, cfg.dtype);
    for (int64_t t = 0; t < cfg.T; ++t)
        for (int64_t i = 0; i < cfg.H * cfg.W * 3; ++i) clip.set(t * cfg.H * cfg.W * 3 + i, typed[static_cast<size_t>(t)].at(i));
    WarpConfig wc{cfg.eps, cfg.gamma};
    out.prediction = forward_warp(clip, out.field, cfg.resolved_k_decode(), wc);
    return out;
}

Tensor loss(const Tensor& pred, const Tensor& target, LossKind kind) {
    if (pred.shape() != target.shape())
        throw std::invalid_argument("loss: extent mismatch " + pred.shape_str() + " vs " + target.shape_str());
    Tensor diff = ops::sub(pred, target.dtype() == pred.dtype() ? target : target.astype(pred.dtype()));
    if (kind == LossKind::mse) return ops::mean_all(ops::mul(diff, diff));
    return ops::mean_all(ops::abs(diff));
}

std::vector<Tensor> predict_rollout(const std::vector<Tensor>& frames, ParamStore& ps, const PipelineConfig& cfg,
                                    int64_t steps) {
    if (steps < 1) throw std::invalid_argument("predict_rollout: steps must be >= 1");
    std::vector<Tensor> window = frames;
    std::vector<Tensor> preds;
    for (int64_t s = 0; s < steps; ++s) {
        ForwardResult r = forward(window, ps, cfg);
        preds.push_back(r.prediction);
        window.erase(window.begin());
        window.push_back(r.prediction);
    }
    return preds;
}

TrainResult train(const std::vector<SyntheticScene>& dataset, ParamStore& ps, const PipelineConfig& cfg,
                  OptimizerState& opt, int64_t steps) {
    if (steps < 1) throw std::invalid_argument("train: steps must be >= 1");
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    TrainResult result;
    // pre-render all clips once
    std::vector<std::vector<Tensor>> inputs;
    std::vector<Tensor> targets;
    for (const auto& scene : dataset) {
        if (scene.frames < cfg.T + 1)
            throw std::invalid_argument("train: scene needs at least T+1 frames");
        std::vector<Tensor> fs;
        for (int64_t t = 0; t < cfg.T; ++t) fs.push_back(render_frame(scene, t).astype(cfg.dtype));
        inputs.push_back(std::move(fs));
        targets.push_back(render_frame(scene, cfg.T).astype(cfg.dtype));
    }
    for (int64_t s = 0; s < steps; ++s) {
        size_t si = static_cast<size_t>(s) % dataset.size();
        double step_loss;
        {
            Tape tape;
            ps.attach();
            ForwardResult r = forward(inputs[si], ps, cfg);
            Tensor l = loss(r.prediction, targets[si], cfg.loss);
            step_loss = l.at(0);
            if (!std::isfinite(step_loss)) throw std::runtime_error("train: non-finite loss at step " + std::to_string(s));
            tape.backward(l);
        }
        for (auto& p : ps.all())
            for (int64_t i = 0; i < p.grad().numel(); ++i)
                if (!std::isfinite(p.grad().at(i)))
                    throw std::runtime_error("train: non-finite gradient in parameter group '" +
                                             p.name.substr(0, p.name.find('.')) + "' (" + p.name + ")");
        adamw_step(ps.all(), opt);
        ps.zero_grads();
        result.loss_history.push_back(step_loss);
    }
    return result;
}

namespace {

double gaussian_window_ssim(const Tensor& a, const Tensor& b) {
    // standard SSIM: 11x11 Gaussian window (sigma 1.5), C1/C2 for data range 1
    int64_t H = a.extent(0), W = a.extent(1);
    const int R = 5;
    double g[11][11];
    double sum = 0;
    for (int i = -R; i <= R; ++i)
        for (int j = -R; j <= R; ++j) {
            g[i + R][j + R] = std::exp(-(i * i + j * j) / (2.0 * 1.5 * 1.5));
            sum += g[i + R][j + R];
        }
    for (auto& row : g)
        for (auto& v : row) v /= sum;
    const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    double acc = 0;
    int64_t count = 0;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = R; y < H - R; ++y)
            for (int64_t x = R; x < W - R; ++x) {
                double mu_a = 0, mu_b = 0;
                for (int i = -R; i <= R; ++i)
                    for (int j = -R; j <= R; ++j) {
                        mu_a += g[i + R][j + R] * a.at(((y + i) * W + x + j) * 3 + c);
                        mu_b += g[i + R][j + R] * b.at(((y + i) * W + x + j) * 3 + c);
                    }
                double va = 0, vb = 0, cov = 0;
                for (int i = -R; i <= R; ++i)
                    for (int j = -R; j <= R; ++j) {
                        double da = a.at(((y + i) * W + x + j) * 3 + c) - mu_a;
                        double db = b.at(((y + i) * W + x + j) * 3 + c) - mu_b;
                        va += g[i + R][j + R] * da * da;
                        vb += g[i + R][j + R] * db * db;
                        cov += g[i + R][j + R] * da * db;
                    }
                acc += ((2 * mu_a * mu_b + C1) * (2 * cov + C2)) / ((mu_a * mu_a + mu_b * mu_b + C1) * (va + vb + C2));
                ++count;
            }
    return count > 0 ? acc / static_cast<double>(count) : 1.0;
}

}  // namespace

Metrics compute_metrics(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) throw std::invalid_argument("metrics: extent mismatch");
    double mse = 0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        double d = pred.at(i) - target.at(i);
        mse += d * d;
    }
    mse /= static_cast<double>(pred.numel());
    Metrics m;
    m.psnr = mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / mse);
    m.ssim = mse == 0.0 ? 1.0 : gaussian_window_ssim(pred, target);
    return m;
}

MemoryBenchReport bench_memory(const std::vector<std::pair<int64_t, int64_t>>& sizes, int64_t T, int64_t k,
                               DType dtype) {
    MemoryBenchReport report;
    std::vector<double> ln_n, ln_g, ln_d;
    for (auto [hs, ws] : sizes) {
        GraphDims dims{T, hs, ws};
        MemoryBenchRow row;
        row.hs = hs;
        row.ws = ws;
        row.n = hs * ws;
        row.graph_bytes = graph_storage_bytes(dims, k, dtype);
        row.dense_bytes = dense_pairs_storage_bytes(dims, dtype);
        report.rows.push_back(row);
        if (k > 0) {
            ln_n.push_back(std::log(static_cast<double>(row.n)));
            ln_g.push_back(std::log(static_cast<double>(row.graph_bytes)));
            ln_d.push_back(std::log(static_cast<double>(row.dense_bytes)));
        }
    }
    auto slope = [](const std::vector<double>& xs, const std::vector<double>& ys) {
        double n = static_cast<double>(xs.size());
        if (n < 2) return 0.0;
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (size_t i = 0; i < xs.size(); ++i) {
            sx += xs[i];
            sy += ys[i];
            sxx += xs[i] * xs[i];
            sxy += xs[i] * ys[i];
        }
        return (n * sxy - sx * sy) / (n * sxx - sx * sx);
    };
    report.graph_slope = slope(ln_n, ln_g);
    report.dense_slope = slope(ln_n, ln_d);
    return report;
}

}  // namespace mge
