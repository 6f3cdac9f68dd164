#pragma once

#include <map>
#include <string>
#include <vector>

#include "mge/encoder.hpp"
#include "mge/graph.hpp"
#include "mge/interaction.hpp"
#include "mge/optim.hpp"
#include "mge/scene.hpp"
#include "mge/warp.hpp"

namespace mge {

enum class LossKind { mse, l1 };

struct PipelineConfig {
    int64_t H = 512, W = 512;
    int64_t T = 4;           // observed frames
    int64_t T_out = 1;       // predicted frames per rollout step
    int M = 4;               // views / encoder stages
    int64_t k = 0;           // 0: resolve via min(10, round(0.01*Hs*Ws))
    int64_t k_decode = 0;    // 0: same as k
    int64_t d_tf = 16;
    int64_t d_lf = 4;
    int64_t C_img = 16;
    int64_t C_node = 0;      // 0: d_tf + d_lf
    double slope = 0.2;
    double max_disp = 0.0;   // 0: max(H,W)/8
    double gamma = 0.5;
    double eps = 1e-6;
    double sim_eps = 1e-8;
    LossKind loss = LossKind::mse;
    bool spatial_on = true;
    bool backward_on = true;
    bool spatial_edge_mp = false;  // off: spatial messages via conv3x3
    bool location_feature_on = true;
    uint64_t seed = 0;
    DType dtype = DType::f32;
    // training
    double lr_base = 1e-3;
    double lr_final = 1e-5;
    double weight_decay = 1e-2;
    int64_t train_steps = 200;

    int64_t Hs() const { return H >> M; }
    int64_t Ws() const { return W >> M; }
    int64_t resolved_k() const;
    int64_t resolved_k_decode() const { return k_decode > 0 ? k_decode : resolved_k(); }
    int64_t resolved_c_node() const { return C_node > 0 ? C_node : d_tf + d_lf; }
    int64_t d_mf() const { return location_feature_on ? d_tf + d_lf : d_tf; }
    double resolved_max_disp() const { return max_disp > 0 ? max_disp : static_cast<double>(std::max(H, W)) / 8.0; }
    void validate() const;
};

/// The k-selection rule: min(10, round(0.01 * Hs * Ws)), at least 1.
int64_t default_k(int64_t hs, int64_t ws);

/// Register every parameter group of the model under stable name paths.
void build_model(ParamStore& ps, const PipelineConfig& cfg, Rng& rng);

/// Per-module parameter counts keyed by path prefix, plus "total".
std::map<std::string, int64_t> parameter_summary(const ParamStore& ps);

struct ForwardResult {
    Tensor prediction;  // [H x W x 3]
    Tensor field;       // [(T*H*W) x 3*k_decode] packed dynamic vectors
    MotionGraph graph;  // construction byproduct, kept for inspection/dumps
};

/// Full pipeline: encode, build graph, interact, fuse, upsample, decode, warp.
/// `frames` holds T observed frames [H x W x 3] each.
ForwardResult forward(const std::vector<Tensor>& frames, ParamStore& ps, const PipelineConfig& cfg,
                      InteractStats* stats = nullptr);

Tensor loss(const Tensor& pred, const Tensor& target, LossKind kind);

/// Autoregressive rollout: append each prediction, slide the window.
std::vector<Tensor> predict_rollout(const std::vector<Tensor>& frames, ParamStore& ps, const PipelineConfig& cfg,
                                    int64_t steps);

struct TrainResult {
    std::vector<double> loss_history;
};

/// Forward / loss / backward / AdamW over scenes (cycled). Deterministic
/// under a fixed config seed. Throws on NaN loss, naming the first parameter
/// group with a non-finite gradient.
TrainResult train(const std::vector<SyntheticScene>& dataset, ParamStore& ps, const PipelineConfig& cfg,
                  OptimizerState& opt, int64_t steps);

struct Metrics {
    double psnr;  // +inf for identical images
    double ssim;
};
Metrics compute_metrics(const Tensor& pred, const Tensor& target);

struct MemoryBenchRow {
    int64_t hs, ws, n;
    int64_t graph_bytes;
    int64_t dense_bytes;
};
struct MemoryBenchReport {
    std::vector<MemoryBenchRow> rows;
    double graph_slope;  // log-log fit vs n
    double dense_slope;
};
MemoryBenchReport bench_memory(const std::vector<std::pair<int64_t, int64_t>>& sizes, int64_t T, int64_t k,
                               DType dtype = DType::f32);

}  // namespace mge
