#include "mge/interaction.hpp"

#include <stdexcept>

namespace mge::ops {
// scatter_rows lives here: it is the exact adjoint of gather_rows and only
// the interaction module needs it.
Tensor scatter_rows(const Tensor& x, const std::vector<int64_t>& idx, int64_t n_rows);
}  // namespace mge::ops

namespace mge::ops {

Tensor scatter_rows(const Tensor& x, const std::vector<int64_t>& idx, int64_t n_rows) {
    if (x.rank() != 2 || static_cast<int64_t>(idx.size()) != x.extent(0))
        throw std::invalid_argument("scatter_rows: index count must match rows");
    int64_t C = x.extent(1);
    Tensor y = Tensor::zeros({n_rows, C}, x.dtype());
    for (size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] < 0 || idx[r] >= n_rows) throw std::out_of_range("scatter_rows: row index out of range");
        for (int64_t j = 0; j < C; ++j) y.set(idx[r] * C + j, x.at(static_cast<int64_t>(r) * C + j));
    }
    if (is_tracked(x)) {
        Tape* tp = Tape::active();
        tp->track(y);
        Tensor xin = x, yout = y;
        std::vector<int64_t> ix = idx;
        tp->record([xin, yout, ix]() mutable {
            if (!yout.has_grad()) return;
            Tensor& gx = xin.grad();
            Tensor& gy = yout.grad();
            int64_t C = xin.extent(1);
            for (size_t r = 0; r < ix.size(); ++r)
                for (int64_t j = 0; j < C; ++j) {
                    int64_t t = static_cast<int64_t>(r) * C + j;
                    gx.set(t, gx.at(t) + gy.at(ix[r] * C + j));
                }
        });
    }
    return y;
}

}  // namespace mge::ops

namespace mge {

void add_interaction_params(ParamStore& ps, const std::string& prefix, int64_t d_mf, Rng& rng, DType dtype) {
    add_conv(ps, prefix + ".spatial", d_mf, d_mf, 3, 3, rng, dtype);
    add_linear(ps, prefix + ".message", d_mf + 3, d_mf, rng, dtype);
    add_linear(ps, prefix + ".update", 2 * d_mf, d_mf, rng, dtype);
}

Tensor spatial_mp(const Tensor& feat, const GraphDims& dims, ParamStore& ps, const std::string& prefix, double slope) {
    int64_t d = feat.extent(1);
    if (feat.extent(0) != dims.num_nodes()) throw std::invalid_argument("spatial_mp: node count mismatch");
    Tensor grid = ops::permute(ops::reshape(feat, {dims.T, dims.Hs, dims.Ws, d}), {0, 3, 1, 2});
    Tensor h = ops::conv2d(grid, ps.get(prefix + ".spatial.weight").value, ps.get(prefix + ".spatial.bias").value, 1, 1);
    h = ops::leaky_relu(h, slope);
    Tensor rows = ops::reshape(ops::permute(h, {0, 2, 3, 1}), {dims.num_nodes(), d});
    return ops::add(feat, rows);
}

Tensor temporal_mp(const Tensor& feat, const DirectedEdges& edges, const GraphDims& dims, ParamStore& ps,
                   const std::string& prefix, double slope) {
    if (edges.src.empty()) return feat;
    int64_t d = feat.extent(1), k = edges.k;
    int64_t R = static_cast<int64_t>(edges.src.size());
    int64_t hw = dims.nodes_per_frame();

    Tensor vj = ops::gather_rows(feat, edges.nbr);  // [R*k x d]
    Tensor deltas({R * k, 2}, feat.dtype());
    for (int64_t e = 0; e < R * k; ++e) {
        int64_t i = edges.src[static_cast<size_t>(e / k)], j = edges.nbr[static_cast<size_t>(e)];
        int64_t xi = (i % hw) % dims.Ws, yi = (i % hw) / dims.Ws;
        int64_t xj = (j % hw) % dims.Ws, yj = (j % hw) / dims.Ws;
        deltas.set(e * 2 + 0, static_cast<double>(xj - xi));
        deltas.set(e * 2 + 1, static_cast<double>(yj - yi));
    }
    Tensor msg_in = ops::concat_cols({vj, deltas, edges.weight});  // [R*k x d+3]
    Tensor msg = ops::linear(msg_in, ps.get(prefix + ".message.weight").value, ps.get(prefix + ".message.bias").value);
    msg = ops::leaky_relu(msg, slope);
    Tensor agg = ops::max_over_groups(msg, R, k, d);               // [R x d]
    Tensor vi = ops::gather_rows(feat, edges.src);
    Tensor upd = ops::linear(ops::concat_cols({vi, agg}), ps.get(prefix + ".update.weight").value,
                             ps.get(prefix + ".update.bias").value);
    return ops::add(feat, ops::scatter_rows(upd, edges.src, dims.num_nodes()));
}

Tensor interact(const Tensor& feat, const EdgeSet& edges, const GraphDims& dims, ParamStore& ps,
                const std::string& prefix, const InteractionConfig& cfg, InteractStats* stats, int rounds_override) {
    if (dims.T < 2) throw std::invalid_argument("interact: needs T >= 2 observed frames");
    int rounds = rounds_override >= 0 ? rounds_override : static_cast<int>(dims.T - 1);
    Tensor v = feat;
    auto spatial_step = [&](Tensor x) {
        // two realizations of the spatial block: conv over the grid (default)
        // or graph messages over the within-frame similarity edges
        return cfg.spatial_edge_mp ? temporal_mp(x, edges.spatial, dims, ps, prefix, cfg.slope)
                                   : spatial_mp(x, dims, ps, prefix, cfg.slope);
    };
    for (int r = 0; r < rounds; ++r) {
        if (cfg.spatial_on) {
            v = spatial_step(v);
            if (stats) stats->spatial++;
        }
        v = temporal_mp(v, edges.forward, dims, ps, prefix, cfg.slope);
        if (stats) stats->temporal_forward++;
        if (cfg.spatial_on) {
            v = spatial_step(v);
            if (stats) stats->spatial++;
        }
        if (cfg.backward_on) {
            v = temporal_mp(v, edges.backward, dims, ps, prefix, cfg.slope);
            if (stats) stats->temporal_backward++;
        }
    }
    return v;
}

void add_fusion_params(ParamStore& ps, int64_t m_views, int64_t d_mf, int64_t c_node, Rng& rng, DType dtype) {
    add_linear(ps, "fusion.fuse1", m_views * d_mf, c_node, rng, dtype);
    add_linear(ps, "fusion.fuse2", c_node, c_node, rng, dtype);
}

Tensor fuse_views(const std::vector<Tensor>& view_feats, ParamStore& ps, double slope) {
    if (view_feats.empty()) throw std::invalid_argument("fuse_views: no views");
    // a 1x1 conv over the node grid is exactly a per-node linear map
    Tensor cat = ops::concat_cols(view_feats);
    Tensor h = ops::linear(cat, ps.get("fusion.fuse1.weight").value, ps.get("fusion.fuse1.bias").value);
    h = ops::leaky_relu(h, slope);
    return ops::linear(h, ps.get("fusion.fuse2.weight").value, ps.get("fusion.fuse2.bias").value);
}

}  // namespace mge
