#include "mge/graph.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace mge {

bool DirectedEdges::has_rows(int64_t node) const {
    return std::binary_search(src.begin(), src.end(), node);
}

namespace {

Tensor frame_rows(const Tensor& view, const GraphDims& dims, int64_t t) {
    int64_t hw = dims.nodes_per_frame();
    std::vector<int64_t> idx(static_cast<size_t>(hw));
    for (int64_t i = 0; i < hw; ++i) idx[static_cast<size_t>(i)] = t * hw + i;
    return ops::gather_rows(view, idx);
}

}  // namespace

Tensor frame_pair_similarity(const Tensor& view, const GraphDims& dims, int64_t t, double eps) {
    if (t < 0 || t >= dims.T - 1)
        throw std::invalid_argument("frame_pair_similarity: t=" + std::to_string(t) + " out of range for T=" +
                                    std::to_string(dims.T));
    return ops::cosine_similarity_rows(frame_rows(view, dims, t), frame_rows(view, dims, t + 1), eps);
}

DynamicVectors init_dynamic_vectors(const Tensor& view, const GraphDims& dims, int64_t K, double eps) {
    int64_t hw = dims.nodes_per_frame();
    if (K < 1 || K > hw) throw std::invalid_argument("init_dynamic_vectors: K out of range");
    DynamicVectors out;
    out.K = K;
    out.targets.assign(static_cast<size_t>(dims.num_nodes() * K), -1);
    std::vector<Tensor> frame_parts;
    for (int64_t t = 0; t + 1 < dims.T; ++t) {
        Tensor sim = frame_pair_similarity(view, dims, t, eps);
        Tensor flat = ops::reshape(sim, {hw * hw, 1});
        std::vector<int64_t> gather_idx;
        gather_idx.reserve(static_cast<size_t>(hw * K));
        Tensor deltas({hw * K, 2}, view.dtype());
        for (int64_t i = 0; i < hw; ++i) {
            std::vector<double> row(static_cast<size_t>(hw));
            for (int64_t j = 0; j < hw; ++j) row[static_cast<size_t>(j)] = sim.at(i * hw + j);
            auto top = ops::topk_desc(row, K);
            int64_t yi = i / dims.Ws, xi = i % dims.Ws;
            for (int64_t r = 0; r < K; ++r) {
                int64_t j = top[static_cast<size_t>(r)].first;
                gather_idx.push_back(i * hw + j);
                deltas.set((i * K + r) * 2 + 0, static_cast<double>(j % dims.Ws - xi));
                deltas.set((i * K + r) * 2 + 1, static_cast<double>(j / dims.Ws - yi));
                out.targets[static_cast<size_t>(((t * hw + i) * K + r))] = (t + 1) * hw + j;
            }
        }
        Tensor w = ops::gather_rows(flat, gather_idx);            // [hw*K x 1]
        Tensor triplets = ops::concat_cols({deltas, w});          // [hw*K x 3]
        frame_parts.push_back(ops::reshape(triplets, {hw, 3 * K}));
    }
    // last observed frame: zero-padded dynamic vectors
    frame_parts.push_back(Tensor::zeros({hw, 3 * K}, view.dtype()));
    out.packed = ops::concat_rows(frame_parts);
    return out;
}

void add_node_init_params(ParamStore& ps, const std::string& prefix, int64_t d_tf, int64_t d_lf, Rng& rng,
                          DType dtype) {
    add_linear(ps, prefix + ".tdc1", 3, d_tf, rng, dtype);
    add_linear(ps, prefix + ".tdc2", d_tf, d_tf, rng, dtype);
    add_linear(ps, prefix + ".loc1", 2, d_lf, rng, dtype);
    add_linear(ps, prefix + ".loc2", d_lf, d_lf, rng, dtype);
}

Tensor tendency_feature(const Tensor& packed, int64_t K, ParamStore& ps, const std::string& prefix, double slope) {
    int64_t N = packed.extent(0);
    if (packed.extent(1) != 3 * K) throw std::invalid_argument("tendency_feature: packed width != 3K");
    Tensor trip = ops::reshape(packed, {N * K, 3});
    Tensor h = ops::linear(trip, ps.get(prefix + ".tdc1.weight").value, ps.get(prefix + ".tdc1.bias").value);
    h = ops::leaky_relu(h, slope);
    h = ops::linear(h, ps.get(prefix + ".tdc2.weight").value, ps.get(prefix + ".tdc2.bias").value);
    int64_t d_tf = h.extent(1);
    return ops::max_over_groups(h, N, K, d_tf);
}

Tensor location_feature(const GraphDims& dims, ParamStore& ps, const std::string& prefix, double slope, DType dtype) {
    int64_t N = dims.num_nodes(), hw = dims.nodes_per_frame();
    Tensor coords({N, 2}, dtype);
    for (int64_t i = 0; i < N; ++i) {
        int64_t local = i % hw;
        coords.set(i * 2 + 0, static_cast<double>(local % dims.Ws) / static_cast<double>(dims.Ws));
        coords.set(i * 2 + 1, static_cast<double>(local / dims.Ws) / static_cast<double>(dims.Hs));
    }
    Tensor h = ops::linear(coords, ps.get(prefix + ".loc1.weight").value, ps.get(prefix + ".loc1.bias").value);
    h = ops::leaky_relu(h, slope);
    return ops::linear(h, ps.get(prefix + ".loc2.weight").value, ps.get(prefix + ".loc2.bias").value);
}

Tensor init_node_features(const DynamicVectors& dyn, const GraphDims& dims, int64_t K, ParamStore& ps,
                          const std::string& prefix, double slope, DType dtype, bool location_on) {
    Tensor tend = tendency_feature(dyn.packed, K, ps, prefix, slope);
    if (!location_on) return tend;
    Tensor loc = location_feature(dims, ps, prefix, slope, dtype);
    return ops::concat_cols({loc, tend});
}

namespace {

// Shared top-k row selection over a similarity matrix; `row_of` maps a source
// node's local index to the matrix row (or column via transpose flag).
void append_edges(DirectedEdges& table, const Tensor& sim, int64_t hw, int64_t k, int64_t src_frame,
                  int64_t dst_frame, bool transposed, bool exclude_self, std::vector<int64_t>& gather_idx) {
    for (int64_t i = 0; i < hw; ++i) {
        std::vector<double> scores;
        std::vector<int64_t> cand;
        scores.reserve(static_cast<size_t>(hw));
        for (int64_t j = 0; j < hw; ++j) {
            if (exclude_self && j == i) continue;
            scores.push_back(transposed ? sim.at(j * hw + i) : sim.at(i * hw + j));
            cand.push_back(j);
        }
        auto top = ops::topk_desc(scores, k);
        table.src.push_back(src_frame * hw + i);
        for (auto& [ci, w] : top) {
            int64_t j = cand[static_cast<size_t>(ci)];
            table.nbr.push_back(dst_frame * hw + j);
            gather_idx.push_back(transposed ? j * hw + i : i * hw + j);
            (void)w;
        }
    }
}

}  // namespace

EdgeSet build_edges(const Tensor& view, const GraphDims& dims, int64_t k, double eps, bool spatial_on,
                    bool backward_on) {
    int64_t hw = dims.nodes_per_frame();
    if (k < 1 || k > hw - 1) throw std::invalid_argument("build_edges: need 1 <= k <= Hs*Ws-1, got " + std::to_string(k));
    EdgeSet es;
    es.spatial.k = es.backward.k = es.forward.k = k;

    // temporal tables from per-pair similarities; one matrix serves the
    // forward edges of frame t and the backward edges of frame t+1
    std::vector<Tensor> fwd_parts, bwd_parts;
    for (int64_t t = 0; t + 1 < dims.T; ++t) {
        Tensor sim = frame_pair_similarity(view, dims, t, eps);
        Tensor flat = ops::reshape(sim, {hw * hw, 1});
        std::vector<int64_t> fwd_idx;
        append_edges(es.forward, sim, hw, k, t, t + 1, /*transposed=*/false, /*exclude_self=*/false, fwd_idx);
        fwd_parts.push_back(ops::gather_rows(flat, fwd_idx));
        if (backward_on) {
            std::vector<int64_t> bwd_idx;
            append_edges(es.backward, sim, hw, k, t + 1, t, /*transposed=*/true, /*exclude_self=*/false, bwd_idx);
            bwd_parts.push_back(ops::gather_rows(flat, bwd_idx));
        }
    }
    if (!fwd_parts.empty()) es.forward.weight = ops::concat_rows(fwd_parts);
    if (!bwd_parts.empty()) es.backward.weight = ops::concat_rows(bwd_parts);

    if (spatial_on) {
        std::vector<Tensor> sp_parts;
        for (int64_t t = 0; t < dims.T; ++t) {
            Tensor rows = frame_rows(view, dims, t);
            Tensor sim = ops::cosine_similarity_rows(rows, rows, eps);
            Tensor flat = ops::reshape(sim, {hw * hw, 1});
            std::vector<int64_t> sp_idx;
            append_edges(es.spatial, sim, hw, k, t, t, /*transposed=*/false, /*exclude_self=*/true, sp_idx);
            sp_parts.push_back(ops::gather_rows(flat, sp_idx));
        }
        es.spatial.weight = ops::concat_rows(sp_parts);
    }
    return es;
}

int64_t graph_storage_bytes(const GraphDims& dims, int64_t k, DType dtype) {
    const int64_t header = 32;  // T, Hs, Ws, k as u64
    if (k == 0) return header;
    int64_t hw = dims.nodes_per_frame();
    int64_t entry = 8 + static_cast<int64_t>(dtype_size(dtype));  // neighbor id + weight
    int64_t spatial = dims.T * hw * k;
    int64_t temporal = 2 * (dims.T - 1) * hw * k;  // forward + backward
    int64_t dyn = dims.T * hw * 3 * k * static_cast<int64_t>(dtype_size(dtype))  // packed triplets
                  + dims.T * hw * k * 8;                                          // target ids
    return header + (spatial + temporal) * entry + dyn;
}

int64_t dense_pairs_storage_bytes(const GraphDims& dims, DType dtype) {
    int64_t hw = dims.nodes_per_frame();
    int64_t pairs = std::max<int64_t>(dims.T - 1, 1);
    return pairs * hw * hw * static_cast<int64_t>(dtype_size(dtype));
}

std::string dump_graph_text(const MotionGraph& graph, int64_t k) {
    std::ostringstream os;
    os << "graph " << graph.dims.T << " " << graph.dims.Hs << " " << graph.dims.Ws << " " << k << "\n";
    for (size_t m = 0; m < graph.views.size(); ++m) {
        const EdgeSet& es = graph.views[m].edges;
        auto emit = [&](const DirectedEdges& tbl, char type) {
            for (size_t r = 0; r < tbl.src.size(); ++r)
                for (int64_t j = 0; j < tbl.k; ++j) {
                    int64_t e = static_cast<int64_t>(r) * tbl.k + j;
                    os << "view " << (m + 1) << " type " << type << " " << tbl.src[r] << " " << tbl.nbr[static_cast<size_t>(e)]
                       << " " << tbl.weight.at(e) << "\n";
                }
        };
        emit(es.spatial, 'S');
        emit(es.backward, 'B');
        emit(es.forward, 'F');
    }
    return os.str();
}

}  // namespace mge
