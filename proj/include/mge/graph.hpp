#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mge/init.hpp"
#include "mge/ops.hpp"

namespace mge {

/// Node lattice extents. Node i lives at frame t = i / (Hs*Ws), row y, col x
/// with i = t*Hs*Ws + y*Ws + x.
struct GraphDims {
    int64_t T = 0, Hs = 0, Ws = 0;
    int64_t nodes_per_frame() const { return Hs * Ws; }
    int64_t num_nodes() const { return T * Hs * Ws; }
};

/// Per-node dynamic vectors for one view: [N x 3K] packed as
/// [dx1, dy1, w1, ..., dxK, dyK, wK]. Displacements are patch-grid units and
/// recorded as constants; the w entries stay on the tape (they are gathered
/// cosine similarities). Frame T-1 rows are zero.
struct DynamicVectors {
    int64_t K = 0;
    Tensor packed;                       // [N x 3K]
    std::vector<int64_t> targets;        // N*K target node ids; -1 for last-frame rows
};

/// Fixed-degree neighbor table for one edge direction. Every node in `src`
/// holds exactly k consecutive entries of `nbr`; `weight` carries the edge
/// similarities, differentiable, in the same order.
struct DirectedEdges {
    int64_t k = 0;
    std::vector<int64_t> src;   // node ids that have rows (boundary frames excluded)
    std::vector<int64_t> nbr;   // src.size()*k neighbor node ids
    Tensor weight;              // [src.size()*k x 1]
    bool has_rows(int64_t) const;
};

struct EdgeSet {
    DirectedEdges spatial, backward, forward;
};

/// One view of the motion graph: dynamic vectors, node features, edges.
struct MotionGraphView {
    DynamicVectors dyn;
    Tensor node_features;  // [N x d_mf], columns [location | tendency]
    EdgeSet edges;
};

struct MotionGraph {
    GraphDims dims;
    std::vector<MotionGraphView> views;
};

/// Cosine similarities between frame t and frame t+1 patch rows of one view,
/// [(Hs*Ws) x (Hs*Ws)]. Materialized per pair only.
Tensor frame_pair_similarity(const Tensor& view, const GraphDims& dims, int64_t t, double eps = 1e-8);

/// Top-K targets in the next frame per node; packs (dx, dy, w) triplets.
DynamicVectors init_dynamic_vectors(const Tensor& view, const GraphDims& dims, int64_t K, double eps = 1e-8);

/// Register the node-init parameters (g_tdc, g_loc) for one view.
void add_node_init_params(ParamStore& ps, const std::string& prefix, int64_t d_tf, int64_t d_lf, Rng& rng, DType dtype);

/// Shared per-triplet MLP + elementwise max over the K embeddings. [N x d_tf].
Tensor tendency_feature(const Tensor& packed, int64_t K, ParamStore& ps, const std::string& prefix, double slope);

/// MLP over normalized (x/Ws, y/Hs) for every node. [N x d_lf]; identical
/// across frames by construction.
Tensor location_feature(const GraphDims& dims, ParamStore& ps, const std::string& prefix, double slope, DType dtype);

/// Concatenate [location | tendency] per node. When `location_on` is false
/// only the tendency block is used.
Tensor init_node_features(const DynamicVectors& dyn, const GraphDims& dims, int64_t K, ParamStore& ps,
                          const std::string& prefix, double slope, DType dtype, bool location_on = true);

/// Top-k most similar nodes within the frame (spatial, self excluded),
/// previous frame (backward) and next frame (forward).
EdgeSet build_edges(const Tensor& view, const GraphDims& dims, int64_t k, double eps = 1e-8,
                    bool spatial_on = true, bool backward_on = true);

/// Exact bytes held by one view's edge tables and dynamic vectors (graph
/// storage, linear in node count) for the memory benchmark.
int64_t graph_storage_bytes(const GraphDims& dims, int64_t k, DType dtype);
/// Bytes of a materialized all-pairs per-frame-pair similarity matrix stack.
int64_t dense_pairs_storage_bytes(const GraphDims& dims, DType dtype);

/// `dump-graph` line format: header "graph T Hs Ws k" then one line per edge
/// "view <m> type {S|B|F} <src> <dst> <weight>".
std::string dump_graph_text(const MotionGraph& graph, int64_t k);

}  // namespace mge
