#pragma once

#include <string>

#include "mge/graph.hpp"
#include "mge/init.hpp"

namespace mge {

/// Block-application counters for one interact() call.
struct InteractStats {
    int spatial = 0;
    int temporal_forward = 0;
    int temporal_backward = 0;
    int total() const { return spatial + temporal_forward + temporal_backward; }
};

struct InteractionConfig {
    double slope = 0.2;
    bool spatial_on = true;
    bool backward_on = true;
    bool spatial_edge_mp = false;  // route spatial messages over the similarity edge table
};

/// Register one view's interaction parameters: spatial conv (3x3, d->d),
/// temporal message MLP (d+3 -> d) and update linear (2d -> d). The same
/// parameters are reused across all T-1 rounds and both temporal directions.
void add_interaction_params(ParamStore& ps, const std::string& prefix, int64_t d_mf, Rng& rng, DType dtype);

/// Per-frame residual conv3x3 + leaky_relu on the Hs x Ws grid.
Tensor spatial_mp(const Tensor& feat, const GraphDims& dims, ParamStore& ps, const std::string& prefix, double slope);

/// Residual graph message passing along one neighbor table. Messages carry
/// (dx, dy, similarity) edge attributes and are max-aggregated; nodes without
/// rows (boundary frames) pass through unchanged.
Tensor temporal_mp(const Tensor& feat, const DirectedEdges& edges, const GraphDims& dims, ParamStore& ps,
                   const std::string& prefix, double slope);

/// T-1 rounds of (spatial, forward, spatial, backward); the interaction
/// module Phi for one view.
Tensor interact(const Tensor& feat, const EdgeSet& edges, const GraphDims& dims, ParamStore& ps,
                const std::string& prefix, const InteractionConfig& cfg, InteractStats* stats = nullptr,
                int rounds_override = -1);

/// Register the fusion parameters: two 1x1 conv layers M*d_mf -> c_node -> c_node.
void add_fusion_params(ParamStore& ps, int64_t m_views, int64_t d_mf, int64_t c_node, Rng& rng, DType dtype);

/// Channel concatenation over views followed by the two-layer 1x1 MLP.
/// Views and result are node-major [N x C].
Tensor fuse_views(const std::vector<Tensor>& view_feats, ParamStore& ps, double slope);

}  // namespace mge
