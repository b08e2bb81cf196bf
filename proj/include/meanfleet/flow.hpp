#pragma once

#include <cstdint>
#include <limits>
#include <vector>

namespace mf {

// Directed arc network for exact min-cost flow. Capacities are integer
// units (callers scale real masses); costs are nonnegative reals.
class FlowNetwork {
  public:
    explicit FlowNetwork(int n_nodes) : n_(n_nodes), head_(static_cast<size_t>(n_nodes), -1) {}

    int n_nodes() const { return n_; }
    int n_arcs() const { return static_cast<int>(to_.size()) / 2; }

    // Returns the arc id used to query flow later.
    int add_arc(int from, int to, std::int64_t capacity, double cost);

    std::int64_t flow(int arc_id) const;
    int arc_from(int arc_id) const { return from_[static_cast<size_t>(2 * arc_id)]; }
    int arc_to(int arc_id) const { return to_[static_cast<size_t>(2 * arc_id)]; }

    struct Result {
        std::int64_t flow_value = 0;
        double cost = 0.0;
    };

    // Successive shortest augmenting paths with Dijkstra and node potentials.
    // Sends up to max_flow units (all that fit if max_flow is int64 max).
    // Requires nonnegative arc costs.
    Result solve(int source, int sink,
                 std::int64_t max_flow = std::numeric_limits<std::int64_t>::max());

    // Net outflow balance of a node under the current flows (for invariant
    // checks): sum of arc flows out minus sum of arc flows in.
    std::int64_t node_balance(int node) const;

  private:
    int n_;
    std::vector<int> head_;           // per node, first residual arc
    std::vector<int> next_;           // residual arc chain
    std::vector<int> to_;             // residual arcs, 2 per input arc
    std::vector<int> from_;
    std::vector<std::int64_t> cap_;   // residual capacity
    std::vector<double> cost_;
};

}  // namespace mf
