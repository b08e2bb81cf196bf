#include "meanfleet/flow.hpp"

#include <cmath>
#include <queue>
#include <stdexcept>

namespace mf {

int FlowNetwork::add_arc(int from, int to, std::int64_t capacity, double cost) {
    if (from < 0 || from >= n_ || to < 0 || to >= n_)
        throw std::out_of_range("FlowNetwork::add_arc: node out of range");
    if (capacity < 0) throw std::invalid_argument("FlowNetwork::add_arc: negative capacity");
    if (cost < 0.0) throw std::invalid_argument("FlowNetwork::add_arc: negative cost");
    const int id = static_cast<int>(to_.size());
    // forward
    to_.push_back(to);
    from_.push_back(from);
    cap_.push_back(capacity);
    cost_.push_back(cost);
    next_.push_back(head_[static_cast<size_t>(from)]);
    head_[static_cast<size_t>(from)] = id;
    // reverse
    to_.push_back(from);
    from_.push_back(to);
    cap_.push_back(0);
    cost_.push_back(-cost);
    next_.push_back(head_[static_cast<size_t>(to)]);
    head_[static_cast<size_t>(to)] = id + 1;
    return id / 2;
}

std::int64_t FlowNetwork::flow(int arc_id) const {
    return cap_[static_cast<size_t>(2 * arc_id + 1)];
}

std::int64_t FlowNetwork::node_balance(int node) const {
    std::int64_t bal = 0;
    for (int a = 0; a < n_arcs(); ++a) {
        if (arc_from(a) == node) bal += flow(a);
        if (arc_to(a) == node) bal -= flow(a);
    }
    return bal;
}

FlowNetwork::Result FlowNetwork::solve(int source, int sink, std::int64_t max_flow) {
    Result res;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> potential(static_cast<size_t>(n_), 0.0);
    std::vector<double> dist(static_cast<size_t>(n_));
    std::vector<int> parent_arc(static_cast<size_t>(n_));
    using Item = std::pair<double, int>;

    while (res.flow_value < max_flow) {
        std::fill(dist.begin(), dist.end(), inf);
        std::fill(parent_arc.begin(), parent_arc.end(), -1);
        dist[static_cast<size_t>(source)] = 0.0;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
        heap.emplace(0.0, source);
        while (!heap.empty()) {
            auto [d, u] = heap.top();
            heap.pop();
            if (d > dist[static_cast<size_t>(u)]) continue;
            for (int a = head_[static_cast<size_t>(u)]; a != -1; a = next_[static_cast<size_t>(a)]) {
                if (cap_[static_cast<size_t>(a)] <= 0) continue;
                const int v = to_[static_cast<size_t>(a)];
                const double rc = cost_[static_cast<size_t>(a)] + potential[static_cast<size_t>(u)] -
                                  potential[static_cast<size_t>(v)];
                // Reduced costs stay >= 0 up to rounding; clip the dust.
                const double nd = d + (rc > 0.0 ? rc : 0.0);
                if (nd < dist[static_cast<size_t>(v)] - 1e-15) {
                    dist[static_cast<size_t>(v)] = nd;
                    parent_arc[static_cast<size_t>(v)] = a;
                    heap.emplace(nd, v);
                }
            }
        }
        if (parent_arc[static_cast<size_t>(sink)] == -1) break;  // no augmenting path

        for (int v = 0; v < n_; ++v)
            if (dist[static_cast<size_t>(v)] < inf) potential[static_cast<size_t>(v)] += dist[static_cast<size_t>(v)];

        std::int64_t push = max_flow - res.flow_value;
        for (int v = sink; v != source;) {
            const int a = parent_arc[static_cast<size_t>(v)];
            push = std::min(push, cap_[static_cast<size_t>(a)]);
            v = from_[static_cast<size_t>(a)];
        }
        for (int v = sink; v != source;) {
            const int a = parent_arc[static_cast<size_t>(v)];
            cap_[static_cast<size_t>(a)] -= push;
            cap_[static_cast<size_t>(a ^ 1)] += push;
            res.cost += push * cost_[static_cast<size_t>(a)];
            v = from_[static_cast<size_t>(a)];
        }
        res.flow_value += push;
    }
    return res;
}

}  // namespace mf
