// Uniform time grid and checkpoint schedules.
#pragma once

#include <cstddef>
#include <vector>

namespace collapsim {

/// Nodes t_k = t0 + k*dt, k = 0..steps, dt = (t1 - t0) / steps.
class TimeGrid {
public:
    TimeGrid(double t0, double t1, std::size_t steps);

    double t0() const noexcept { return t0_; }
    double t1() const noexcept { return t1_; }
    std::size_t steps() const noexcept { return steps_; }
    std::size_t num_nodes() const noexcept { return steps_ + 1; }
    double dt() const noexcept { return dt_; }
    double node(std::size_t k) const noexcept {
        return k == steps_ ? t1_ : t0_ + static_cast<double>(k) * dt_;
    }

    /// Index of the node closest to t; throws OutOfRange if t lies outside [t0, t1].
    std::size_t nearest_node(double t) const;

private:
    double t0_;
    double t1_;
    std::size_t steps_;
    double dt_;
};

/// Sorted unique node indices at which trajectories are recorded.
using Checkpoints = std::vector<std::size_t>;

/// `count` nodes spread evenly over [t0, t1], both ends included.
Checkpoints evenly_spaced(const TimeGrid& grid, std::size_t count = 50);

/// Every node of the grid.
Checkpoints all_nodes(const TimeGrid& grid);

} // namespace collapsim
