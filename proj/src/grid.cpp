#include "collapsim/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "collapsim/error.hpp"

namespace collapsim {

TimeGrid::TimeGrid(double t0, double t1, std::size_t steps)
    : t0_(t0), t1_(t1), steps_(steps), dt_(0.0) {
    if (!std::isfinite(t0) || !std::isfinite(t1) || !(t1 > t0)) {
        throw Error(ErrorCode::Validation, "time grid requires finite t1 > t0");
    }
    if (steps == 0) {
        throw Error(ErrorCode::Validation, "time grid requires at least one step");
    }
    dt_ = (t1 - t0) / static_cast<double>(steps);
}

std::size_t TimeGrid::nearest_node(double t) const {
    const double slack = 1e-9 * dt_;
    if (!(t >= t0_ - slack && t <= t1_ + slack)) {
        throw Error(ErrorCode::OutOfRange, "time " + std::to_string(t) + " outside grid");
    }
    const double k = std::round((t - t0_) / dt_);
    return std::min(steps_, static_cast<std::size_t>(std::max(0.0, k)));
}

Checkpoints evenly_spaced(const TimeGrid& grid, std::size_t count) {
    if (count < 2) {
        return {grid.steps()};
    }
    Checkpoints out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(count - 1);
        out.push_back(static_cast<std::size_t>(std::llround(frac * static_cast<double>(grid.steps()))));
    }
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

Checkpoints all_nodes(const TimeGrid& grid) {
    Checkpoints out(grid.num_nodes());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = k;
    }
    return out;
}

} // namespace collapsim
