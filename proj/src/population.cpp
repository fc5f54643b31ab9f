#include "bbm/population.hpp"

#include <string>
#include <utility>

#include "bbm/errors.hpp"

namespace bbm {

const char* to_string(Mode mode) noexcept {
    switch (mode) {
        case Mode::exact: return "exact";
        case Mode::barrier: return "barrier";
    }
    return "unknown";
}

Population::Population(double horizon, Mode mode, double slack, std::uint64_t pruned_count,
                       std::vector<Particle> particles)
    : horizon_(horizon), mode_(mode), slack_(slack), pruned_count_(pruned_count),
      particles_(std::move(particles)) {
    for (std::size_t i = 0; i < particles_.size(); ++i)
        if (particles_[i].alive) leaves_.push_back(static_cast<std::uint32_t>(i));
}

namespace {

[[noreturn]] void fail(std::size_t id, const std::string& what) {
    throw ValidationError("population invariant violated at particle " + std::to_string(id) + ": " + what);
}

}  // namespace

void Population::validate() const {
    if (mode_ == Mode::exact && pruned_count_ != 0) throw ValidationError("exact population with pruned subtrees");
    if (particles_.empty()) return;

    std::vector<int> children(particles_.size(), 0);
    std::vector<std::size_t> path;  // ancestors of the current particle
    for (std::size_t i = 0; i < particles_.size(); ++i) {
        const Particle& p = particles_[i];
        if (p.end_time < p.birth_time) fail(i, "ends before it is born");
        if (p.end_time > horizon_) fail(i, "outlives the horizon");
        if (p.alive && p.end_time != horizon_) fail(i, "alive particle does not end at the horizon");
        if (i == 0) {
            if (p.parent != -1 || p.birth_time != 0.0 || p.birth_pos != 0.0) fail(i, "malformed root");
            path.push_back(0);
            continue;
        }
        if (p.parent < 0 || static_cast<std::size_t>(p.parent) >= i) fail(i, "parent does not precede child");
        const auto parent = static_cast<std::size_t>(p.parent);
        while (!path.empty() && path.back() != parent) path.pop_back();
        if (path.empty()) fail(i, "not in depth-first pre-order");
        const Particle& q = particles_[parent];
        if (q.alive) fail(i, "parent is a leaf");
        if (p.birth_time != q.end_time) fail(i, "birth time differs from parent's branch time");
        if (p.birth_pos != q.end_pos) fail(i, "birth position differs from parent's final position");
        if (++children[parent] > 2) fail(parent, "more than two children");
        path.push_back(i);
    }
    if (mode_ == Mode::exact) {
        for (std::size_t i = 0; i < particles_.size(); ++i)
            if (!particles_[i].alive && children[i] != 2) fail(i, "internal particle without two children");
    }
}

}  // namespace bbm
