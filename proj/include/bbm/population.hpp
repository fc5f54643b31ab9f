#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace bbm {

enum class Mode : std::uint8_t { exact = 0, barrier = 1 };

const char* to_string(Mode mode) noexcept;

/// One particle of a realization.  A particle lives on [birth_time, end_time];
/// internal particles end at their branch time, leaves at the horizon.
struct Particle {
    std::int64_t parent = -1;  ///< index of the parent, -1 for the root
    double birth_time = 0.0;
    double birth_pos = 0.0;
    double end_time = 0.0;
    double end_pos = 0.0;
    bool alive = false;  ///< alive at the horizon (a leaf)
};

/// Arena-stored genealogy of one realization, in depth-first pre-order:
/// every particle precedes its descendants and each subtree occupies a
/// contiguous index range.  Immutable after construction.
class Population {
public:
    Population() = default;
    Population(double horizon, Mode mode, double slack, std::uint64_t pruned_count,
               std::vector<Particle> particles);

    double horizon() const noexcept { return horizon_; }
    Mode mode() const noexcept { return mode_; }
    double slack() const noexcept { return slack_; }
    std::uint64_t pruned_count() const noexcept { return pruned_count_; }

    std::size_t size() const noexcept { return particles_.size(); }
    bool empty() const noexcept { return particles_.empty(); }
    const Particle& operator[](std::size_t id) const noexcept { return particles_[id]; }
    std::span<const Particle> particles() const noexcept { return particles_; }

    /// Indices of particles alive at the horizon, in pre-order.
    std::span<const std::uint32_t> leaves() const noexcept { return leaves_; }
    std::size_t leaf_count() const noexcept { return leaves_.size(); }
    double height(std::uint32_t id) const noexcept { return particles_[id].end_pos; }

    /// Checks structural invariants (pre-order, binary splitting, time and
    /// position continuity along lineages).  Throws ValidationError.
    void validate() const;

private:
    double horizon_ = 0.0;
    Mode mode_ = Mode::exact;
    double slack_ = 0.0;
    std::uint64_t pruned_count_ = 0;
    std::vector<Particle> particles_;
    std::vector<std::uint32_t> leaves_;
};

}  // namespace bbm
