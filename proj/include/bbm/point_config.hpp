#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace bbm {

/// Frame in which the atoms of a configuration are expressed.
enum class Reference : std::uint8_t {
    absolute = 0,
    centered = 1,             ///< shifted by -m(t)
    relative_to_local_max = 2 ///< shifted so the cluster's own particle sits at 0
};

const char* to_string(Reference ref) noexcept;

struct Atom {
    double height = 0.0;
    std::uint64_t multiplicity = 1;
};

/// Finite point measure on the line, stored as atoms sorted by decreasing
/// height with equal heights merged.
class PointConfiguration {
public:
    explicit PointConfiguration(Reference ref = Reference::absolute) : ref_(ref) {}

    static PointConfiguration from_heights(std::vector<double> heights, Reference ref);

    Reference reference() const noexcept { return ref_; }
    std::span<const Atom> atoms() const noexcept { return atoms_; }
    bool empty() const noexcept { return atoms_.empty(); }
    std::uint64_t total() const noexcept { return total_; }

    /// Height of the highest atom; throws ValidationError when empty.
    double top() const;

    /// Number of points in [lo, hi].
    std::uint64_t count_closed(double lo, double hi) const noexcept;
    /// Number of points in [lo, hi).
    std::uint64_t count_half_open(double lo, double hi) const noexcept;
    /// Number of points in [lo, +inf).
    std::uint64_t count_at_least(double lo) const noexcept;
    /// Multiplicity of the atom at exactly `h` (0 when absent).
    std::uint64_t count_at(double h) const noexcept;

    /// Adds every atom of `other` shifted by `shift`.  Keeps this reference.
    void merge_shifted(const PointConfiguration& other, double shift);
    void add(double height, std::uint64_t multiplicity = 1);

    /// Sorted, merged and positive multiplicities; throws ValidationError.
    void validate() const;

    bool operator==(const PointConfiguration&) const = default;

private:
    Reference ref_;
    std::vector<Atom> atoms_;
    std::uint64_t total_ = 0;
};

inline bool operator==(const Atom& a, const Atom& b) noexcept {
    return a.height == b.height && a.multiplicity == b.multiplicity;
}

}  // namespace bbm
