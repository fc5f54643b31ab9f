#include "bbm/point_config.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "bbm/errors.hpp"

namespace bbm {

const char* to_string(Reference ref) noexcept {
    switch (ref) {
        case Reference::absolute: return "absolute";
        case Reference::centered: return "centered";
        case Reference::relative_to_local_max: return "relative_to_local_max";
    }
    return "unknown";
}

PointConfiguration PointConfiguration::from_heights(std::vector<double> heights, Reference ref) {
    std::sort(heights.begin(), heights.end(), std::greater<>());
    PointConfiguration pc(ref);
    for (double h : heights) {
        if (!pc.atoms_.empty() && pc.atoms_.back().height == h)
            ++pc.atoms_.back().multiplicity;
        else
            pc.atoms_.push_back({h, 1});
    }
    pc.total_ = heights.size();
    return pc;
}

double PointConfiguration::top() const {
    if (atoms_.empty()) throw ValidationError("empty point configuration has no top atom");
    return atoms_.front().height;
}

namespace {

// Atoms are sorted descending.  Number of atoms strictly above x.
std::size_t above(std::span<const Atom> atoms, double x) {
    return static_cast<std::size_t>(
        std::partition_point(atoms.begin(), atoms.end(), [x](const Atom& a) { return a.height > x; }) - atoms.begin());
}

// Number of atoms at or above x.
std::size_t at_or_above(std::span<const Atom> atoms, double x) {
    return static_cast<std::size_t>(
        std::partition_point(atoms.begin(), atoms.end(), [x](const Atom& a) { return a.height >= x; }) - atoms.begin());
}

std::uint64_t mass(std::span<const Atom> atoms, std::size_t from, std::size_t to) {
    std::uint64_t n = 0;
    for (std::size_t i = from; i < to; ++i) n += atoms[i].multiplicity;
    return n;
}

}  // namespace

std::uint64_t PointConfiguration::count_closed(double lo, double hi) const noexcept {
    if (!(lo <= hi)) return 0;
    return mass(atoms_, above(atoms_, hi), at_or_above(atoms_, lo));
}

std::uint64_t PointConfiguration::count_half_open(double lo, double hi) const noexcept {
    if (!(lo < hi)) return 0;
    return mass(atoms_, at_or_above(atoms_, hi), at_or_above(atoms_, lo));
}

std::uint64_t PointConfiguration::count_at_least(double lo) const noexcept {
    return mass(atoms_, 0, at_or_above(atoms_, lo));
}

std::uint64_t PointConfiguration::count_at(double h) const noexcept {
    return mass(atoms_, above(atoms_, h), at_or_above(atoms_, h));
}

void PointConfiguration::add(double height, std::uint64_t multiplicity) {
    if (multiplicity == 0) return;
    const std::size_t pos = above(atoms_, height);
    if (pos < atoms_.size() && atoms_[pos].height == height)
        atoms_[pos].multiplicity += multiplicity;
    else
        atoms_.insert(atoms_.begin() + static_cast<std::ptrdiff_t>(pos), Atom{height, multiplicity});
    total_ += multiplicity;
}

void PointConfiguration::merge_shifted(const PointConfiguration& other, double shift) {
    std::vector<Atom> merged;
    merged.reserve(atoms_.size() + other.atoms_.size());
    std::size_t i = 0, j = 0;
    while (i < atoms_.size() || j < other.atoms_.size()) {
        Atom next;
        if (j == other.atoms_.size() || (i < atoms_.size() && atoms_[i].height >= other.atoms_[j].height + shift)) {
            next = atoms_[i++];
        } else {
            next = {other.atoms_[j].height + shift, other.atoms_[j].multiplicity};
            ++j;
        }
        if (!merged.empty() && merged.back().height == next.height)
            merged.back().multiplicity += next.multiplicity;
        else
            merged.push_back(next);
    }
    atoms_ = std::move(merged);
    total_ += other.total_;
}

void PointConfiguration::validate() const {
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
        if (!std::isfinite(atoms_[i].height)) throw ValidationError("point configuration has a non-finite atom");
        if (atoms_[i].multiplicity == 0) throw ValidationError("point configuration has a zero multiplicity");
        if (i > 0 && !(atoms_[i - 1].height > atoms_[i].height))
            throw ValidationError("point configuration atoms are not strictly decreasing");
        n += atoms_[i].multiplicity;
    }
    if (n != total_) throw ValidationError("point configuration total does not match its atoms");
}

}  // namespace bbm
