#pragma once

// Genealogical queries on a Population: distances, r-balls, local maxima,
// clusters and the statistics built from them.
//
// Everything here leans on the pre-order layout.  The leaves below any
// particle form a contiguous run of Population::leaves(), and the ball
// B_r(x) = {y : d(x, y) < r} is exactly the set of leaves below the ancestor
// of x alive at time t - r.  For r > 0 these "cut" ancestors partition the
// leaves, and each block has exactly one r-local maximum.

#include <cstdint>
#include <span>
#include <vector>

#include "bbm/point_config.hpp"
#include "bbm/population.hpp"

namespace bbm {

/// Half-open range [first, last) of positions in Population::leaves().
struct LeafRange {
    std::size_t first = 0;
    std::size_t last = 0;
    std::size_t size() const noexcept { return last - first; }
    bool empty() const noexcept { return first == last; }
};

/// Precomputed subtree extents for repeated genealogical queries.
class GenealogyIndex {
public:
    explicit GenealogyIndex(const Population& pop);

    const Population& population() const noexcept { return *pop_; }

    /// One past the last pre-order index in the subtree of `id`.
    std::size_t subtree_end(std::size_t id) const noexcept { return subtree_end_[id]; }
    bool is_ancestor_or_self(std::size_t a, std::size_t id) const noexcept {
        return a <= id && id < subtree_end_[a];
    }
    LeafRange leaves_below(std::size_t id) const noexcept;
    /// Position of leaf `id` in Population::leaves(); throws if `id` is not a leaf.
    std::size_t leaf_position(std::size_t id) const;

    /// t - (branch time of the most recent common ancestor); 0 when x == y.
    double distance(std::size_t x, std::size_t y) const;

    /// Leaves of B_r(x) (always contains x).
    LeafRange ball(std::size_t x, double r) const;

    /// Partition of the leaves into r-blocks.  For r = 0 every leaf is its
    /// own block.  Blocks with no surviving leaves are omitted.
    std::vector<LeafRange> blocks(double r) const;

    /// Leaf id of the highest leaf in a range; ties go to the lowest id.
    std::uint32_t argmax(LeafRange range) const noexcept;

private:
    void check_leaf(std::size_t id) const;

    const Population* pop_;
    std::vector<std::size_t> subtree_end_;
};

double genealogical_distance(const Population& pop, std::size_t x, std::size_t y);

/// r-local maxima in pre-order.  Requires 0 <= r <= t.
std::vector<std::uint32_t> local_maxima(const Population& pop, double r);
std::vector<std::uint32_t> local_maxima(const GenealogyIndex& index, double r);

/// Heights h(y) - h(x) over y in B_r(x), relative to the local max frame.
PointConfiguration cluster(const Population& pop, std::size_t x, double r);
PointConfiguration cluster(const GenealogyIndex& index, std::size_t x, double r);

/// Centered heights h(x) - m(t) of all leaves.
PointConfiguration extremal_process(const Population& pop);
/// Centered heights of the r-local maxima.
PointConfiguration star_process(const Population& pop, double r);
PointConfiguration star_process(const GenealogyIndex& index, double r);

struct LabeledEntry {
    double height = 0.0;  ///< centered height of the local maximum
    std::uint32_t leaf = 0;
    PointConfiguration cluster{Reference::relative_to_local_max};
};

/// Local maxima together with their clusters (the generalized extremal process).
struct LabeledExtremalProcess {
    double radius = 0.0;
    std::vector<LabeledEntry> entries;
};

/// Entries are restricted to local maxima with centered height >= -depth
/// (pass +inf for all of them).
LabeledExtremalProcess labeled_extremal_process(const GenealogyIndex& index, double r, double depth);

/// #{x : h(x) - m(t) >= -v}.
std::uint64_t level_set_count(const Population& pop, double v);

/// For every leaf x with centered height >= -v, (h^(Y) + v) / v where Y is
/// the highest leaf of B_r(x).  Leaves in pre-order.  Requires v > 0 and
/// 0 < r < t.
std::vector<double> carrier_heights(const Population& pop, double v, double r);
std::vector<double> carrier_heights(const GenealogyIndex& index, double v, double r);

/// Fraction of level-set points (centered height >= -v) whose r-block
/// maximum is at least -alpha v.
double alpha_ratio(const GenealogyIndex& index, double v, double alpha, double r);

/// Top-two gap over distinct leaves; throws ValidationError with < 2 leaves.
double gap12(const Population& pop);

struct MartingaleEstimate {
    double value = 0.0;
    double horizon = 0.0;
    Mode mode = Mode::exact;
    bool biased = false;  ///< computed on a pruned population
};

/// Z_t = sum (sqrt2 t - h) e^{sqrt2 h - 2t}.  Pruned populations are refused
/// unless `acknowledge_bias` is set.
MartingaleEstimate derivative_martingale(const Population& pop, bool acknowledge_bias = false);

/// Among pairs of distinct leaves with centered height >= -v, the fraction
/// whose genealogical distance lies in [r, t - r].  NaN with fewer than two
/// such leaves.
struct SeparationCount {
    std::uint64_t pairs = 0;
    std::uint64_t inside = 0;
    double fraction() const noexcept;
};
SeparationCount separation_count(const GenealogyIndex& index, double v, double r);

/// Accumulates leaf-pair products binned by genealogical distance.  Leaf
/// heights have mean zero, so the binned mean of h(x) h(y) estimates
/// Cov(h(x), h(y) | d).
class PairCovariance {
public:
    PairCovariance(double horizon, std::vector<double> bin_edges);

    /// Adds `pairs` leaf pairs drawn from `pop` with the keyed stream `key`.
    /// Pairs are drawn uniformly among ordered pairs of leaves, with x = y
    /// allowed, so every distance bin including d = 0 is populated.
    void add_population(const Population& pop, std::size_t pairs, std::uint64_t key);
    /// Adds the product of the heights of two leaves from independent populations.
    void add_independent(double hx, double hy);

    struct Bin {
        double lo = 0.0, hi = 0.0;
        std::uint64_t n = 0;
        double mean_product = 0.0;
        double stderr_product = 0.0;
        double expected = 0.0;  ///< mean of t - d over the pairs in the bin
        bool within(double z) const noexcept;
    };
    std::vector<Bin> bins() const;
    Bin independent() const;

    std::uint64_t populations() const noexcept { return populations_; }

private:
    struct Acc {
        std::uint64_t n = 0;
        double sum = 0.0, sum2 = 0.0, overlap = 0.0;
        void add(double product, double overlap_time);
    };
    double horizon_;
    std::vector<double> edges_;
    std::vector<Acc> acc_;
    Acc independent_;
    std::uint64_t populations_ = 0;
};

struct CovarianceReport {
    std::vector<PairCovariance::Bin> bins;
    PairCovariance::Bin independent;
    bool pass = false;
};

/// Runs the covariance check over `replicas` exact populations.  Throws
/// ValidationError when `replicas` is below `min_replicas`.
CovarianceReport pairwise_covariance_check(double t, std::uint64_t seed, std::uint64_t replicas, std::size_t pair_count,
                                           std::vector<double> bin_edges, std::uint64_t min_replicas = 100);

}  // namespace bbm
