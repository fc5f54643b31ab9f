#include "bbm/genealogy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bbm/centering.hpp"
#include "bbm/engine.hpp"
#include "bbm/errors.hpp"
#include "bbm/rng.hpp"

namespace bbm {

GenealogyIndex::GenealogyIndex(const Population& pop) : pop_(&pop), subtree_end_(pop.size()) {
    const auto parts = pop.particles();
    for (std::size_t i = 0; i < parts.size(); ++i) subtree_end_[i] = i + 1;
    for (std::size_t i = parts.size(); i-- > 1;) {
        const auto parent = static_cast<std::size_t>(parts[i].parent);
        subtree_end_[parent] = std::max(subtree_end_[parent], subtree_end_[i]);
    }
}

LeafRange GenealogyIndex::leaves_below(std::size_t id) const noexcept {
    const auto leaves = pop_->leaves();
    const auto first = std::lower_bound(leaves.begin(), leaves.end(), static_cast<std::uint32_t>(id));
    const auto last = std::lower_bound(first, leaves.end(), static_cast<std::uint32_t>(subtree_end_[id]));
    return {static_cast<std::size_t>(first - leaves.begin()), static_cast<std::size_t>(last - leaves.begin())};
}

void GenealogyIndex::check_leaf(std::size_t id) const {
    if (id >= pop_->size()) throw ValidationError("unknown particle id " + std::to_string(id));
    if (!(*pop_)[id].alive) throw ValidationError("particle " + std::to_string(id) + " is not alive at the horizon");
}

std::size_t GenealogyIndex::leaf_position(std::size_t id) const {
    check_leaf(id);
    const auto leaves = pop_->leaves();
    return static_cast<std::size_t>(
        std::lower_bound(leaves.begin(), leaves.end(), static_cast<std::uint32_t>(id)) - leaves.begin());
}

double GenealogyIndex::distance(std::size_t x, std::size_t y) const {
    check_leaf(x);
    check_leaf(y);
    if (x == y) return 0.0;
    std::size_t a = x;
    while (!is_ancestor_or_self(a, y)) a = static_cast<std::size_t>((*pop_)[a].parent);
    return pop_->horizon() - (*pop_)[a].end_time;
}

LeafRange GenealogyIndex::ball(std::size_t x, double r) const {
    check_leaf(x);
    const double t = pop_->horizon();
    if (!(r >= 0.0 && r <= t)) throw ValidationError("ball radius must lie in [0, t]");
    if (r == 0.0) {
        const std::size_t pos = leaf_position(x);
        return {pos, pos + 1};
    }
    const double cut = t - r;
    std::size_t a = x;
    while ((*pop_)[a].birth_time > cut) a = static_cast<std::size_t>((*pop_)[a].parent);
    return leaves_below(a);
}

std::vector<LeafRange> GenealogyIndex::blocks(double r) const {
    const double t = pop_->horizon();
    if (!(r >= 0.0 && r <= t)) throw ValidationError("radius must lie in [0, t], got " + std::to_string(r));
    std::vector<LeafRange> out;
    if (r == 0.0) {
        out.reserve(pop_->leaf_count());
        for (std::size_t i = 0; i < pop_->leaf_count(); ++i) out.push_back({i, i + 1});
        return out;
    }
    const double cut = t - r;
    const auto parts = pop_->particles();
    std::size_t i = 0;
    while (i < parts.size()) {
        if (parts[i].birth_time <= cut && parts[i].end_time > cut) {
            const LeafRange range = leaves_below(i);
            if (!range.empty()) out.push_back(range);
            i = subtree_end_[i];
        } else {
            ++i;
        }
    }
    return out;
}

std::uint32_t GenealogyIndex::argmax(LeafRange range) const noexcept {
    const auto leaves = pop_->leaves();
    std::uint32_t best = leaves[range.first];
    for (std::size_t k = range.first + 1; k < range.last; ++k)
        if (pop_->height(leaves[k]) > pop_->height(best)) best = leaves[k];
    return best;
}

double genealogical_distance(const Population& pop, std::size_t x, std::size_t y) {
    return GenealogyIndex(pop).distance(x, y);
}

std::vector<std::uint32_t> local_maxima(const GenealogyIndex& index, double r) {
    std::vector<std::uint32_t> out;
    for (const LeafRange& b : index.blocks(r)) out.push_back(index.argmax(b));
    return out;
}

std::vector<std::uint32_t> local_maxima(const Population& pop, double r) { return local_maxima(GenealogyIndex(pop), r); }

PointConfiguration cluster(const GenealogyIndex& index, std::size_t x, double r) {
    const Population& pop = index.population();
    const LeafRange b = index.ball(x, r);
    const double hx = pop.height(static_cast<std::uint32_t>(x));
    std::vector<double> heights;
    heights.reserve(b.size());
    for (std::size_t k = b.first; k < b.last; ++k) heights.push_back(pop.height(pop.leaves()[k]) - hx);
    return PointConfiguration::from_heights(std::move(heights), Reference::relative_to_local_max);
}

PointConfiguration cluster(const Population& pop, std::size_t x, double r) { return cluster(GenealogyIndex(pop), x, r); }

PointConfiguration extremal_process(const Population& pop) {
    const double m = centering(pop.horizon());
    std::vector<double> heights;
    heights.reserve(pop.leaf_count());
    for (std::uint32_t id : pop.leaves()) heights.push_back(pop.height(id) - m);
    return PointConfiguration::from_heights(std::move(heights), Reference::centered);
}

PointConfiguration star_process(const GenealogyIndex& index, double r) {
    const Population& pop = index.population();
    const double m = centering(pop.horizon());
    std::vector<double> heights;
    for (std::uint32_t id : local_maxima(index, r)) heights.push_back(pop.height(id) - m);
    return PointConfiguration::from_heights(std::move(heights), Reference::centered);
}

PointConfiguration star_process(const Population& pop, double r) { return star_process(GenealogyIndex(pop), r); }

LabeledExtremalProcess labeled_extremal_process(const GenealogyIndex& index, double r, double depth) {
    const Population& pop = index.population();
    const double m = centering(pop.horizon());
    LabeledExtremalProcess out;
    out.radius = r;
    for (const LeafRange& b : index.blocks(r)) {
        const std::uint32_t top = index.argmax(b);
        const double h = pop.height(top);
        if (h - m < -depth) continue;
        std::vector<double> rel;
        rel.reserve(b.size());
        for (std::size_t k = b.first; k < b.last; ++k) rel.push_back(pop.height(pop.leaves()[k]) - h);
        out.entries.push_back({h - m, top, PointConfiguration::from_heights(std::move(rel), Reference::relative_to_local_max)});
    }
    return out;
}

std::uint64_t level_set_count(const Population& pop, double v) {
    const double level = centering(pop.horizon()) - v;
    std::uint64_t n = 0;
    for (std::uint32_t id : pop.leaves())
        if (pop.height(id) >= level) ++n;
    return n;
}

namespace {

void check_carrier_args(const Population& pop, double v, double r) {
    if (!(v > 0.0)) throw ValidationError("carrier statistic needs v > 0");
    if (!(r > 0.0 && r < pop.horizon())) throw ValidationError("carrier statistic needs 0 < r < t");
}

}  // namespace

std::vector<double> carrier_heights(const GenealogyIndex& index, double v, double r) {
    const Population& pop = index.population();
    check_carrier_args(pop, v, r);
    const double m = centering(pop.horizon());
    std::vector<double> out;
    for (const LeafRange& b : index.blocks(r)) {
        const double top = pop.height(index.argmax(b)) - m;
        const double stat = (top + v) / v;
        for (std::size_t k = b.first; k < b.last; ++k)
            if (pop.height(pop.leaves()[k]) - m >= -v) out.push_back(stat);
    }
    return out;
}

std::vector<double> carrier_heights(const Population& pop, double v, double r) {
    return carrier_heights(GenealogyIndex(pop), v, r);
}

double alpha_ratio(const GenealogyIndex& index, double v, double alpha, double r) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in (0, 1]");
    std::uint64_t all = 0, carried = 0;
    for (double c : carrier_heights(index, v, r)) {
        ++all;
        // block max >= -alpha v  <=>  (max + v) / v >= 1 - alpha
        if (c >= 1.0 - alpha) ++carried;
    }
    return all ? static_cast<double>(carried) / static_cast<double>(all) : std::numeric_limits<double>::quiet_NaN();
}

double gap12(const Population& pop) {
    if (pop.leaf_count() < 2) throw ValidationError("gap12 needs at least two leaves");
    double top1 = -std::numeric_limits<double>::infinity(), top2 = top1;
    for (std::uint32_t id : pop.leaves()) {
        const double h = pop.height(id);
        if (h > top1) {
            top2 = top1;
            top1 = h;
        } else if (h > top2) {
            top2 = h;
        }
    }
    return top1 - top2;
}

MartingaleEstimate derivative_martingale(const Population& pop, bool acknowledge_bias) {
    if (pop.mode() == Mode::barrier && !acknowledge_bias)
        throw ValidationError(
            "derivative martingale on a pruned population is biased: the barrier removes low particles, "
            "whose summands are the largest; pass the bias acknowledgement flag or use an exact run");
    const double t = pop.horizon();
    MartingaleEstimate est;
    est.horizon = t;
    est.mode = pop.mode();
    est.biased = pop.mode() == Mode::barrier;
    for (std::uint32_t id : pop.leaves()) {
        const double h = pop.height(id);
        est.value += (sqrt2 * t - h) * std::exp(sqrt2 * h - 2.0 * t);
    }
    return est;
}

double SeparationCount::fraction() const noexcept {
    return pairs ? static_cast<double>(inside) / static_cast<double>(pairs) : std::numeric_limits<double>::quiet_NaN();
}

SeparationCount separation_count(const GenealogyIndex& index, double v, double r) {
    const Population& pop = index.population();
    const double t = pop.horizon();
    const double level = centering(t) - v;
    std::vector<std::uint32_t> top;
    for (std::uint32_t id : pop.leaves())
        if (pop.height(id) >= level) top.push_back(id);

    // In pre-order, the MRCA of leaves i < j is the shallowest of the MRCAs
    // of consecutive leaves between them.
    std::vector<double> branch(top.size() > 0 ? top.size() - 1 : 0);
    for (std::size_t k = 0; k + 1 < top.size(); ++k) branch[k] = t - index.distance(top[k], top[k + 1]);

    SeparationCount out;
    for (std::size_t i = 0; i < top.size(); ++i) {
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t j = i + 1; j < top.size(); ++j) {
            b = std::min(b, branch[j - 1]);
            const double d = t - b;
            ++out.pairs;
            if (d >= r && d <= t - r) ++out.inside;
        }
    }
    return out;
}

PairCovariance::PairCovariance(double horizon, std::vector<double> bin_edges)
    : horizon_(horizon), edges_(std::move(bin_edges)) {
    if (edges_.size() < 2 || !std::is_sorted(edges_.begin(), edges_.end()))
        throw ValidationError("covariance bins need at least two increasing edges");
    acc_.resize(edges_.size() - 1);
}

void PairCovariance::Acc::add(double product, double overlap_time) {
    ++n;
    sum += product;
    sum2 += product * product;
    overlap += overlap_time;
}

void PairCovariance::add_population(const Population& pop, std::size_t pairs, std::uint64_t key) {
    if (pop.leaf_count() == 0) return;
    ++populations_;
    const GenealogyIndex index(pop);
    const auto leaves = pop.leaves();
    RngStream rng(key);
    // Pairs from one population are dependent.  Each population therefore
    // enters every bin as a single observation: the mean product of its pairs
    // in that bin, weighted by how many pairs fell there.
    std::vector<Acc> local(acc_.size());
    for (std::size_t k = 0; k < pairs; ++k) {
        const std::uint32_t x = leaves[static_cast<std::size_t>(rng.uniform() * static_cast<double>(leaves.size()))];
        const std::uint32_t y = leaves[static_cast<std::size_t>(rng.uniform() * static_cast<double>(leaves.size()))];
        const double d = index.distance(x, y);
        const auto it = std::upper_bound(edges_.begin(), edges_.end(), d);
        if (it == edges_.begin() || it == edges_.end()) continue;
        const auto bin = static_cast<std::size_t>(it - edges_.begin()) - 1;
        local[bin].add(pop.height(x) * pop.height(y), horizon_ - d);
    }
    for (std::size_t b = 0; b < acc_.size(); ++b) {
        if (local[b].n == 0) continue;
        const double mean = local[b].sum / static_cast<double>(local[b].n);
        acc_[b].add(mean, local[b].overlap / static_cast<double>(local[b].n));
    }
}

void PairCovariance::add_independent(double hx, double hy) { independent_.add(hx * hy, 0.0); }

namespace {

PairCovariance::Bin summarize(double lo, double hi, std::uint64_t n, double sum, double sum2, double overlap) {
    PairCovariance::Bin b;
    b.lo = lo;
    b.hi = hi;
    b.n = n;
    if (n == 0) return b;
    const double dn = static_cast<double>(n);
    b.mean_product = sum / dn;
    const double var = n > 1 ? std::max(0.0, (sum2 - dn * b.mean_product * b.mean_product) / (dn - 1.0)) : 0.0;
    b.stderr_product = std::sqrt(var / dn);
    b.expected = overlap / dn;
    return b;
}

}  // namespace

bool PairCovariance::Bin::within(double z) const noexcept {
    return n > 1 && std::abs(mean_product - expected) <= z * stderr_product;
}

std::vector<PairCovariance::Bin> PairCovariance::bins() const {
    std::vector<Bin> out;
    for (std::size_t b = 0; b < acc_.size(); ++b)
        out.push_back(summarize(edges_[b], edges_[b + 1], acc_[b].n, acc_[b].sum, acc_[b].sum2, acc_[b].overlap));
    return out;
}

PairCovariance::Bin PairCovariance::independent() const {
    return summarize(0.0, 0.0, independent_.n, independent_.sum, independent_.sum2, independent_.overlap);
}

CovarianceReport pairwise_covariance_check(double t, std::uint64_t seed, std::uint64_t replicas, std::size_t pair_count,
                                           std::vector<double> bin_edges, std::uint64_t min_replicas) {
    if (replicas < min_replicas)
        throw ValidationError("covariance check needs at least " + std::to_string(min_replicas) + " replicas, got " +
                              std::to_string(replicas));
    PairCovariance cov(t, std::move(bin_edges));
    SimConfig cfg;
    cfg.horizon = t;
    cfg.seed = seed;
    double previous_leaf = 0.0;
    for (std::uint64_t r = 0; r < replicas; ++r) {
        cfg.replica = r;
        const Population pop = simulate_exact(cfg);
        cov.add_population(pop, pair_count, derive_key(replica_key(seed, r), 0x9a17));
        // Independent pair: first leaf of this replica against the first leaf
        // of the previous one, using disjoint replicas for each product.
        const double first_leaf = pop.height(pop.leaves().front());
        if (r % 2 == 1) cov.add_independent(previous_leaf, first_leaf);
        previous_leaf = first_leaf;
    }
    CovarianceReport rep;
    rep.bins = cov.bins();
    rep.independent = cov.independent();
    rep.pass = rep.independent.within(3.0);
    for (const auto& b : rep.bins)
        if (b.n > 1 && !b.within(3.0)) rep.pass = false;
    return rep;
}

}  // namespace bbm
