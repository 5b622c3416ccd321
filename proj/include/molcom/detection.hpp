#pragma once

// Threshold detector on the receptor count: Poisson ISI mean, conditional
// bit error and the expected frame error averaged over bit sequences and
// transceiver distance trajectories.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "molcom/channel.hpp"
#include "molcom/error.hpp"
#include "molcom/mobility.hpp"
#include "molcom/parallel.hpp"
#include "molcom/random.hpp"
#include "molcom/specfun.hpp"

namespace molcom {

struct BitSequence {
    std::vector<int> bits;
};

struct DetectorConfig {
    std::int64_t threshold = 1;
};

enum class BitTreatment { automatic, enumerated, sampled };

inline const char* to_string(BitTreatment b)
{
    switch (b) {
    case BitTreatment::enumerated: return "enumerated";
    case BitTreatment::sampled: return "sampled";
    default: return "automatic";
    }
}

/// Distribution of the receptor count given its mean. The binomial law is
/// the exact superposition of N_A-trial binomials per release.
enum class CountLaw { poisson, binomial };

struct MonteCarloConfig {
    std::int64_t num_trajectories = 10000;
    BitTreatment bit_treatment = BitTreatment::automatic;
    /// Bit sequences drawn per trajectory when sampling.
    int sequences_per_trajectory = 256;
    std::uint64_t seed = 1;
    int workers = 1;
};

struct BerEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::int64_t num_trajectories = 0;
    BitTreatment bit_treatment = BitTreatment::enumerated;
};

/// Largest frame length handled by exhaustive enumeration by default.
inline constexpr int max_enumerated_length = 12;

/// Random-stream domains below the master seed.
namespace stream_domain {
inline constexpr std::uint64_t trajectory = 1;
inline constexpr std::uint64_t bits = 2;
}  // namespace stream_domain

/// lags[i][m] = P_AC(m T + t_s | r_i): release i + 1 observed m intervals later.
using LagMatrix = std::vector<std::vector<double>>;

inline LagMatrix lag_matrix(const Trajectory& traj, const PhysicalParams& p, const DerivedParams& d)
{
    const auto L = static_cast<std::size_t>(p.seq_length);
    if (traj.distances.size() != L)
        throw InvalidArgument("lag_matrix: trajectory has " + std::to_string(traj.distances.size()) +
                              " boundaries, expected " + std::to_string(L));
    LagMatrix lags(L);
    for (std::size_t i = 0; i < L; ++i) {
        lags[i].resize(L - i);
        for (std::size_t m = 0; m < L - i; ++m)
            lags[i][m] = cir(static_cast<double>(m) * p.bit_interval + p.sample_offset, traj.distances[i], d, p);
    }
    return lags;
}

namespace detail {

inline void check_frame(int j, const BitSequence& b, const Trajectory& traj, const PhysicalParams& p)
{
    const auto L = static_cast<std::size_t>(p.seq_length);
    if (b.bits.size() != L) throw InvalidArgument("bit sequence length does not match seq_length");
    if (traj.distances.size() != L) throw InvalidArgument("trajectory length does not match seq_length");
    if (j < 1 || j > p.seq_length) throw InvalidArgument("bit index out of range: " + std::to_string(j));
    for (int v : b.bits)
        if (v != 0 && v != 1) throw InvalidArgument("bits must be 0 or 1");
}

/// Per-release hit probabilities contributing to bit j (1-based), zero for silent releases.
inline std::vector<double> release_probabilities(int j, const BitSequence& b, const Trajectory& traj,
                                                 const PhysicalParams& p, const DerivedParams& d)
{
    std::vector<double> probs;
    for (int i = 1; i <= j; ++i)
        if (b.bits[static_cast<std::size_t>(i - 1)])
            probs.push_back(cir(static_cast<double>(j - i) * p.bit_interval + p.sample_offset,
                                traj.distances[static_cast<std::size_t>(i - 1)], d, p));
    return probs;
}

/// Pr(N < xi) for N the sum of independent Binomial(n, q_i).
inline double binomial_sum_cdf_below(const std::vector<double>& probs, std::int64_t n, std::int64_t xi)
{
    if (xi <= 0) return 0.0;
    const auto width = static_cast<std::size_t>(xi);
    std::vector<double> dist(width, 0.0), next(width), single(width);
    dist[0] = 1.0;
    for (double q : probs) {
        // Binomial pmf truncated below xi.
        std::fill(single.begin(), single.end(), 0.0);
        for (std::int64_t k = 0; k < std::min<std::int64_t>(xi, n + 1); ++k)
            single[static_cast<std::size_t>(k)] =
                std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(static_cast<double>(n - k) + 1.0) +
                         (k > 0 ? k * std::log(q) : 0.0) + (n > k ? (n - k) * std::log1p(-q) : 0.0));
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t a = 0; a < width; ++a)
            for (std::size_t c = 0; a + c < width; ++c) next[a + c] += dist[a] * single[c];
        dist.swap(next);
    }
    double sum = 0.0;
    for (double v : dist) sum += v;
    return std::min(sum, 1.0);
}

/// Pr(N < xi) for every threshold in `sorted`, N ~ Poisson(mean). The CDF is
/// accumulated along the pmf recurrence where exp(-mean) is representable.
inline void poisson_cdf_ladder(double mean, const std::vector<std::int64_t>& sorted, std::vector<double>& out)
{
    out.resize(sorted.size());
    if (mean > 600.0) {
        for (std::size_t k = 0; k < sorted.size(); ++k) out[k] = specfun::poisson_cdf_below(mean, sorted[k]);
        return;
    }
    double pmf = std::exp(-mean), below = 0.0;
    std::int64_t n = 0;
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        for (; n < sorted[k]; ++n) {
            below += pmf;
            pmf *= mean / static_cast<double>(n + 1);
        }
        out[k] = std::min(below, 1.0);
    }
}

}  // namespace detail

/// Expected receptor count at the sampling instant of bit j (1-based).
inline double poisson_mean_isi(int j, const BitSequence& b, const Trajectory& traj, const PhysicalParams& p,
                               const DerivedParams& d)
{
    detail::check_frame(j, b, traj, p);
    double sum = 0.0;
    for (double q : detail::release_probabilities(j, b, traj, p, d)) sum += q;
    return static_cast<double>(p.num_molecules) * sum;
}

/// Error probability of bit j under threshold xi: decide 1 iff N_C >= xi.
inline double conditional_bit_error(int j, const BitSequence& b, const Trajectory& traj, std::int64_t xi,
                                    const PhysicalParams& p, const DerivedParams& d, CountLaw law = CountLaw::poisson)
{
    if (xi < 0) throw InvalidArgument("conditional_bit_error: threshold must be non-negative");
    detail::check_frame(j, b, traj, p);
    const double below =
        law == CountLaw::poisson
            ? specfun::poisson_cdf_below(poisson_mean_isi(j, b, traj, p, d), xi)
            : detail::binomial_sum_cdf_below(detail::release_probabilities(j, b, traj, p, d), p.num_molecules, xi);
    return b.bits[static_cast<std::size_t>(j - 1)] ? below : 1.0 - below;
}

/// A trajectory with its probability in an exactly enumerated ensemble.
struct WeightedTrajectory {
    Trajectory trajectory;
    double weight = 1.0;
};

/// Frame-averaged error (1/L) sum_j E_b[P_e(b_j)] for one trajectory, one
/// entry per threshold. Enumeration walks bit prefixes depth-first: the
/// error of bit j depends on b_1..b_j only, and later bits sum out.
inline std::vector<double> frame_error_enumerated(const LagMatrix& lags, const PhysicalParams& p,
                                                  const std::vector<std::int64_t>& thresholds)
{
    const int L = p.seq_length;
    const double na = static_cast<double>(p.num_molecules);
    std::vector<double> acc(thresholds.size(), 0.0), below;
    // means[depth][j] is the ISI mean of bit j + 1 from the first depth releases.
    std::vector<std::vector<double>> means(static_cast<std::size_t>(L) + 1,
                                           std::vector<double>(static_cast<std::size_t>(L), 0.0));
    auto visit = [&](auto&& self, int depth, double weight) -> void {
        if (depth == L) return;
        const auto i = static_cast<std::size_t>(depth);
        for (int bit = 0; bit <= 1; ++bit) {
            const double w = weight * (bit ? p.p1 : 1.0 - p.p1);
            if (w == 0.0) continue;
            auto& cur = means[i + 1];
            cur = means[i];
            if (bit)
                for (std::size_t m = 0; m < lags[i].size(); ++m) cur[i + m] += na * lags[i][m];
            detail::poisson_cdf_ladder(cur[i], thresholds, below);
            for (std::size_t k = 0; k < thresholds.size(); ++k) acc[k] += w * (bit ? below[k] : 1.0 - below[k]);
            self(self, depth + 1, w);
        }
    };
    visit(visit, 0, 1.0);
    for (double& v : acc) v /= L;
    return acc;
}

/// Frame-averaged error over i.i.d. Bernoulli(p1) bit sequences drawn from `stream`.
inline std::vector<double> frame_error_sampled(const LagMatrix& lags, const PhysicalParams& p,
                                               const std::vector<std::int64_t>& thresholds, int sequences,
                                               rng::Stream& stream)
{
    const auto L = static_cast<std::size_t>(p.seq_length);
    const double na = static_cast<double>(p.num_molecules);
    std::vector<double> acc(thresholds.size(), 0.0), below;
    std::vector<int> bits(L);
    for (int s = 0; s < sequences; ++s) {
        for (auto& b : bits) b = stream.uniform() < p.p1 ? 1 : 0;
        for (std::size_t j = 0; j < L; ++j) {
            double mean = 0.0;
            for (std::size_t i = 0; i <= j; ++i)
                if (bits[i]) mean += na * lags[i][j - i];
            detail::poisson_cdf_ladder(mean, thresholds, below);
            for (std::size_t k = 0; k < thresholds.size(); ++k) acc[k] += bits[j] ? below[k] : 1.0 - below[k];
        }
    }
    for (double& v : acc) v /= static_cast<double>(sequences) * static_cast<double>(L);
    return acc;
}

namespace detail {

inline BitTreatment resolve_treatment(BitTreatment requested, int L)
{
    if (requested == BitTreatment::automatic)
        return L <= max_enumerated_length ? BitTreatment::enumerated : BitTreatment::sampled;
    if (requested == BitTreatment::enumerated && L > 24)
        throw InvalidConfiguration("bit enumeration requested for L = " + std::to_string(L) + " (limit 24)");
    return requested;
}

/// Sorted copy of the thresholds plus the map back to the caller's order.
inline std::vector<std::int64_t> sorted_thresholds(const std::vector<std::int64_t>& xi, std::vector<std::size_t>& order)
{
    if (xi.empty()) throw InvalidConfiguration("expected_ber: empty threshold list");
    for (auto v : xi)
        if (v < 0) throw InvalidConfiguration("expected_ber: thresholds must be non-negative");
    order.resize(xi.size());
    for (std::size_t k = 0; k < xi.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xi[a] < xi[b]; });
    std::vector<std::int64_t> sorted(xi.size());
    for (std::size_t k = 0; k < xi.size(); ++k) sorted[k] = xi[order[k]];
    return sorted;
}

inline std::vector<double> frame_error(const Trajectory& traj, const PhysicalParams& p, const DerivedParams& d,
                                       const std::vector<std::int64_t>& sorted, BitTreatment treatment,
                                       const MonteCarloConfig& mc, std::uint64_t index)
{
    const auto lags = lag_matrix(traj, p, d);
    if (treatment == BitTreatment::enumerated) return frame_error_enumerated(lags, p, sorted);
    rng::Stream stream(mc.seed, stream_domain::bits, index);
    return frame_error_sampled(lags, p, sorted, mc.sequences_per_trajectory, stream);
}

inline void check_mc(const MonteCarloConfig& mc)
{
    if (mc.num_trajectories < 1) throw InvalidConfiguration("num_trajectories must be at least 1");
    if (mc.sequences_per_trajectory < 1) throw InvalidConfiguration("sequences_per_trajectory must be at least 1");
}

}  // namespace detail

/// Expected bit error probability for each threshold, averaged over bit
/// sequences and sampled distance trajectories. The standard error is the
/// between-trajectory one. Results do not depend on mc.workers.
inline std::vector<BerEstimate> expected_ber(const PhysicalParams& p, const DerivedParams& d,
                                             const std::vector<std::int64_t>& thresholds, const MonteCarloConfig& mc)
{
    p.validate();
    detail::check_mc(mc);
    std::vector<std::size_t> order;
    const auto sorted = detail::sorted_thresholds(thresholds, order);
    const BitTreatment treatment = detail::resolve_treatment(mc.bit_treatment, p.seq_length);
    const std::size_t nk = sorted.size();
    std::vector<BerEstimate> out(nk);
    for (auto& e : out) {
        e.num_trajectories = mc.num_trajectories;
        e.bit_treatment = treatment;
    }

    const Trajectory constant{std::vector<double>(static_cast<std::size_t>(p.seq_length), p.r0)};
    if (d.d_eff2 == 0.0 && treatment == BitTreatment::enumerated) {
        // Every trajectory is constant, so one exact evaluation is the expectation.
        const auto v = detail::frame_error(constant, p, d, sorted, treatment, mc, 0);
        for (std::size_t k = 0; k < nk; ++k) out[order[k]].value = v[k];
        return out;
    }

    const auto n = static_cast<std::size_t>(mc.num_trajectories);
    std::vector<std::vector<double>> per(n);
    std::unique_ptr<TransitionSampler> sampler;
    if (d.d_eff2 > 0.0) sampler = std::make_unique<TransitionSampler>(d.d_eff2, p.bit_interval, p.contact_radius());
    parallel_for(n, mc.workers, [&](std::size_t i) {
        rng::Stream stream(mc.seed, stream_domain::trajectory, i);
        const Trajectory traj = sampler ? sample_trajectory(p.r0, p, *sampler, stream) : constant;
        per[i] = detail::frame_error(traj, p, d, sorted, treatment, mc, i);
    });
    for (std::size_t k = 0; k < nk; ++k) {
        double sum = 0.0;
        for (const auto& v : per) sum += v[k];
        const double mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (const auto& v : per) ss += (v[k] - mean) * (v[k] - mean);
        out[order[k]].value = mean;
        out[order[k]].std_error = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    }
    return out;
}

inline BerEstimate expected_ber(const PhysicalParams& p, const DerivedParams& d, std::int64_t threshold,
                                const MonteCarloConfig& mc)
{
    return expected_ber(p, d, std::vector<std::int64_t>{threshold}, mc).front();
}

/// Exact expectation over an enumerated trajectory ensemble whose weights
/// sum to one; the standard error is zero.
inline std::vector<BerEstimate> expected_ber(const PhysicalParams& p, const DerivedParams& d,
                                             const std::vector<std::int64_t>& thresholds,
                                             const std::vector<WeightedTrajectory>& ensemble,
                                             const MonteCarloConfig& mc)
{
    p.validate();
    if (ensemble.empty()) throw InvalidConfiguration("expected_ber: empty trajectory ensemble");
    double total = 0.0;
    for (const auto& w : ensemble) {
        if (!(w.weight >= 0.0)) throw InvalidConfiguration("expected_ber: negative trajectory weight");
        total += w.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidConfiguration("expected_ber: trajectory weights do not sum to 1");
    std::vector<std::size_t> order;
    const auto sorted = detail::sorted_thresholds(thresholds, order);
    const BitTreatment treatment = detail::resolve_treatment(mc.bit_treatment, p.seq_length);
    std::vector<std::vector<double>> per(ensemble.size());
    parallel_for(ensemble.size(), mc.workers, [&](std::size_t i) {
        per[i] = detail::frame_error(ensemble[i].trajectory, p, d, sorted, treatment, mc, i);
    });
    std::vector<BerEstimate> out(sorted.size());
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        double sum = 0.0;
        for (std::size_t i = 0; i < ensemble.size(); ++i) sum += ensemble[i].weight * per[i][k];
        out[order[k]] = {sum, 0.0, static_cast<std::int64_t>(ensemble.size()), treatment};
    }
    return out;
}

}  // namespace molcom
