#pragma once

// Brownian-dynamics reference simulator: diffusing transmitter and receiver
// spheres, point signaling molecules with first-order degradation, and
// reversible binding to a homogenized reactive receiver surface.
//
// All randomness is counter-based. A molecule's displacement at a fine step,
// its degradation budget and its binding and dwell budgets per episode are
// pure functions of (seed, realization, molecule id, index), so two runs
// whose step sizes differ by an integer factor see the same Brownian paths
// when the coarser run sums its fine increments (noise_substeps).
//
// Binding at a surface crossing has probability P_bind. It is realized by
// accumulating the hazard -log(1 - P_bind) per crossing against an Exp(1)
// budget, which has the same law as independent Bernoulli draws and makes
// binding times of coupled runs at different dt nearly coincide.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "molcom/channel.hpp"
#include "molcom/detection.hpp"
#include "molcom/error.hpp"
#include "molcom/parallel.hpp"
#include "molcom/random.hpp"

namespace molcom {

struct SimConfig {
    double dt = 2e-7;
    std::int64_t num_realizations = 2000;
    std::uint64_t seed = 1;
    /// Observation times; each must lie on the step grid.
    std::vector<double> record_grid;
    /// Placement above the receiver surface after unbinding.
    double unbind_offset = 1e-9;
    /// Brownian increments are generated on a grid noise_substeps times finer than dt.
    int noise_substeps = 1;
    /// Outer reflecting sphere around the receiver for confined runs; 0 disables it.
    double confinement_radius = 0.0;
    /// Verify geometry and bookkeeping after every step.
    bool check_invariants = false;
    int workers = 1;
};

using Vec3 = std::array<double, 3>;

/// Population bookkeeping; injected == free + bound + degraded at all times.
struct SimCounters {
    std::int64_t injected = 0;
    std::int64_t degraded = 0;
    std::int64_t bindings = 0;
    std::int64_t unbindings = 0;
};

namespace sim_detail {

inline constexpr std::uint64_t stream_domain = 3;
inline constexpr std::uint64_t bits_domain = 4;

// Counter word 2 separates the purposes of a draw.
enum Purpose : std::uint32_t { diffuse = 0, bind = 1, degrade = 2, dwell = 3, place = 4 };

// Binding budgets redrawn after a refusal at saturation are indexed apart from episodes.
inline constexpr std::int64_t refusal_index = std::int64_t{1} << 40;

// Molecule ids count up from zero; the two nodes take the top ids.
inline constexpr std::uint32_t rx_id = 0xFFFFFFFFu;
inline constexpr std::uint32_t tx_id = 0xFFFFFFFEu;

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline std::int64_t steps_for(double t, double dt, const char* what)
{
    const double x = t / dt;
    const double n = std::round(x);
    if (!(std::abs(x - n) <= 1e-6 * std::max(1.0, n)) || n < 0.0)
        throw InvalidConfiguration(std::string(what) + " (" + std::to_string(t) + " s) is not a multiple of dt = " +
                                   std::to_string(dt) + " s");
    return static_cast<std::int64_t>(n);
}

}  // namespace sim_detail

/// Probability that a molecule whose step ends inside the receiver binds.
inline double binding_probability(const PhysicalParams& p, const DerivedParams& d, double dt)
{
    const double kappa = d.k_f_mod / (4.0 * std::numbers::pi * p.radius_rx * p.radius_rx);
    return kappa * std::sqrt(std::numbers::pi * dt / d.d_mol);
}

inline void validate(const SimConfig& c, const PhysicalParams& p, const DerivedParams& d)
{
    p.validate();
    if (!(c.dt > 0.0) || !std::isfinite(c.dt)) throw InvalidConfiguration("dt must be positive");
    if (c.num_realizations < 1) throw InvalidConfiguration("num_realizations must be at least 1");
    if (c.noise_substeps < 1) throw InvalidConfiguration("noise_substeps must be at least 1");
    if (c.workers < 1) throw InvalidConfiguration("workers must be at least 1");
    const double dmax = std::max({p.diff_A, p.diff_TX, p.diff_RX, d.d_mol});
    if (std::sqrt(2.0 * dmax * c.dt) > p.radius_rx / 10.0)
        throw InvalidConfiguration("dt too large: rms step " + std::to_string(std::sqrt(2.0 * dmax * c.dt)) +
                                   " m exceeds radius_rx / 10");
    if (!(c.unbind_offset > 0.0) || c.unbind_offset > p.radius_rx / 100.0)
        throw InvalidConfiguration("unbind_offset must lie in (0, radius_rx / 100]");
    if (c.confinement_radius != 0.0 && !(c.confinement_radius > p.r0 + p.radius_tx))
        throw InvalidConfiguration("confinement_radius must exceed r0 + radius_tx");
    const double pb = binding_probability(p, d, c.dt);
    if (!(pb <= 1.0))
        throw InvalidConfiguration("binding probability " + std::to_string(pb) + " exceeds 1; use a smaller dt");
    const std::int64_t per_interval = sim_detail::steps_for(p.bit_interval, c.dt, "bit_interval");
    if (per_interval < 1) throw InvalidConfiguration("bit_interval shorter than dt");
    sim_detail::steps_for(p.sample_offset, c.dt, "sample_offset");
    const double frame = p.seq_length * p.bit_interval;
    for (double t : c.record_grid) {
        if (!(t >= 0.0) || t > frame * (1.0 + 1e-12))
            throw InvalidConfiguration("record time " + std::to_string(t) + " outside the frame");
        sim_detail::steps_for(t, c.dt, "record time");
    }
    if (static_cast<double>(p.num_molecules) * p.seq_length >= 4.0e9)
        throw InvalidConfiguration("num_molecules * seq_length exceeds the molecule id space");
}

/// One realization: positions are relative to the receiver center, which
/// carries the bound molecules rigidly.
class Simulator {
public:
    struct Free {
        Vec3 x;
        double free_time;
        double budget;  // degrades once free_time reaches it
        double hazard;  // binding hazard accumulated this episode
        double hazard_budget;
        std::uint32_t id;
        std::uint32_t episode;
    };
    struct Bound {
        Vec3 normal;
        double bound_time;
        double dwell;
        double free_time;  // carried over; bound molecules do not degrade
        double budget;
        std::int64_t bound_at;  // step in which the binding happened
        std::uint32_t id;
        std::uint32_t episode;
    };

    Simulator(const PhysicalParams& p, const DerivedParams& d, const SimConfig& c, std::uint64_t realization)
        : p_(p), d_(d), c_(c), key_(rng::derive_key(c.seed, sim_detail::stream_domain, realization))
    {
        validate(c, p, d);
        const auto dir = normals(sim_detail::tx_id, 0, sim_detail::place);
        const double n = sim_detail::norm({dir[0], dir[1], dir[2]});
        for (int k = 0; k < 3; ++k) tx_[k] = p.r0 * dir[k] / n;
        const double h = c.dt / c.noise_substeps;
        sd_mol_ = std::sqrt(2.0 * p.diff_A * h);
        sd_tx_ = std::sqrt(2.0 * p.diff_TX * h);
        sd_rx_ = std::sqrt(2.0 * p.diff_RX * h);
        p_bind_ = binding_probability(p, d, c.dt);
        hazard_ = -std::log1p(-p_bind_);
    }

    /// Releases num_molecules at the current transmitter center, ids starting at first_id.
    void inject(std::uint32_t first_id)
    {
        const auto n = static_cast<std::uint32_t>(p_.num_molecules);
        free_.reserve(free_.size() + n);
        for (std::uint32_t i = 0; i < n; ++i) {
            const std::uint32_t id = first_id + i;
            const double budget = p_.k_d > 0.0 ? -std::log(uniform(id, 0, sim_detail::degrade)) / p_.k_d
                                               : std::numeric_limits<double>::infinity();
            free_.push_back({tx_, 0.0, budget, 0.0, exp1(id, 0), id, 0});
        }
        counters_.injected += n;
    }

    void step()
    {
        const double dt = c_.dt, a = p_.radius_rx;
        // (i) node displacements; molecules see the receiver move by -rx.
        Vec3 rx{};
        if (sd_rx_ > 0.0) rx = increment(sim_detail::rx_id, sd_rx_);
        if (sd_tx_ > 0.0) {
            const Vec3 tx = increment(sim_detail::tx_id, sd_tx_);
            for (int k = 0; k < 3; ++k) tx_[k] += tx[k] - rx[k];
        } else if (sd_rx_ > 0.0) {
            for (int k = 0; k < 3; ++k) tx_[k] -= rx[k];
        }
        // (ii) radial reflection of the transmitter about the contact sphere.
        const double sigma = p_.contact_radius();
        if (const double r = sim_detail::norm(tx_); r < sigma) {
            const double scale = r > 0.0 ? (2.0 * sigma - r) / r : 0.0;
            for (int k = 0; k < 3; ++k) tx_[k] *= scale;
            if (r == 0.0) tx_ = {sigma, 0.0, 0.0};
        }

        for (std::size_t i = 0; i < free_.size();) {
            Free& m = free_[i];
            const Vec3 old = m.x;
            const Vec3 dx = increment(m.id, sd_mol_);
            for (int k = 0; k < 3; ++k) m.x[k] += dx[k] - rx[k];
            // (iii) degradation.
            m.free_time += dt;
            if (m.free_time >= m.budget) {
                ++counters_.degraded;
                free_[i] = free_.back();
                free_.pop_back();
                continue;
            }
            // (iv) binding or reflection when the step ends inside the receiver.
            if (sim_detail::dot(m.x, m.x) < a * a) {
                const double s = crossing_fraction(old, m.x, a);
                Vec3 c;
                for (int k = 0; k < 3; ++k) c[k] = old[k] + s * (m.x[k] - old[k]);
                const double cn = sim_detail::norm(c);
                Vec3 n;
                for (int k = 0; k < 3; ++k) n[k] = c[k] / cn;
                m.hazard += hazard_;
                if (m.hazard >= m.hazard_budget && static_cast<std::int64_t>(bound_.size()) >= p_.num_receptors) {
                    // Saturated: refuse and start a fresh budget.
                    m.hazard = 0.0;
                    m.hazard_budget = exp1(m.id, sim_detail::refusal_index + step_ * c_.noise_substeps);
                }
                if (m.hazard >= m.hazard_budget) {
                    const double dwell = -std::log(uniform(m.id, m.episode, sim_detail::dwell)) / p_.k_b;
                    bound_.push_back({n, (1.0 - s) * dt, dwell, m.free_time, m.budget, step_, m.id, m.episode});
                    ++counters_.bindings;
                    free_[i] = free_.back();
                    free_.pop_back();
                    continue;
                }
                reflect(m.x, c, n, a);
            }
            if (c_.confinement_radius > 0.0) {
                const double R = c_.confinement_radius, r = sim_detail::norm(m.x);
                if (r > R)
                    for (int k = 0; k < 3; ++k) m.x[k] *= (2.0 * R - r) / r;
            }
            ++i;
        }
        // (v) unbinding. A receptor bound during this step has already been
        // credited with the part of the step after the crossing.
        for (std::size_t i = 0; i < bound_.size();) {
            Bound& b = bound_[i];
            if (b.bound_at < step_) b.bound_time += dt;
            if (b.bound_time >= b.dwell) {
                Free m;
                for (int k = 0; k < 3; ++k) m.x[k] = b.normal[k] * (a + c_.unbind_offset);
                m.free_time = b.free_time;
                m.budget = b.budget;
                m.id = b.id;
                m.episode = b.episode + 1;
                m.hazard = 0.0;
                m.hazard_budget = exp1(m.id, m.episode);
                free_.push_back(m);
                ++counters_.unbindings;
                bound_[i] = bound_.back();
                bound_.pop_back();
                continue;
            }
            ++i;
        }
        ++step_;
        if (c_.check_invariants) check();
    }

    std::int64_t bound_count() const { return static_cast<std::int64_t>(bound_.size()); }
    std::int64_t free_count() const { return static_cast<std::int64_t>(free_.size()); }
    const SimCounters& counters() const { return counters_; }
    const Vec3& tx_position() const { return tx_; }
    const std::vector<Free>& free_molecules() const { return free_; }
    std::int64_t steps_taken() const { return step_; }

    /// Throws NumericalFailure if geometry or bookkeeping is violated.
    void check() const
    {
        const double a = p_.radius_rx, sigma = p_.contact_radius();
        if (sim_detail::norm(tx_) < sigma * (1.0 - 1e-12))
            throw NumericalFailure("particlesim: transmitter inside the contact sphere");
        for (const auto& m : free_)
            if (sim_detail::dot(m.x, m.x) < a * a * (1.0 - 1e-12))
                throw NumericalFailure("particlesim: molecule inside the receiver");
        if (bound_count() > p_.num_receptors) throw NumericalFailure("particlesim: more bound molecules than receptors");
        if (counters_.injected != free_count() + bound_count() + counters_.degraded)
            throw NumericalFailure("particlesim: molecule bookkeeping does not balance");
    }

private:
    std::array<double, 4> normals(std::uint32_t id, std::int64_t fine, std::uint32_t purpose) const
    {
        return rng::normals4(
            rng::philox4x32({id, static_cast<std::uint32_t>(fine), purpose, static_cast<std::uint32_t>(fine >> 32)}, key_));
    }

    double uniform(std::uint32_t id, std::int64_t index, std::uint32_t purpose) const
    {
        const auto b = rng::philox4x32(
            {id, static_cast<std::uint32_t>(index), purpose, static_cast<std::uint32_t>(index >> 32)}, key_);
        return rng::uniform53(b[0], b[1]);
    }

    double exp1(std::uint32_t id, std::int64_t index) const { return -std::log(uniform(id, index, sim_detail::bind)); }

    // Displacement over one step: the sum of the fine increments.
    Vec3 increment(std::uint32_t id, double sd) const
    {
        Vec3 v{};
        const std::int64_t first = step_ * c_.noise_substeps;
        for (int q = 0; q < c_.noise_substeps; ++q) {
            const auto z = normals(id, first + q, sim_detail::diffuse);
            for (int k = 0; k < 3; ++k) v[k] += sd * z[k];
        }
        return v;
    }

    // Smallest s in [0, 1] with |old + s (now - old)| = a; old is outside.
    static double crossing_fraction(const Vec3& old, const Vec3& now, double a)
    {
        Vec3 v;
        for (int k = 0; k < 3; ++k) v[k] = now[k] - old[k];
        const double A = sim_detail::dot(v, v), B = 2.0 * sim_detail::dot(old, v);
        const double C = sim_detail::dot(old, old) - a * a;
        if (C <= 0.0 || A == 0.0) return 0.0;
        const double disc = std::max(0.0, B * B - 4.0 * A * C);
        // Stable form of the smaller root.
        const double q = -0.5 * (B - std::sqrt(disc));
        const double s = q != 0.0 ? C / q : 0.0;
        return std::clamp(s, 0.0, 1.0);
    }

    // Mirror the endpoint in the tangent plane at the crossing point c.
    static void reflect(Vec3& x, const Vec3& c, const Vec3& n, double a)
    {
        double depth = 0.0;
        for (int k = 0; k < 3; ++k) depth += (x[k] - c[k]) * n[k];
        for (int k = 0; k < 3; ++k) x[k] -= 2.0 * depth * n[k];
        const double r = sim_detail::norm(x);
        if (r < a) {
            // Rounding left the point just inside; push it out radially.
            const double target = std::max(2.0 * a - r, a);
            for (int k = 0; k < 3; ++k) x[k] = r > 0.0 ? x[k] * target / r : n[k] * a;
        }
    }

    PhysicalParams p_;
    DerivedParams d_;
    SimConfig c_;
    rng::Key key_;
    Vec3 tx_{};
    double sd_mol_ = 0.0, sd_tx_ = 0.0, sd_rx_ = 0.0, p_bind_ = 0.0, hazard_ = 0.0;
    std::int64_t step_ = 0;
    std::vector<Free> free_;
    std::vector<Bound> bound_;
    SimCounters counters_;
};

/// Bound counts of one realization on the record grid and at the sampling
/// instant (j - 1) T + t_s of every bit.
struct FrameRecord {
    std::vector<std::int64_t> grid_counts;
    std::vector<std::int64_t> sample_counts;
    SimCounters counters;
};

/// Runs one L-bit frame: at each interval start with a 1 bit, N_A molecules
/// are released at the current transmitter center.
inline FrameRecord run_frame(const BitSequence& b, const PhysicalParams& p, const DerivedParams& d,
                             const SimConfig& c, std::uint64_t realization)
{
    if (b.bits.size() != static_cast<std::size_t>(p.seq_length))
        throw InvalidArgument("run_frame: bit sequence length does not match seq_length");
    Simulator sim(p, d, c, realization);
    const std::int64_t per_interval = sim_detail::steps_for(p.bit_interval, c.dt, "bit_interval");
    const std::int64_t offset = sim_detail::steps_for(p.sample_offset, c.dt, "sample_offset");
    const std::int64_t total = per_interval * p.seq_length;
    std::vector<std::int64_t> grid_steps;
    for (double t : c.record_grid) grid_steps.push_back(sim_detail::steps_for(t, c.dt, "record time"));

    FrameRecord rec;
    rec.grid_counts.assign(grid_steps.size(), 0);
    rec.sample_counts.assign(b.bits.size(), 0);
    auto record = [&](std::int64_t n) {
        for (std::size_t k = 0; k < grid_steps.size(); ++k)
            if (grid_steps[k] == n) rec.grid_counts[k] = sim.bound_count();
        if (n >= offset && (n - offset) % per_interval == 0 && (n - offset) / per_interval < p.seq_length)
            rec.sample_counts[static_cast<std::size_t>((n - offset) / per_interval)] = sim.bound_count();
    };
    const auto na = static_cast<std::uint32_t>(p.num_molecules);
    for (std::int64_t n = 0; n < total; ++n) {
        if (n % per_interval == 0) {
            const auto j = static_cast<std::size_t>(n / per_interval);
            if (b.bits[j]) sim.inject(static_cast<std::uint32_t>(j) * na);
        }
        record(n);
        sim.step();
    }
    record(total);
    rec.counters = sim.counters();
    return rec;
}

/// Mean bound count over independent realizations. std_error and
/// sample_std_error are NaN when there is a single realization.
struct ObservationSeries {
    std::vector<double> times;
    std::vector<double> mean_bound;
    std::vector<double> std_error;
    std::vector<double> sample_times;
    std::vector<double> sample_mean;
    std::vector<double> sample_std_error;
    /// sample_counts[realization][j]
    std::vector<std::vector<std::int64_t>> sample_counts;
    std::int64_t num_realizations = 0;
};

namespace sim_detail {

inline void mean_and_se(const std::vector<std::vector<std::int64_t>>& rows, std::size_t col, double& mean, double& se)
{
    const auto n = static_cast<double>(rows.size());
    double sum = 0.0;
    for (const auto& r : rows) sum += static_cast<double>(r[col]);
    mean = sum / n;
    double ss = 0.0;
    for (const auto& r : rows) ss += (static_cast<double>(r[col]) - mean) * (static_cast<double>(r[col]) - mean);
    se = rows.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace sim_detail

inline ObservationSeries estimate_received_signal(const BitSequence& b, const PhysicalParams& p,
                                                  const DerivedParams& d, const SimConfig& c)
{
    validate(c, p, d);
    const auto n = static_cast<std::size_t>(c.num_realizations);
    std::vector<FrameRecord> recs(n);
    parallel_for(n, c.workers, [&](std::size_t r) { recs[r] = run_frame(b, p, d, c, r); });

    ObservationSeries out;
    out.num_realizations = c.num_realizations;
    out.times = c.record_grid;
    std::vector<std::vector<std::int64_t>> grid(n);
    out.sample_counts.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        grid[r] = std::move(recs[r].grid_counts);
        out.sample_counts[r] = std::move(recs[r].sample_counts);
    }
    out.mean_bound.resize(out.times.size());
    out.std_error.resize(out.times.size());
    for (std::size_t k = 0; k < out.times.size(); ++k) sim_detail::mean_and_se(grid, k, out.mean_bound[k], out.std_error[k]);
    const auto L = static_cast<std::size_t>(p.seq_length);
    out.sample_times.resize(L);
    out.sample_mean.resize(L);
    out.sample_std_error.resize(L);
    for (std::size_t j = 0; j < L; ++j) {
        out.sample_times[j] = static_cast<double>(j) * p.bit_interval + p.sample_offset;
        sim_detail::mean_and_se(out.sample_counts, j, out.sample_mean[j], out.sample_std_error[j]);
    }
    return out;
}

struct BerCurve {
    std::vector<std::int64_t> thresholds;
    std::vector<double> value;
    std::vector<double> std_error;
    std::int64_t num_realizations = 0;
};

/// Simulated bit error rate: each realization draws i.i.d. Bernoulli(p1)
/// bits, runs a frame and decides b_j = 1 iff the bound count at t_{j,s}
/// reaches the threshold. The standard error is taken between realizations,
/// since the bits of one frame share ISI and node motion.
inline BerCurve estimate_ber(const PhysicalParams& p, const DerivedParams& d, const SimConfig& c,
                             const std::vector<std::int64_t>& thresholds, double p1)
{
    validate(c, p, d);
    if (!(p1 >= 0.0 && p1 <= 1.0)) throw InvalidConfiguration("p1 must lie in [0, 1]");
    if (thresholds.empty()) throw InvalidConfiguration("estimate_ber: empty threshold list");
    for (auto x : thresholds)
        if (x < 0) throw InvalidConfiguration("estimate_ber: thresholds must be non-negative");
    const auto n = static_cast<std::size_t>(c.num_realizations);
    const auto L = static_cast<std::size_t>(p.seq_length);
    std::vector<std::vector<double>> rates(n);
    parallel_for(n, c.workers, [&](std::size_t r) {
        rng::Stream stream(c.seed, sim_detail::bits_domain, r);
        BitSequence b{std::vector<int>(L)};
        for (auto& v : b.bits) v = stream.uniform() < p1 ? 1 : 0;
        const auto rec = run_frame(b, p, d, c, r);
        rates[r].assign(thresholds.size(), 0.0);
        for (std::size_t k = 0; k < thresholds.size(); ++k) {
            std::int64_t errors = 0;
            for (std::size_t j = 0; j < L; ++j) errors += (rec.sample_counts[j] >= thresholds[k] ? 1 : 0) != b.bits[j];
            rates[r][k] = static_cast<double>(errors) / static_cast<double>(L);
        }
    });
    BerCurve out;
    out.thresholds = thresholds;
    out.num_realizations = c.num_realizations;
    out.value.resize(thresholds.size());
    out.std_error.resize(thresholds.size());
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
        double sum = 0.0;
        for (const auto& r : rates) sum += r[k];
        const double mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (const auto& r : rates) ss += (r[k] - mean) * (r[k] - mean);
        out.value[k] = mean;
        out.std_error[k] = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n))
                                 : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

}  // namespace molcom
