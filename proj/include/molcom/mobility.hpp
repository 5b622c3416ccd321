#pragma once

// Distance between two hard spheres in relative diffusion: the reflected
// radial transition law, an inverse-CDF sampler over a tabulated grid, and
// Markov trajectories sampled at bit-interval boundaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numbers>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "molcom/channel.hpp"
#include "molcom/error.hpp"
#include "molcom/random.hpp"
#include "molcom/specfun.hpp"

namespace molcom {

/// Density of the separation r at time t for two hard spheres with contact
/// radius sigma, relative diffusion coefficient d and initial separation r0.
inline double distance_pdf(double r, double t, double r0, double d, double sigma)
{
    if (!std::isfinite(r) || !std::isfinite(t) || !std::isfinite(r0) || !std::isfinite(d) || !std::isfinite(sigma))
        throw InvalidArgument("distance_pdf: non-finite argument");
    if (!(t > 0.0)) throw InvalidArgument("distance_pdf: t must be positive");
    if (!(sigma > 0.0) || r0 < sigma) throw InvalidArgument("distance_pdf: need sigma > 0 and r0 >= sigma");
    if (d < 0.0) throw InvalidArgument("distance_pdf: negative diffusion coefficient");
    if (d == 0.0) throw DegenerateLaw("distance_pdf: zero relative diffusion, the law is a point mass at r0");
    if (r < sigma) return 0.0;
    const double var4 = 4.0 * d * t;
    const double ell = std::sqrt(var4);
    const double u = r + r0 - 2.0 * sigma;
    const double gauss = (r / r0) / std::sqrt(std::numbers::pi * var4) *
                         (std::exp(-(r - r0) * (r - r0) / var4) + std::exp(-u * u / var4));
    const double kernel = (r / (r0 * sigma)) * specfun::w_kernel(u / ell, std::sqrt(d * t) / sigma);
    const double v = gauss - kernel;
    if (v < 0.0) {
        if (v < -1e-12 * std::max(gauss, 1.0 / ell)) throw NumericalFailure("distance_pdf: negative density");
        return 0.0;
    }
    return v;
}

/// Tabulated transition law for one (r0, t, d, sigma). Immutable after construction.
class DistanceLaw {
public:
    static constexpr int default_grid_points = 4096;

    DistanceLaw(double r0, double t, double d_eff2, double sigma, int grid_points = default_grid_points)
        : r0_(r0), t_(t), d_(d_eff2), sigma_(sigma)
    {
        if (d_eff2 == 0.0) throw DegenerateLaw("DistanceLaw: zero relative diffusion, use the point mass at r0");
        if (grid_points < 16) throw InvalidArgument("DistanceLaw: need at least 16 grid points");
        distance_pdf(r0, t, r0, d_eff2, sigma);  // argument validation
        const double ell = std::sqrt(2.0 * d_eff2 * t);
        truncation_ = r0 + 12.0 * ell + sigma;
        // Mass beyond r0 + 12 ell is below 1e-30; tabulating out to the
        // truncation radius would waste the grid when ell << sigma.
        lower_ = std::max(sigma, r0 - 12.0 * ell);
        upper_ = r0 + 12.0 * ell;
        build_grid(grid_points);
        tabulate();
    }

    double r0() const { return r0_; }
    double elapsed() const { return t_; }
    double d_eff2() const { return d_; }
    double contact_radius() const { return sigma_; }
    double truncation_radius() const { return truncation_; }
    /// Tabulated support; the lower end is sigma unless the law is far from contact.
    double lower_radius() const { return lower_; }
    double upper_radius() const { return upper_; }
    /// Integral of the density over the tabulated support.
    double total_mass() const { return mass_; }
    const std::vector<double>& grid() const { return r_; }
    const std::vector<double>& grid_pdf() const { return pdf_; }
    /// Unnormalized cumulative mass at each grid point.
    const std::vector<double>& grid_cdf() const { return cdf_; }

    double pdf(double r) const { return distance_pdf(r, t_, r0_, d_, sigma_); }

    /// Normalized CDF of the tabulated law. Between grid points it is the
    /// cubic Hermite interpolant of the cell masses with the density as
    /// slope, limited to stay monotone (Fritsch-Carlson).
    double cdf(double r) const
    {
        if (r <= r_.front()) return 0.0;
        if (r >= r_.back()) return 1.0;
        const auto k = static_cast<std::size_t>(std::upper_bound(r_.begin(), r_.end(), r) - r_.begin()) - 1;
        return cell_value(k, (r - r_[k]) / (r_[k + 1] - r_[k])) / mass_;
    }

    /// Inverse-CDF sample; u in (0, 1).
    double quantile(double u) const
    {
        const double target = u * mass_;
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), target);
        if (it == cdf_.begin()) return r_.front();
        if (it == cdf_.end()) return r_.back();
        const auto k = static_cast<std::size_t>(it - cdf_.begin()) - 1;
        // Safeguarded Newton on the monotone cell cubic.
        double lo = 0.0, hi = 1.0;
        const double span = cdf_[k + 1] - cdf_[k];
        double s = span > 0.0 ? (target - cdf_[k]) / span : 0.0;
        for (int iter = 0; iter < 60; ++iter) {
            const double f = cell_value(k, s) - target;
            if (f > 0.0) hi = s; else lo = s;
            const double slope = cell_slope(k, s);
            double next = slope > 0.0 ? s - f / slope : 0.5 * (lo + hi);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - s) < 1e-15) {
                s = next;
                break;
            }
            s = next;
        }
        return r_[k] + s * (r_[k + 1] - r_[k]);
    }

    double sample(rng::Stream& stream) const { return quantile(stream.uniform()); }

private:
    // Endpoint slopes of cell k in units of the cell width, after limiting.
    std::pair<double, double> cell_slopes(std::size_t k) const
    {
        const double h = r_[k + 1] - r_[k];
        const double delta = cdf_[k + 1] - cdf_[k];
        if (!(delta > 0.0)) return {0.0, 0.0};
        double m0 = pdf_[k] * h, m1 = pdf_[k + 1] * h;
        const double a = m0 / delta, b = m1 / delta;
        if (a * a + b * b > 9.0) {
            const double tau = 3.0 / std::hypot(a, b);
            m0 *= tau;
            m1 *= tau;
        }
        return {m0, m1};
    }

    double cell_value(std::size_t k, double s) const
    {
        const auto [m0, m1] = cell_slopes(k);
        const double s2 = s * s, s3 = s2 * s;
        return cdf_[k] + (3.0 * s2 - 2.0 * s3) * (cdf_[k + 1] - cdf_[k]) + (s3 - 2.0 * s2 + s) * m0 + (s3 - s2) * m1;
    }

    double cell_slope(std::size_t k, double s) const
    {
        const auto [m0, m1] = cell_slopes(k);
        const double s2 = s * s;
        return 6.0 * (s - s2) * (cdf_[k + 1] - cdf_[k]) + (3.0 * s2 - 4.0 * s + 1.0) * m0 + (3.0 * s2 - 2.0 * s) * m1;
    }

    void build_grid(int points)
    {
        const std::size_t cells = static_cast<std::size_t>(points) - 1;
        std::vector<double> widths;
        widths.reserve(cells);
        if (lower_ == sigma_) {
            // Geometric boundary layer at contact, growing by 2% per cell
            // from 1e-4 of the bulk spacing.
            for (double f = 1e-4; f < 1.0 && widths.size() < cells / 4; f *= 1.02) widths.push_back(f);
        }
        const std::size_t layer = widths.size();
        double layer_sum = 0.0;
        for (double f : widths) layer_sum += f;
        const double bulk = (upper_ - lower_) / (layer_sum + static_cast<double>(cells - layer));
        r_.resize(static_cast<std::size_t>(points));
        r_[0] = lower_;
        for (std::size_t k = 0; k < cells; ++k) r_[k + 1] = r_[k] + (k < layer ? widths[k] : 1.0) * bulk;
        r_.back() = upper_;
    }

    void tabulate()
    {
        using Rule = boost::math::quadrature::gauss<double, 10>;
        const std::size_t n = r_.size();
        pdf_.resize(n);
        cdf_.assign(n, 0.0);
        for (std::size_t k = 0; k < n; ++k) pdf_[k] = pdf(r_[k]);
        for (std::size_t k = 0; k + 1 < n; ++k) {
            const double a = r_[k], b = r_[k + 1];
            const double cell = Rule::integrate([this](double r) { return pdf(r); }, a, b);
            cdf_[k + 1] = cdf_[k] + cell;
        }
        mass_ = cdf_.back();
        if (!(mass_ > 0.0) || !std::isfinite(mass_))
            throw NumericalFailure("DistanceLaw: tabulated mass is " + std::to_string(mass_));
    }

    double r0_, t_, d_, sigma_;
    double truncation_ = 0.0, lower_ = 0.0, upper_ = 0.0, mass_ = 0.0;
    std::vector<double> r_, pdf_, cdf_;
};

inline double sample_distance(const DistanceLaw& law, rng::Stream& stream) { return law.sample(stream); }

/// Samples one bit-interval transition of the separation from an arbitrary
/// start. Laws are tabulated on demand at quantized starts
/// sigma + k * step (step = 0.02 * sqrt(2 d T)) and a start between two
/// nodes draws from the neighbouring laws with linear mixture weights,
/// which keeps the CDF error near 1e-4. Thread-safe.
class TransitionSampler {
public:
    TransitionSampler(double d_eff2, double interval, double sigma, int grid_points = DistanceLaw::default_grid_points)
        : d_(d_eff2), interval_(interval), sigma_(sigma), grid_points_(grid_points)
    {
        if (d_eff2 < 0.0 || !std::isfinite(d_eff2)) throw InvalidArgument("TransitionSampler: bad diffusion coefficient");
        if (!(interval > 0.0)) throw InvalidArgument("TransitionSampler: interval must be positive");
        step_ = 0.02 * std::sqrt(2.0 * d_eff2 * interval);
    }

    double quantization_step() const { return step_; }

    double sample(double start, rng::Stream& stream) const
    {
        if (d_ == 0.0) return start;
        const double x = std::max(0.0, (start - sigma_) / step_);
        const auto k = static_cast<std::int64_t>(std::floor(x));
        const double w = x - static_cast<double>(k);
        // One uniform picks the mixture component, a second drives the quantile.
        const double pick = stream.uniform();
        const double u = stream.uniform();
        return law(pick < w ? k + 1 : k).quantile(u);
    }

    std::size_t cached_laws() const
    {
        std::shared_lock lock(mutex_);
        return cache_.size();
    }

    const DistanceLaw& law(std::int64_t k) const
    {
        {
            std::shared_lock lock(mutex_);
            if (auto it = cache_.find(k); it != cache_.end()) return *it->second;
        }
        auto built = std::make_shared<const DistanceLaw>(sigma_ + static_cast<double>(k) * step_, interval_, d_, sigma_,
                                                         grid_points_);
        std::unique_lock lock(mutex_);
        return *cache_.try_emplace(k, std::move(built)).first->second;
    }

private:
    double d_, interval_, sigma_, step_ = 0.0;
    int grid_points_;
    mutable std::shared_mutex mutex_;
    mutable std::map<std::int64_t, std::shared_ptr<const DistanceLaw>> cache_;
};

/// Separations at the L bit-interval boundaries; distances[0] = r0.
struct Trajectory {
    std::vector<double> distances;
};

/// Markov chain of separations: each boundary is drawn from the transition
/// law over one bit interval started at the previous boundary.
inline Trajectory sample_trajectory(double r0, const PhysicalParams& p, const TransitionSampler& sampler,
                                    rng::Stream& stream)
{
    if (p.seq_length < 1) throw InvalidArgument("sample_trajectory: seq_length must be at least 1");
    Trajectory traj;
    traj.distances.reserve(static_cast<std::size_t>(p.seq_length));
    traj.distances.push_back(r0);
    for (int i = 1; i < p.seq_length; ++i) traj.distances.push_back(sampler.sample(traj.distances.back(), stream));
    return traj;
}

inline Trajectory sample_trajectory(double r0, const PhysicalParams& p, const DerivedParams& d, rng::Stream& stream)
{
    const TransitionSampler sampler(d.d_eff2, p.bit_interval, p.contact_radius());
    return sample_trajectory(r0, p, sampler, stream);
}

}  // namespace molcom
