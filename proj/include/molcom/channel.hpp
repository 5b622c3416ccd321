#pragma once

// Physical parameters, derived constants and the reactive-receiver channel
// impulse response for fixed and diffusing transceivers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>

#include "molcom/error.hpp"
#include "molcom/specfun.hpp"

namespace molcom {

enum class MobilityMode { fixed, mobile };

inline const char* to_string(MobilityMode m) { return m == MobilityMode::fixed ? "fixed" : "mobile"; }

/// Transmitter radius paired with a diffusion coefficient through
/// Stokes-Einstein in water at 25 C (a * D = 2.4357e-19 m^3/s).
inline double stokes_einstein_radius(double diffusion)
{
    if (!(diffusion > 0.0)) throw InvalidArgument("stokes_einstein_radius: diffusion must be positive");
    return 2.4357e-19 / diffusion;
}

/// SI units throughout. Defaults are the reference parameter set, with the
/// D_TX = 1e-9 transmitter radius.
struct PhysicalParams {
    std::int64_t num_molecules = 5000;
    double diff_A = 0.5e-9;
    double diff_TX = 0.0;
    double diff_RX = 0.5e-12;
    double r0 = 1e-6;
    double radius_rx = 0.5e-6;
    double radius_tx = 0.24357e-9;
    double k_f = 12.5e-15;
    double k_b = 2e5;
    double k_d = 2e4;
    std::int64_t num_receptors = 1000;
    double receptor_radius = 13.95e-9;
    double bit_interval = 0.3e-3;
    double sample_offset = 0.06e-3;
    int seq_length = 10;
    double p1 = 0.5;
    /// Replaces the modified forward rate computed from the coverage model.
    std::optional<double> k_f_mod_override;

    double contact_radius() const { return radius_rx + radius_tx; }

    /// Fraction of the receiver surface covered by receptors.
    double coverage() const
    {
        return static_cast<double>(num_receptors) * receptor_radius * receptor_radius /
               (4.0 * radius_rx * radius_rx);
    }

    /// Throws InvalidConfiguration naming the first offending field.
    void validate() const
    {
        auto fail = [](const std::string& what) { throw InvalidConfiguration("physical parameters: " + what); };
        const std::array<std::pair<const char*, double>, 13> fields{{{"diff_A", diff_A},
                                                                    {"diff_TX", diff_TX},
                                                                    {"diff_RX", diff_RX},
                                                                    {"r0", r0},
                                                                    {"radius_rx", radius_rx},
                                                                    {"radius_tx", radius_tx},
                                                                    {"k_f", k_f},
                                                                    {"k_b", k_b},
                                                                    {"k_d", k_d},
                                                                    {"receptor_radius", receptor_radius},
                                                                    {"bit_interval", bit_interval},
                                                                    {"sample_offset", sample_offset},
                                                                    {"p1", p1}}};
        for (const auto& [name, v] : fields) {
            if (!std::isfinite(v)) fail(std::string(name) + " must be finite");
            if (v < 0.0) fail(std::string(name) + " must be non-negative");
        }
        if (num_molecules < 0) fail("num_molecules must be non-negative");
        if (num_receptors < 0) fail("num_receptors must be non-negative");
        if (!(radius_rx > 0.0)) fail("radius_rx must be positive");
        if (!(diff_A > 0.0)) fail("diff_A must be positive");
        if (r0 < contact_radius()) fail("r0 must be at least radius_rx + radius_tx");
        if (!(sample_offset > 0.0) || sample_offset > bit_interval)
            fail("sample_offset must satisfy 0 < sample_offset <= bit_interval");
        if (p1 > 1.0) fail("p1 must lie in [0, 1]");
        if (seq_length < 1) fail("seq_length must be at least 1");
        if (coverage() > 1.0) fail("receptor coverage " + std::to_string(coverage()) + " exceeds 1");
        if (k_f_mod_override && !(std::isfinite(*k_f_mod_override) && *k_f_mod_override >= 0.0))
            fail("k_f_mod_override must be finite and non-negative");
    }
};

struct DerivedParams {
    MobilityMode mobility_mode = MobilityMode::fixed;
    double lambda = 0.0;
    double phi = 0.0;
    double k_f_mod = 0.0;
    double d_eff1 = 0.0;
    double d_eff2 = 0.0;
    /// Molecule diffusion coefficient seen by the receiver: diff_A (fixed) or d_eff1 (mobile).
    double d_mol = 0.0;
    /// Degradation rate used by the CIR; differs from params.k_d only after a
    /// degenerate-root perturbation.
    double k_d = 0.0;
    bool k_d_perturbed = false;
    std::array<double, 3> symmetric{};  // e1, e2, e3
    specfun::CubicRoots roots;
};

namespace detail {

inline std::array<double, 3> symmetric_rhs(double d, double a, double k_f_mod, double k_b, double k_d)
{
    const double s = (1.0 + k_f_mod / (4.0 * std::numbers::pi * a * d)) * std::sqrt(d) / a;
    return {s, k_b - k_d, k_b * std::sqrt(d) / a - k_d * s};
}

}  // namespace detail

inline DerivedParams derive(const PhysicalParams& p, MobilityMode mode)
{
    p.validate();
    constexpr double pi = std::numbers::pi;
    DerivedParams d;
    d.mobility_mode = mode;
    d.d_eff1 = p.diff_A + p.diff_RX;
    d.d_eff2 = p.diff_TX + p.diff_RX;
    d.d_mol = mode == MobilityMode::fixed ? p.diff_A : d.d_eff1;
    d.lambda = p.coverage();
    const double D = d.d_mol, a = p.radius_rx, M = static_cast<double>(p.num_receptors), rs = p.receptor_radius;
    const double covered = M * rs * rs * (p.k_f * a + 4.0 * pi * D);
    const double phi_den = a * a * (1.0 - d.lambda) * (pi * rs * p.k_f + 16.0 * pi * D) + covered;
    d.phi = covered == 0.0 ? 0.0 : covered / phi_den;
    d.k_f_mod = p.k_f_mod_override ? *p.k_f_mod_override
                                   : 4.0 * pi * D * p.k_f * d.phi / (p.k_f * a * (1.0 - d.phi) + 4.0 * pi * D);
    d.k_d = p.k_d;
    d.symmetric = detail::symmetric_rhs(D, a, d.k_f_mod, p.k_b, d.k_d);
    d.roots = specfun::roots_from_symmetric(d.symmetric[0], d.symmetric[1], d.symmetric[2]);
    if (d.roots.degenerate) {
        // Root collisions are removable singularities of the CIR; nudge k_d
        // off them. A zero k_d is nudged on the scale of the other rates.
        d.k_d = p.k_d > 0.0 ? p.k_d * (1.0 + 1e-9) : 1e-9 * std::max(p.k_b, d.symmetric[0] * d.symmetric[0]);
        d.k_d_perturbed = true;
        d.symmetric = detail::symmetric_rhs(D, a, d.k_f_mod, p.k_b, d.k_d);
        d.roots = specfun::roots_from_symmetric(d.symmetric[0], d.symmetric[1], d.symmetric[2]);
        if (d.roots.degenerate)
            throw NumericalFailure("derive: cubic roots remain degenerate after perturbing k_d");
        warn("derive: near-degenerate cubic roots; k_d perturbed from " + std::to_string(p.k_d) + " to " +
             std::to_string(d.k_d));
    }
    return d;
}

/// CIR for an explicit root ordering. The result is symmetric in the roots up
/// to rounding; cir() passes them in canonical order.
inline double cir_with_roots(double t, double r0, const std::array<specfun::Complex, 3>& roots,
                             const DerivedParams& d, const PhysicalParams& p)
{
    if (!(t > 0.0) || !std::isfinite(t)) throw InvalidArgument("cir: t must be positive and finite");
    if (!(r0 >= p.radius_rx) || !std::isfinite(r0)) throw InvalidArgument("cir: r0 must be at least radius_rx");
    if (d.k_f_mod == 0.0) return 0.0;
    const double D = d.d_mol, a = p.radius_rx;
    const double n = (r0 - a) / std::sqrt(4.0 * D * t);
    const double sqrt_t = std::sqrt(t);
    specfun::Complex sum{0.0, 0.0};
    for (std::size_t i = 0; i < 3; ++i) {
        specfun::Complex den{1.0, 0.0};
        for (std::size_t j = 0; j < 3; ++j)
            if (j != i) den *= roots[j] - roots[i];
        sum += roots[i] * specfun::w_kernel_scaled(n, roots[i] * sqrt_t, -d.k_d * t) / den;
    }
    const double pref = -d.k_f_mod / (4.0 * std::numbers::pi * r0 * a * std::sqrt(D));
    const double re = pref * sum.real(), im = pref * sum.imag();
    if (!std::isfinite(re) || std::abs(im) > 1e-9 * std::abs(re))
        throw NumericalFailure("cir: result not real at t = " + std::to_string(t));
    if (re < -1e-12 || re > 1.0 + 1e-12)
        throw NumericalFailure("cir: value " + std::to_string(re) + " outside [0, 1] at t = " + std::to_string(t));
    return std::clamp(re, 0.0, 1.0);
}

/// Probability that a molecule released at distance r0 at time 0 occupies a
/// receptor at time t.
inline double cir(double t, double r0, const DerivedParams& d, const PhysicalParams& p)
{
    return cir_with_roots(t, r0, d.roots.roots, d, p);
}

/// Expected number of activated receptors t seconds after one release of N_A molecules.
inline double expected_received_signal(double t, const DerivedParams& d, const PhysicalParams& p)
{
    if (p.num_molecules == 0) return 0.0;
    return static_cast<double>(p.num_molecules) * cir(t, p.r0, d, p);
}

}  // namespace molcom
