#pragma once

// Scalar special functions used by the channel and mobility models.
//
// All functions are pure and thread-safe. Non-finite inputs raise
// InvalidArgument; results that would overflow raise NumericalFailure.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>

#include "molcom/error.hpp"

namespace molcom::specfun {

using Complex = std::complex<double>;

namespace detail {

inline constexpr double inv_sqrt_pi = 0.56418958354775628695;  // 1/sqrt(pi)

// exp(x*x) with the rounding error of x*x folded back in.
inline double exp_square(double x)
{
    const double hi = x * x;
    const double lo = std::fma(x, x, -hi);
    return std::exp(hi) * (1.0 + lo);
}

// Laplace continued fraction for erfcx on the positive real axis.
inline double erfcx_continued_fraction(double x)
{
    double r = 0.0;
    for (int k = 60; k >= 1; --k) r = (0.5 * k) / (x + r);
    return inv_sqrt_pi / (x + r);
}

// Rational approximation of the Faddeeva function w(z), Im z >= 0
// (Weideman's expansion in (L + iz)/(L - iz) with N = 40 terms).
struct WeidemanTable {
    static constexpr int terms = 40;
    double L;
    std::array<double, terms> coeff;  // coefficient of Z^n
};

inline const WeidemanTable& weideman_table()
{
    static const WeidemanTable table = [] {
        WeidemanTable t{};
        constexpr int n_terms = WeidemanTable::terms;
        constexpr int m = 2 * n_terms;
        t.L = std::sqrt(n_terms / std::numbers::sqrt2);
        std::array<double, 2 * m - 1> samples{};
        for (int k = -m + 1; k <= m - 1; ++k) {
            const double theta = k * std::numbers::pi / m;
            const double s = t.L * std::tan(0.5 * theta);
            samples[static_cast<std::size_t>(k + m - 1)] = std::exp(-s * s) * (t.L * t.L + s * s);
        }
        for (int j = 1; j <= n_terms; ++j) {
            double acc = 0.0;
            for (int k = -m + 1; k <= m - 1; ++k)
                acc += samples[static_cast<std::size_t>(k + m - 1)] *
                       std::cos(std::numbers::pi * j * k / m);
            t.coeff[static_cast<std::size_t>(j - 1)] = acc / (2.0 * m);
        }
        return t;
    }();
    return table;
}

inline Complex faddeeva_upper(Complex z)
{
    constexpr Complex i{0.0, 1.0};
    if (std::abs(z) >= 8.0) {
        Complex r{0.0, 0.0};
        for (int k = 64; k >= 1; --k) r = (0.5 * k) / (z - r);
        return i * inv_sqrt_pi / (z - r);
    }
    const auto& t = weideman_table();
    const Complex denom = t.L - i * z;
    const Complex zeta = (t.L + i * z) / denom;
    Complex p{0.0, 0.0};
    for (auto it = t.coeff.rbegin(); it != t.coeff.rend(); ++it) p = p * zeta + *it;
    return 2.0 * p / (denom * denom) + inv_sqrt_pi / denom;
}

inline bool finite(Complex z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

}  // namespace detail

/// exp(x^2) * erfc(x). Overflows (NumericalFailure) only for x below about -26.6.
inline double erfcx(double x)
{
    if (std::isnan(x)) throw InvalidArgument("erfcx: NaN argument");
    if (x == std::numeric_limits<double>::infinity()) return 0.0;
    if (x >= 12.0) return detail::erfcx_continued_fraction(x);
    if (x >= 0.0) return detail::exp_square(x) * std::erfc(x);
    const double v = 2.0 * detail::exp_square(x) - erfcx(-x);
    if (!std::isfinite(v)) throw NumericalFailure("erfcx: result overflows for x = " + std::to_string(x));
    return v;
}

/// Analytic continuation of erfcx to the complex plane.
inline Complex erfcx(Complex z)
{
    if (!detail::finite(z)) throw InvalidArgument("erfcx: non-finite complex argument");
    if (z.imag() == 0.0) return {erfcx(z.real()), 0.0};
    // Exact Schwarz symmetry keeps conjugate-pair sums real to the last bit.
    if (z.imag() < 0.0) return std::conj(erfcx(std::conj(z)));
    if (z.real() >= 0.0) return detail::faddeeva_upper(Complex(-z.imag(), z.real()));
    const Complex v = 2.0 * std::exp(z * z) - erfcx(-z);
    if (!detail::finite(v)) throw NumericalFailure("erfcx: complex result overflows");
    return v;
}

inline Complex erfcx_complex(Complex z) { return erfcx(z); }

/// exp(log_scale) * W(n, m) where W(n, m) = exp(2nm + m^2) erfc(n + m).
///
/// The scale factor is folded into the exponent so that callers with a
/// decaying prefactor (exp(-k_d t)) never form an overflowing intermediate.
inline Complex w_kernel_scaled(double n, Complex m, double log_scale)
{
    if (!std::isfinite(n) || !detail::finite(m) || std::isnan(log_scale))
        throw InvalidArgument("w_kernel: non-finite argument");
    const Complex z = n + m;
    Complex v;
    if (z.real() >= 0.0) {
        v = std::exp(log_scale - n * n) * erfcx(z);
    } else {
        // erfcx(z) = 2 exp(z^2) - erfcx(-z), and z^2 - n^2 = 2nm + m^2.
        v = 2.0 * std::exp(log_scale + 2.0 * n * m + m * m) - std::exp(log_scale - n * n) * erfcx(-z);
    }
    if (!detail::finite(v)) throw NumericalFailure("w_kernel: result is not finite");
    return v;
}

inline Complex w_kernel(double n, Complex m) { return w_kernel_scaled(n, m, 0.0); }

inline double w_kernel(double n, double m) { return w_kernel_scaled(n, Complex(m, 0.0), 0.0).real(); }

/// Roots of x^3 - e1 x^2 + e2 x - e3, i.e. the three numbers whose
/// elementary symmetric functions are (e1, e2, e3).
struct CubicRoots {
    std::array<Complex, 3> roots{};
    /// Max over k of |e_k(roots) - e_k| / max(|e_k|, s^k), s = max |root|.
    double residual = 0.0;
    /// Some pair of roots closer than 1e-9 * max |root|.
    bool degenerate = false;
};

namespace detail {

inline std::array<Complex, 3> symmetric_functions(const std::array<Complex, 3>& r)
{
    return {r[0] + r[1] + r[2], r[0] * r[1] + r[1] * r[2] + r[0] * r[2], r[0] * r[1] * r[2]};
}

inline double symmetric_residual(const std::array<Complex, 3>& r, double e1, double e2, double e3)
{
    double scale = 0.0;
    for (const auto& x : r) scale = std::max(scale, std::abs(x));
    const auto s = symmetric_functions(r);
    const std::array<double, 3> e{e1, e2, e3};
    if (scale == 0.0) return (e1 == 0.0 && e2 == 0.0 && e3 == 0.0) ? 0.0 : std::numeric_limits<double>::infinity();
    double worst = 0.0;
    double power = 1.0;
    for (std::size_t k = 0; k < 3; ++k) {
        power *= scale;
        const double ref = std::max(std::abs(e[k]), power);
        worst = std::max(worst, std::abs(s[k] - e[k]) / ref);
    }
    return worst;
}

template <class T>
T newton_polish(T x, double e1, double e2, double e3)
{
    for (int it = 0; it < 4; ++it) {
        const T f = ((x - e1) * x + e2) * x - e3;
        const T df = (3.0 * x - 2.0 * e1) * x + e2;
        if (df == T(0.0)) break;
        const T next = x - f / df;
        const T f_next = ((next - e1) * next + e2) * next - e3;
        if (!(std::abs(f_next) < std::abs(f))) break;
        x = next;
    }
    return x;
}

// Impose the structure real coefficients demand (three real roots, or one
// real root plus a conjugate pair), polish, and order canonically.
inline std::array<Complex, 3> conjugate_structure(std::array<Complex, 3> r, double e1, double e2, double e3)
{
    double scale = 0.0;
    for (const auto& x : r) scale = std::max(scale, std::abs(x));
    std::sort(r.begin(), r.end(), [](Complex a, Complex b) { return std::abs(a.imag()) < std::abs(b.imag()); });
    const double real_root = newton_polish(r[0].real(), e1, e2, e3);
    std::array<Complex, 3> out;
    out[0] = Complex(real_root, 0.0);
    const double im = 0.5 * (std::abs(r[1].imag()) + std::abs(r[2].imag()));
    if (im > 1e-12 * scale) {
        Complex c = newton_polish(Complex(0.5 * (r[1].real() + r[2].real()), im), e1, e2, e3);
        c = Complex(c.real(), std::abs(c.imag()));
        out[1] = std::conj(c);
        out[2] = c;
    } else {
        out[1] = Complex(newton_polish(r[1].real(), e1, e2, e3), 0.0);
        out[2] = Complex(newton_polish(r[2].real(), e1, e2, e3), 0.0);
    }
    std::sort(out.begin(), out.end(), [](Complex a, Complex b) {
        return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
    });
    return out;
}

inline std::array<Complex, 3> cardano(double e1, double e2, double e3)
{
    // x = y + e1/3 gives y^3 + p y + q = 0.
    const double shift = e1 / 3.0;
    const double p = e2 - e1 * e1 / 3.0;
    const double q = -e3 + e1 * e2 / 3.0 - 2.0 * e1 * e1 * e1 / 27.0;
    const Complex disc = std::sqrt(Complex(0.25 * q * q + p * p * p / 27.0, 0.0));
    const Complex a = -0.5 * q + disc;
    const Complex b = -0.5 * q - disc;
    const Complex base = std::abs(a) >= std::abs(b) ? a : b;
    if (std::abs(base) == 0.0) return {Complex(shift), Complex(shift), Complex(shift)};
    const Complex c = std::pow(base, 1.0 / 3.0);
    const Complex omega(-0.5, std::sqrt(3.0) / 2.0);
    std::array<Complex, 3> out;
    Complex ck = c;
    for (auto& root : out) {
        root = ck - p / (3.0 * ck) + shift;
        ck *= omega;
    }
    return out;
}

inline std::array<Complex, 3> companion_roots(double e1, double e2, double e3)
{
    Eigen::Matrix3d companion;
    companion << e1, -e2, e3, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0;
    Eigen::EigenSolver<Eigen::Matrix3d> solver(companion, false);
    const auto ev = solver.eigenvalues();
    return {Complex(ev[0]), Complex(ev[1]), Complex(ev[2])};
}

// A multiple root is only resolved to about sqrt(eps) relative, so computed
// roots of an exact double root sit ~1e-8 apart. Merge a close pair (or all
// three) into its mean when the merged set reconstructs the coefficients at
// least as well; `residual` is updated accordingly.
inline std::array<Complex, 3> collapse_clusters(std::array<Complex, 3> r, double e1, double e2, double e3,
                                                double& residual)
{
    double scale = 0.0;
    for (const auto& x : r) scale = std::max(scale, std::abs(x));
    const double near = 1e-5 * scale;
    const double slack = 16.0 * std::numeric_limits<double>::epsilon();
    auto accept = [&](const std::array<Complex, 3>& cand) {
        const double res = symmetric_residual(cand, e1, e2, e3);
        if (res <= std::max(residual, slack)) {
            r = cand;
            residual = res;
            return true;
        }
        return false;
    };
    const Complex mean3 = (r[0] + r[1] + r[2]) / 3.0;
    bool all_near = true;
    for (const auto& x : r) all_near = all_near && std::abs(x - mean3) < near;
    if (all_near) {
        const Complex m(mean3.real(), 0.0);
        if (accept({m, m, m})) return r;
    }
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i + 1; j < 3; ++j) {
            if (!(std::abs(r[i] - r[j]) < near)) continue;
            const std::size_t k = 3 - i - j;
            const Complex m(0.5 * (r[i].real() + r[j].real()), 0.0);
            std::array<Complex, 3> cand{m, m, r[k]};
            std::sort(cand.begin(), cand.end(), [](Complex a, Complex b) {
                return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
            });
            if (accept(cand)) return r;
        }
    return r;
}

}  // namespace detail

inline CubicRoots roots_from_symmetric(double e1, double e2, double e3)
{
    if (!std::isfinite(e1) || !std::isfinite(e2) || !std::isfinite(e3))
        throw InvalidArgument("roots_from_symmetric: non-finite coefficient");
    CubicRoots out;
    out.roots = detail::conjugate_structure(detail::cardano(e1, e2, e3), e1, e2, e3);
    out.residual = detail::symmetric_residual(out.roots, e1, e2, e3);
    if (!(out.residual <= 1e-10)) {
        const auto alt = detail::conjugate_structure(detail::companion_roots(e1, e2, e3), e1, e2, e3);
        const double alt_res = detail::symmetric_residual(alt, e1, e2, e3);
        if (alt_res < out.residual || std::isnan(out.residual)) {
            out.roots = alt;
            out.residual = alt_res;
        }
    }
    if (!(out.residual <= 1e-10))
        throw NumericalFailure("roots_from_symmetric: residual " + std::to_string(out.residual) +
                               " exceeds 1e-10");
    out.roots = detail::collapse_clusters(out.roots, e1, e2, e3, out.residual);
    double scale = 0.0;
    for (const auto& x : out.roots) scale = std::max(scale, std::abs(x));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i + 1; j < 3; ++j)
            if (std::abs(out.roots[i] - out.roots[j]) < 1e-9 * scale) out.degenerate = true;
    return out;
}

namespace detail {

// ln(n!) - [(n + 1/2) ln n - n + ln sqrt(2 pi)]
inline double stirling_error(double n)
{
    constexpr double s0 = 1.0 / 12.0, s1 = 1.0 / 360.0, s2 = 1.0 / 1260.0, s3 = 1.0 / 1680.0, s4 = 1.0 / 1188.0;
    constexpr double ln_sqrt_2pi = 0.91893853320467274178;
    if (n <= 15.0) return std::lgamma(n + 1.0) - (n + 0.5) * std::log(n) + n - ln_sqrt_2pi;
    const double nn = n * n;
    if (n > 500.0) return (s0 - s1 / nn) / n;
    if (n > 80.0) return (s0 - (s1 - s2 / nn) / nn) / n;
    if (n > 35.0) return (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / n;
    return (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / n;
}

// x ln(x/m) + m - x without cancellation when x ~ m.
inline double deviance_term(double x, double m)
{
    if (std::abs(x - m) < 0.1 * (x + m)) {
        const double v = (x - m) / (x + m);
        double s = (x - m) * v;
        double ej = 2.0 * x * v;
        const double v2 = v * v;
        for (int j = 1; j < 1000; ++j) {
            ej *= v2;
            const double s1 = s + ej / (2 * j + 1);
            if (s1 == s) return s1;
            s = s1;
        }
        return s;
    }
    return x * std::log(x / m) + m - x;
}

// Poisson probability mass, saddle-point form (accurate for large k and mean).
inline double poisson_pmf(double k, double mean)
{
    if (k == 0.0) return std::exp(-mean);
    return std::exp(-stirling_error(k) - deviance_term(k, mean)) /
           std::sqrt(2.0 * std::numbers::pi * k);
}

}  // namespace detail

/// Pr(N < xi) for N ~ Poisson(mean).
inline double poisson_cdf_below(double mean, std::int64_t xi)
{
    if (std::isnan(mean) || !std::isfinite(mean)) throw InvalidArgument("poisson_cdf_below: non-finite mean");
    if (mean < 0.0) throw InvalidArgument("poisson_cdf_below: negative mean");
    if (xi < 0) throw InvalidArgument("poisson_cdf_below: negative threshold");
    if (xi == 0) return 0.0;
    if (mean == 0.0) return 1.0;
    const double last = static_cast<double>(xi - 1);
    if (last < mean) {
        // Left tail: terms shrink as the index decreases.
        double term = detail::poisson_pmf(last, mean);
        double sum = term;
        for (double i = last; i >= 1.0; i -= 1.0) {
            term *= i / mean;
            sum += term;
            if (term < 1e-17 * sum) break;
        }
        return std::min(sum, 1.0);
    }
    // Right tail from xi upward: terms shrink as the index increases.
    double term = detail::poisson_pmf(last + 1.0, mean);
    double upper = term;
    for (double i = last + 1.0; term > 0.0; i += 1.0) {
        term *= mean / (i + 1.0);
        upper += term;
        if (term < 1e-17 * upper) break;
    }
    return std::clamp(1.0 - upper, 0.0, 1.0);
}

}  // namespace molcom::specfun
