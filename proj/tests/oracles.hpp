#pragma once

// Independent reference computations used only by the test suites. Nothing
// here calls into the library code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <complex>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_complex.hpp>
#include <stdexcept>

namespace oracle {

/// erfcx(x) = (2/sqrt(pi)) * int_0^inf exp(-t^2 - 2 x t) dt for real x,
/// integrated piecewise with adaptive Gauss-Kronrod.
inline double erfcx_quadrature(double x)
{
    using boost::math::quadrature::gauss_kronrod;
    const double upper = std::max(0.0, -x) + 10.0;
    auto f = [&](double t) { return std::exp(-t * t - 2.0 * x * t); };
    double sum = 0.0;
    const int pieces = static_cast<int>(std::ceil(upper));
    const double h = upper / pieces;
    for (int k = 0; k < pieces; ++k)
        sum += gauss_kronrod<double, 61>::integrate(f, k * h, (k + 1) * h, 10, 1e-15);
    return 2.0 / std::sqrt(M_PI) * sum;
}

/// erfcx(z) in 100-digit arithmetic: Maclaurin series of erf for |z| <= 6,
/// Laplace continued fraction (depth doubled until converged) beyond, and
/// erfcx(z) = 2 exp(z^2) - erfcx(-z) for Re z < 0.
inline std::complex<double> erfcx_multiprecision(std::complex<double> zd)
{
    using boost::multiprecision::cpp_bin_float_100;
    using boost::multiprecision::cpp_complex_100;
    using R = cpp_bin_float_100;
    using C = cpp_complex_100;
    const R sqrt_pi = sqrt(boost::math::constants::pi<R>());
    auto eval = [&](const C& z, double abs_z) -> C {
        if (abs_z <= 6.0) {
            const C z2 = z * z;
            C term = z, sum = z;
            for (int n = 1; n < 4000; ++n) {
                term *= -z2 / R(n);
                const C add = term / R(2 * n + 1);
                sum += add;
                if (abs(add) < R("1e-60") * abs(sum)) break;
            }
            return exp(z2) * (C(1) - sum * R(2) / sqrt_pi);
        }
        C prev(0);
        for (int depth = 64; depth <= (1 << 22); depth *= 2) {
            C r(0);
            for (int k = depth; k >= 1; --k) r = R(k) / R(2) / (z + r);
            const C v = C(1) / (sqrt_pi * (z + r));
            if (abs(v - prev) < R("1e-40") * abs(v)) return v;
            prev = v;
        }
        throw std::runtime_error("erfcx_multiprecision: continued fraction did not converge");
    };
    const C z(zd.real(), zd.imag());
    C v;
    if (zd.real() >= 0.0)
        v = eval(z, std::abs(zd));
    else
        v = C(2) * exp(z * z) - eval(-z, std::abs(zd));
    return {static_cast<double>(v.real()), static_cast<double>(v.imag())};
}

/// Final separations of `walks` relative-coordinate walks started at
/// distance r0: `steps` Gaussian increments of variance 2 d t / steps per axis,
/// each endpoint inside the contact sphere mapped radially to 2 sigma - r.
/// sigma = 0 gives free diffusion.
inline std::vector<double> reflected_walk(double r0, double t, double d, double sigma, std::size_t walks, int steps,
                                          std::uint64_t seed)
{
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 * d * t / steps));
    std::vector<double> out(walks);
    for (auto& dist : out) {
        double x = r0, y = 0.0, z = 0.0;
        for (int k = 0; k < steps; ++k) {
            x += normal(gen);
            y += normal(gen);
            z += normal(gen);
            const double r = std::sqrt(x * x + y * y + z * z);
            if (r < sigma) {
                const double f = (2.0 * sigma - r) / r;
                x *= f;
                y *= f;
                z *= f;
            }
        }
        dist = std::sqrt(x * x + y * y + z * z);
    }
    return out;
}

/// Kolmogorov-Smirnov critical value at significance 0.01 (asymptotic).
inline constexpr double ks_critical_001 = 1.628;

/// sup |F_n - F| for a sample against a continuous CDF.
template <class Cdf>
double ks_statistic(std::vector<double> xs, Cdf&& cdf)
{
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        worst = std::max({worst, (i + 1) / n - f, f - i / n});
    }
    return worst;
}

/// sup |F_a - F_b| between two empirical CDFs.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b)
{
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double worst = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        worst = std::max(worst, std::abs(i / na - j / nb));
    }
    return worst;
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& xs)
{
    const double n = static_cast<double>(xs.size());
    double m = 0.0;
    for (double x : xs) m += x;
    m /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace oracle
