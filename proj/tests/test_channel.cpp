#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "molcom/channel.hpp"

using molcom::MobilityMode;
using molcom::PhysicalParams;

namespace {

double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }

// Captures warnings for the lifetime of the object.
struct WarningCapture {
    std::vector<std::string> messages;
    WarningCapture()
    {
        molcom::set_warning_handler([this](std::string_view m) { messages.emplace_back(m); });
    }
    ~WarningCapture() { molcom::set_warning_handler(nullptr); }
};

}  // namespace

TEST(Derive, CoverageMatchesHandValue)
{
    // 1000 * (13.95e-9)^2 / (4 * (0.5e-6)^2) = 1000 * 1.946025e-16 / 1e-12
    const auto d = molcom::derive(PhysicalParams{}, MobilityMode::fixed);
    EXPECT_NEAR(d.lambda, 0.1946025, 1e-15);
}

TEST(Derive, MobileEffectiveDiffusion)
{
    PhysicalParams p;
    p.diff_TX = 0.0;
    const auto d = molcom::derive(p, MobilityMode::mobile);
    EXPECT_LE(rel_err(d.d_eff1, 5.005e-10), 1e-15);
    EXPECT_EQ(d.d_eff1, p.diff_A + p.diff_RX);
    EXPECT_EQ(d.d_eff2, p.diff_TX + p.diff_RX);
    EXPECT_EQ(d.d_mol, d.d_eff1);
}

TEST(Derive, NoReceptorsMeansNoReaction)
{
    PhysicalParams p;
    p.num_receptors = 0;
    const auto d = molcom::derive(p, MobilityMode::fixed);
    EXPECT_EQ(d.phi, 0.0);
    EXPECT_EQ(d.k_f_mod, 0.0);
    EXPECT_EQ(molcom::cir(6e-5, p.r0, d, p), 0.0);
}

TEST(Derive, ReferenceSetAgainstMultiprecision)
{
    // 50-digit evaluation of the coverage model and symmetric functions.
    const auto fixed = molcom::derive(PhysicalParams{}, MobilityMode::fixed);
    EXPECT_LE(rel_err(fixed.phi, 0.19460250000015248829), 1e-12);
    EXPECT_LE(rel_err(fixed.k_f_mod, 2.4325312499999572966e-15), 1e-12);
    EXPECT_LE(rel_err(fixed.symmetric[0], 79.349052138830485664), 1e-13);
    EXPECT_EQ(fixed.symmetric[1], 180000.0);
    EXPECT_LE(rel_err(fixed.symmetric[2], 7357290.8672225490723), 1e-13);

    const auto mobile = molcom::derive(PhysicalParams{}, MobilityMode::mobile);
    EXPECT_LE(rel_err(mobile.phi, 0.19460250000015233596), 1e-12);
    EXPECT_LE(rel_err(mobile.k_f_mod, 2.4325312499999573392e-15), 1e-12);
    EXPECT_LE(rel_err(mobile.symmetric[0], 79.354106359507489214), 1e-13);
    EXPECT_LE(rel_err(mobile.symmetric[2], 7361660.801288687684), 1e-13);
    EXPECT_LE(mobile.roots.residual, 1e-12);
}

TEST(Derive, RejectsInvalidParameters)
{
    auto expect_invalid = [](auto mutate) {
        PhysicalParams p;
        mutate(p);
        EXPECT_THROW(molcom::derive(p, MobilityMode::fixed), molcom::InvalidConfiguration);
    };
    expect_invalid([](PhysicalParams& p) { p.num_receptors = 6000; });  // coverage > 1
    expect_invalid([](PhysicalParams& p) { p.r0 = 0.4e-6; });
    expect_invalid([](PhysicalParams& p) { p.radius_rx = 0.0; });
    expect_invalid([](PhysicalParams& p) { p.sample_offset = 0.4e-3; });
    expect_invalid([](PhysicalParams& p) { p.sample_offset = 0.0; });
    expect_invalid([](PhysicalParams& p) { p.p1 = 1.5; });
    expect_invalid([](PhysicalParams& p) { p.seq_length = 0; });
    expect_invalid([](PhysicalParams& p) { p.k_d = -1.0; });
    expect_invalid([](PhysicalParams& p) { p.diff_A = NAN; });
    expect_invalid([](PhysicalParams& p) { p.k_f_mod_override = -1.0; });
}

TEST(Cir, AgainstMultiprecisionReference)
{
    // Literal three-term formula with 50-digit erfc and polynomial roots.
    struct Case {
        MobilityMode mode;
        double t, r0, want;
    };
    const Case cases[] = {
        {MobilityMode::fixed, 1e-6, 1e-6, 3.8782001251621765108e-59},
        {MobilityMode::fixed, 6e-5, 1e-6, 0.0001832902876849297437},
        {MobilityMode::fixed, 1e-4, 1e-6, 0.00015346190350603172466},
        {MobilityMode::fixed, 3.6e-4, 1e-6, 7.9989612379287517781e-7},
        {MobilityMode::fixed, 1e-3, 1e-6, 9.8974696249176781411e-13},
        {MobilityMode::mobile, 1e-6, 1e-6, 4.3961499899767313001e-59},
        {MobilityMode::mobile, 6e-5, 1e-6, 0.00018359317645979337771},
        {MobilityMode::mobile, 1e-4, 1e-6, 0.00015355866872970196827},
        {MobilityMode::mobile, 3.6e-4, 1e-6, 7.9942140671327292735e-7},
        {MobilityMode::mobile, 1e-3, 1e-6, 9.8870835394126018429e-13},
        {MobilityMode::fixed, 6e-5, 1.5e-6, 1.6294921750150632462e-7},
    };
    const PhysicalParams p;
    for (const auto& c : cases) {
        const auto d = molcom::derive(p, c.mode);
        EXPECT_LE(rel_err(molcom::cir(c.t, c.r0, d, p), c.want), 1e-9)
            << molcom::to_string(c.mode) << " t=" << c.t << " r0=" << c.r0;
    }
}

TEST(Cir, VanishesBeforeArrival)
{
    const PhysicalParams p;
    const auto d = molcom::derive(p, MobilityMode::fixed);
    EXPECT_LT(molcom::cir(1e-12, p.r0, d, p), 1e-12);
}

TEST(Cir, ZeroForwardRate)
{
    PhysicalParams p;
    p.k_f = 0.0;
    const auto d = molcom::derive(p, MobilityMode::fixed);
    for (double t : {1e-6, 6e-5, 1e-3, 1e-2}) EXPECT_EQ(molcom::cir(t, p.r0, d, p), 0.0);
}

TEST(Cir, RejectsBadArguments)
{
    const PhysicalParams p;
    const auto d = molcom::derive(p, MobilityMode::fixed);
    EXPECT_THROW(molcom::cir(0.0, p.r0, d, p), molcom::InvalidArgument);
    EXPECT_THROW(molcom::cir(-1e-5, p.r0, d, p), molcom::InvalidArgument);
    EXPECT_THROW(molcom::cir(1e-5, 0.4e-6, d, p), molcom::InvalidArgument);
}

TEST(Cir, SubstitutionConsistency)
{
    PhysicalParams p;
    p.diff_TX = 0.0;
    p.diff_RX = 0.0;
    const auto f = molcom::derive(p, MobilityMode::fixed);
    const auto m = molcom::derive(p, MobilityMode::mobile);
    EXPECT_EQ(std::memcmp(&f.lambda, &m.lambda, sizeof(double)), 0);
    EXPECT_EQ(f.phi, m.phi);
    EXPECT_EQ(f.k_f_mod, m.k_f_mod);
    EXPECT_EQ(f.d_eff1, m.d_eff1);
    EXPECT_EQ(f.d_eff2, m.d_eff2);
    EXPECT_EQ(f.d_mol, m.d_mol);
    EXPECT_EQ(f.symmetric, m.symmetric);
    EXPECT_EQ(f.roots.roots, m.roots.roots);
    for (int k = 1; k <= 300; ++k) {
        const double t = k * 1e-5;
        EXPECT_EQ(molcom::cir(t, p.r0, f, p), molcom::cir(t, p.r0, m, p)) << t;
    }
}

namespace {

// Log-uniform draw over two decades centred on the reference values.
PhysicalParams random_params(std::mt19937_64& gen)
{
    std::uniform_real_distribution<double> dec(-1.0, 1.0);
    auto around = [&](double v) { return v * std::pow(10.0, dec(gen)); };
    PhysicalParams p;
    p.diff_A = around(0.5e-9);
    p.diff_RX = around(0.5e-12);
    p.radius_rx = around(0.5e-6);
    p.radius_tx = 0.0;
    p.r0 = p.radius_rx * (1.0 + around(1.0));
    p.k_f = around(12.5e-15);
    p.k_b = around(2e5);
    p.k_d = around(2e4);
    p.receptor_radius = around(13.95e-9);
    const double max_m = 4.0 * p.radius_rx * p.radius_rx / (p.receptor_radius * p.receptor_radius);
    p.num_receptors = std::min(static_cast<std::int64_t>(around(1000.0)), static_cast<std::int64_t>(max_m));
    return p;
}

}  // namespace

TEST(Cir, ProbabilityOnRandomDraws)
{
    std::mt19937_64 gen(101);
    std::uniform_real_distribution<double> lt(-6.0, -2.0);
    int checked = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto p = random_params(gen);
        const auto mode = i % 2 == 0 ? MobilityMode::fixed : MobilityMode::mobile;
        const auto d = molcom::derive(p, mode);
        const double t = std::pow(10.0, lt(gen));
        double v = -1.0;
        ASSERT_NO_THROW(v = molcom::cir(t, p.r0, d, p)) << "draw " << i;
        ASSERT_TRUE(std::isfinite(v));
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
        ++checked;
    }
    EXPECT_EQ(checked, 10000);
}

TEST(Cir, DegradationNeverIncreasesResponse)
{
    std::mt19937_64 gen(202);
    std::uniform_real_distribution<double> lt(-6.0, -2.0);
    for (int i = 0; i < 500; ++i) {
        auto p = random_params(gen);
        const double t = std::pow(10.0, lt(gen));
        double prev = INFINITY;
        for (double kd : {0.0, 1e2, 1e3, 1e4, 3e4, 1e5, 1e6}) {
            p.k_d = kd;
            const auto d = molcom::derive(p, MobilityMode::fixed);
            const double v = molcom::cir(t, p.r0, d, p);
            EXPECT_LE(v, prev * (1.0 + 1e-9) + 1e-300) << "draw " << i << " k_d=" << kd << " t=" << t;
            prev = v;
        }
    }
}

TEST(Cir, RootPermutationInvariance)
{
    const PhysicalParams p;
    for (auto mode : {MobilityMode::fixed, MobilityMode::mobile}) {
        const auto d = molcom::derive(p, mode);
        for (double t : {1e-6, 2e-5, 6e-5, 3.6e-4, 1e-3}) {
            auto r = d.roots.roots;
            std::sort(r.begin(), r.end(), [](auto a, auto b) {
                return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
            });
            const double ref = molcom::cir_with_roots(t, p.r0, r, d, p);
            int perms = 0;
            do {
                EXPECT_LE(rel_err(molcom::cir_with_roots(t, p.r0, r, d, p), ref), 1e-12) << t;
                ++perms;
            } while (std::next_permutation(r.begin(), r.end(), [](auto a, auto b) {
                return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
            }));
            EXPECT_EQ(perms, 6);
        }
    }
}

namespace {

// Discriminant of x^3 - e1 x^2 + e2 x - e3 with the symmetric functions
// written out independently of the library.
double discriminant_for_kd(const PhysicalParams& p, double k_f_mod, double kd)
{
    const double D = p.diff_A, a = p.radius_rx;
    const double e1 = (1.0 + k_f_mod / (4.0 * M_PI * a * D)) * std::sqrt(D) / a;
    const double e2 = p.k_b - kd;
    const double e3 = p.k_b * std::sqrt(D) / a - kd * e1;
    const double b = -e1, c = e2, dd = -e3;
    return 18.0 * b * c * dd - 4.0 * b * b * b * dd + b * b * c * c - 4.0 * c * c * c - 27.0 * dd * dd;
}

}  // namespace

TEST(Cir, DegenerateRootsArePerturbedWithWarning)
{
    // The reference set has a complex pair; raising k_d turns it into two real roots,
    // which collide where the discriminant changes sign.
    PhysicalParams p;
    const double kfm = molcom::derive(p, MobilityMode::fixed).k_f_mod;
    p.k_f_mod_override = kfm;
    double lo = 2e4, hi = 2e4;
    while (discriminant_for_kd(p, kfm, hi) < 0.0) hi *= 1.5;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (discriminant_for_kd(p, kfm, mid) < 0.0 ? lo : hi) = mid;
    }
    p.k_d = hi;
    WarningCapture capture;
    const auto d = molcom::derive(p, MobilityMode::fixed);
    ASSERT_TRUE(d.k_d_perturbed);
    EXPECT_FALSE(d.roots.degenerate);
    EXPECT_LE(std::abs(d.k_d - p.k_d), 1.01e-9 * p.k_d);
    EXPECT_GT(d.k_d, p.k_d);
    ASSERT_EQ(capture.messages.size(), 1u);
    EXPECT_NE(capture.messages[0].find("degenerate"), std::string::npos);

    // The response is continuous through the collision: compare against the
    // midpoint of two evaluations straddling k_d, which cancels the first-order
    // dependence on k_d itself.
    PhysicalParams below = p, above = p;
    below.k_d = p.k_d * (1.0 - 1e-6);
    above.k_d = p.k_d * (1.0 + 1e-6);
    const auto db = molcom::derive(below, MobilityMode::fixed);
    const auto da = molcom::derive(above, MobilityMode::fixed);
    for (double t : {2e-5, 6e-5, 2e-4}) {
        const double mid = 0.5 * (molcom::cir(t, p.r0, db, below) + molcom::cir(t, p.r0, da, above));
        EXPECT_LE(rel_err(molcom::cir(t, p.r0, d, p), mid), 1e-5) << t;
    }
}

TEST(ExpectedSignal, ScalesCir)
{
    PhysicalParams p;
    const auto d = molcom::derive(p, MobilityMode::fixed);
    EXPECT_EQ(molcom::expected_received_signal(6e-5, d, p), 5000.0 * molcom::cir(6e-5, p.r0, d, p));
    p.num_molecules = 0;
    for (double t : {1e-6, 6e-5, 1e-3}) EXPECT_EQ(molcom::expected_received_signal(t, d, p), 0.0);
}

TEST(ExpectedSignal, SingleInteriorMaximum)
{
    const PhysicalParams p;
    for (auto mode : {MobilityMode::fixed, MobilityMode::mobile}) {
        const auto d = molcom::derive(p, mode);
        std::vector<double> v;
        for (int k = 1; k <= 3000; ++k) v.push_back(molcom::expected_received_signal(k * 1e-6, d, p));
        const auto peak = std::max_element(v.begin(), v.end()) - v.begin();
        EXPECT_GT(peak, 0);
        EXPECT_LT(peak, static_cast<long>(v.size()) - 1);
        for (long k = 1; k <= peak; ++k) EXPECT_GE(v[k], v[k - 1]) << k;
        for (long k = peak + 1; k < static_cast<long>(v.size()); ++k) EXPECT_LE(v[k], v[k - 1]) << k;
        EXPECT_GT(v[peak], 10.0 * v.back());
    }
}
