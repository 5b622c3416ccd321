// Acceptance runner: one PASS/FAIL line per criterion. With arguments, only
// criteria whose name contains one of them are run. Exit status is 0 when
// every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/format.h>

#include "molcom/harness/commands.hpp"
#include "oracles.hpp"

namespace sf = molcom::specfun;
using molcom::BitSequence;
using molcom::MobilityMode;
using molcom::PhysicalParams;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    double budget_s;
    std::function<Outcome()> run;
};

double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }
double rel_err(sf::Complex got, sf::Complex want) { return std::abs(got - want) / std::abs(want); }

PhysicalParams desk_params(double diff_tx, int L)
{
    PhysicalParams base;
    base.num_molecules = 1000;
    base.seq_length = L;
    return molcom::harness::case_params(base, diff_tx, std::nullopt);
}

MobilityMode mode_of(double diff_tx) { return diff_tx == 0.0 ? MobilityMode::fixed : MobilityMode::mobile; }

std::string case_name(double diff_tx) { return diff_tx == 0.0 ? "fixed" : fmt::format("D_TX={}", diff_tx); }

// ---------------------------------------------------------------------------

Outcome special_functions()
{
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::string> parts;
    bool ok = true;
    auto note = [&](const std::string& what, double worst, double tol) {
        ok = ok && worst <= tol;
        parts.push_back(fmt::format("{} {:.2g}/{:.0e}", what, worst, tol));
    };

    double w_quad = 0.0, w_ld = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double x = -10.0 + 40.0 * u(gen);
        const double got = sf::erfcx(x);
        w_quad = std::max(w_quad, rel_err(got, oracle::erfcx_quadrature(x)));
        const long double ld = std::exp(static_cast<long double>(x) * x) * std::erfc(static_cast<long double>(x));
        w_ld = std::max(w_ld, rel_err(got, static_cast<double>(ld)));
    }
    note("erfcx~quad", w_quad, 1e-12);
    note("erfcx~ld", w_ld, 1e-12);

    double w_c = 0.0;
    for (int checked = 0; checked < 1000;) {
        const sf::Complex z = std::polar(30.0 * std::sqrt(u(gen)), 2.0 * M_PI * u(gen));
        if (z.real() * z.real() - z.imag() * z.imag() > 650.0) continue;  // erfcx overflows double there
        w_c = std::max(w_c, rel_err(sf::erfcx(z), oracle::erfcx_multiprecision(z)));
        ++checked;
    }
    note("erfcx(z)", w_c, 1e-8);

    double w_axis = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double x = -10.0 + 20.0 * u(gen);
        w_axis = std::max(w_axis, rel_err(sf::erfcx(sf::Complex(x, 0.0)).real(), sf::erfcx(x)));
    }
    note("axis", w_axis, 1e-12);

    double w_w = 0.0;
    for (int checked = 0; checked < 1000;) {
        const double n = -15.0 + 30.0 * u(gen), m = -15.0 + 30.0 * u(gen);
        if (std::abs(n + m) > 30.0) continue;
        const long double ln = n, lm = m;
        const long double want = std::exp(2.0L * ln * lm + lm * lm) * std::erfc(ln + lm);
        if (!(std::abs(want) > 1e-300L) || !std::isfinite(static_cast<double>(want))) continue;
        w_w = std::max(w_w, rel_err(sf::w_kernel(n, m), static_cast<double>(want)));
        ++checked;
    }
    note("W", w_w, 1e-10);

    // Poisson CDF against the defining finite sum in long double.
    double w_p = 0.0;
    for (int checked = 0; checked < 1000;) {
        const double mean = std::pow(10.0, -3.0 + 7.0 * u(gen));
        const auto xi = static_cast<std::int64_t>(1 + u(gen) * (3.0 * mean + 20.0));
        long double term = std::exp(-static_cast<long double>(mean)), sum = 0.0L;
        for (std::int64_t k = 0; k < xi; ++k) {
            sum += term;
            term *= static_cast<long double>(mean) / static_cast<long double>(k + 1);
        }
        if (sum < 1e-290L) continue;
        w_p = std::max(w_p, rel_err(sf::poisson_cdf_below(mean, xi), static_cast<double>(std::min(sum, 1.0L))));
        ++checked;
    }
    note("poisson", w_p, 1e-11);

    // Cubic roots against companion-matrix eigenvalues; residual on every
    // triple, root match where the roots are not clustered.
    double w_res = 0.0, w_root = 0.0;
    int matched = 0;
    for (int i = 0; i < 1000; ++i) {
        const double e1 = -10.0 + 20.0 * u(gen), e2 = -10.0 + 20.0 * u(gen), e3 = -10.0 + 20.0 * u(gen);
        const auto r = sf::roots_from_symmetric(e1, e2, e3);
        w_res = std::max(w_res, r.residual);
        Eigen::Matrix3d c;
        c << e1, -e2, e3, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0;
        const Eigen::Vector3cd ev = Eigen::EigenSolver<Eigen::Matrix3d>(c, false).eigenvalues();
        double scale = 0.0, gap = INFINITY;
        for (int a = 0; a < 3; ++a) {
            scale = std::max(scale, std::abs(ev[a]));
            for (int b = a + 1; b < 3; ++b) gap = std::min(gap, std::abs(ev[a] - ev[b]));
        }
        if (gap < 1e-3 * scale) continue;
        for (const auto& z : r.roots) {
            double best = INFINITY;
            for (int a = 0; a < 3; ++a) best = std::min(best, std::abs(z - ev[a]));
            w_root = std::max(w_root, best / scale);
        }
        ++matched;
    }
    note("cubic residual", w_res, 1e-10);
    note(fmt::format("cubic roots ({} triples)", matched), w_root, 1e-10);
    return {ok, fmt::format("{}", fmt::join(parts, ", "))};
}

// ---------------------------------------------------------------------------

double integrated_mass(double t, double r0, double d, double sigma)
{
    using Rule = boost::math::quadrature::gauss_kronrod<double, 61>;
    const double ell = std::sqrt(2.0 * d * t);
    const double lo = std::max(sigma, r0 - 14.0 * ell), hi = r0 + 14.0 * ell;
    auto f = [&](double r) { return molcom::distance_pdf(r, t, r0, d, sigma); };
    const int panels = 2000;
    const double h = (hi - lo) / panels;
    double sum = 0.0;
    for (int k = 0; k < panels; ++k) sum += Rule::integrate(f, lo + k * h, lo + (k + 1) * h, 0);
    return sum;
}

Outcome normalization()
{
    const double sigma = PhysicalParams{}.contact_radius();
    double worst = 0.0, worst_law = 0.0;
    for (double t : {3e-5, 3e-4, 3e-3})
        for (double d : {1e-13, 1e-11, 1e-9})
            for (double r0 : {0.6e-6, 1e-6, 5e-6}) {
                worst = std::max(worst, std::abs(integrated_mass(t, r0, d, sigma) - 1.0));
                worst_law = std::max(worst_law, std::abs(molcom::DistanceLaw(r0, t, d, sigma).total_mass() - 1.0));
            }
    return {worst <= 1e-6 && worst_law <= 1e-6,
            fmt::format("27 points, max |mass-1| quadrature {:.2g}, tabulated {:.2g}, tolerance 1e-6", worst,
                        worst_law)};
}

// ---------------------------------------------------------------------------

Outcome distance_oracle()
{
    namespace cd = molcom::harness::cmd_detail;
    const std::int64_t walks = 1000000;
    std::vector<std::string> parts;
    bool ok = true;
    for (double diff_tx : {1e-9, 1e-10}) {
        const auto p = desk_params(diff_tx, 1);
        const auto d = molcom::derive(p, MobilityMode::mobile);
        const double sigma = p.contact_radius();
        const molcom::DistanceLaw law(p.r0, p.bit_interval, d.d_eff2, sigma);
        const auto xs = cd::reflected_walks(p.r0, p.bit_interval, d.d_eff2, sigma, walks, 0.01 * sigma, 1, 1);
        const double ks = oracle::ks_statistic(xs, [&](double r) { return law.cdf(r); });
        const double crit = cd::ks_critical(0.01, xs.size());
        ok = ok && ks < crit;
        parts.push_back(fmt::format("KS {} {:.3g}/{:.3g}", case_name(diff_tx), ks, crit));
    }

    // Two sampled T-transitions against one walk over 2T.
    auto p = desk_params(1e-9, 3);
    const auto d = molcom::derive(p, MobilityMode::mobile);
    const double sigma = p.contact_radius();
    const molcom::TransitionSampler sampler(d.d_eff2, p.bit_interval, sigma);
    std::vector<double> r2(100000);
    for (std::size_t i = 0; i < r2.size(); ++i) {
        molcom::rng::Stream stream(91, molcom::stream_domain::trajectory, i);
        r2[i] = molcom::sample_trajectory(p.r0, p, sampler, stream).distances[2];
    }
    const auto walk = cd::reflected_walks(p.r0, 2.0 * p.bit_interval, d.d_eff2, sigma, walks, 0.01 * sigma, 2, 1);
    const double n = static_cast<double>(r2.size()), m = static_cast<double>(walk.size());
    const double ks = oracle::ks_two_sample(r2, walk);
    const double crit = cd::ks_critical(0.01, 1) * std::sqrt((n + m) / (n * m));
    ok = ok && ks < crit;
    parts.push_back(fmt::format("CK 2T {:.3g}/{:.3g}", ks, crit));
    return {ok, fmt::format("{} walks; {}", walks, fmt::join(parts, ", "))};
}

// ---------------------------------------------------------------------------

Outcome received_signal()
{
    const int points = 50;
    std::vector<std::string> parts;
    bool ok = true;
    for (double diff_tx : {0.0, 1e-9}) {
        const auto p = desk_params(diff_tx, 1);
        const auto d = molcom::derive(p, mode_of(diff_tx));
        molcom::SimConfig c;
        c.dt = 2e-7;
        c.num_realizations = 2000;
        c.seed = 1;
        const auto total = static_cast<std::int64_t>(std::llround(p.bit_interval / c.dt));
        for (int k = 1; k <= points; ++k) c.record_grid.push_back(static_cast<double>(k * total / points) * c.dt);
        const auto sim = molcom::estimate_received_signal(BitSequence{{1}}, p, d, c);
        const double na = static_cast<double>(p.num_molecules), n = static_cast<double>(c.num_realizations);

        const double want_ts = na * molcom::cir(p.sample_offset, p.r0, d, p);
        const double z_ts = (sim.sample_mean[0] - want_ts) / sim.sample_std_error[0];
        int within = 0;
        for (std::size_t k = 0; k < sim.times.size(); ++k) {
            const double prob = molcom::cir(sim.times[k], p.r0, d, p);
            const double sd = std::max(sim.std_error[k], std::sqrt(na * prob * (1.0 - prob) / n));
            within += std::abs(sim.mean_bound[k] - na * prob) <= 3.0 * sd;
        }
        const bool pass = std::abs(z_ts) <= 3.0 && within >= 0.95 * points;
        ok = ok && pass;
        parts.push_back(fmt::format("{}: N_C(t_s) {:.4g} vs {:.4g} ({:+.2f} SE), grid {}/{} within 3 sd",
                                    case_name(diff_tx), sim.sample_mean[0], want_ts, z_ts, within, points));
    }
    return {ok, fmt::format("{}", fmt::join(parts, "; "))};
}

// ---------------------------------------------------------------------------

Outcome dt_convergence()
{
    const auto p = desk_params(0.0, 1);
    const auto d = molcom::derive(p, MobilityMode::fixed);
    auto run = [&](double dt, int substeps) {
        molcom::SimConfig c;
        c.dt = dt;
        c.noise_substeps = substeps;
        c.num_realizations = 2000;
        c.seed = 5;
        return molcom::estimate_received_signal(BitSequence{{1}}, p, d, c);
    };
    const auto coarse = run(2e-7, 2);
    const auto fine = run(1e-7, 1);
    const double diff = coarse.sample_mean[0] - fine.sample_mean[0];
    const double combined = std::hypot(coarse.sample_std_error[0], fine.sample_std_error[0]);
    std::vector<double> paired(coarse.sample_counts.size());
    for (std::size_t r = 0; r < paired.size(); ++r)
        paired[r] = static_cast<double>(coarse.sample_counts[r][0] - fine.sample_counts[r][0]);
    return {std::abs(diff) < combined,
            fmt::format("N_C(t_s) dt=2e-7 {:.4g}, dt=1e-7 {:.4g}, |diff| {:.3g} < combined SE {:.3g} (paired SE {:.3g})",
                        coarse.sample_mean[0], fine.sample_mean[0], std::abs(diff), combined,
                        oracle::mean_se(paired).se)};
}

// ---------------------------------------------------------------------------

struct BerRun {
    std::vector<std::int64_t> xi;
    std::vector<double> ana, ana_se, sim, sim_se;
};

BerRun ber_curves(double diff_tx)
{
    const auto p = desk_params(diff_tx, 10);
    const auto d = molcom::derive(p, mode_of(diff_tx));
    molcom::MonteCarloConfig mc;
    mc.num_trajectories = 10000;
    mc.seed = 1;

    // Locate the analytical minimum, then take five thresholds around it.
    std::vector<std::int64_t> scan(13);
    for (std::size_t k = 0; k < scan.size(); ++k) scan[k] = static_cast<std::int64_t>(k);
    const auto coarse = molcom::expected_ber(p, d, scan, mc);
    std::size_t best = 0;
    for (std::size_t k = 1; k < coarse.size(); ++k)
        if (coarse[k].value < coarse[best].value) best = k;
    BerRun out;
    const std::int64_t first = std::max<std::int64_t>(0, static_cast<std::int64_t>(best) - 2);
    for (std::int64_t k = 0; k < 5; ++k) out.xi.push_back(first + k);
    for (auto x : out.xi) {
        out.ana.push_back(coarse[static_cast<std::size_t>(x)].value);
        out.ana_se.push_back(coarse[static_cast<std::size_t>(x)].std_error);
    }

    molcom::SimConfig c;
    c.dt = 2e-7;
    c.num_realizations = 2000;
    c.seed = 1;
    const auto sim = molcom::estimate_ber(p, d, c, out.xi, p.p1);
    out.sim = sim.value;
    out.sim_se = sim.std_error;
    return out;
}

std::size_t argmin(const std::vector<double>& v)
{
    return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

Outcome ber_cross_check()
{
    std::vector<std::string> parts;
    bool ok = true;
    std::map<double, BerRun> runs;
    for (double diff_tx : {0.0, 1e-9}) {
        const auto r = ber_curves(diff_tx);
        runs[diff_tx] = r;
        double worst_z = 0.0;
        for (std::size_t k = 0; k < r.xi.size(); ++k)
            worst_z = std::max(worst_z, std::abs(r.ana[k] - r.sim[k]) / std::hypot(r.ana_se[k], r.sim_se[k]));
        const std::size_t n = r.xi.size();

        // Analytical: strictly down to an interior minimum, strictly up after.
        const std::size_t ka = argmin(r.ana);
        bool u_ana = ka > 0 && ka + 1 < n;
        for (std::size_t k = 0; k + 1 < n; ++k) u_ana = u_ana && (k < ka ? r.ana[k + 1] < r.ana[k] : r.ana[k + 1] > r.ana[k]);
        // Simulated: interior minimum with both ends resolvably above it.
        const std::size_t ks = argmin(r.sim);
        auto above = [&](std::size_t k) { return r.sim[k] - r.sim[ks] > 3.0 * std::hypot(r.sim_se[k], r.sim_se[ks]); };
        const bool u_sim = ks > 0 && ks + 1 < n && above(0) && above(n - 1);

        ok = ok && worst_z <= 3.0 && u_ana && u_sim;
        std::vector<std::string> cells;
        for (std::size_t k = 0; k < n; ++k) cells.push_back(fmt::format("{}:{:.4f}/{:.4f}", r.xi[k], r.ana[k], r.sim[k]));
        parts.push_back(fmt::format("{} [xi:ana/sim {}] max {:.2f} SE, U-shape ana {} sim {}", case_name(diff_tx),
                                    fmt::join(cells, " "), worst_z, u_ana ? "yes" : "no", u_sim ? "yes" : "no"));
    }
    const auto& f = runs[0.0];
    const auto& m = runs[1e-9];
    const double fa = f.ana[argmin(f.ana)], ma = m.ana[argmin(m.ana)];
    const double fs = f.sim[argmin(f.sim)], ms = m.sim[argmin(m.sim)];
    ok = ok && ma > fa && ms > fs;
    parts.push_back(fmt::format("minima mobile > fixed: ana {:.4f} > {:.4f}, sim {:.4f} > {:.4f}", ma, fa, ms, fs));
    return {ok, fmt::format("{}", fmt::join(parts, "; "))};
}

// ---------------------------------------------------------------------------

Outcome chain_oracle()
{
    const double states[3] = {0.8e-6, 1.0e-6, 1.6e-6};
    const double P[3][3] = {{0.6, 0.3, 0.1}, {0.25, 0.5, 0.25}, {0.05, 0.35, 0.6}};
    const std::vector<std::int64_t> thresholds{0, 1, 2, 3, 4, 6, 9, 20};
    double worst = 0.0;
    int compared = 0;
    for (int L = 1; L <= 4; ++L)
        for (double p1 : {0.5, 0.3, 0.8}) {
            auto p = desk_params(1e-10, L);
            p.num_molecules = 5000;
            p.p1 = p1;
            const auto d = molcom::derive(p, MobilityMode::mobile);
            std::vector<molcom::WeightedTrajectory> ensemble;
            std::vector<int> path(static_cast<std::size_t>(L), 1);
            auto expand = [&](auto&& self, int depth, double w) -> void {
                if (depth == L) {
                    molcom::Trajectory t;
                    for (int s : path) t.distances.push_back(states[s]);
                    ensemble.push_back({t, w});
                    return;
                }
                for (int s = 0; s < 3; ++s) {
                    path[static_cast<std::size_t>(depth)] = s;
                    self(self, depth + 1, w * P[path[static_cast<std::size_t>(depth - 1)]][s]);
                }
            };
            expand(expand, 1, 1.0);
            molcom::MonteCarloConfig mc;
            mc.bit_treatment = molcom::BitTreatment::enumerated;
            const auto got = molcom::expected_ber(p, d, thresholds, ensemble, mc);

            // Full enumeration over paths, sequences and bits.
            for (std::size_t k = 0; k < thresholds.size(); ++k) {
                double exact = 0.0;
                for (const auto& wt : ensemble)
                    for (unsigned mask = 0; mask < (1u << L); ++mask) {
                        double w = wt.weight, frame = 0.0;
                        for (int i = 0; i < L; ++i) w *= ((mask >> i) & 1u) ? p1 : 1.0 - p1;
                        for (int j = 1; j <= L; ++j) {
                            double mean = 0.0;
                            for (int i = 1; i <= j; ++i)
                                if ((mask >> (i - 1)) & 1u)
                                    mean += static_cast<double>(p.num_molecules) *
                                            molcom::cir((j - i) * p.bit_interval + p.sample_offset,
                                                        wt.trajectory.distances[static_cast<std::size_t>(i - 1)], d, p);
                            const double below = sf::poisson_cdf_below(mean, thresholds[k]);
                            frame += ((mask >> (j - 1)) & 1u) ? below : 1.0 - below;
                        }
                        exact += w * frame / L;
                    }
                worst = std::max(worst, std::abs(got[k].value - exact));
                ++compared;
            }
        }
    return {worst <= 1e-12, fmt::format("{} (L, p1, xi) cases, max |diff| {:.2g}, tolerance 1e-12", compared, worst)};
}

// ---------------------------------------------------------------------------

const char* kDeterminismConfig = R"(physical:
  num_molecules: 150
  seq_length: 3
mobility_cases: [0, 1.0e-9]
simulation:
  num_realizations: 8
  record_points: 20
detector:
  thresholds: [0, 1, 2, 3]
monte_carlo:
  num_trajectories: 64
cir:
  points: 30
distance_pdf:
  cases:
    - {t: 3.0e-4, diff_TX: 1.0e-9}
  points: 30
  walks: 5000
seed: 17
)";

std::string slurp(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome determinism()
{
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / fmt::format("molcom-acceptance-{}", ::getpid());
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path config = root / "config.yaml";
    std::ofstream(config) << kDeterminismConfig;

    bool ok = true;
    std::vector<std::string> parts;
    for (const char* cmd : {"cir", "received-signal", "distance-pdf", "ber"}) {
        std::map<std::string, std::string> reference;
        int runs = 0;
        bool same = true;
        for (int workers : {1, 2, 8, 1}) {
            const fs::path out = root / fmt::format("{}-{}-{}", cmd, workers, runs);
            const std::string line = fmt::format("'{}' {} -q -c '{}' -o '{}' --workers {}", MOLCOM_CLI_PATH, cmd,
                                                 config.string(), out.string(), workers);
            if (std::system(line.c_str()) != 0) {
                same = false;
                parts.push_back(fmt::format("{} failed with {} workers", cmd, workers));
                break;
            }
            std::map<std::string, std::string> files;
            for (const auto& e : fs::directory_iterator(out))
                if (e.path().extension() == ".csv") files[e.path().filename().string()] = slurp(e.path());
            if (runs++ == 0)
                reference = files;
            else
                same = same && files == reference && !files.empty();
        }
        ok = ok && same;
        parts.push_back(fmt::format("{} {} CSV(s) {}", cmd, reference.size(), same ? "identical" : "DIFFER"));
    }
    fs::remove_all(root);
    return {ok, fmt::format("workers 1, 2, 8 and a repeat: {}", fmt::join(parts, ", "))};
}

}  // namespace

int main(int argc, char** argv)
{
    const std::vector<Criterion> criteria{
        {"special-functions", 60.0, special_functions},
        {"distance-normalization", 60.0, normalization},
        {"distance-oracle", 600.0, distance_oracle},
        {"received-signal", 1800.0, received_signal},
        {"dt-convergence", 1800.0, dt_convergence},
        {"ber-cross-check", 3600.0, ber_cross_check},
        {"chain-oracle", 60.0, chain_oracle},
        {"determinism", 600.0, determinism},
    };
    std::vector<std::string> filters(argv + 1, argv + argc);
    int failed = 0, ran = 0;
    for (const auto& c : criteria) {
        if (!filters.empty() &&
            std::none_of(filters.begin(), filters.end(), [&](const std::string& f) { return c.name.find(f) != std::string::npos; }))
            continue;
        ++ran;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = elapsed < c.budget_s;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::printf("%s %s: %s; %.1f s of %.0f s budget%s\n", pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(),
                    elapsed, c.budget_s, in_time ? "" : " (over budget)");
        std::fflush(stdout);
    }
    std::printf("%d of %d criteria passed\n", ran - failed, ran);
    return failed == 0 && ran > 0 ? 0 : 1;
}
