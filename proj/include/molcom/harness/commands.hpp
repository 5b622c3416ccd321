#pragma once

// The batch experiments behind the CLI subcommands. Each command validates
// every case up front, computes all tables in memory and returns them as an
// ArtifactSet; nothing touches the output directory until the caller commits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "molcom/channel.hpp"
#include "molcom/detection.hpp"
#include "molcom/harness/artifacts.hpp"
#include "molcom/harness/config.hpp"
#include "molcom/mobility.hpp"
#include "molcom/parallel.hpp"
#include "molcom/particlesim.hpp"
#include "molcom/specfun.hpp"

namespace molcom::harness {

enum class Command { cir, received_signal, distance_pdf, ber, selftest };

inline const char* to_string(Command c)
{
    switch (c) {
    case Command::cir: return "cir";
    case Command::received_signal: return "received-signal";
    case Command::distance_pdf: return "distance-pdf";
    case Command::ber: return "ber";
    case Command::selftest: return "selftest";
    }
    return "?";
}

struct RunContext {
    int workers = 1;
    /// Progress lines; never affects results.
    std::function<void(std::string_view)> progress = [](std::string_view) {};
};

/// Stream domain for the reflected-walk histograms of distance-pdf.
inline constexpr std::uint64_t walk_domain = 5;

namespace cmd_detail {

inline std::string num(double v) { return format_number(v); }
inline std::string num(std::int64_t v) { return std::to_string(v); }

struct PreparedCase {
    MobilityCase spec;
    PhysicalParams params;
    DerivedParams derived;
};

inline std::vector<PreparedCase> prepare_cases(const ExperimentConfig& cfg)
{
    if (cfg.cases.empty()) throw ConfigError("mobility_cases is empty");
    std::vector<PreparedCase> out;
    for (const auto& c : cfg.cases) {
        PreparedCase pc{c, case_params(cfg.physical, c), {}};
        try {
            pc.derived = derive(pc.params, case_mode(c));
        } catch (const InvalidConfiguration& e) {
            throw ConfigError("case '" + c.label + "': " + e.what());
        }
        out.push_back(std::move(pc));
    }
    return out;
}

inline BitSequence signal_bits(const ExperimentConfig& cfg)
{
    const auto L = static_cast<std::size_t>(cfg.physical.seq_length);
    if (cfg.bits.empty()) return BitSequence{std::vector<int>(L, 1)};
    if (cfg.bits.size() != L)
        throw ConfigError(fmt::format("received_signal.bits has {} entries but physical.seq_length is {}",
                                      cfg.bits.size(), L));
    return BitSequence{cfg.bits};
}

/// Recording instants k * L * T / points, k = 1..points, rounded down to whole steps.
inline std::vector<double> record_grid(const ExperimentConfig& cfg)
{
    const auto& p = cfg.physical;
    const double dt = cfg.simulation.dt;
    const std::int64_t total = sim_detail::steps_for(p.bit_interval, dt, "bit_interval") * p.seq_length;
    if (cfg.record_points > total)
        throw ConfigError(fmt::format("simulation.record_points = {} exceeds the {} steps of a frame",
                                      cfg.record_points, total));
    std::vector<double> out;
    for (std::int64_t k = 1; k <= cfg.record_points; ++k)
        out.push_back(static_cast<double>(k * total / cfg.record_points) * dt);
    return out;
}

inline SimConfig sim_config(const ExperimentConfig& cfg, const RunContext& ctx, std::vector<double> grid = {})
{
    SimConfig c = cfg.simulation;
    c.seed = cfg.seed;
    c.workers = ctx.workers;
    c.record_grid = std::move(grid);
    return c;
}

inline MonteCarloConfig mc_config(const ExperimentConfig& cfg, const RunContext& ctx)
{
    MonteCarloConfig mc = cfg.monte_carlo;
    mc.seed = cfg.seed;
    mc.workers = ctx.workers;
    return mc;
}

inline void check_sim(const ExperimentConfig& cfg, const PreparedCase& pc, const SimConfig& c)
{
    try {
        validate(c, pc.params, pc.derived);
    } catch (const InvalidConfiguration& e) {
        throw ConfigError("case '" + pc.spec.label + "': simulation: " + e.what());
    }
}

inline void check_mc(const MonteCarloConfig& mc)
{
    try {
        detail::check_mc(mc);
    } catch (const InvalidConfiguration& e) {
        throw ConfigError(std::string("monte_carlo: ") + e.what());
    }
}

struct PdfCase {
    DistancePdfCase spec;
    double d = 0.0, sigma = 0.0;
    std::vector<double> r;  // bin centres at or above contact
    double width = 0.0;
};

inline std::vector<PdfCase> prepare_pdf_cases(const ExperimentConfig& cfg)
{
    const auto& s = cfg.distance_pdf;
    if (s.cases.empty()) throw ConfigError("distance_pdf.cases is empty");
    std::vector<PdfCase> out;
    for (const auto& c : s.cases) {
        const PhysicalParams p = case_params(cfg.physical, c.diff_TX, c.radius_tx);
        PdfCase pc{c, p.diff_TX + p.diff_RX, p.contact_radius(), {}, 0.0};
        if (!(pc.d > 0.0))
            throw ConfigError("distance_pdf case '" + c.label + "': relative diffusion is zero, the law is a point mass");
        if (cfg.physical.r0 < pc.sigma)
            throw ConfigError("distance_pdf case '" + c.label + "': r0 is inside the contact radius");
        const double ell = std::sqrt(2.0 * pc.d * c.t);
        const double lo = s.r_min.value_or(std::max(pc.sigma, cfg.physical.r0 - 6.0 * ell));
        const double hi = s.r_max.value_or(cfg.physical.r0 + 6.0 * ell);
        if (!(hi > lo)) throw ConfigError("distance_pdf case '" + c.label + "': empty r range");
        pc.width = (hi - lo) / s.points;
        for (int k = 0; k < s.points; ++k) {
            const double r = lo + (k + 0.5) * pc.width;
            if (r >= pc.sigma) pc.r.push_back(r);
        }
        out.push_back(std::move(pc));
    }
    return out;
}

/// Final separations of reflected relative-coordinate walks from r0 after
/// time t. Steps adapt to the gap to contact: the per-axis standard deviation
/// is a quarter of the gap, never below min_step and never beyond the time
/// left; an endpoint inside the contact sphere is mapped radially to
/// 2 sigma - r. Far from contact a walk finishes in a few exact Gaussian
/// steps, and the reflection error is confined to min_step-sized steps.
inline std::vector<double> reflected_walks(double r0, double t, double d, double sigma, std::int64_t walks,
                                           double min_step, std::uint64_t seed, int workers)
{
    std::vector<double> out(static_cast<std::size_t>(walks));
    parallel_for(out.size(), workers, [&](std::size_t w) {
        rng::Stream stream(seed, walk_domain, w);
        double x = r0, y = 0.0, z = 0.0, left = t;
        while (left > 0.0) {
            const double r = std::sqrt(x * x + y * y + z * z);
            const double rest = std::sqrt(2.0 * d * left);
            double sd = std::max(min_step, 0.25 * (r - sigma));
            if (sd >= rest) {
                sd = rest;
                left = 0.0;
            } else {
                left -= sd * sd / (2.0 * d);
            }
            x += sd * stream.normal();
            y += sd * stream.normal();
            z += sd * stream.normal();
            const double r1 = std::sqrt(x * x + y * y + z * z);
            if (r1 < sigma) {
                const double f = (2.0 * sigma - r1) / r1;
                x *= f;
                y *= f;
                z *= f;
            }
        }
        out[w] = std::sqrt(x * x + y * y + z * z);
    });
    return out;
}

/// Asymptotic one-sample Kolmogorov-Smirnov critical value.
inline double ks_critical(double significance, std::size_t n)
{
    return std::sqrt(-0.5 * std::log(significance / 2.0)) / std::sqrt(static_cast<double>(n));
}

}  // namespace cmd_detail

/// Mean received signal and its Monte Carlo standard error.
struct SignalCurve {
    std::vector<double> mean;
    std::vector<double> std_error;
};

/// Analytical expected number of bound receptors for bit pattern b: each
/// release i contributes N_A * P_AC(t - (i-1) T | r_{i-1}). With moving
/// nodes and a release after the first interval the trajectories are
/// averaged by Monte Carlo; otherwise the value is exact and the error zero.
inline SignalCurve analytical_signal(const BitSequence& b, const std::vector<double>& times, const PhysicalParams& p,
                                     const DerivedParams& d, const MonteCarloConfig& mc)
{
    const auto L = static_cast<std::size_t>(p.seq_length);
    if (b.bits.size() != L) throw InvalidArgument("analytical_signal: bit pattern length differs from seq_length");
    const auto na = static_cast<double>(p.num_molecules);
    auto eval = [&](const Trajectory& traj, std::vector<double>& out) {
        out.assign(times.size(), 0.0);
        for (std::size_t k = 0; k < times.size(); ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < L; ++i) {
                const double age = times[k] - static_cast<double>(i) * p.bit_interval;
                if (b.bits[i] && age > 0.0) s += na * cir(age, traj.distances[i], d, p);
            }
            out[k] = s;
        }
    };
    bool later_release = false;
    for (std::size_t i = 1; i < L; ++i) later_release = later_release || b.bits[i];

    SignalCurve out;
    out.std_error.assign(times.size(), 0.0);
    const Trajectory constant{std::vector<double>(L, p.r0)};
    if (d.d_eff2 == 0.0 || !later_release) {
        eval(constant, out.mean);
        return out;
    }
    detail::check_mc(mc);
    const TransitionSampler sampler(d.d_eff2, p.bit_interval, p.contact_radius());
    const auto n = static_cast<std::size_t>(mc.num_trajectories);
    std::vector<std::vector<double>> per(n);
    parallel_for(n, mc.workers, [&](std::size_t i) {
        rng::Stream stream(mc.seed, stream_domain::trajectory, i);
        eval(sample_trajectory(p.r0, p, sampler, stream), per[i]);
    });
    out.mean.assign(times.size(), 0.0);
    for (std::size_t k = 0; k < times.size(); ++k) {
        double sum = 0.0;
        for (const auto& v : per) sum += v[k];
        const double mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (const auto& v : per) ss += (v[k] - mean) * (v[k] - mean);
        out.mean[k] = mean;
        out.std_error[k] = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    }
    return out;
}

/// Checks everything a command depends on before any work starts.
inline void validate_for(Command cmd, const ExperimentConfig& cfg, const RunContext& ctx)
{
    using namespace cmd_detail;
    if (ctx.workers < 1) throw ConfigError("workers must be at least 1");
    switch (cmd) {
    case Command::cir: prepare_cases(cfg); break;
    case Command::received_signal: {
        const auto cases = prepare_cases(cfg);
        signal_bits(cfg);
        const SimConfig c = sim_config(cfg, ctx, record_grid(cfg));
        for (const auto& pc : cases) check_sim(cfg, pc, c);
        check_mc(mc_config(cfg, ctx));
        break;
    }
    case Command::distance_pdf: prepare_pdf_cases(cfg); break;
    case Command::ber: {
        const auto cases = prepare_cases(cfg);
        check_mc(mc_config(cfg, ctx));
        if (cfg.ber_simulate)
            for (const auto& pc : cases) check_sim(cfg, pc, sim_config(cfg, ctx));
        break;
    }
    case Command::selftest: break;
    }
}

/// P_AC and the expected bound count after one release, per case.
inline ArtifactSet cmd_cir(const ExperimentConfig& cfg, const RunContext& ctx)
{
    using cmd_detail::num;
    const auto cases = cmd_detail::prepare_cases(cfg);
    const auto times = cfg.cir_grid.values();
    CsvTable table({"time_s", "case", "P_AC", "N_C_expected"});
    for (const auto& pc : cases) {
        ctx.progress("cir: case " + pc.spec.label);
        std::vector<double> prob(times.size());
        parallel_for(times.size(), ctx.workers,
                     [&](std::size_t k) { prob[k] = cir(times[k], pc.params.r0, pc.derived, pc.params); });
        const auto na = static_cast<double>(pc.params.num_molecules);
        for (std::size_t k = 0; k < times.size(); ++k)
            table.add_row({num(times[k]), pc.spec.label, num(prob[k]), num(na * prob[k])});
    }
    ArtifactSet set;
    set.add("cir.csv", table);
    return set;
}

/// Analytical and simulated received signal for the configured bit pattern.
inline ArtifactSet cmd_received_signal(const ExperimentConfig& cfg, const RunContext& ctx)
{
    using cmd_detail::num;
    const auto cases = cmd_detail::prepare_cases(cfg);
    const BitSequence bits = cmd_detail::signal_bits(cfg);
    const SimConfig sim = cmd_detail::sim_config(cfg, ctx, cmd_detail::record_grid(cfg));
    const MonteCarloConfig mc = cmd_detail::mc_config(cfg, ctx);

    CsvTable grid({"time_s", "case", "N_C_analytical", "N_C_analytical_stderr", "N_C_sim", "N_C_sim_stderr"});
    CsvTable samples({"bit_index", "time_s", "case", "bit", "N_C_analytical", "N_C_analytical_stderr", "N_C_sim",
                      "N_C_sim_stderr"});
    for (const auto& pc : cases) {
        ctx.progress(fmt::format("received-signal: case {}: {} realizations", pc.spec.label, sim.num_realizations));
        const auto obs = estimate_received_signal(bits, pc.params, pc.derived, sim);
        ctx.progress("received-signal: case " + pc.spec.label + ": analytical");
        const auto ana = analytical_signal(bits, obs.times, pc.params, pc.derived, mc);
        const auto ana_s = analytical_signal(bits, obs.sample_times, pc.params, pc.derived, mc);
        for (std::size_t k = 0; k < obs.times.size(); ++k)
            grid.add_row({num(obs.times[k]), pc.spec.label, num(ana.mean[k]), num(ana.std_error[k]),
                          num(obs.mean_bound[k]), num(obs.std_error[k])});
        for (std::size_t j = 0; j < obs.sample_times.size(); ++j)
            samples.add_row({std::to_string(j + 1), num(obs.sample_times[j]), pc.spec.label,
                             std::to_string(bits.bits[j]), num(ana_s.mean[j]), num(ana_s.std_error[j]),
                             num(obs.sample_mean[j]), num(obs.sample_std_error[j])});
    }
    ArtifactSet set;
    set.add("received_signal.csv", grid);
    set.add("received_signal_samples.csv", samples);
    return set;
}

/// Distance law against a reflected-walk histogram, with total mass and a
/// Kolmogorov-Smirnov summary per case.
inline ArtifactSet cmd_distance_pdf(const ExperimentConfig& cfg, const RunContext& ctx)
{
    using cmd_detail::num;
    const auto& s = cfg.distance_pdf;
    const auto cases = cmd_detail::prepare_pdf_cases(cfg);
    const double r0 = cfg.physical.r0;
    CsvTable table({"case", "t_s", "diff_TX", "r_m", "pdf_analytical", "pdf_empirical", "stderr", "total_mass"});
    CsvTable summary({"case", "t_s", "diff_TX", "total_mass", "walks", "ks_statistic", "ks_critical", "ks_pass"});
    for (const auto& pc : cases) {
        ctx.progress(fmt::format("distance-pdf: case {}: {} walks", pc.spec.label, s.walks));
        const DistanceLaw law(r0, pc.spec.t, pc.d, pc.sigma);
        auto walks = cmd_detail::reflected_walks(r0, pc.spec.t, pc.d, pc.sigma, s.walks, s.contact_step * pc.sigma,
                                                 cfg.seed, ctx.workers);
        std::sort(walks.begin(), walks.end());
        const auto n = static_cast<double>(walks.size());
        double ks = 0.0;
        for (std::size_t i = 0; i < walks.size(); ++i) {
            const double f = law.cdf(walks[i]);
            ks = std::max({ks, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
        }
        const double critical = cmd_detail::ks_critical(s.significance, walks.size());
        const double mass = law.total_mass();
        for (double r : pc.r) {
            const auto lo = std::lower_bound(walks.begin(), walks.end(), r - 0.5 * pc.width);
            const auto hi = std::lower_bound(walks.begin(), walks.end(), r + 0.5 * pc.width);
            const double frac = static_cast<double>(hi - lo) / n;
            table.add_row({pc.spec.label, num(pc.spec.t), num(pc.spec.diff_TX), num(r), num(law.pdf(r)),
                           num(frac / pc.width), num(std::sqrt(frac * (1.0 - frac) / n) / pc.width), num(mass)});
        }
        summary.add_row({pc.spec.label, num(pc.spec.t), num(pc.spec.diff_TX), num(mass), num(s.walks), num(ks),
                         num(critical), ks < critical ? "true" : "false"});
    }
    ArtifactSet set;
    set.add("distance_pdf.csv", table);
    set.add("distance_pdf_summary.csv", summary);
    return set;
}

/// Expected bit error probability per threshold and case, analytical and
/// (unless disabled) simulated.
inline ArtifactSet cmd_ber(const ExperimentConfig& cfg, const RunContext& ctx)
{
    using cmd_detail::num;
    const auto cases = cmd_detail::prepare_cases(cfg);
    const MonteCarloConfig mc = cmd_detail::mc_config(cfg, ctx);
    const SimConfig sim = cmd_detail::sim_config(cfg, ctx);
    CsvTable table({"xi", "case", "P_e_analytical", "P_e_analytical_stderr", "P_e_sim", "P_e_sim_stderr"});
    for (const auto& pc : cases) {
        ctx.progress(fmt::format("ber: case {}: {} trajectories", pc.spec.label, mc.num_trajectories));
        const auto ana = expected_ber(pc.params, pc.derived, cfg.thresholds, mc);
        BerCurve simulated;
        if (cfg.ber_simulate) {
            ctx.progress(fmt::format("ber: case {}: {} realizations", pc.spec.label, sim.num_realizations));
            simulated = estimate_ber(pc.params, pc.derived, sim, cfg.thresholds, pc.params.p1);
        }
        for (std::size_t k = 0; k < cfg.thresholds.size(); ++k)
            table.add_row({num(cfg.thresholds[k]), pc.spec.label, num(ana[k].value), num(ana[k].std_error),
                           cfg.ber_simulate ? num(simulated.value[k]) : "",
                           cfg.ber_simulate ? num(simulated.std_error[k]) : ""});
    }
    ArtifactSet set;
    set.add("ber.csv", table);
    return set;
}

struct SelftestCheck {
    std::string name;
    double value = 0.0;
    double reference = 0.0;
    double tolerance = 0.0;
    bool pass() const { return std::abs(value - reference) <= tolerance; }
};

/// Quick reference values and consistency checks across the modules.
inline std::vector<SelftestCheck> run_selftest(const RunContext& ctx)
{
    std::vector<SelftestCheck> out;
    out.push_back({"erfcx(0)", specfun::erfcx(0.0), 1.0, 1e-15});
    out.push_back({"erfcx(1)", specfun::erfcx(1.0), 0.42758357615580700, 1e-15});
    out.push_back({"erfcx(-1)", specfun::erfcx(-1.0), 5.00898008076228346, 1e-14});
    out.push_back({"poisson_cdf_below(5,5)", specfun::poisson_cdf_below(5.0, 5), 0.4404932850652124, 1e-15});

    PhysicalParams fixed;
    fixed.diff_RX = 0.0;
    const auto d = derive(fixed, MobilityMode::fixed);
    const TimeGrid grid{1e-6, fixed.bit_interval, 300, false};
    double peak = 0.0;
    std::size_t peak_at = 0, k = 0;
    bool unimodal = true;
    double prev = 0.0;
    for (double t : grid.values()) {
        const double v = cir(t, fixed.r0, d, fixed);
        if (v > peak) {
            peak = v;
            peak_at = k;
        }
        if (k > peak_at && v > prev) unimodal = false;
        prev = v;
        ++k;
    }
    out.push_back({"cir rises then falls", unimodal && peak_at > 0 && peak_at + 1 < k ? 1.0 : 0.0, 1.0, 0.0});

    PhysicalParams mobile;
    mobile.diff_TX = 1e-9;
    const DistanceLaw law(mobile.r0, mobile.bit_interval, mobile.diff_TX + mobile.diff_RX, mobile.contact_radius());
    out.push_back({"distance law mass", law.total_mass(), 1.0, 1e-6});

    fixed.seq_length = 4;
    MonteCarloConfig mc;
    mc.num_trajectories = 1;
    mc.workers = ctx.workers;
    out.push_back({"ber at threshold 0", expected_ber(fixed, d, 0, mc).value, 1.0 - fixed.p1, 1e-15});

    fixed.num_molecules = 100;
    fixed.seq_length = 1;
    SimConfig sc;
    sc.num_realizations = 2;
    sc.workers = ctx.workers;
    const auto silent = estimate_received_signal(BitSequence{{0}}, fixed, d, sc);
    out.push_back({"silent frame", silent.sample_mean[0], 0.0, 0.0});
    return out;
}

inline ArtifactSet cmd_selftest(const std::vector<SelftestCheck>& checks)
{
    using cmd_detail::num;
    CsvTable table({"check", "value", "reference", "tolerance", "pass"});
    for (const auto& c : checks)
        table.add_row({c.name, num(c.value), num(c.reference), num(c.tolerance), c.pass() ? "true" : "false"});
    ArtifactSet set;
    set.add("selftest.csv", table);
    return set;
}

}  // namespace molcom::harness
