#pragma once

// Experiment configuration: a YAML file with one section per module type,
// parsed against a fixed schema. Unknown keys and type errors are reported
// with file, line and column.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "molcom/channel.hpp"
#include "molcom/detection.hpp"
#include "molcom/particlesim.hpp"

namespace molcom::harness {

/// One transmitter mobility setting. diff_TX = 0 means fixed nodes: both
/// transceivers are held still.
struct MobilityCase {
    std::string label;
    double diff_TX = 0.0;
    /// Transmitter radius; Stokes-Einstein from diff_TX when absent (mobile cases).
    std::optional<double> radius_tx;

    bool fixed() const { return diff_TX == 0.0; }
};

struct TimeGrid {
    double start = 1e-6;
    double stop = 0.3e-3;
    int points = 300;
    bool log_spaced = false;

    std::vector<double> values() const
    {
        std::vector<double> out(static_cast<std::size_t>(points));
        for (int k = 0; k < points; ++k) {
            const double s = points == 1 ? 0.0 : static_cast<double>(k) / (points - 1);
            out[static_cast<std::size_t>(k)] =
                log_spaced ? start * std::pow(stop / start, s) : start + s * (stop - start);
        }
        if (points > 1) out.back() = stop;
        return out;
    }
};

struct DistancePdfCase {
    std::string label;
    double t = 0.3e-3;
    double diff_TX = 1e-9;
    std::optional<double> radius_tx;
};

struct DistancePdfSettings {
    std::vector<DistancePdfCase> cases;
    int points = 200;
    /// Histogram range; defaults to r0 -/+ 6 sqrt(2 d t), clipped at contact.
    std::optional<double> r_min, r_max;
    std::int64_t walks = 100000;
    /// Smallest walk step, as a fraction of the contact radius.
    double contact_step = 0.01;
    double significance = 0.01;
};

struct ExperimentConfig {
    PhysicalParams physical;
    std::vector<MobilityCase> cases;
    SimConfig simulation;
    /// Simulated and analytical signal are recorded at k * L * T / record_points.
    int record_points = 50;
    std::vector<std::int64_t> thresholds{0, 1, 2, 3, 4, 5, 6, 7, 8};
    MonteCarloConfig monte_carlo;
    TimeGrid cir_grid;
    /// Bit pattern for received-signal; empty means L ones.
    std::vector<int> bits;
    DistancePdfSettings distance_pdf;
    bool ber_simulate = true;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 1;
    /// 0 picks the hardware concurrency.
    int workers = 0;
};

class ConfigError : public InvalidConfiguration {
public:
    using InvalidConfiguration::InvalidConfiguration;
};

namespace config_detail {

/// Document name plus the dotted paths that came from --set overrides.
struct Source {
    std::string name;
    std::set<std::string> overridden;
};

inline std::string where(const Source& src, const YAML::Node& n, const std::string& field = "")
{
    for (const auto& o : src.overridden)
        if (!field.empty() && (field == o || field.rfind(o + ".", 0) == 0 || field.rfind(o + "[", 0) == 0))
            return "--set " + o + ": ";
    const YAML::Mark m = n.Mark();
    if (m.is_null()) return "--set: ";
    return fmt::format("{}:{}:{}: ", src.name, m.line + 1, m.column + 1);
}

inline std::string join(const std::vector<std::string>& v)
{
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
    return out;
}

/// Reads typed keys out of one mapping and rejects keys nobody asked for.
class Section {
public:
    Section(const YAML::Node& node, std::string path, const Source& source)
        : node_(node), path_(std::move(path)), source_(source)
    {
        if (node_ && !node_.IsNull() && !node_.IsMap())
            throw ConfigError(where(source_, node_, path_) + "'" + path_ + "' must be a mapping");
    }

    template <class T>
    bool read(const std::string& key, T& out)
    {
        allowed_.push_back(key);
        if (!node_ || !node_.IsMap() || !node_[key]) return false;
        const YAML::Node v = node_[key];
        try {
            out = v.as<T>();
        } catch (const YAML::Exception&) {
            throw ConfigError(where(source_, v, field(key)) + "field '" + field(key) + "': expected " + type_name<T>());
        }
        return true;
    }

    template <class T>
    void read(const std::string& key, std::optional<T>& out)
    {
        T v{};
        if (read(key, v)) out = v;
    }

    /// Child node for nested parsing, null when absent; registers the key as allowed.
    YAML::Node child(const std::string& key)
    {
        allowed_.push_back(key);
        if (!node_ || !node_.IsMap() || !node_[key]) return YAML::Node(YAML::NodeType::Null);
        return node_[key];
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const
    {
        const YAML::Node v = node_ && node_.IsMap() && node_[key] ? node_[key] : node_;
        throw ConfigError(where(source_, v, field(key)) + "field '" + field(key) + "': " + what);
    }

    void finish() const
    {
        if (!node_ || !node_.IsMap()) return;
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (std::find(allowed_.begin(), allowed_.end(), key) == allowed_.end())
                throw ConfigError(where(source_, kv.first, field(key)) + "unknown key '" + field(key) + "' (allowed: " +
                                  join(allowed_) + ")");
        }
    }

private:
    template <class T>
    static std::string type_name()
    {
        if constexpr (std::is_same_v<T, bool>) return "true or false";
        else if constexpr (std::is_integral_v<T>) return "an integer";
        else if constexpr (std::is_floating_point_v<T>) return "a number";
        else if constexpr (std::is_same_v<T, std::string>) return "a string";
        else return "a list of scalars";
    }

    const YAML::Node node_;
    std::string path_;
    const Source& source_;
    std::vector<std::string> allowed_;
};

inline std::string case_label(double diff_tx)
{
    return diff_tx == 0.0 ? std::string("fixed") : fmt::format("D_TX={:g}", diff_tx);
}

inline void parse_physical(Section s, PhysicalParams& p)
{
    s.read("num_molecules", p.num_molecules);
    s.read("diff_A", p.diff_A);
    s.read("diff_RX", p.diff_RX);
    s.read("r0", p.r0);
    s.read("radius_rx", p.radius_rx);
    s.read("radius_tx", p.radius_tx);
    s.read("k_f", p.k_f);
    s.read("k_b", p.k_b);
    s.read("k_d", p.k_d);
    s.read("num_receptors", p.num_receptors);
    s.read("receptor_radius", p.receptor_radius);
    s.read("bit_interval", p.bit_interval);
    s.read("sample_offset", p.sample_offset);
    s.read("seq_length", p.seq_length);
    s.read("p1", p.p1);
    s.read("k_f_mod_override", p.k_f_mod_override);
    s.finish();
}

inline std::vector<MobilityCase> parse_cases(const YAML::Node& node, const Source& source)
{
    const std::string key = "mobility_cases";
    if (!node || node.IsNull()) throw ConfigError(source.name + ": missing required key 'mobility_cases'");
    if (!node.IsSequence()) throw ConfigError(where(source, node, key) + "'mobility_cases' must be a list");
    if (node.size() == 0) throw ConfigError(where(source, node, key) + "'mobility_cases' is empty");
    std::vector<MobilityCase> out;
    for (std::size_t i = 0; i < node.size(); ++i) {
        const YAML::Node item = node[i];
        const std::string path = fmt::format("mobility_cases[{}]", i);
        MobilityCase c;
        if (item.IsScalar()) {
            try {
                c.diff_TX = item.as<double>();
            } catch (const YAML::Exception&) {
                throw ConfigError(where(source, item, path) + "field '" + path + "': expected a number or a mapping");
            }
        } else {
            Section s(item, path, source);
            if (!s.read("diff_TX", c.diff_TX)) s.fail("diff_TX", "required");
            s.read("radius_tx", c.radius_tx);
            s.read("label", c.label);
            s.finish();
        }
        if (!std::isfinite(c.diff_TX) || c.diff_TX < 0.0)
            throw ConfigError(where(source, item, path) + "field '" + path +
                              "': diff_TX must be finite and non-negative");
        if (c.label.empty()) c.label = case_label(c.diff_TX);
        out.push_back(c);
    }
    return out;
}

inline void parse_simulation(Section s, ExperimentConfig& cfg)
{
    auto& c = cfg.simulation;
    s.read("dt", c.dt);
    s.read("num_realizations", c.num_realizations);
    s.read("unbind_offset", c.unbind_offset);
    s.read("noise_substeps", c.noise_substeps);
    s.read("record_points", cfg.record_points);
    s.read("check_invariants", c.check_invariants);
    if (cfg.record_points < 1) s.fail("record_points", "must be at least 1");
    s.finish();
}

inline void parse_monte_carlo(Section s, MonteCarloConfig& mc)
{
    s.read("num_trajectories", mc.num_trajectories);
    s.read("sequences_per_trajectory", mc.sequences_per_trajectory);
    std::string treatment;
    if (s.read("bit_treatment", treatment)) {
        if (treatment == "automatic") mc.bit_treatment = BitTreatment::automatic;
        else if (treatment == "enumerated") mc.bit_treatment = BitTreatment::enumerated;
        else if (treatment == "sampled") mc.bit_treatment = BitTreatment::sampled;
        else s.fail("bit_treatment", "expected automatic, enumerated or sampled");
    }
    s.finish();
}

inline void parse_cir(Section s, TimeGrid& g)
{
    s.read("start", g.start);
    s.read("stop", g.stop);
    s.read("points", g.points);
    std::string spacing;
    if (s.read("spacing", spacing)) {
        if (spacing == "linear") g.log_spaced = false;
        else if (spacing == "log") g.log_spaced = true;
        else s.fail("spacing", "expected linear or log");
    }
    if (!(g.start > 0.0) || !std::isfinite(g.start)) s.fail("start", "must be positive");
    if (!(g.stop >= g.start) || !std::isfinite(g.stop)) s.fail("stop", "must be finite and at least start");
    if (g.points < 1) s.fail("points", "must be at least 1");
    s.finish();
}

inline void parse_distance_pdf(Section s, DistancePdfSettings& d, const Source& source)
{
    const YAML::Node cases = s.child("cases");
    if (!cases.IsNull()) {
        if (!cases.IsSequence()) s.fail("cases", "expected a list of {t, diff_TX} mappings");
        for (std::size_t i = 0; i < cases.size(); ++i) {
            Section c(cases[i], s.field(fmt::format("cases[{}]", i)), source);
            DistancePdfCase dc;
            if (!c.read("t", dc.t)) c.fail("t", "required");
            if (!c.read("diff_TX", dc.diff_TX)) c.fail("diff_TX", "required");
            c.read("radius_tx", dc.radius_tx);
            c.read("label", dc.label);
            c.finish();
            if (!(dc.t > 0.0) || !std::isfinite(dc.t)) c.fail("t", "must be positive");
            if (!(dc.diff_TX >= 0.0) || !std::isfinite(dc.diff_TX)) c.fail("diff_TX", "must be non-negative");
            if (dc.label.empty()) dc.label = fmt::format("t={:g},D_TX={:g}", dc.t, dc.diff_TX);
            d.cases.push_back(dc);
        }
    }
    s.read("points", d.points);
    s.read("r_min", d.r_min);
    s.read("r_max", d.r_max);
    s.read("walks", d.walks);
    s.read("contact_step", d.contact_step);
    s.read("significance", d.significance);
    if (d.points < 1) s.fail("points", "must be at least 1");
    if (d.walks < 2) s.fail("walks", "must be at least 2");
    if (!(d.contact_step > 0.0 && d.contact_step <= 1.0)) s.fail("contact_step", "must lie in (0, 1]");
    if (!(d.significance > 0.0 && d.significance < 1.0)) s.fail("significance", "must lie in (0, 1)");
    if (d.r_min && d.r_max && !(*d.r_max > *d.r_min)) s.fail("r_max", "must exceed r_min");
    s.finish();
}

inline std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string part;
    std::istringstream in(s);
    while (std::getline(in, part, sep)) out.push_back(part);
    return out;
}

}  // namespace config_detail

/// Applies a `section.key=value` override; the value is parsed as YAML.
inline void apply_override(YAML::Node& root, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + assignment + "': expected section.key=value");
    const auto path = config_detail::split(assignment.substr(0, eq), '.');
    YAML::Node value;
    try {
        value = YAML::Load(assignment.substr(eq + 1));
    } catch (const YAML::Exception& e) {
        throw ConfigError("override '" + assignment + "': " + e.msg);
    }
    YAML::Node cur;
    cur.reset(root);
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        if (path[i].empty()) throw ConfigError("override '" + assignment + "': empty key");
        if (!cur[path[i]]) cur[path[i]] = YAML::Node(YAML::NodeType::Map);
        YAML::Node next = cur[path[i]];
        if (!next.IsMap()) throw ConfigError("override '" + assignment + "': '" + path[i] + "' is not a section");
        cur.reset(next);
    }
    cur[path.back()] = value;
}

/// Builds a config from a parsed document; `source` names it in diagnostics.
inline ExperimentConfig parse_config(const YAML::Node& root, const config_detail::Source& source)
{
    using namespace config_detail;
    if (root && !root.IsNull() && !root.IsMap()) throw ConfigError(source.name + ": top level must be a mapping");
    ExperimentConfig cfg;
    Section top(root, "", source);
    parse_physical(Section(top.child("physical"), "physical", source), cfg.physical);
    cfg.cases = parse_cases(top.child("mobility_cases"), source);
    parse_simulation(Section(top.child("simulation"), "simulation", source), cfg);
    {
        Section s(top.child("detector"), "detector", source);
        s.read("thresholds", cfg.thresholds);
        if (cfg.thresholds.empty()) s.fail("thresholds", "must not be empty");
        for (auto x : cfg.thresholds)
            if (x < 0) s.fail("thresholds", "must be non-negative");
        s.finish();
    }
    parse_monte_carlo(Section(top.child("monte_carlo"), "monte_carlo", source), cfg.monte_carlo);
    parse_cir(Section(top.child("cir"), "cir", source), cfg.cir_grid);
    {
        Section s(top.child("received_signal"), "received_signal", source);
        s.read("bits", cfg.bits);
        for (int b : cfg.bits)
            if (b != 0 && b != 1) s.fail("bits", "entries must be 0 or 1");
        s.finish();
    }
    parse_distance_pdf(Section(top.child("distance_pdf"), "distance_pdf", source), cfg.distance_pdf, source);
    {
        Section s(top.child("ber"), "ber", source);
        s.read("simulate", cfg.ber_simulate);
        s.finish();
    }
    std::string out;
    if (top.read("output_dir", out)) cfg.output_dir = out;
    top.read("seed", cfg.seed);
    top.read("workers", cfg.workers);
    if (cfg.workers < 0) top.fail("workers", "must be non-negative");
    top.finish();
    return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text, const std::string& source,
                                          const std::vector<std::string>& overrides = {})
{
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(fmt::format("{}:{}:{}: {}", source, e.mark.line + 1, e.mark.column + 1, e.msg));
    }
    if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    config_detail::Source src{source, {}};
    for (const auto& o : overrides) {
        apply_override(root, o);
        src.overridden.insert(o.substr(0, o.find('=')));
    }
    return parse_config(root, src);
}

inline std::string read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Parameters of one mobility case: diff_TX = 0 freezes both nodes.
inline PhysicalParams case_params(const PhysicalParams& base, double diff_tx, const std::optional<double>& radius_tx)
{
    PhysicalParams p = base;
    p.diff_TX = diff_tx;
    if (diff_tx == 0.0) {
        p.diff_RX = 0.0;
        if (radius_tx) p.radius_tx = *radius_tx;
    } else {
        p.radius_tx = radius_tx ? *radius_tx : stokes_einstein_radius(diff_tx);
    }
    return p;
}

inline PhysicalParams case_params(const PhysicalParams& base, const MobilityCase& c)
{
    return case_params(base, c.diff_TX, c.radius_tx);
}

inline MobilityMode case_mode(const MobilityCase& c) { return c.fixed() ? MobilityMode::fixed : MobilityMode::mobile; }

}  // namespace molcom::harness
