#pragma once

// CSV artifacts and the run manifest. Tables are built in memory and only
// reach the output directory through ArtifactSet::commit, which writes
// temporaries and renames them into place, so a failed command leaves no
// partial files behind.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unistd.h>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "json.hpp"
#include "molcom/error.hpp"

namespace molcom::harness {

/// File-system trouble while writing artifacts.
class ArtifactError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string sha256_hex(std::string_view bytes)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw ArtifactError("sha256 digest failed");
    std::string out;
    for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
    return out;
}

/// Shortest text that reads back to the same double.
inline std::string format_number(double v) { return fmt::format("{}", v); }

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    /// Appends a row of preformatted fields.
    void add_row(std::vector<std::string> fields)
    {
        if (fields.size() != header_.size())
            throw std::logic_error(fmt::format("csv row has {} fields, header has {}", fields.size(), header_.size()));
        rows_.push_back(std::move(fields));
    }

    const std::vector<std::string>& header() const { return header_; }
    std::size_t rows() const { return rows_.size(); }
    const std::vector<std::string>& row(std::size_t i) const { return rows_[i]; }

    std::string str() const
    {
        std::string out;
        append_line(out, header_);
        for (const auto& r : rows_) append_line(out, r);
        return out;
    }

    /// RFC 4180 quoting: fields containing a comma, quote or line break are
    /// wrapped in quotes with embedded quotes doubled.
    static std::string quote(const std::string& field)
    {
        if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
        std::string out = "\"";
        for (char c : field) {
            if (c == '"') out += '"';
            out += c;
        }
        return out + '"';
    }

private:
    static void append_line(std::string& out, const std::vector<std::string>& fields)
    {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out += ',';
            out += quote(fields[i]);
        }
        out += '\n';
    }

    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

struct ArtifactInfo {
    std::string file;
    std::size_t rows = 0;
    std::string sha256;
};

/// Everything the manifest records besides the artifact list.
struct RunInfo {
    std::string command;
    std::string config_path;
    std::string config_sha256;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    int workers = 1;
    std::string started_utc;
};

inline std::string utc_now()
{
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace artifact_detail {

inline void write_file(const std::filesystem::path& path, std::string_view bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ArtifactError("cannot create '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) throw ArtifactError("write failed for '" + path.string() + "'");
}

}  // namespace artifact_detail

class ArtifactSet {
public:
    static constexpr const char* manifest_name = "manifest.json";

    void add(std::string file, const CsvTable& table)
    {
        for (const auto& e : entries_)
            if (e.file == file) throw std::logic_error("duplicate artifact " + file);
        entries_.push_back({std::move(file), table.str(), table.rows()});
    }

    bool empty() const { return entries_.empty(); }

    /// Writes every artifact, then the manifest. On any failure the files
    /// written so far are removed and the error is rethrown.
    std::vector<ArtifactInfo> commit(const std::filesystem::path& dir, const RunInfo& run, double duration_s) const
    {
        namespace fs = std::filesystem;
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw ArtifactError("cannot create output directory '" + dir.string() + "': " + ec.message());

        const std::string tag = fmt::format(".tmp-{}", static_cast<long>(::getpid()));
        std::vector<fs::path> temps, placed;
        auto cleanup = [&] {
            std::error_code ignore;
            for (const auto& p : temps) fs::remove(p, ignore);
            for (const auto& p : placed) fs::remove(p, ignore);
        };
        std::vector<ArtifactInfo> infos;
        try {
            for (const auto& e : entries_) {
                temps.push_back(dir / (e.file + tag));
                artifact_detail::write_file(temps.back(), e.bytes);
                infos.push_back({e.file, e.rows, sha256_hex(e.bytes)});
            }
            const std::string manifest = manifest_json(infos, run, duration_s).dump(2) + "\n";
            temps.push_back(dir / (std::string(manifest_name) + tag));
            artifact_detail::write_file(temps.back(), manifest);
            // The manifest goes last so its presence marks a complete run.
            for (std::size_t i = 0; i < temps.size(); ++i) {
                const fs::path target = dir / (i < entries_.size() ? entries_[i].file : std::string(manifest_name));
                fs::rename(temps[i], target);
                placed.push_back(target);
                temps[i].clear();
            }
        } catch (const fs::filesystem_error& e) {
            cleanup();
            throw ArtifactError(e.what());
        } catch (...) {
            cleanup();
            throw;
        }
        return infos;
    }

    static nlohmann::ordered_json manifest_json(const std::vector<ArtifactInfo>& infos, const RunInfo& run,
                                                double duration_s)
    {
        nlohmann::ordered_json j;
        j["tool"] = "molcom";
        j["version"] = MOLCOM_VERSION;
        j["command"] = run.command;
        j["config_path"] = run.config_path;
        j["config_sha256"] = run.config_sha256;
        j["overrides"] = run.overrides;
        j["seed"] = run.seed;
        j["workers"] = run.workers;
        j["started_utc"] = run.started_utc;
        j["duration_s"] = duration_s;
        auto& files = j["artifacts"] = nlohmann::ordered_json::array();
        for (const auto& a : infos) files.push_back({{"file", a.file}, {"rows", a.rows}, {"sha256", a.sha256}});
        return j;
    }

private:
    struct Entry {
        std::string file;
        std::string bytes;
        std::size_t rows;
    };
    std::vector<Entry> entries_;
};

}  // namespace molcom::harness
