#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace stegnet {

struct ManifestRecord {
    std::string pair_id;
    std::string cover_path;  // relative to the manifest's directory
    std::string stego_path;
};

// A cover/stego pair list plus corpus metadata. Tab-separated records with
// `#key=value` header lines; paths resolve against the manifest location.
struct DatasetManifest {
    std::vector<ManifestRecord> records;
    int quality_factor = 0;
    double embedding_rate = 0.0;
    std::string split;
    std::string base_dir;

    std::string resolve(const std::string& rel) const {
        std::filesystem::path p(rel);
        if (p.is_absolute() || base_dir.empty()) return rel;
        return (std::filesystem::path(base_dir) / p).string();
    }

    void validate() const {
        std::set<std::string> ids;
        for (const auto& r : records) {
            if (r.pair_id.empty() || r.cover_path.empty() || r.stego_path.empty())
                throw std::invalid_argument("manifest record with empty field");
            if (!ids.insert(r.pair_id).second)
                throw std::invalid_argument("duplicate pair_id " + r.pair_id);
        }
    }
};

inline DatasetManifest read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open manifest: " + path);
    DatasetManifest m;
    m.base_dir = std::filesystem::path(path).parent_path().string();
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;  // plain comment
            const std::string key = line.substr(1, eq - 1);
            const std::string value = line.substr(eq + 1);
            try {
                if (key == "qf")
                    m.quality_factor = std::stoi(value);
                else if (key == "rate")
                    m.embedding_rate = std::stod(value);
                else if (key == "split")
                    m.split = value;
            } catch (const std::exception&) {
                throw std::runtime_error(path + " line " + std::to_string(lineno) +
                                         ": bad header value \"" + value + "\"");
            }
            continue;
        }
        std::istringstream ls(line);
        ManifestRecord r;
        if (!std::getline(ls, r.pair_id, '\t') || !std::getline(ls, r.cover_path, '\t') ||
            !std::getline(ls, r.stego_path, '\t'))
            throw std::runtime_error(path + " line " + std::to_string(lineno) +
                                     ": expected pair_id<TAB>cover<TAB>stego");
        m.records.push_back(std::move(r));
    }
    m.validate();
    return m;
}

inline void write_manifest(const std::string& path, const DatasetManifest& m) {
    m.validate();
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open manifest for writing: " + path);
    if (m.quality_factor) os << "#qf=" << m.quality_factor << "\n";
    if (m.embedding_rate > 0) os << "#rate=" << m.embedding_rate << "\n";
    if (!m.split.empty()) os << "#split=" << m.split << "\n";
    for (const auto& r : m.records)
        os << r.pair_id << "\t" << r.cover_path << "\t" << r.stego_path << "\n";
    if (!os) throw std::runtime_error("manifest write failed: " + path);
}

}  // namespace stegnet
