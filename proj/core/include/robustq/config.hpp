#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace robustq {

// Flat `key = value` configuration. Dotted keys act as sections
// (`sam.rho = 1.0`). Later assignments override earlier ones.
class Config {
public:
    Config() = default;

    static Config parse(const std::string& text, const std::string& origin = "<string>");
    static Config load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;
    void merge(const Config& overrides);

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Comma-separated lists.
    std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
    std::vector<std::int64_t> get_ints(const std::string& key, const std::vector<std::int64_t>& fallback) const;
    std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& fallback) const;

    // Records every key read through a getter together with the value used,
    // so a report can echo the fully resolved configuration.
    const std::map<std::string, std::string>& resolved() const noexcept { return resolved_; }
    const std::map<std::string, std::string>& entries() const noexcept { return values_; }

    // FNV-1a over the sorted resolved entries.
    std::uint64_t hash() const;

private:
    std::optional<std::string> raw(const std::string& key) const;
    void note(const std::string& key, const std::string& value) const;

    std::map<std::string, std::string> values_;
    mutable std::map<std::string, std::string> resolved_;
};

std::uint64_t fnv1a64(const std::string& bytes);

std::vector<std::string> split_list(const std::string& s, char sep = ',');

}  // namespace robustq
