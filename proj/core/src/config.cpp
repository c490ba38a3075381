#include "robustq/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace robustq {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    return std::all_of(k.begin(), k.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '_' || c == '.' || c == '-';
    });
}

// Shortest representation that round-trips.
std::string fmt(double v) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: '" + key + "' expects a number, got '" + v + "'");
    }
}

std::int64_t to_int(const std::string& key, const std::string& v) {
    std::int64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) {
        throw std::invalid_argument("config: '" + key + "' expects an integer, got '" + v + "'");
    }
    return out;
}

}  // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

Config Config::parse(const std::string& text, const std::string& origin) {
    Config c;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        if (!valid_key(key)) {
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": bad key '" + key + "'");
        }
        c.values_[key] = trim(line.substr(eq + 1));
    }
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

void Config::set(const std::string& key, const std::string& value) {
    if (!valid_key(key)) throw std::invalid_argument("config: bad key '" + key + "'");
    values_[key] = trim(value);
}

bool Config::has(const std::string& key) const { return values_.contains(key); }

void Config::merge(const Config& overrides) {
    for (const auto& [k, v] : overrides.values_) values_[k] = v;
}

std::optional<std::string> Config::raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

void Config::note(const std::string& key, const std::string& value) const { resolved_[key] = value; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    const std::string v = raw(key).value_or(fallback);
    note(key, v);
    return v;
}

double Config::get_double(const std::string& key, double fallback) const {
    const auto r = raw(key);
    const double v = r ? to_double(key, *r) : fallback;
    note(key, r ? *r : fmt(v));
    return v;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
    const auto r = raw(key);
    const std::int64_t v = r ? to_int(key, *r) : fallback;
    note(key, std::to_string(v));
    return v;
}

std::uint64_t Config::get_uint(const std::string& key, std::uint64_t fallback) const {
    const auto r = raw(key);
    if (!r) {
        note(key, std::to_string(fallback));
        return fallback;
    }
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(r->data(), r->data() + r->size(), out);
    if (ec != std::errc{} || p != r->data() + r->size()) {
        throw std::invalid_argument("config: '" + key + "' expects a non-negative integer, got '" + *r + "'");
    }
    note(key, *r);
    return out;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    const auto r = raw(key);
    bool v = fallback;
    if (r) {
        if (*r == "true" || *r == "1" || *r == "yes" || *r == "on") {
            v = true;
        } else if (*r == "false" || *r == "0" || *r == "no" || *r == "off") {
            v = false;
        } else {
            throw std::invalid_argument("config: '" + key + "' expects a boolean, got '" + *r + "'");
        }
    }
    note(key, v ? "true" : "false");
    return v;
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
    const auto r = raw(key);
    std::vector<double> out;
    if (r) {
        for (const auto& item : split_list(*r)) out.push_back(to_double(key, item));
    } else {
        out = fallback;
    }
    std::string echo;
    for (double d : out) echo += (echo.empty() ? "" : ",") + fmt(d);
    note(key, echo);
    return out;
}

std::vector<std::int64_t> Config::get_ints(const std::string& key, const std::vector<std::int64_t>& fallback) const {
    const auto r = raw(key);
    std::vector<std::int64_t> out;
    if (r) {
        for (const auto& item : split_list(*r)) out.push_back(to_int(key, item));
    } else {
        out = fallback;
    }
    std::string echo;
    for (auto v : out) echo += (echo.empty() ? "" : ",") + std::to_string(v);
    note(key, echo);
    return out;
}

std::vector<std::string> Config::get_strings(const std::string& key, const std::vector<std::string>& fallback) const {
    const auto r = raw(key);
    const auto out = r ? split_list(*r) : fallback;
    std::string echo;
    for (const auto& s : out) echo += (echo.empty() ? "" : ",") + s;
    note(key, echo);
    return out;
}

std::uint64_t Config::hash() const {
    std::string flat;
    for (const auto& [k, v] : resolved_) flat += k + "=" + v + "\n";
    return fnv1a64(flat);
}

}  // namespace robustq
