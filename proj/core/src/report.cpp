#include "robustq/report.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <stdexcept>

namespace robustq {

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string one_line(const std::string& s) {
    std::string out = s;
    for (auto& c : out) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return out;
}

}  // namespace

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

ReportRow& ReportRow::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : cells_) {
        if (k == key) {
            v = value;
            return *this;
        }
    }
    cells_.emplace_back(key, value);
    return *this;
}

ReportRow& ReportRow::set(const std::string& key, double value) { return set(key, format_number(value)); }

ReportRow& ReportRow::set_int(const std::string& key, std::int64_t value) { return set(key, std::to_string(value)); }

bool ReportRow::has(const std::string& key) const {
    for (const auto& [k, v] : cells_) {
        if (k == key) return true;
    }
    return false;
}

const std::string& ReportRow::text(const std::string& key) const {
    for (const auto& [k, v] : cells_) {
        if (k == key) return v;
    }
    throw std::out_of_range("report row has no column '" + key + "'");
}

double ReportRow::number(const std::string& key) const {
    const std::string& s = text(key);
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw std::invalid_argument("report column '" + key + "' is not numeric: '" + s + "'");
    }
}

std::vector<std::string> ReportRow::keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : cells_) out.push_back(k);
    return out;
}

Report::Report(std::string command) : command_(std::move(command)) {}

void Report::set_meta(const std::string& key, const std::string& value) {
    for (auto& [k, v] : meta_) {
        if (k == key) {
            v = one_line(value);
            return;
        }
    }
    meta_.emplace_back(one_line(key), one_line(value));
}

void Report::echo_config(const std::map<std::string, std::string>& resolved) {
    for (const auto& [k, v] : resolved) set_meta("config." + k, v);
}

std::optional<std::string> Report::meta(const std::string& key) const {
    for (const auto& [k, v] : meta_) {
        if (k == key) return v;
    }
    return std::nullopt;
}

void Report::add(ReportRow row) {
    if (!rows_.empty() && row.keys() != rows_.front().keys()) {
        std::string got, want;
        for (const auto& k : row.keys()) got += k + " ";
        for (const auto& k : rows_.front().keys()) want += k + " ";
        throw std::invalid_argument("report '" + command_ + "': row keys [" + got + "] differ from [" + want + "]");
    }
    rows_.push_back(std::move(row));
}

void Report::append(const Report& other) {
    for (const auto& r : other.rows_) add(r);
}

std::vector<std::string> Report::columns() const { return rows_.empty() ? std::vector<std::string>{} : rows_.front().keys(); }

std::string Report::to_csv(const std::optional<std::string>& timestamp) const {
    std::string out;
    if (timestamp) out += "# generated = " + *timestamp + "\n";
    if (!command_.empty()) out += "# command = " + command_ + "\n";
    for (const auto& [k, v] : meta_) out += "# " + k + " = " + v + "\n";
    const auto cols = columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + csv_field(cols[i]);
    if (!cols.empty()) out += "\n";
    for (const auto& r : rows_) {
        const auto& cells = r.cells();
        for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + csv_field(cells[i].second);
        out += "\n";
    }
    return out;
}

void Report::write(const std::filesystem::path& path, bool with_timestamp) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("report: cannot write " + path.string());
    out << to_csv(with_timestamp ? std::optional<std::string>(utc_timestamp()) : std::nullopt);
    if (!out) throw std::runtime_error("report: write failed for " + path.string());
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace robustq
