#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace robustq {

// %.6g; "nan" / "inf" / "-inf" for non-finite values.
std::string format_number(double v);

// Ordered (key, value) cells. Numbers are formatted on insertion so the CSV
// image is the single source of truth.
class ReportRow {
public:
    ReportRow& set(const std::string& key, double value);
    ReportRow& set(const std::string& key, int value) { return set_int(key, value); }
    ReportRow& set_int(const std::string& key, std::int64_t value);
    ReportRow& set(const std::string& key, const std::string& value);
    ReportRow& set(const std::string& key, const char* value) { return set(key, std::string(value)); }

    bool has(const std::string& key) const;
    const std::string& text(const std::string& key) const;
    double number(const std::string& key) const;
    std::vector<std::string> keys() const;
    const std::vector<std::pair<std::string, std::string>>& cells() const noexcept { return cells_; }

private:
    std::vector<std::pair<std::string, std::string>> cells_;
};

class Report {
public:
    explicit Report(std::string command = {});

    const std::string& command() const noexcept { return command_; }

    // Header comment lines, emitted as "# key = value" in insertion order.
    void set_meta(const std::string& key, const std::string& value);
    void echo_config(const std::map<std::string, std::string>& resolved);
    std::optional<std::string> meta(const std::string& key) const;

    // Every row must carry exactly the key sequence of the first one.
    void add(ReportRow row);
    void append(const Report& other);

    const std::vector<ReportRow>& rows() const noexcept { return rows_; }
    std::size_t size() const noexcept { return rows_.size(); }
    std::vector<std::string> columns() const;

    // `timestamp` becomes the first header line when given; everything else
    // is a pure function of the content.
    std::string to_csv(const std::optional<std::string>& timestamp = std::nullopt) const;
    void write(const std::filesystem::path& path, bool with_timestamp = true) const;

private:
    std::string command_;
    std::vector<std::pair<std::string, std::string>> meta_;
    std::vector<ReportRow> rows_;
};

std::string utc_timestamp();

}  // namespace robustq
