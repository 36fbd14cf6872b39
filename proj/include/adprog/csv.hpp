#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace adprog::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    // Comment lines (leading '#') seen before the header, without newlines.
    std::vector<std::string> comments;

    int column(const std::string& name) const;  // -1 if absent
};

// Reads a comma-separated file with a mandatory header row. Lines starting
// with '#' before the header are collected as comments. No quoting support:
// the cohort format never needs embedded commas.
Table read_file(const std::string& path);

Table parse(const std::string& text);

class Writer {
public:
    explicit Writer(std::string path);
    ~Writer();

    Writer(const Writer&) = delete;
    Writer& operator=(const Writer&) = delete;

    void comment(const std::string& text);
    void row(const std::vector<std::string>& cells);
    void close();

private:
    std::string path_;
    std::string buf_;
    bool closed_ = false;
};

// Shortest decimal string that round-trips to the same double. Keeps written
// cohorts bit-faithful when re-read.
std::string format_double(double v);

std::optional<double> parse_double(const std::string& s);

std::string format_int(std::int64_t v);

}  // namespace adprog::csv
