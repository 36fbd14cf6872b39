#include "adprog/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "adprog/errors.hpp"

namespace adprog::csv {

namespace {

std::string strip_cr(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
    return s;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cell);
            cell.clear();
        } else {
            cell.push_back(c);
        }
    }
    out.push_back(cell);
    return out;
}

}  // namespace

int Table::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
}

Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ContractError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

Table parse(const std::string& text) {
    Table t;
    std::istringstream in(text);
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        line = strip_cr(line);
        if (!have_header) {
            if (line.empty()) continue;
            if (line[0] == '#') {
                t.comments.push_back(line);
                continue;
            }
            t.header = split_line(line);
            have_header = true;
            continue;
        }
        if (line.empty()) continue;
        if (line[0] == '#') continue;
        t.rows.push_back(split_line(line));
    }
    if (!have_header) throw ContractError("missing header row");
    return t;
}

Writer::Writer(std::string path) : path_(std::move(path)) {}

Writer::~Writer() {
    if (!closed_) close();
}

void Writer::comment(const std::string& text) { buf_ += "# " + text + "\n"; }

void Writer::row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) buf_ += ',';
        buf_ += cells[i];
    }
    buf_ += '\n';
}

void Writer::close() {
    closed_ = true;
    std::ofstream out(path_, std::ios::binary);
    if (!out) throw ContractError("cannot write file: " + path_);
    out << buf_;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    const char* begin = s.data();
    const char* end = begin + s.size();
    while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end != begin && (*(end - 1) == ' ' || *(end - 1) == '\t')) --end;
    if (begin == end) return std::nullopt;
    double v = 0.0;
    auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end) return std::nullopt;
    return v;
}

std::string format_int(std::int64_t v) { return std::to_string(v); }

}  // namespace adprog::csv
