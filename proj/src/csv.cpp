#include "histpanel/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "histpanel/error.hpp"

namespace hp::csv {

namespace {

bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\r') {
            // tolerate CRLF
        } else if (c == '\n') {
            ++line;
            fields.push_back(std::move(field));
            return true;
        } else {
            field.push_back(c);
        }
    }
    if (in_quotes) throw_data("panel_core", "MalformedCsv", "unterminated quoted field near line " + std::to_string(line));
    if (!any) return false;
    fields.push_back(std::move(field));
    return true;
}

bool blank(const std::vector<std::string>& fields) {
    return fields.size() == 1 && fields[0].empty();
}

std::string trimmed(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
    return std::string(s.substr(b, e - b));
}

}  // namespace

Table::Table(std::vector<std::string> header, std::vector<std::vector<std::string>> rows)
    : header_(std::move(header)), rows_(std::move(rows)) {}

bool Table::has_column(std::string_view name) const {
    for (const auto& h : header_)
        if (h == name) return true;
    return false;
}

std::size_t Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i)
        if (header_[i] == name) return i;
    throw_data("panel_core", "MissingColumn", source + ": no column '" + std::string(name) + "'");
}

const std::string& Table::at(std::size_t row, std::string_view name) const {
    return rows_.at(row)[column(name)];
}

double Table::number(std::size_t row, std::string_view name) const {
    return parse_double(at(row, name), source + " row " + std::to_string(row + 2) + " column " + std::string(name));
}

long long Table::integer(std::size_t row, std::string_view name) const {
    const std::string text = trimmed(at(row, name));
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw_data("panel_core", "BadValue",
                   source + " row " + std::to_string(row + 2) + " column " + std::string(name) +
                       ": expected integer, got '" + text + "'");
    }
    return value;
}

Table parse(std::istream& in, const std::string& source) {
    std::vector<std::string> header;
    std::size_t line = 1;
    if (!read_record(in, header, line) || blank(header)) {
        throw_data("panel_core", "MissingHeader", source + ": empty file, header row required");
    }
    if (!header.empty() && header[0].size() >= 3 && header[0].compare(0, 3, "\xEF\xBB\xBF") == 0) {
        header[0].erase(0, 3);
    }
    for (auto& h : header) h = trimmed(h);
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> fields;
    while (read_record(in, fields, line)) {
        if (blank(fields)) continue;
        if (fields.size() != header.size()) {
            throw_data("panel_core", "MalformedCsv",
                       source + " line " + std::to_string(line) + ": expected " + std::to_string(header.size()) +
                           " fields, got " + std::to_string(fields.size()));
        }
        rows.push_back(fields);
    }
    Table t(std::move(header), std::move(rows));
    t.source = source;
    return t;
}

Table read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_data("panel_core", "FileNotFound", "cannot open " + path);
    return parse(in, path);
}

std::string format_double(double value) {
    if (std::isnan(value)) return "NA";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

double parse_double(std::string_view text, const std::string& context) {
    const std::string t = trimmed(text);
    if (t == "NA" || t == "nan") return std::nan("");
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
        throw_data("panel_core", "BadValue", context + ": expected number, got '" + t + "'");
    }
    return value;
}

void Writer::row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out_ << ',';
        const std::string& f = fields[i];
        if (f.find_first_of(",\"\n") != std::string::npos) {
            out_ << '"';
            for (char c : f) {
                if (c == '"') out_ << '"';
                out_ << c;
            }
            out_ << '"';
        } else {
            out_ << f;
        }
    }
    out_ << '\n';
}

}  // namespace hp::csv
