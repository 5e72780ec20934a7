#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace hp::csv {

/// Header-indexed CSV table. Fields are kept as text; numeric parsing is
/// done by the caller so errors can name the offending column.
class Table {
public:
    Table() = default;
    Table(std::vector<std::string> header, std::vector<std::vector<std::string>> rows);

    const std::vector<std::string>& header() const { return header_; }
    const std::vector<std::vector<std::string>>& rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }

    bool has_column(std::string_view name) const;
    std::size_t column(std::string_view name) const;  // throws DataError MissingColumn

    const std::string& at(std::size_t row, std::string_view name) const;
    double number(std::size_t row, std::string_view name) const;
    long long integer(std::size_t row, std::string_view name) const;

    std::string source;  // file name used in error messages

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

/// RFC 4180 reader (quoted fields, doubled quotes). Requires a header row;
/// ragged rows are a DataError.
Table parse(std::istream& in, const std::string& source = "<stream>");
Table read_file(const std::string& path);

/// Shortest text that parses back to the identical double.
std::string format_double(double value);
double parse_double(std::string_view text, const std::string& context);

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}
    void row(const std::vector<std::string>& fields);

private:
    std::ostream& out_;
};

}  // namespace hp::csv
