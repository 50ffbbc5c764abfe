#include "mtlab/labcli/csv.hpp"

#include <stdexcept>

namespace mtlab::labcli {

void CsvTable::add_row(std::vector<std::string> row) {
    if (row.size() != header.size())
        throw std::invalid_argument("csv: row width " + std::to_string(row.size()) +
                                    " differs from header width " +
                                    std::to_string(header.size()));
    rows.push_back(std::move(row));
}

namespace {

bool needs_quoting(const std::string& field) {
    return field.find_first_of(",\"\n\r") != std::string::npos;
}

void append_field(std::string& out, const std::string& field) {
    if (!needs_quoting(field)) {
        out += field;
        return;
    }
    out += '"';
    for (char c : field) {
        if (c == '"')
            out += '"';
        out += c;
    }
    out += '"';
}

void append_line(std::string& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i)
            out += ',';
        append_field(out, fields[i]);
    }
    out += '\n';
}

} // namespace

std::string to_csv(const CsvTable& table) {
    if (table.header.empty())
        throw std::invalid_argument("csv: empty header");
    std::string out;
    append_line(out, table.header);
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size())
            throw std::invalid_argument("csv: ragged row");
        append_line(out, row);
    }
    return out;
}

CsvTable parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> lines;
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    bool any = false;

    std::size_t i = 0;
    auto end_field = [&] {
        fields.push_back(std::move(field));
        field.clear();
        any = true;
    };
    auto end_line = [&] {
        end_field();
        lines.push_back(std::move(fields));
        fields.clear();
    };
    while (i < text.size()) {
        char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    i += 2;
                } else {
                    quoted = false;
                    ++i;
                }
            } else {
                field += c;
                ++i;
            }
        } else if (c == '"') {
            if (!field.empty())
                throw std::invalid_argument("csv: quote inside unquoted field");
            quoted = true;
            ++i;
        } else if (c == ',') {
            end_field();
            ++i;
        } else if (c == '\n' || c == '\r') {
            end_line();
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n')
                ++i;
            ++i;
        } else {
            field += c;
            ++i;
        }
    }
    if (quoted)
        throw std::invalid_argument("csv: unterminated quote");
    if (!field.empty() || !fields.empty())
        end_line();
    (void)any;

    if (lines.empty())
        throw std::invalid_argument("csv: no header line");
    CsvTable table;
    table.header = std::move(lines.front());
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (lines[r].size() != table.header.size())
            throw std::invalid_argument("csv: row " + std::to_string(r) + " has " +
                                        std::to_string(lines[r].size()) + " fields, expected " +
                                        std::to_string(table.header.size()));
        table.rows.push_back(std::move(lines[r]));
    }
    return table;
}

} // namespace mtlab::labcli
