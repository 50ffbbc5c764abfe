#pragma once

#include <string>
#include <vector>

namespace mtlab::labcli {

// A rectangular table of text cells; numbers go through format_double so a
// parse of the emitted text reproduces every cell exactly.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row); // width-checked

    friend bool operator==(const CsvTable&, const CsvTable&) = default;
};

std::string to_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text); // quotes, embedded commas/newlines

} // namespace mtlab::labcli
