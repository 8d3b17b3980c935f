#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ablatron {

/// RFC-4180 writer: fields containing a comma, quote or line break are quoted.
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}
    void row(const std::vector<std::string>& fields);

private:
    std::ostream& out_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name; throws SchemaError when absent.
    std::size_t column(std::string_view name) const;
};

/// Throws SchemaError on unbalanced quotes.
CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);

/// Shortest decimal that round-trips the double.
std::string format_real(double v);
std::optional<double> parse_real(std::string_view s);

/// Published result-file schema. Columns listed in `numeric` must parse as
/// finite reals (empty allowed when listed in `optional`).
struct CsvSchema {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::string> numeric;
    std::vector<std::string> optional;
};

const std::vector<CsvSchema>& csv_schemas();
const CsvSchema& csv_schema(std::string_view name);

/// Checks header and field contents against `schema`; throws SchemaError
/// naming the first offending row and column.
void check_csv(const CsvTable& table, const CsvSchema& schema);

const std::vector<std::string>& accounting_columns();
const std::vector<std::string>& transition_columns();

}  // namespace ablatron
