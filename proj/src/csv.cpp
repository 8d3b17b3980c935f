#include "ablatron/csv.hpp"

#include "ablatron/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace ablatron {

void CsvWriter::row(const std::vector<std::string>& fields)
{
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) out_ << ',';
        const std::string& f = fields[i];
        if (f.find_first_of(",\"\r\n") == std::string::npos) {
            out_ << f;
            continue;
        }
        out_ << '"';
        for (char c : f) {
            if (c == '"') out_ << '"';
            out_ << c;
        }
        out_ << '"';
    }
    out_ << "\r\n";
}

std::size_t CsvTable::column(std::string_view name) const
{
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("missing column \"" + std::string(name) + "\"");
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable parse_csv(std::istream& in)
{
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    char c = 0;
    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(record));
        record.clear();
    };
    while (in.get(c)) {
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field += '"';
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"' && !field_started && field.empty()) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r') {
            if (in.peek() == '\n') in.get(c);
            end_record();
        } else if (c == '\n') {
            end_record();
        } else {
            field += c;
            field_started = true;
        }
    }
    if (quoted) throw SchemaError("unterminated quoted field");
    if (field_started || !field.empty() || !record.empty()) end_record();

    CsvTable table;
    if (records.empty()) return table;
    table.header = std::move(records.front());
    table.rows.assign(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
    return table;
}

CsvTable read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open " + path.string());
    return parse_csv(in);
}

std::string format_real(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::optional<double> parse_real(std::string_view s)
{
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

const std::vector<CsvSchema>& csv_schemas()
{
    static const std::vector<CsvSchema> schemas = {
        {"accounting",
         {"class", "count", "acc_before", "acc_after", "delta_pp", "black", "red", "green", "blue"},
         {"count", "acc_before", "acc_after", "delta_pp", "black", "red", "green", "blue"},
         {}},
        {"transitions", {"sample_index", "label", "category"}, {"sample_index", "label"}, {}},
        {"embedding", {"sample_index", "x", "y", "label"}, {"sample_index", "x", "y", "label"}, {}},
        {"history",
         {"epoch", "train_loss", "train_accuracy", "test_top1", "test_top5"},
         {"epoch", "train_loss", "train_accuracy", "test_top1", "test_top5"},
         {"test_top1", "test_top5"}},
        {"units",
         {"spec_hash", "timestamp", "seed", "layer", "kind", "targets", "acc_before", "acc_after", "drop_pp",
          "top5_before", "top5_after", "drop_top5_pp", "class_deltas_pp"},
         {"seed", "layer", "acc_before", "acc_after", "drop_pp", "top5_before", "top5_after", "drop_top5_pp"},
         {}},
        {"pairs",
         {"spec_hash", "timestamp", "seed", "layer", "unit_a", "unit_b", "drop_a_pp", "drop_b_pp", "pair_drop_pp",
          "gap_pp", "black", "red", "green", "blue"},
         {"seed", "layer", "unit_a", "unit_b", "drop_a_pp", "drop_b_pp", "pair_drop_pp", "gap_pp", "black", "red",
          "green", "blue"},
         {}},
        {"correlation_units",
         {"spec_hash", "timestamp", "seed", "unit", "p_value", "drop_pp"},
         {"seed", "unit", "p_value", "drop_pp"},
         {}},
        {"correlation_summary",
         {"spec_hash", "timestamp", "seed", "status", "test_accuracy", "pearson", "spearman"},
         {"seed", "test_accuracy", "pearson", "spearman"},
         {"test_accuracy", "pearson", "spearman"}},
        {"layers",
         {"spec_hash", "timestamp", "seed", "layer", "proportion", "reference", "group_size", "targets", "top1_before",
          "top1_after", "drop_top1_pp", "top5_before", "top5_after", "drop_top5_pp"},
         {"seed", "layer", "proportion", "reference", "group_size", "top1_before", "top1_after", "drop_top1_pp",
          "top5_before", "top5_after", "drop_top5_pp"},
         {}},
        {"layer_summary",
         {"layer", "proportion", "records", "mean_drop_top1_pp", "std_drop_top1_pp", "mean_drop_top5_pp",
          "std_drop_top5_pp"},
         {"layer", "proportion", "records", "mean_drop_top1_pp", "std_drop_top1_pp", "mean_drop_top5_pp",
          "std_drop_top5_pp"},
         {}},
        {"recovery",
         {"spec_hash", "timestamp", "seed", "layer", "proportion", "instance", "iteration", "phase", "epoch",
          "ablated_count", "cumulative_fraction", "top1", "top5"},
         {"seed", "layer", "proportion", "instance", "iteration", "epoch", "ablated_count", "cumulative_fraction",
          "top1", "top5"},
         {}},
    };
    return schemas;
}

const CsvSchema& csv_schema(std::string_view name)
{
    for (const CsvSchema& s : csv_schemas()) {
        if (s.name == name) return s;
    }
    throw SchemaError("unknown schema \"" + std::string(name) + "\"");
}

void check_csv(const CsvTable& table, const CsvSchema& schema)
{
    if (table.header != schema.columns) throw SchemaError(schema.name + ": header does not match the schema");
    std::vector<std::pair<std::size_t, bool>> numeric;
    for (const std::string& col : schema.numeric) {
        const bool optional = std::find(schema.optional.begin(), schema.optional.end(), col) != schema.optional.end();
        numeric.emplace_back(table.column(col), optional);
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string where = schema.name + " row " + std::to_string(r + 1);
        if (row.size() != schema.columns.size()) {
            throw SchemaError(where + ": expected " + std::to_string(schema.columns.size()) + " fields, found " +
                              std::to_string(row.size()));
        }
        for (const auto& [idx, optional] : numeric) {
            if (optional && row[idx].empty()) continue;
            if (!parse_real(row[idx])) {
                throw SchemaError(where + ": column " + schema.columns[idx] + " is not a finite number (\"" + row[idx] +
                                  "\")");
            }
        }
    }
}

const std::vector<std::string>& accounting_columns() { return csv_schema("accounting").columns; }
const std::vector<std::string>& transition_columns() { return csv_schema("transitions").columns; }

}  // namespace ablatron
