#include "table.hpp"

#include "errors.hpp"
#include "util.hpp"

namespace delaylab {

std::optional<std::size_t> Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name)
            return i;
    return std::nullopt;
}

std::size_t Table::require_column(std::string_view name) const {
    if (auto c = column(name))
        return *c;
    std::string have;
    for (const auto &h : header)
        have += (have.empty() ? "" : ", ") + h;
    fail(Errc::validation, "missing column '" + std::string(name) + "' (have: " + have + ")");
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos)
        return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"')
            out += '"';
        out += c;
    }
    out += '"';
    return out;
}

Table Table::parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t line = 1;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        if (!(record.size() == 1 && record[0].empty()))
            records.push_back(std::move(record));
        record.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n')
                    ++line;
                field += c;
            }
            continue;
        }
        if (c == '"' && !field_started) {
            in_quotes = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n') {
            end_record();
            ++line;
        } else if (c != '\r') {
            field += c;
            field_started = true;
        }
    }
    if (in_quotes)
        fail(Errc::parse, "unterminated quoted field near line " + std::to_string(line));
    if (field_started || !record.empty())
        end_record();

    Table t;
    if (records.empty())
        fail(Errc::parse, "empty CSV document");
    t.header = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != t.header.size())
            fail(Errc::parse, "CSV record " + std::to_string(r + 1) + " has " +
                                  std::to_string(records[r].size()) + " fields, header has " +
                                  std::to_string(t.header.size()));
        t.rows.push_back(std::move(records[r]));
    }
    return t;
}

Table Table::load_csv(const std::filesystem::path &path) { return parse_csv(read_file(path)); }

std::string Table::to_csv() const {
    std::string out;
    auto emit = [&out](const std::vector<std::string> &rec) {
        for (std::size_t i = 0; i < rec.size(); ++i) {
            if (i)
                out += ',';
            out += csv_escape(rec[i]);
        }
        out += '\n';
    };
    emit(header);
    for (const auto &r : rows)
        emit(r);
    return out;
}

} // namespace delaylab
