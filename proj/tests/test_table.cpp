#include "errors.hpp"
#include "table.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <optional>

using namespace delaylab;

TEST(Table, ParsesPlainCsv) {
    const Table t = Table::parse_csv("a,b\n1,2\n3,4\n");
    EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b"}));
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[1][0], "3");
    EXPECT_EQ(t.column("b"), 1u);
    EXPECT_FALSE(t.column("c").has_value());
}

TEST(Table, CrLfAndMissingTrailingNewline) {
    const Table t = Table::parse_csv("a,b\r\n1,2\r\n3,4");
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[1][1], "4");
}

TEST(Table, QuotingRoundTrips) {
    Table t;
    t.header = {"id", "note"};
    t.rows = {{"1", "plain"}, {"2", "with, comma"}, {"3", "say \"hi\""}, {"4", "two\nlines"}, {"5", ""}};
    const std::string csv = t.to_csv();
    const Table back = Table::parse_csv(csv);
    EXPECT_EQ(back.header, t.header);
    EXPECT_EQ(back.rows, t.rows);
    EXPECT_EQ(back.to_csv(), csv);
}

TEST(Table, EscapeOnlyWhenNeeded) {
    EXPECT_EQ(csv_escape("abc"), "abc");
    EXPECT_EQ(csv_escape("a,b"), "\"a,b\"");
    EXPECT_EQ(csv_escape("a\"b"), "\"a\"\"b\"");
}

TEST(Table, Errors) {
    auto code_of = [](auto &&fn) -> std::optional<Errc> {
        try {
            fn();
        } catch (const Error &e) {
            return e.code();
        }
        return std::nullopt;
    };
    EXPECT_EQ(code_of([] { Table::parse_csv(""); }), Errc::parse);
    EXPECT_EQ(code_of([] { Table::parse_csv("a,b\n1\n"); }), Errc::parse);
    EXPECT_EQ(code_of([] { Table::parse_csv("a\n\"open\n"); }), Errc::parse);
    EXPECT_EQ(code_of([] { Table::parse_csv("a\n1\n").require_column("zz"); }), Errc::validation);
    EXPECT_EQ(code_of([] { Table::load_csv("/nonexistent/file.csv"); }), Errc::io);
}

TEST(Table, LoadFromFile) {
    const auto path = std::filesystem::temp_directory_path() / "delaylab_table_test.csv";
    {
        std::ofstream out(path);
        out << "x,y\n1,2\n";
    }
    const Table t = Table::load_csv(path);
    EXPECT_EQ(t.rows.size(), 1u);
    std::filesystem::remove(path);
}
