#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "nnmut/csv.hpp"
#include "nnmut/error.hpp"

using namespace nnmut;

TEST(Csv, ParsesQuotedFieldsAndLineEndings) {
  const auto t = csv::parse("a,b,c\r\n1,\"x,y\",\"say \"\"hi\"\"\"\r\n2,\"multi\nline\",\n\n");
  ASSERT_EQ(t.header, (std::vector<std::string>{"a", "b", "c"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][1], "x,y");
  EXPECT_EQ(t.rows[0][2], "say \"hi\"");
  EXPECT_EQ(t.rows[1][1], "multi\nline");
  EXPECT_EQ(t.rows[1][2], "");
  EXPECT_EQ(t.column("c"), 2u);
  EXPECT_EQ(t.column("zz"), csv::Table::npos);
}

TEST(Csv, RejectsMalformedInput) {
  EXPECT_THROW(csv::parse("a,b\n1,2,3\n"), DataError);
  EXPECT_THROW(csv::parse("a\n\"open\n"), DataError);
  EXPECT_THROW(csv::parse("a\nx\"y\n"), DataError);
  EXPECT_TRUE(csv::parse("").header.empty());
}

TEST(Csv, EscapeRoundTrips) {
  const std::vector<std::string> fields{"plain", "with,comma", "quote\"d", "line\nbreak", ""};
  const auto t = csv::parse(csv::join(fields) + "\n");
  EXPECT_EQ(t.header, fields);
}

TEST(Csv, ParseRealIsStrict) {
  double v = 0;
  EXPECT_TRUE(csv::parse_real(" 1.5 ", v));
  EXPECT_EQ(v, 1.5);
  EXPECT_TRUE(csv::parse_real("+2e-3", v));
  EXPECT_EQ(v, 2e-3);
  EXPECT_TRUE(csv::parse_real("-0.25", v));
  EXPECT_FALSE(csv::parse_real("", v));
  EXPECT_FALSE(csv::parse_real("1.5x", v));
  EXPECT_FALSE(csv::parse_real("abc", v));
  EXPECT_FALSE(csv::parse_real("inf", v));
  EXPECT_FALSE(csv::parse_real("nan", v));
}

TEST(Csv, FormatRealRoundTrips) {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125, 0.0}) {
    double back = 1;
    ASSERT_TRUE(csv::parse_real(csv::format_real(x), back));
    EXPECT_EQ(back, x);
  }
}
