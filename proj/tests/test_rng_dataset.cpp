#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "hmfpc/dataset.hpp"
#include "hmfpc/errors.hpp"
#include "hmfpc/rng.hpp"

namespace hmfpc {
namespace {

TEST(CounterRng, ReproducibleAndStreamSeparated) {
  CounterRng a(42, 1);
  CounterRng b(42, 1);
  CounterRng c(42, 2);
  int same = 0;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    same += x == c.next_u64();
  }
  EXPECT_EQ(same, 0);
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
}

TEST(CounterRng, UniformAndNormalMoments) {
  CounterRng rng(7);
  const int n = 200000;
  double su = 0.0;
  double sn = 0.0;
  double sn2 = 0.0;
  double sn4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
    sn4 += z * z * z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(sn / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(sn2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(sn4 / n, 3.0, 4.0 * std::sqrt(96.0 / n));
}

TEST(Dataset, CsvRoundTripIsExact) {
  LongitudinalDataset data;
  data.add_observation("b", 0.1, 1.0 / 3.0);
  data.add_observation("a", 2.5e-7, -4.0);
  data.add_observation("b", 0.30000000000000004, 1e300);
  std::stringstream buf;
  data.write_csv(buf);
  const LongitudinalDataset back = LongitudinalDataset::read_csv(buf);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.subject(0).id, "b");
  EXPECT_EQ(back.subject(0).times, data.subject(0).times);
  EXPECT_EQ(back.subject(0).values, data.subject(0).values);
  EXPECT_EQ(back.subject(1).values, data.subject(1).values);
  EXPECT_EQ(back.observation_count(), 3u);
  EXPECT_EQ(back.time_range().first, 2.5e-7);
}

TEST(Dataset, ToleratesBomCrlfAndBlankLines) {
  std::istringstream in("\xEF\xBB\xBFsubject,time,value\r\n\r\ns1, 1.0 ,2\r\ns1,2,3\n");
  const auto data = LongitudinalDataset::read_csv(in);
  ASSERT_EQ(data.size(), 1u);
  EXPECT_EQ(data.subject(0).times, (std::vector<double>{1.0, 2.0}));
}

void expect_parse_error_at(const std::string& text, std::size_t line) {
  std::istringstream in(text);
  try {
    LongitudinalDataset::read_csv(in);
    FAIL() << "expected ParseError for: " << text;
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), line) << e.what();
  }
}

TEST(Dataset, MalformedInputNamesLine) {
  expect_parse_error_at("", 0);
  expect_parse_error_at("subject,time,value\n", 0);
  expect_parse_error_at("id,t,y\n1,2,3\n", 1);
  expect_parse_error_at("subject,time,value\na,1,2\na,x,2\n", 3);
  expect_parse_error_at("subject,time,value\na,1,NaN\n", 2);
  expect_parse_error_at("subject,time,value\na,1,nan\n", 2);
  expect_parse_error_at("subject,time,value\na,1,inf\n", 2);
  expect_parse_error_at("subject,time,value\na,1\n", 2);
  expect_parse_error_at("subject,time,value\n,1,2\n", 2);
}

TEST(Dataset, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 7.0, -2.2250738585072014e-308, 123456789.125}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

}  // namespace
}  // namespace hmfpc
