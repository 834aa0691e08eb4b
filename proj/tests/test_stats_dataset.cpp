#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

#include "hmmfit/dataset.hpp"
#include "hmmfit/stats.hpp"

using namespace hmmfit;
using Catch::Matchers::WithinAbs;

TEST_CASE("normal and chi-square quantiles", "[stats]") {
  CHECK_THAT(stats::normal_quantile(0.975), WithinAbs(1.959963984540054, 1e-12));
  CHECK_THAT(stats::normal_quantile(0.5), WithinAbs(0.0, 1e-15));
  CHECK(std::isinf(stats::normal_quantile(1.0)));
  CHECK_THAT(stats::chisq_quantile(0.95, 1.0), WithinAbs(3.841458820694124, 1e-10));
  CHECK_THAT(stats::chisq_quantile(0.99, 2.0), WithinAbs(9.210340371976184, 1e-10));
}

TEST_CASE("type 7 sample quantiles", "[stats]") {
  // R: quantile(c(1, 3, 4, 10), c(0.1, 0.5, 0.9)) = 1.6, 3.5, 8.2
  const std::vector<double> v{10.0, 1.0, 4.0, 3.0};
  CHECK_THAT(stats::quantile(v, 0.1), WithinAbs(1.6, 1e-12));
  CHECK_THAT(stats::quantile(v, 0.5), WithinAbs(3.5, 1e-12));
  CHECK_THAT(stats::quantile(v, 0.9), WithinAbs(8.2, 1e-12));
  CHECK(stats::quantile(v, 0.0) == 1.0);
  CHECK(stats::quantile(v, 1.0) == 10.0);
  CHECK(stats::quantile(std::vector<double>{2.5}, 0.3) == 2.5);
}

TEST_CASE("mean and sample standard deviation", "[stats]") {
  const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
  CHECK(stats::mean(v) == 5.0);
  CHECK_THAT(stats::sample_sd(v), WithinAbs(std::sqrt(32.0 / 7.0), 1e-14));
}

TEST_CASE("embedded TYT series", "[dataset]") {
  const auto x = tyt_data();
  CHECK(x.size() == 87);
  CHECK(x.num_present() == 87);
  CHECK(x[0] == 6);
  const auto& v = x.values();
  CHECK(std::accumulate(v.begin(), v.end(), 0) > 0);
}

TEST_CASE("count parsing", "[dataset]") {
  std::istringstream in("3\n\n  4 \nNA\n0\n");
  const auto x = parse_counts(in);
  CHECK(x.values() == std::vector<int>{3, 4, ObservationSeq::kMissing, 0});

  std::istringstream bad("1\n2\nabc\n");
  try {
    parse_counts(bad);
    FAIL("expected ParseError");
  } catch (const HmmError& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::istringstream negative("-2\n");
  CHECK_THROWS_AS(parse_counts(negative), HmmError);
  std::istringstream empty("\n\n");
  try {
    parse_counts(empty);
    FAIL("expected EmptyData");
  } catch (const HmmError& e) {
    CHECK(e.code() == ErrorCode::EmptyData);
  }
}

TEST_CASE("loading a dataset from a file", "[dataset]") {
  const std::string path = "hmmfit_test_counts.txt";
  {
    std::ofstream f(path);
    f << "1\n2\nNA\n5\n";
  }
  CHECK(load_dataset(path).size() == 4);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_dataset("does/not/exist.txt"), HmmError);
  CHECK(load_dataset("tyt").size() == 87);
}
