#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "generators.hpp"
#include "medsurv/errors.hpp"
#include "medsurv/survdata.hpp"

using namespace medsurv;

namespace {

FactorialDataset read(const std::string& csv, std::vector<std::string> factors) {
  std::istringstream in(csv);
  return parse_csv(in, CsvConfig{"time", "status", std::move(factors)});
}

std::string error_of(const std::string& csv, std::vector<std::string> factors) {
  try {
    read(csv, std::move(factors));
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("single factor with two levels") {
  const auto d = read("time,status,g\n1.5,1,x\n2,0,y\n3,1,x\n0.5,1,y\n", {"g"});
  REQUIRE(d.group_count() == 2);
  CHECK(d.group(0).size() == 2);
  CHECK(d.group(1).size() == 2);
  CHECK(d.group(0).label() == "x");
  CHECK(d.group(1).observations()[0] == Observation{2.0, Status::censored});
}

TEST_CASE("two factors flatten with the last factor fastest") {
  const auto d = read(
      "time,status,A,B\n"
      "1,1,a2,b2\n2,1,a1,b2\n3,1,a2,b1\n4,1,a1,b1\n5,0,a1,b1\n",
      {"A", "B"});
  REQUIRE(d.group_count() == 4);
  std::vector<std::string> labels;
  for (const auto& g : d.groups()) labels.push_back(g.label());
  CHECK(labels == std::vector<std::string>{"a1×b1", "a1×b2", "a2×b1", "a2×b2"});
  CHECK(d.group(0).size() == 2);
  CHECK(d.group(3).observations()[0].time == 1.0);
}

TEST_CASE("numeric levels sort numerically") {
  const auto d = read("time,status,dose\n1,1,10\n2,1,9\n3,1,100\n", {"dose"});
  CHECK(d.layout().factors()[0].levels == std::vector<std::string>{"9", "10", "100"});
}

TEST_CASE("parse errors name the offending column, value or cell") {
  CHECK(error_of("time,status,A,B\n1,1,a1,b1\n1,1,a1,b2\n1,1,a2,b1\n", {"A", "B"})
            .find("a2×b2") != std::string::npos);
  CHECK(error_of("time,state\n1,1\n", {}).find("status") != std::string::npos);
  CHECK(error_of("time,status\n0,1\n", {}).find("non-positive") != std::string::npos);
  CHECK(error_of("time,status\n-1,1\n", {}).find("non-positive") != std::string::npos);
  CHECK(error_of("time,status\n1,2\n", {}).find("status") != std::string::npos);
  CHECK(error_of("time,status,g\n1,1,\n", {"g"}).find("'g'") != std::string::npos);
  CHECK(error_of("time,status\n1,1\n", {"g"}).find("missing column 'g'") != std::string::npos);
}

TEST_CASE("true/false status, quoted fields and BOM") {
  const auto d = read("\xEF\xBB\xBFtime,status,\"g\"\n1,true,\"a,b\"\n2,false,\"a,b\"\n", {"g"});
  REQUIRE(d.group_count() == 1);
  CHECK(d.group(0).label() == "a,b");
  CHECK(d.group(0).event_count() == 1);
}

TEST_CASE("no factor columns gives a single group") {
  const auto d = read("time,status\n1,1\n2,0\n", {});
  CHECK(d.group_count() == 1);
  CHECK(d.total_size() == 2);
}

TEST_CASE("property: parse, write, parse round-trips") {
  gen::Engine e(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto layout = FactorialLayout::two_way(gen::integer(e, 2, 3), gen::integer(e, 2, 3));
    const auto d = gen::dataset(e, layout, {1, 8, 0.3, 0.2});
    const CsvConfig config{"time", "status", {"A", "B"}};
    std::ostringstream out;
    write_csv(out, d, config);
    std::istringstream in(out.str());
    const auto back = parse_csv(in, config);
    REQUIRE(back.group_count() == d.group_count());
    for (std::size_t g = 0; g < d.group_count(); ++g) {
      CHECK(back.group(g).observations() == d.group(g).observations());
      CHECK(back.group(g).label() == d.group(g).label());
    }
  }
}

TEST_CASE("property: flatten and unflatten are inverse") {
  const FactorialLayout layout({{"A", {"1", "2", "3"}}, {"B", {"x", "y"}}, {"C", {"p", "q", "r", "s"}}});
  REQUIRE(layout.cells() == 24);
  for (std::size_t j = 0; j < layout.cells(); ++j) CHECK(layout.flatten(layout.unflatten(j)) == j);
  const std::vector<std::size_t> idx = {1, 0, 2};
  CHECK(layout.flatten(idx) == 1 * 8 + 0 * 4 + 2);
}

TEST_CASE("jitter_ties") {
  SUBCASE("ties are broken within epsilon") {
    FactorialDataset d({SurvivalSample({{1.0, Status::event}, {1.0, Status::censored}, {2.0, Status::event}})},
                       FactorialLayout::one_way(1));
    const auto j = jitter_ties(d, 0.001, 3);
    const auto& obs = j.group(0).observations();
    std::set<double> times;
    for (std::size_t i = 0; i < obs.size(); ++i) {
      times.insert(obs[i].time);
      CHECK(std::abs(obs[i].time - d.group(0).observations()[i].time) <= 0.001);
      CHECK(obs[i].status == d.group(0).observations()[i].status);
    }
    CHECK(times.size() == 3);
    CHECK(obs[2].time == 2.0);
  }
  SUBCASE("no ties means no change") {
    FactorialDataset d({SurvivalSample({{1.0, Status::event}, {2.0, Status::event}})},
                       FactorialLayout::one_way(1));
    CHECK(jitter_ties(d, 0.1, 1) == d);
  }
  SUBCASE("epsilon that could make times non-positive") {
    FactorialDataset d({SurvivalSample({{0.0005, Status::event}, {0.0005, Status::event}})},
                       FactorialLayout::one_way(1));
    CHECK_THROWS_AS(jitter_ties(d, 0.01, 1), DataError);
  }
  SUBCASE("property: statuses kept, non-tied ranking kept, deterministic") {
    gen::Engine e(5);
    for (int trial = 0; trial < 100; ++trial) {
      const auto layout = FactorialLayout::one_way(2);
      const auto d = gen::dataset(e, layout, {2, 30, 0.3, 0.0, true});
      const auto j = jitter_ties(d, 1e-4, 9);
      CHECK(j == jitter_ties(d, 1e-4, 9));
      std::vector<std::pair<double, double>> pairs;  // original, jittered
      std::multiset<int> before, after;
      std::set<double> distinct;
      for (std::size_t g = 0; g < 2; ++g)
        for (std::size_t i = 0; i < d.group(g).size(); ++i) {
          const auto& o = d.group(g).observations()[i];
          const auto& p = j.group(g).observations()[i];
          pairs.emplace_back(o.time, p.time);
          before.insert(static_cast<int>(o.status));
          after.insert(static_cast<int>(p.status));
          distinct.insert(p.time);
        }
      CHECK(before == after);
      CHECK(distinct.size() == pairs.size());
      for (const auto& [a0, a1] : pairs)
        for (const auto& [b0, b1] : pairs)
          if (a0 < b0) CHECK(a1 < b1);
    }
  }
}

TEST_CASE("summary JSON keys") {
  const auto d = read("time,status,g\n1,1,x\n2,1,x\n3,1,x\n1,0,y\n", {"g"});
  const auto s = summarize(d);
  CHECK(s.n == 4);
  CHECK(s.k == 2);
  const auto j = to_json(s);
  REQUIRE(j["groups"].size() == 2);
  CHECK(j["groups"][0]["group"] == "x");
  CHECK(j["groups"][0]["n"] == 3);
  CHECK(j["groups"][0]["median"] == 2.0);
  CHECK(j["groups"][1]["censoring_rate"] == 1.0);
  CHECK(j["groups"][1]["median"].is_null());
}
