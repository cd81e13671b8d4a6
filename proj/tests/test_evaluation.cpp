#include <doctest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "tma/error.hpp"
#include "tma/evaluation.hpp"

using namespace tma;

namespace {

std::vector<std::string> ids(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("img" + std::to_string(100 + i));
  return out;
}

Descriptor random_descriptor(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(d);
  for (double& x : v) x = g(rng);
  return Descriptor::normalized(std::move(v));
}

}  // namespace

TEST_CASE("average precision examples") {
  const auto r = ids(10);
  CHECK(*average_precision(r, {r[0], r[1], r[2]}, {}) == 1.0);
  CHECK(*average_precision(r, {r[1]}, {}) == 0.5);
  CHECK(*average_precision(r, {r[0], r[2]}, {}) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
  // junk ahead of a relevant item is skipped
  CHECK(*average_precision(r, {r[1]}, {r[0]}) == 1.0);
  // a relevant item absent from the ranking counts as a miss
  CHECK(*average_precision(r, {r[0], "elsewhere"}, {}) == 0.5);
  CHECK_FALSE(average_precision(r, {}, {}).has_value());
  CHECK_FALSE(average_precision(r, {}, {}, ApConvention::Interpolated).has_value());
  CHECK(*average_precision(r, {r[0]}, {}, ApConvention::Interpolated) == 1.0);
  // one relevant at rank 2: trapezoid between precision 0 at rank 1 and 1/2
  CHECK(*average_precision(r, {r[1]}, {}, ApConvention::Interpolated) == doctest::Approx(0.25));
}

TEST_CASE("average precision matches the brute-force oracles on random rankings") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    auto r = ids(10 + trial % 7);
    std::shuffle(r.begin(), r.end(), rng);
    auto pool = r;
    std::shuffle(pool.begin(), pool.end(), rng);
    const int n_rel = 1 + trial % 4;
    const int n_junk = trial % 3;
    const std::set<std::string> rel(pool.begin(), pool.begin() + n_rel);
    const std::set<std::string> junk(pool.begin() + n_rel, pool.begin() + n_rel + n_junk);
    CHECK(std::abs(*average_precision(r, rel, junk, ApConvention::Classic) - oracle::ap_classic(r, rel, junk)) < 1e-12);
    CHECK(std::abs(*average_precision(r, rel, junk, ApConvention::Interpolated) -
                   oracle::ap_interpolated(r, rel, junk)) < 1e-12);
    const double ap = *average_precision(r, rel, junk);
    CHECK((ap > 0.0 && ap <= 1.0));
  }
}

TEST_CASE("AP convention names") {
  CHECK(parse_ap_convention("classic") == ApConvention::Classic);
  CHECK(parse_ap_convention(to_string(ApConvention::Interpolated)) == ApConvention::Interpolated);
  CHECK_THROWS_AS(parse_ap_convention("other"), Error);
}

TEST_CASE("ranking") {
  std::mt19937_64 rng(2);
  const auto names = ids(20);
  std::vector<Descriptor> db;
  for (int i = 0; i < 20; ++i) db.push_back(random_descriptor(8, rng));
  const Descriptor q = random_descriptor(8, rng);
  std::vector<double> scores;
  for (const auto& d : db) scores.push_back(q.dot(d));
  CHECK(rank_database(q, names, db) == oracle::rank_by_counting(scores, names));
  // the query itself comes first
  CHECK(rank_database(db[7], names, db).front() == names[7]);
  // identical descriptors are ordered by id
  std::vector<Descriptor> twins{db[0], db[0], db[1]};
  const std::vector<std::string> twin_ids{"b", "a", "c"};
  const auto ranked = rank_database(db[0], twin_ids, twins);
  CHECK(ranked[0] == "a");
  CHECK(ranked[1] == "b");
  CHECK_THROWS_AS(rank_database(q, std::vector<std::string>{"x"}, db), Error);
}

TEST_CASE("ranking is invariant to positive scaling of the scores") {
  std::mt19937_64 rng(3);
  const auto names = ids(15);
  std::vector<double> scores(15);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& s : scores) s = u(rng);
  std::vector<double> scaled = scores;
  for (double& s : scaled) s *= 3.7;
  CHECK(oracle::rank_by_counting(scores, names) == oracle::rank_by_counting(scaled, names));
  std::vector<Descriptor> db;
  for (int i = 0; i < 15; ++i) db.push_back(random_descriptor(6, rng));
  const Descriptor q = random_descriptor(6, rng);
  std::vector<double> raw;
  for (const auto& d : db) raw.push_back(2.5 * q.dot(d));
  CHECK(rank_database(q, names, db) == oracle::rank_by_counting(raw, names));
}
