#include <gtest/gtest.h>

#include "plt/plt.hpp"
#include "support/oracles.hpp"

namespace plt {
namespace {

TEST(RunPlt, WorkedExample) {
  WorkedExample ex;
  PrimeField field = ex.field();
  Database db = Database::random(field, ex.k, 16, 42);
  PltRun run = run_plt(db, ex.demand, ex.n, 7, ex.options);
  EXPECT_EQ(run.recovered, evaluate_demand(db, ex.demand));
  EXPECT_EQ(run.transcript.total_downloaded, 24u);
  EXPECT_EQ(run.transcript.rate, Rational(2, 3));
  EXPECT_EQ(run.transcript.rate, plt_capacity_L1(2, 4, 3).value);
  ASSERT_EQ(run.transcript.per_server.size(), 2u);
  for (const auto& c : run.transcript.per_server) EXPECT_EQ(c.answer_symbols, 12u);
}

TEST(RunPlt, ScalesBackToTheDemand) {
  WorkedExample ex;
  PrimeField field = ex.field();
  UserSession session(field, ex.k, ex.n, ex.demand, 1, ex.options);
  EXPECT_EQ(session.setup().table.star_scalar, ex.expect_star_scalar);
  std::vector<Elem> y{1, 2, 3, 4};
  EXPECT_EQ(recover_demand(field, y, ex.expect_star_scalar), (std::vector<Elem>{3, 1, 4, 2}));
}

TEST(RunPlt, RejectsWrongMessageLength) {
  WorkedExample ex;
  Database db = Database::random(ex.field(), ex.k, 15, 1);
  EXPECT_THROW(run_plt(db, ex.demand, ex.n, 1, ex.options), DimensionMismatch);
}

TEST(RunPlt, RejectsBadDemands) {
  PrimeField field(5);
  Database db = Database::random(field, 4, 16, 1);
  EXPECT_THROW(run_plt(db, Demand{{1, 5}, {1, 1}}, 2, 1), InvalidDemand);
  EXPECT_THROW(run_plt(db, Demand{{1, 2}, {0, 1}}, 2, 1), InvalidDemand);
  Database tiny = Database::random(PrimeField(3), 4, 4, 1);
  EXPECT_THROW(run_plt(tiny, Demand{{1, 2, 3}, {1, 1, 1}}, 2, 1), FieldTooSmall);
}

TEST(RunPlt, DeterministicForSeed) {
  PrimeField field(7);
  Demand demand{{2, 4}, {3, 5}};
  Database db = Database::random(field, 4, 64, 9);
  PltRun a = run_plt(db, demand, 2, 1234);
  PltRun b = run_plt(db, demand, 2, 1234);
  EXPECT_TRUE(a.transcript.same_run(b.transcript));
  EXPECT_EQ(a.transcript.json_line(), b.transcript.json_line());
  UserSession s1(field, 4, 2, demand, 1234), s2(field, 4, 2, demand, 1234), s3(field, 4, 2, demand, 1235);
  EXPECT_EQ(s1.query_for(0), s2.query_for(0));
  EXPECT_FALSE(s1.query_for(0) == s3.query_for(0));
}

TEST(RunPlt, TranscriptJsonKeys) {
  WorkedExample ex;
  Database db = Database::random(ex.field(), ex.k, 16, 42);
  nlohmann::json j = run_plt(db, ex.demand, ex.n, 7, ex.options).transcript.to_json();
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"params", "per_server", "rate", "seed"}));
  EXPECT_EQ(j["params"], (nlohmann::json{{"N", 2}, {"K", 4}, {"D", 3}, {"q", 5}, {"S", 16}}));
  EXPECT_EQ(j["rate"], (nlohmann::json{{"num", 2}, {"den", 3}}));
  EXPECT_EQ(j["seed"], 7);
  ASSERT_EQ(j["per_server"].size(), 2u);
  EXPECT_EQ(j["per_server"][0]["answer_symbols"], 12);
  EXPECT_GT(j["per_server"][0]["query_bytes"].get<int>(), 0);
}

TEST(RunPlt, ConcurrentServersGiveTheSameRun) {
  PrimeField field(11);
  Demand demand{{1, 3}, {4, 9}};
  Database db = Database::random(field, 5, 1024, 3);
  RunOptions concurrent;
  concurrent.concurrent_servers = true;
  PltRun a = run_plt(db, demand, 2, 99);
  PltRun b = run_plt(db, demand, 2, 99, concurrent);
  EXPECT_TRUE(a.transcript.same_run(b.transcript));
  EXPECT_EQ(b.recovered, evaluate_demand(db, demand));
}

TEST(RunPlt, GridRecoversAtCapacity) {
  for (std::uint32_t n = 1; n <= 3; ++n) {
    for (std::uint32_t k = 1; k <= 5; ++k) {
      for (std::uint32_t d = 1; d <= k; ++d) {
        const auto f = static_cast<std::uint32_t>(binomial(k, d));
        auto s = block_length(n, f);
        if (!s || *s > 20000) continue;
        for (std::uint64_t trial = 0; trial < 3; ++trial) {
          const std::uint64_t seed = derive_seed(n * 1000 + k * 10 + d, trial);
          PrimeField field(trial == 0 ? 7 : 13);
          if (field.modulus() < k) continue;
          Rng rng(seed);
          Demand demand = random_demand(field, k, d, rng);
          Database db = Database::random(field, k, *s, seed);
          PltRun run = run_plt(db, demand, n, seed);
          EXPECT_EQ(run.recovered, evaluate_demand(db, demand)) << n << k << d;
          EXPECT_EQ(run.transcript.rate, plt_capacity_L1(n, k, d).value) << n << k << d;
        }
      }
    }
  }
}

TEST(ServerAnswer, WorkedExample) {
  WorkedExample ex;
  Database db = Database::random(ex.field(), ex.k, 16, 5);
  UserSession session(ex.field(), ex.k, ex.n, ex.demand, 1, ex.options);
  QueryBundle bundle = session.query_for(0);
  auto answer = server_answer(db, bundle);
  EXPECT_EQ(answer.size(), 12u);
  EXPECT_EQ(answer, oracle::answer_from_raw(db, bundle));
  EXPECT_EQ(server_answer(db, bundle), answer);  // pure

  bundle.expressions.clear();
  EXPECT_TRUE(server_answer(db, bundle).empty());
}

TEST(ServerAnswer, DimensionMismatch) {
  WorkedExample ex;
  Database db = Database::random(ex.field(), ex.k, 16, 5);
  UserSession session(ex.field(), ex.k, ex.n, ex.demand, 1, ex.options);
  QueryBundle good = session.query_for(1);

  QueryBundle b = good;
  b.q = 7;
  EXPECT_THROW(server_answer(db, b), DimensionMismatch);
  b = good;
  b.k = 5;
  EXPECT_THROW(server_answer(db, b), DimensionMismatch);
  b = good;
  b.s = 8;
  EXPECT_THROW(server_answer(db, b), DimensionMismatch);
  b = good;
  b.betas.pop_back();
  EXPECT_THROW(server_answer(db, b), DimensionMismatch);
  b = good;
  b.q_vectors[0].pop_back();
  EXPECT_THROW(server_answer(db, b), DimensionMismatch);
  b = good;
  b.expressions[0].terms[0].s = 16;
  EXPECT_THROW(server_answer(db, b), BadIndex);
}

TEST(Finish, RejectsOutOfFieldAnswers) {
  WorkedExample ex;
  UserSession session(ex.field(), ex.k, ex.n, ex.demand, 1, ex.options);
  std::vector<std::vector<Elem>> answers(2, std::vector<Elem>(12, 0));
  answers[1][3] = 5;
  EXPECT_THROW(session.finish(answers), Undecodable);
  answers[1][3] = 0;
  EXPECT_EQ(session.finish(answers), std::vector<Elem>(16, 0));
}

TEST(MdsCheck, Examples) {
  PrimeField f(5);
  EXPECT_TRUE(mds_check(f, {{2, 1, 1}}));
  EXPECT_FALSE(mds_check(f, {{2, 0, 1}}));
  EXPECT_TRUE(mds_check(f, {{1, 1, 1}, {1, 2, 3}}));
  EXPECT_FALSE(mds_check(f, {{1, 1, 1}, {2, 2, 3}}));
  EXPECT_THROW(mds_check(f, {{1}, {1}}), std::invalid_argument);
}

TEST(PirPsi, RecoversWantedMessage) {
  PrimeField field(7);
  Database db = Database::random(field, 4, 16, 11);
  auto instance = SideInfoInstance::from_database(db, {2}, {1, 4});
  PirPsiResult res = run_pir_psi_via_plt(db, instance, 2, 3);
  EXPECT_EQ(res.message, db.symbols[1]);
  EXPECT_EQ(res.transcript.rate, pir_psi_capacity(2, 4, 2).value);
  EXPECT_EQ(res.transcript.rate, Rational(2, 3));
}

TEST(PirPsi, NoSideInformation) {
  PrimeField field(5);
  Database db = Database::random(field, 3, 8, 2);
  auto instance = SideInfoInstance::from_database(db, {3}, {});
  PirPsiResult res = run_pir_psi_via_plt(db, instance, 2, 8);
  EXPECT_EQ(res.message, db.symbols[2]);
  EXPECT_EQ(res.transcript.rate, pir_psi_capacity(2, 3, 0).value);
}

TEST(PirPsi, Validation) {
  PrimeField field(5);
  Database db = Database::random(field, 3, 8, 2);
  EXPECT_THROW(run_pir_psi_via_plt(db, SideInfoInstance::from_database(db, {1, 2}, {}), 2, 1), NoProtocol);
  EXPECT_THROW(run_pir_psi_via_plt(db, SideInfoInstance::from_database(db, {1}, {1}), 2, 1), std::invalid_argument);
  EXPECT_THROW(run_pir_psi_via_plt(db, SideInfoInstance{{1}, {2}, {}}, 2, 1), std::invalid_argument);
}

TEST(MpirPsiWrapper, SingleMessageMatchesDirectRun) {
  PrimeField field(7);
  Database db = Database::random(field, 4, 16, 21);
  auto instance = SideInfoInstance::from_database(db, {3}, {1, 2});
  SideInfoResult res = mpir_psi_wrapper(db, instance, 2, 5);
  ASSERT_EQ(res.messages.size(), 1u);
  EXPECT_EQ(res.messages[0], db.symbols[2]);
  EXPECT_EQ(res.rate, plt_capacity_L1(2, 4, 3).value);
  EXPECT_TRUE(mds_check(field, res.coefficients));
}

TEST(MpirPsiWrapper, NoShippedProtocolBeyondOneDimension) {
  PrimeField field(7);
  Database db = Database::random(field, 4, 16, 21);
  auto instance = SideInfoInstance::from_database(db, {1, 3}, {2});
  EXPECT_THROW(mpir_psi_wrapper(db, instance, 2, 5), NoProtocol);
  EXPECT_FALSE(shipped_protocol(2).has_value());
  EXPECT_TRUE(shipped_protocol(1).has_value());
}

TEST(MpirPsiWrapper, AcceptsAnyProtocolForHigherDimension) {
  PrimeField field(11);
  Database db = Database::random(field, 5, 10, 8);
  int calls = 0;
  PltProtocol direct = [&calls](const Database& d, const Subset& support, const Matrix& v, std::uint32_t,
                                std::uint64_t) {
    ++calls;
    Matrix rows;
    for (const Row& coeffs : v) rows.push_back(evaluate_demand(d, Demand{support, coeffs}));
    return PltResult{rows, Rational(1, 2)};
  };
  auto instance = SideInfoInstance::from_database(db, {2, 5}, {1, 4});
  SideInfoResult res = mpir_psi_wrapper(db, instance, 3, 17, &direct);
  EXPECT_EQ(calls, 1);
  ASSERT_EQ(res.messages.size(), 2u);
  EXPECT_EQ(res.messages[0], db.symbols[1]);
  EXPECT_EQ(res.messages[1], db.symbols[4]);
  EXPECT_EQ(res.rate, Rational(1, 2));
  EXPECT_EQ(res.coefficients.size(), 2u);
  EXPECT_EQ(res.coefficients[0].size(), 4u);
}

TEST(SolveSquare, Examples) {
  PrimeField f(7);
  Matrix a{{1, 2}, {3, 4}};
  Matrix x{{1, 0, 5}, {6, 2, 3}};
  Matrix b(2, Row(3));
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) b[i][j] = f.add(f.mul(a[i][0], x[0][j]), f.mul(a[i][1], x[1][j]));
  }
  EXPECT_EQ(solve_square(f, a, b), x);
  EXPECT_THROW(solve_square(f, {{1, 2}, {2, 4}}, b), std::domain_error);
}

TEST(Database, RandomIsReproducibleAndValid) {
  PrimeField f(13);
  Database a = Database::random(f, 3, 9, 4), b = Database::random(f, 3, 9, 4);
  EXPECT_EQ(a, b);
  EXPECT_NO_THROW(a.validate());
  for (const Row& row : a.symbols) {
    EXPECT_EQ(row.size(), 9u);
    for (Elem v : row) EXPECT_LT(v, 13u);
  }
}

}  // namespace
}  // namespace plt
