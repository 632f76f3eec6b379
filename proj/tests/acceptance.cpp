// Acceptance suite: one PASS/FAIL line per criterion, exit status = number of failures.
#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "plt/net.hpp"
#include "plt/plt.hpp"

using namespace plt;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Checker {
 public:
  void expect(bool cond, const std::string& what) {
    if (!cond) {
      if (out_.pass) out_.detail = what;
      out_.pass = false;
    }
  }
  void note(const std::string& s) {
    if (out_.pass) out_.detail = s;
  }
  Outcome result() const { return out_; }

 private:
  Outcome out_;
};

int failures = 0;

void criterion(int id, const std::string& title, double budget_s, const std::function<Outcome()>& body) {
  auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = Outcome{false, std::string("exception: ") + e.what()};
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (secs > budget_s) {
    o.pass = false;
    o.detail += " (over the " + std::to_string(static_cast<int>(budget_s)) + " s budget)";
  }
  if (!o.pass) ++failures;
  std::ostringstream line;
  line.setf(std::ios::fixed);
  line.precision(2);
  line << "AC" << id << " " << (o.pass ? "PASS" : "FAIL") << " " << title << " [" << secs << " s]";
  if (!o.detail.empty()) line << " - " << o.detail;
  std::cout << line.str() << std::endl;
}

Outcome worked_example_values() {
  Checker c;
  WorkedExample ex;
  PrimeField field = ex.field();
  UserSession session(field, ex.k, ex.n, ex.demand, 1, ex.options);
  const QuerySetup& s = session.setup();
  c.expect(s.secret.p_poly.coeffs() == ex.expect_p, "p(x) differs");
  c.expect(s.secret.alphas == ex.expect_alpha, "alpha differs");
  c.expect(s.spec.q_vectors == ex.expect_q, "Q vectors differ");
  for (std::size_t f = 0; f < 4; ++f)
    c.expect(function_coefficients(field, s.spec, s.table.betas[f]) == ex.expect_y[f], "Y row differs");
  c.expect(s.table.star_index == ex.expect_star_index, "demanded function differs");
  c.expect(s.table.star_scalar == ex.expect_star_scalar, "star scalar differs");
  Row scaled = function_coefficients(field, s.spec, s.table.betas[0]);
  for (auto& v : scaled) v = field.mul(v, ex.expect_demand_scale);
  c.expect(scaled == Row{2, 1, 1, 0}, "demand is not 3*Y_1");
  c.note("p=x-3, alpha=(1,2,4,2), Q and Y rows exact, delta=2");
  return c.result();
}

Outcome download_accounting() {
  Checker c;
  WorkedExample ex;
  Database db = Database::random(ex.field(), ex.k, 16, 42);
  PltRun run = run_plt(db, ex.demand, ex.n, 1, ex.options);
  for (const auto& s : run.transcript.per_server) c.expect(s.answer_symbols == 12, "server did not return 12 symbols");
  c.expect(run.transcript.total_downloaded == 24, "total is not 24");
  c.expect(run.transcript.rate == Rational(16, 24), "rate is not 16/24");
  c.expect(run.transcript.rate == phi(Rational(1, 2), 2), "rate differs from the capacity formula");
  c.expect(run.recovered == evaluate_demand(db, ex.demand), "demand not recovered");
  c.note("12 + 12 symbols, rate 2/3");
  return c.result();
}

Outcome rate_grid() {
  Checker c;
  std::uint64_t trials = 0, points = 0;
  for (std::uint32_t n : {2u, 3u}) {
    for (std::uint32_t k = 1; k <= 5; ++k) {
      for (std::uint32_t d = 1; d <= k; ++d) {
        if (binomial(k, d) > 10) continue;
        for (std::uint64_t q : {5u, 7u, 11u, 13u}) {
          ++points;
          PrimeField field(q);
          const std::uint64_t s = *block_length(n, static_cast<std::uint32_t>(binomial(k, d)));
          for (std::uint64_t t = 0; t < 9; ++t, ++trials) {
            const std::uint64_t seed = derive_seed(0xac3, trials);
            Rng rng(seed);
            Demand demand = random_demand(field, k, d, rng);
            Database db = Database::random(field, k, s, derive_seed(seed, 1));
            PltRun run = run_plt(db, demand, n, seed);
            c.expect(run.transcript.rate == plt_capacity_L1(n, k, d).value, "rate below capacity");
            c.expect(run.recovered == evaluate_demand(db, demand), "demand not recovered");
          }
        }
      }
    }
  }
  c.expect(trials >= 1000, "fewer than 1000 trials");
  c.note(std::to_string(trials) + " trials over " + std::to_string(points) + " grid points, 0 failures");
  return c.result();
}

Outcome capacity_cross_checks() {
  Checker c;
  std::uint64_t checked = 0;
  for (std::int64_t n = 1; n <= 4; ++n) {
    for (std::int64_t k = 1; k <= 8; ++k) {
      for (std::int64_t d = 1; d <= k; ++d) {
        c.expect(plt_upper_bound({n, k, 1, d}).value == plt_capacity_L1(n, k, d).value, "L=1 bound differs");
        for (std::int64_t l = 1; l <= d; ++l, ++checked) {
          c.expect(plt_upper_bound({n, k, l, d}).value == mpir_psi_capacity(n, k, l, d - l).value,
                   "bound differs from the side-information capacity");
          if (k - d == l) c.expect(plt_upper_bound({n, k, l, d}).formula_tag == "plt-bound-boundary", "boundary");
        }
      }
    }
  }
  c.expect(plt_upper_bound({2, 4, 2, 3}).value == Rational(4, 5), "4/5 spot value");
  c.expect(plt_upper_bound({2, 5, 2, 2}).value == Rational(8, 13), "8/13 spot value");
  c.expect(plt_capacity_L1(2, 4, 1).value == Rational(8, 15), "8/15 spot value");
  c.note(std::to_string(checked) + " (N,K,L,D) points; spot values 4/5, 8/13, 8/15");
  return c.result();
}

Outcome structural_privacy() {
  Checker c;
  std::uint64_t instances = 0, exhaustive = 0, shapes = 0;
  for (std::uint64_t q : {5u, 7u, 11u}) {
    PrimeField field(q);
    for (std::uint32_t k = 1; k <= 5; ++k) {
      for (std::uint32_t d = 1; d <= k; ++d) {
        for (std::uint64_t seed = 0; seed < 3; ++seed, ++instances) {
          Rng rng(derive_seed(q * 100 + k * 10 + d, seed));
          Demand demand = random_demand(field, k, d, rng);
          QuerySetup setup = build_query_setup(field, k, demand, rng);
          StructureReport rep = check_support_structure(field, setup.spec, setup.table);
          c.expect(rep.pass(), "structure check failed");
          exhaustive += rep.exhaustive_run;
          const auto f = static_cast<std::uint32_t>(setup.table.size());
          if (f <= 6 && seed == 0) {
            for (std::uint32_t n : {2u, 3u}) {
              ShapeReport shape = check_shape_independence(n, f, k - d + 1, {seed + 1, seed + 2}, QueryMutant::None,
                                                           setup.table.betas, q);
              c.expect(shape.pass(), "shape differs across f* with query-construction rows");
            }
          }
        }
      }
    }
  }
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < 20; ++i) seeds.push_back(derive_seed(0xac5, i));
  for (std::uint32_t n : {2u, 3u}) {
    for (std::uint32_t f = 1; f <= 6; ++f) {
      for (std::uint32_t r = 1; r <= f; ++r) {
        ShapeReport rep = check_shape_independence(n, f, r, seeds);
        shapes += rep.plans_checked;
        c.expect(rep.pass(), "shape differs across f* at N=" + std::to_string(n) + " F=" + std::to_string(f) +
                                 " r=" + std::to_string(r));
      }
    }
  }
  c.note(std::to_string(instances) + " instances (" + std::to_string(exhaustive) + " exhaustive), " +
         std::to_string(shapes) + " plans compared");
  return c.result();
}

Outcome statistical_privacy() {
  Checker c;
  TvParams p;  // K=3, D=2, N=2, q=5, 1e5 samples, threshold 0.05
  PrivacyReport honest = tv_privacy_test(p);
  c.expect(honest.tv_estimate < p.threshold, "honest scheme over threshold");
  c.expect(honest.same_demand_tv < 0.02, "same-demand noise floor over 0.02");
  c.expect(honest.structural_pass, "structural side failed");
  std::ostringstream detail;
  detail.precision(4);
  detail << "honest " << honest.tv_estimate << " (floor " << honest.same_demand_tv << ")";
  for (QueryMutant m : {QueryMutant::ConstantAlpha, QueryMutant::FixedStarScalar, QueryMutant::StarFirstDropOrder}) {
    TvParams mp = p;
    mp.mutant = m;
    PrivacyReport rep = tv_privacy_test(mp);
    c.expect(rep.tv_estimate > p.threshold, std::string("mutant not detected: ") + to_string(m));
    detail << ", " << to_string(m) << " " << rep.tv_estimate;
  }
  c.note(detail.str());
  return c.result();
}

Outcome reduction_wrapper() {
  Checker c;
  Rng rng(0xac7);
  int done = 0;
  while (done < 100) {
    const auto n = static_cast<std::uint32_t>(2 + rng.below(2));
    const auto k = static_cast<std::uint32_t>(1 + rng.below(5));
    const auto d = static_cast<std::uint32_t>(1 + rng.below(k));
    if (binomial(k, d) > 10) continue;
    static const std::uint64_t primes[] = {5, 7, 11, 13};
    PrimeField field(primes[rng.below(4)]);
    const std::uint64_t s = *block_length(n, static_cast<std::uint32_t>(binomial(k, d)));
    Database db = Database::random(field, k, s, rng.next_u64());
    std::vector<std::uint32_t> order(k);
    for (std::uint32_t j = 0; j < k; ++j) order[j] = j + 1;
    for (std::uint32_t j = k - 1; j > 0; --j) std::swap(order[j], order[rng.below(j + 1)]);
    std::vector<std::uint32_t> side(order.begin() + 1, order.begin() + d);
    auto instance = SideInfoInstance::from_database(db, {order[0]}, side);
    PirPsiResult res = run_pir_psi_via_plt(db, instance, n, rng.next_u64());
    c.expect(res.message == db.symbols[order[0] - 1], "wanted message not recovered");
    c.expect(res.transcript.rate == phi(Rational(1, n), k - (d - 1)), "rate differs from the formula");
    c.expect(res.transcript.rate == pir_psi_capacity(n, k, d - 1).value, "rate differs from the capacity");
    ++done;
  }
  c.note("100 instances recovered at the side-information capacity");
  return c.result();
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing " + path);
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

Outcome transport_equivalence() {
  Checker c;
  Rng rng(0xac8);
  int points = 0;
  while (points < 10) {
    const auto n = static_cast<std::uint32_t>(2 + rng.below(2));
    const auto k = static_cast<std::uint32_t>(1 + rng.below(5));
    const auto d = static_cast<std::uint32_t>(1 + rng.below(k));
    if (binomial(k, d) > 6) continue;
    PrimeField field(rng.coin() ? 7 : 11);
    const std::uint64_t s = *block_length(n, static_cast<std::uint32_t>(binomial(k, d)));
    auto db = std::make_shared<const Database>(Database::random(field, k, s, rng.next_u64()));
    Demand demand = random_demand(field, k, d, rng);
    const std::uint64_t seed = rng.next_u64();
    std::vector<std::unique_ptr<Server>> servers;
    std::vector<Endpoint> eps;
    for (std::uint32_t i = 0; i < n; ++i) {
      servers.push_back(std::make_unique<Server>(db, Endpoint{"127.0.0.1", 0}));
      servers.back()->start();
      eps.push_back(servers.back()->endpoint());
    }
    PltRun tcp = client_run(eps, field, k, s, demand, seed);
    PltRun local = run_plt(*db, demand, n, seed);
    c.expect(tcp.transcript.same_run(local.transcript), "TCP transcript differs from in-process");
    c.expect(tcp.recovered == evaluate_demand(*db, demand), "TCP run did not recover the demand");
    ++points;
  }
  WorkedExample ex;
  UserSession session(ex.field(), ex.k, ex.n, ex.demand, 1, ex.options);
  for (std::uint32_t i = 0; i < 2; ++i) {
    Bytes fixture = read_file(std::string(PLT_FIXTURE_DIR) + "/example1_query_s" + std::to_string(i + 1) + ".bin");
    QueryBundle bundle = session.query_for(i);
    c.expect(decode_query(fixture) == bundle, "fixture does not decode to the bundle");
    c.expect(encode_query(bundle) == fixture, "encoding differs from the fixture bytes");
  }
  c.note("10 grid points over loopback TCP; golden query fixtures byte-identical");
  return c.result();
}

}  // namespace

int main() {
  criterion(1, "worked example reproduced exactly", 1, worked_example_values);
  criterion(2, "download accounting 12/12/24, rate 2/3", 1, download_accounting);
  criterion(3, "rate equals capacity on the grid, demand recovered", 120, rate_grid);
  criterion(4, "capacity formulas agree", 5, capacity_cross_checks);
  criterion(5, "structural privacy suite", 120, structural_privacy);
  criterion(6, "statistical privacy and mutant detection", 300, statistical_privacy);
  criterion(7, "single-message side-information reduction", 60, reduction_wrapper);
  criterion(8, "TCP and in-process runs identical", 60, transport_equivalence);
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures;
}
