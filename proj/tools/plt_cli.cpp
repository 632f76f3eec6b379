#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "plt/net.hpp"
#include "plt/plt.hpp"

using namespace plt;

namespace {

// Bad flag combinations found after parsing; exit code 2 like CLI11's own errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An audit or self-check that ran to completion but did not pass.
struct CheckFailed : std::runtime_error {
  explicit CheckFailed(const std::string& what) : std::runtime_error("CheckFailed: " + what) {}
};

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
  std::vector<T> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      unsigned long long v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<T>(v));
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + ": cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string(flag) + ": empty list");
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out + "]";
}

QueryMutant parse_mutant(const std::string& name) {
  for (QueryMutant m : {QueryMutant::None, QueryMutant::ConstantAlpha, QueryMutant::FixedStarScalar,
                        QueryMutant::StarFirstDropOrder}) {
    if (name == to_string(m)) return m;
  }
  throw UsageError("unknown mutant '" + name + "'");
}

const char* verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

struct RunArgs {
  std::uint32_t servers = 2;
  std::uint32_t messages = 4;
  std::uint32_t support = 3;
  std::uint64_t q = 5;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> db_seed;
  std::string db_path;
  std::string demand;
  std::string coeffs;
  std::string transcript;
  std::string tcp;
  bool concurrent = false;
  bool json = false;
};

Demand demand_from(const RunArgs& a, const PrimeField& field) {
  if (a.demand.empty()) {
    if (!a.coeffs.empty()) throw UsageError("--coeffs needs --demand");
    Rng rng(derive_seed(a.seed, 0xde));
    return random_demand(field, a.messages, a.support, rng);
  }
  Demand d;
  d.support = parse_list<std::uint32_t>(a.demand, "--demand");
  if (d.support.size() != a.support) throw UsageError("--demand must list exactly --support indices");
  if (a.coeffs.empty()) {
    d.coeffs.assign(d.support.size(), 1);
  } else {
    d.coeffs = parse_list<Elem>(a.coeffs, "--coeffs");
  }
  return d;
}

int cmd_run(const RunArgs& a) {
  PrimeField field = field_new(a.q);
  Demand demand = demand_from(a, field);
  demand.validate(field, a.messages);
  const auto f = static_cast<std::uint32_t>(binomial(a.messages, a.support));
  const std::uint64_t s = check_size(a.servers, f, a.messages - a.support + 1);
  Database db = a.db_path.empty() ? Database::random(field, a.messages, s, a.db_seed.value_or(a.seed)) : load_db(a.db_path);

  RunOptions options;
  options.concurrent_servers = a.concurrent;
  PltRun run;
  if (a.tcp.empty()) {
    run = run_plt(db, demand, a.servers, a.seed, options);
  } else {
    std::vector<Endpoint> eps;
    std::stringstream in(a.tcp);
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        eps.push_back(Endpoint::parse(item));
      } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("--tcp: ") + e.what());
      }
    }
    if (eps.size() != a.servers) throw UsageError("--tcp must list one endpoint per server");
    run = client_run(eps, field, a.messages, s, demand, a.seed, options);
  }

  const Transcript& t = run.transcript;
  bool correct = run.recovered == evaluate_demand(db, demand);
  RateReport rate = measure_rate(t);
  if (!a.transcript.empty()) {
    std::ofstream out(a.transcript, std::ios::app);
    if (!out) throw std::runtime_error("cannot write " + a.transcript);
    out << t.json_line() << "\n";
  }
  if (a.json) {
    std::cout << t.json_line() << "\n";
  } else {
    std::cout << "N=" << t.n_servers << " K=" << t.k << " D=" << t.d << " q=" << t.q << " S=" << t.s
              << " seed=" << t.seed << "\n";
    std::cout << "demand W=" << join(demand.support) << " V=" << join(demand.coeffs) << "\n";
    for (std::size_t i = 0; i < t.per_server.size(); ++i)
      std::cout << "server " << i + 1 << ": query " << t.per_server[i].query_bytes << " bytes, answer "
                << t.per_server[i].answer_symbols << " symbols\n";
    std::cout << "downloaded " << t.total_downloaded << " symbols\n";
    std::cout << "rate " << rate.measured.str() << " (capacity " << rate.capacity.str() << ")\n";
    std::cout << "recovered " << (correct ? "matches" : "DOES NOT match") << " V*X_W\n";
  }
  if (!correct) throw CheckFailed("recovered symbols differ from the demand");
  return 0;
}

struct ServeArgs {
  std::string bind;
  std::string db_path;
  bool random = false;
  std::uint64_t seed = 1;
  std::uint64_t q = 5;
  std::uint32_t messages = 4;
  std::uint64_t length = 0;
  std::uint32_t servers = 0;
  std::uint32_t support = 0;
};

int cmd_serve(const ServeArgs& a) {
  Endpoint bind;
  try {
    bind = a.bind.empty() ? default_bind() : Endpoint::parse(a.bind);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::shared_ptr<const Database> db;
  if (!a.db_path.empty() && a.random) throw UsageError("--db and --random are exclusive");
  if (!a.db_path.empty()) {
    db = std::make_shared<const Database>(load_db(a.db_path));
  } else if (a.random) {
    PrimeField field = field_new(a.q);
    std::uint64_t length = a.length;
    if (length == 0) {
      if (a.servers == 0 || a.support == 0) throw UsageError("--random needs --length or --servers with --support");
      length = check_size(a.servers, static_cast<std::uint32_t>(binomial(a.messages, a.support)), 1);
    }
    db = std::make_shared<const Database>(Database::random(field, a.messages, length, a.seed));
  }

  // Block the stop signals before any thread starts so only sigwait sees them.
  sigset_t stop;
  sigemptyset(&stop);
  sigaddset(&stop, SIGINT);
  sigaddset(&stop, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop, nullptr);

  Server server(db, bind);
  server.start();
  std::cout << "listening on " << server.endpoint().str();
  if (db) std::cout << " (q=" << db->field.modulus() << " K=" << db->k << " S=" << db->s << ")";
  std::cout << std::endl;
  int sig = 0;
  sigwait(&stop, &sig);
  server.stop();
  return 0;
}

struct CapacityArgs {
  std::int64_t n = 2, k = 4, l = 1, d = 1;
  bool baselines = false;
  std::string format = "text";
};

int cmd_capacity(const CapacityArgs& a) {
  CapacityQuery query{a.n, a.k, a.l, a.d};
  CapacityReport main = plt_upper_bound(query);
  std::vector<std::pair<std::string, std::optional<CapacityReport>>> rows{{"plt", main}};
  if (a.baselines) {
    for (auto& row : baseline_rates(query).named()) rows.push_back(row);
  }
  if (a.format == "csv") {
    std::cout << "scheme,N,K,L,D,value,kind,formula\n";
    for (const auto& [name, rep] : rows) {
      std::cout << name << "," << a.n << "," << a.k << "," << a.l << "," << a.d << ",";
      if (rep) {
        std::cout << rep->value.str() << "," << to_string(rep->kind) << "," << rep->formula_tag << "\n";
      } else {
        std::cout << ",not-applicable,\n";
      }
    }
    return 0;
  }
  std::cout << main.value.str() << "\n";
  for (const auto& [name, rep] : rows) {
    std::cout << "  " << name << ": ";
    if (rep) {
      std::cout << rep->value.str() << " (" << to_string(rep->kind) << ", " << rep->formula_tag << ")\n";
    } else {
      std::cout << "not applicable\n";
    }
  }
  return 0;
}

struct AuditArgs {
  std::uint64_t q = 5;
  std::uint32_t k = 3, d = 2, n = 2, f = 4, r = 2;
  std::uint64_t seed = 1;
  std::uint64_t seeds = 20;
  std::uint64_t samples = 100000;
  double threshold = 0.05;
  std::string mutant = "none";
  std::string format = "text";
};

void emit(const AuditArgs& a, const nlohmann::json& j, const std::string& text) {
  if (a.format == "json") {
    std::cout << j.dump() << "\n";
  } else {
    std::cout << text;
  }
}

nlohmann::json findings_json(const std::vector<std::string>& findings) { return findings; }

int audit_structure(const AuditArgs& a) {
  PrimeField field = field_new(a.q);
  Rng rng(a.seed);
  Demand demand = random_demand(field, a.k, a.d, rng);
  QuerySetup setup = build_query_setup(field, a.k, demand, rng, {}, parse_mutant(a.mutant));
  StructureReport rep = check_support_structure(field, setup.spec, setup.table);
  nlohmann::json j{{"check", "structure"}, {"q", a.q}, {"K", a.k}, {"D", a.d}, {"bijection", rep.bijection},
                   {"beta_count", rep.beta_count}, {"exhaustive_run", rep.exhaustive_run},
                   {"exhaustive_agrees", rep.exhaustive_agrees}, {"betas_per_subset", rep.betas_per_subset},
                   {"findings", findings_json(rep.findings)}, {"pass", rep.pass()}};
  std::ostringstream text;
  text << "support bijection onto " << setup.table.size() << " subsets: " << verdict(rep.bijection) << "\n"
       << "coefficient vectors per subset " << join(rep.betas_per_subset) << " (want " << a.q - 1
       << "): " << verdict(rep.beta_count) << "\n"
       << "exhaustive cross-check: " << (rep.exhaustive_run ? verdict(rep.exhaustive_agrees) : "skipped") << "\n";
  for (const auto& f : rep.findings) text << "  " << f << "\n";
  text << verdict(rep.pass()) << "\n";
  emit(a, j, text.str());
  if (!rep.pass()) throw CheckFailed("structure audit");
  return 0;
}

int audit_shape(const AuditArgs& a) {
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < a.seeds; ++i) seeds.push_back(derive_seed(a.seed, i));
  ShapeReport rep = check_shape_independence(a.n, a.f, a.r, seeds, parse_mutant(a.mutant));
  nlohmann::json j{{"check", "shape"}, {"N", a.n}, {"F", a.f}, {"r", a.r}, {"plans", rep.plans_checked},
                   {"counts_identical", rep.counts_identical}, {"terms_identical", rep.terms_identical},
                   {"function_sets_identical", rep.function_sets_identical},
                   {"kept_per_server", rep.kept_per_server}, {"drops_per_round", rep.drops_per_round},
                   {"findings", findings_json(rep.findings)}, {"pass", rep.pass()}};
  std::ostringstream text;
  text << rep.plans_checked << " plans, kept per server " << join(rep.kept_per_server) << ", drops per round "
       << join(rep.drops_per_round) << "\n"
       << "counts identical across f*: " << verdict(rep.counts_identical) << "\n"
       << "terms identical across f*: " << verdict(rep.terms_identical) << "\n"
       << "function sets identical across f*: " << verdict(rep.function_sets_identical) << "\n";
  for (std::size_t i = 0; i < rep.findings.size() && i < 5; ++i) text << "  " << rep.findings[i] << "\n";
  text << verdict(rep.pass()) << "\n";
  emit(a, j, text.str());
  if (!rep.pass()) throw CheckFailed("shape audit");
  return 0;
}

int audit_tv(const AuditArgs& a) {
  TvParams p;
  p.q = a.q;
  p.k = a.k;
  p.d = a.d;
  p.n = a.n;
  p.samples = a.samples;
  p.root_seed = a.seed;
  p.threshold = a.threshold;
  p.mutant = parse_mutant(a.mutant);
  PrivacyReport rep = tv_privacy_test(p);
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& pr : rep.pairs) pairs.push_back({{"a", pr.a}, {"b", pr.b}, {"tv", pr.tv}, {"server", pr.worst_server}});
  const bool pass = rep.tv_pass() && rep.structural_pass;
  nlohmann::json j{{"check", "tv"}, {"samples", rep.samples}, {"threshold", rep.threshold},
                   {"tv_estimate", rep.tv_estimate}, {"same_demand_tv", rep.same_demand_tv},
                   {"signature_bins", rep.signature_bins}, {"structural_pass", rep.structural_pass},
                   {"mutant", a.mutant}, {"pairs", pairs}, {"pass", pass}};
  std::ostringstream text;
  text << "samples " << rep.samples << " per demand, " << rep.signature_bins << " signature bins\n";
  for (const auto& pr : rep.pairs)
    text << "  W=" << join(pr.a) << " vs W=" << join(pr.b) << ": tv " << pr.tv << " (server " << pr.worst_server + 1
         << ")\n";
  text << "tv estimate " << rep.tv_estimate << " (threshold " << rep.threshold << "), same-demand floor "
       << rep.same_demand_tv << "\n"
       << "structural checks: " << verdict(rep.structural_pass) << "\n"
       << verdict(pass) << "\n";
  emit(a, j, text.str());
  if (!pass) throw CheckFailed("tv audit");
  return 0;
}

int audit_rate(const AuditArgs& a) {
  PrimeField field = field_new(a.q);
  Rng rng(derive_seed(a.seed, 0xde));
  Demand demand = random_demand(field, a.k, a.d, rng);
  const auto f = static_cast<std::uint32_t>(binomial(a.k, a.d));
  Database db = Database::random(field, a.k, check_size(a.n, f, a.k - a.d + 1), a.seed);
  PltRun run = run_plt(db, demand, a.n, a.seed);
  RateReport rep = measure_rate(run.transcript);
  const bool correct = run.recovered == evaluate_demand(db, demand);
  nlohmann::json j{{"check", "rate"}, {"measured", rep.measured.str()}, {"capacity", rep.capacity.str()},
                   {"equal", rep.equal}, {"recovered", correct}, {"pass", rep.equal && correct}};
  std::ostringstream text;
  text << "measured " << rep.measured.str() << ", capacity " << rep.capacity.str() << "\n"
       << "recovered demand: " << verdict(correct) << "\n"
       << verdict(rep.equal && correct) << "\n";
  emit(a, j, text.str());
  if (!(rep.equal && correct)) throw CheckFailed("rate audit");
  return 0;
}

int cmd_example1() {
  WorkedExample ex;
  PrimeField field = ex.field();
  bool ok = true;
  auto check = [&](const std::string& label, auto got, auto want, const std::string& shown) {
    bool same = got == want;
    ok = ok && same;
    std::cout << label << " = " << shown << (same ? "" : "  MISMATCH") << "\n";
  };
  auto rows = [](const Matrix& m) {
    std::string s;
    for (const Row& r : m) s += join(r);
    return s;
  };

  UserSession session(field, ex.k, ex.n, ex.demand, 1, ex.options);
  const QuerySetup& setup = session.setup();
  check("p(x) coefficients", setup.secret.p_poly.coeffs(), ex.expect_p, join(setup.secret.p_poly.coeffs()));
  check("alpha", setup.secret.alphas, ex.expect_alpha, join(setup.secret.alphas));
  check("Q_1", setup.spec.q_vectors[0], ex.expect_q[0], join(setup.spec.q_vectors[0]));
  check("Q_2", setup.spec.q_vectors[1], ex.expect_q[1], join(setup.spec.q_vectors[1]));
  check("beta", setup.table.betas, ex.expect_beta, rows(setup.table.betas));
  Matrix y;
  for (const Row& b : setup.table.betas) y.push_back(function_coefficients(field, setup.spec, b));
  for (std::size_t f = 0; f < y.size(); ++f)
    check("Y_" + std::to_string(f + 1) + " coefficients", y[f], ex.expect_y[f], join(y[f]));
  check("demanded function", setup.table.star_index, ex.expect_star_index,
        "Y_" + std::to_string(setup.table.star_index + 1));
  check("star scalar", setup.table.star_scalar, ex.expect_star_scalar, std::to_string(setup.table.star_scalar));
  check("demand scale", field.inv(setup.table.star_scalar), ex.expect_demand_scale,
        std::to_string(field.inv(setup.table.star_scalar)));

  Database db = Database::random(field, ex.k, session.block_length(), 42);
  PltRun run = run_plt(db, ex.demand, ex.n, 1, ex.options);
  for (std::size_t i = 0; i < run.transcript.per_server.size(); ++i)
    check("server " + std::to_string(i + 1) + " symbols", run.transcript.per_server[i].answer_symbols,
          ex.expect_per_server, std::to_string(run.transcript.per_server[i].answer_symbols));
  for (std::uint32_t srv = 0; srv < ex.n; ++srv)
    check("server " + std::to_string(srv + 1) + " drops per round", session.plan().drop_counts[srv], ex.expect_drops,
          join(session.plan().drop_counts[srv]));
  check("rate", run.transcript.rate, plt_capacity_L1(2, 4, 3).value, run.transcript.rate.str());
  check("recovered 2X1+X2+X3", run.recovered, evaluate_demand(db, ex.demand), "16 symbols");
  std::cout << verdict(ok) << "\n";
  if (!ok) throw CheckFailed("worked example");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"plt: private linear transformation toolkit"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run the protocol once (in process or over TCP)");
  run_cmd->add_option("--servers", run.servers, "number of servers N")->check(CLI::Range(1u, 64u));
  run_cmd->add_option("--messages", run.messages, "number of messages K")->check(CLI::Range(1u, 64u));
  run_cmd->add_option("--support", run.support, "demand support size D")->check(CLI::Range(1u, 64u));
  run_cmd->add_option("--q", run.q, "prime field size");
  run_cmd->add_option("--seed", run.seed, "seed for every random choice");
  run_cmd->add_option("--db-seed", run.db_seed, "seed of the random database (default: --seed)");
  run_cmd->add_option("--db", run.db_path, "database file instead of a random one");
  run_cmd->add_option("--demand", run.demand, "demand indices, e.g. 1,2,3");
  run_cmd->add_option("--coeffs", run.coeffs, "demand coefficients, e.g. 2,1,1");
  run_cmd->add_option("--transcript", run.transcript, "append the transcript JSON line to this file");
  run_cmd->add_option("--tcp", run.tcp, "server endpoints host:port,... (one per server)");
  run_cmd->add_flag("--concurrent", run.concurrent, "answer in-process servers concurrently");
  run_cmd->add_flag("--json", run.json, "print only the transcript JSON line");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Serve a database over TCP");
  serve_cmd->add_option("--bind", serve.bind, "host:port (default PLT_BIND, then 127.0.0.1:7311)");
  serve_cmd->add_option("--db", serve.db_path, "database file");
  serve_cmd->add_flag("--random", serve.random, "generate a random database");
  serve_cmd->add_option("--seed", serve.seed, "random database seed");
  serve_cmd->add_option("--q", serve.q, "prime field size");
  serve_cmd->add_option("--messages", serve.messages, "number of messages K");
  serve_cmd->add_option("--length", serve.length, "symbols per message S");
  serve_cmd->add_option("--servers", serve.servers, "derive S = N^F from N ...");
  serve_cmd->add_option("--support", serve.support, "... and D");

  CapacityArgs cap;
  auto* cap_cmd = app.add_subcommand("capacity", "Capacity and baseline rates");
  cap_cmd->add_option("--n", cap.n, "servers")->required();
  cap_cmd->add_option("--k", cap.k, "messages")->required();
  cap_cmd->add_option("--l", cap.l, "dimension")->default_val(1);
  cap_cmd->add_option("--d", cap.d, "support size")->required();
  cap_cmd->add_flag("--baselines", cap.baselines, "also print baseline rates");
  cap_cmd->add_option("--format", cap.format, "text or csv")->check(CLI::IsMember({"text", "csv"}));

  AuditArgs audit;
  auto* audit_cmd = app.add_subcommand("audit", "Privacy and rate audits");
  audit_cmd->require_subcommand(1);
  auto add_common = [&audit](CLI::App* c) {
    c->add_option("--seed", audit.seed, "root seed");
    c->add_option("--mutant", audit.mutant, "none, constant-alpha, fixed-star-scalar, star-first-drop-order");
    c->add_option("--format", audit.format, "text or json")->check(CLI::IsMember({"text", "json"}));
  };
  auto* a_structure = audit_cmd->add_subcommand("structure", "Support bijection and coefficient-vector count");
  a_structure->add_option("--q", audit.q);
  a_structure->add_option("--k", audit.k);
  a_structure->add_option("--d", audit.d);
  add_common(a_structure);
  auto* a_shape = audit_cmd->add_subcommand("shape", "Plan shape independence of the demanded function");
  a_shape->add_option("--n", audit.n);
  a_shape->add_option("--f", audit.f);
  a_shape->add_option("--r", audit.r);
  a_shape->add_option("--seeds", audit.seeds, "number of mask seeds");
  add_common(a_shape);
  auto* a_tv = audit_cmd->add_subcommand("tv", "Total-variation test on query signatures");
  a_tv->add_option("--q", audit.q);
  a_tv->add_option("--k", audit.k);
  a_tv->add_option("--d", audit.d);
  a_tv->add_option("--n", audit.n);
  a_tv->add_option("--samples", audit.samples);
  a_tv->add_option("--threshold", audit.threshold);
  add_common(a_tv);
  auto* a_rate = audit_cmd->add_subcommand("rate", "Measured rate against capacity");
  a_rate->add_option("--q", audit.q);
  a_rate->add_option("--k", audit.k);
  a_rate->add_option("--d", audit.d);
  a_rate->add_option("--n", audit.n);
  add_common(a_rate);

  auto* ex_cmd = app.add_subcommand("example1", "Reproduce the worked example and compare");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*serve_cmd) return cmd_serve(serve);
    if (*cap_cmd) return cmd_capacity(cap);
    if (*ex_cmd) return cmd_example1();
    if (*a_structure) return audit_structure(audit);
    if (*a_shape) return audit_shape(audit);
    if (*a_tv) return audit_tv(audit);
    if (*a_rate) return audit_rate(audit);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    // Library errors carry their type name as a prefix.
    std::string what = e.what();
    if (what.find(':') == std::string::npos || !std::isupper(static_cast<unsigned char>(what[0])))
      what = "InternalError: " + what;
    std::cerr << "error: " << what << "\n";
    return 1;
  }
  return 2;
}
