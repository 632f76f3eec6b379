#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

namespace {

struct Result {
  int code = -1;
  std::string out;
};

// stdout and stderr together
Result plt(const std::string& args) {
  std::string cmd = std::string(PLT_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) r.out += buf.data();
  int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

TEST(Cli, Example1) {
  Result r = plt("example1");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(contains(r.out, "Q_1 = [1,2,4,2]"));
  EXPECT_TRUE(contains(r.out, "Q_2 = [0,2,3,1]"));
  EXPECT_TRUE(contains(r.out, "Y_3 coefficients = [1,0,1,1]"));
  EXPECT_TRUE(contains(r.out, "server 1 symbols = 12"));
  EXPECT_TRUE(contains(r.out, "rate = 2/3"));
  EXPECT_FALSE(contains(r.out, "MISMATCH"));
  EXPECT_TRUE(contains(r.out, "\nPASS\n"));
}

TEST(Cli, Capacity) {
  Result r = plt("capacity --n 2 --k 4 --l 1 --d 3");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "2/3");

  Result csv = plt("capacity --n 2 --k 4 --d 1 --baselines --format csv");
  EXPECT_EQ(csv.code, 0);
  EXPECT_TRUE(contains(csv.out, "scheme,N,K,L,D,value,kind,formula\n"));
  EXPECT_TRUE(contains(csv.out, "plt,2,4,1,1,8/15,exact-capacity,"));
  EXPECT_TRUE(contains(csv.out, "mpir-then-combine,2,4,1,1,1,upper-bound,"));

  Result bad = plt("capacity --n 2 --k 4 --l 3 --d 2");
  EXPECT_EQ(bad.code, 1);
  EXPECT_TRUE(contains(bad.out, "InvalidParameters"));
}

TEST(Cli, RunFullSupportHasRateOne) {
  Result r = plt("run --servers 2 --messages 4 --support 4 --q 5 --seed 7");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(contains(r.out, "rate 1 (capacity 1)"));
  EXPECT_TRUE(contains(r.out, "recovered matches"));
}

TEST(Cli, RunWithDemandWritesTranscript) {
  auto path = std::filesystem::temp_directory_path() / "plt_cli_transcript.jsonl";
  std::filesystem::remove(path);
  Result r = plt("run --servers 2 --messages 4 --support 3 --q 5 --seed 3 --demand 1,2,3 --coeffs 2,1,1 --transcript " +
                 path.string());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(contains(r.out, "answer 12 symbols"));
  EXPECT_TRUE(contains(r.out, "rate 2/3"));
  std::ifstream in(path);
  std::string line;
  ASSERT_TRUE(std::getline(in, line));
  auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j["rate"]["num"], 2);
  EXPECT_EQ(j["rate"]["den"], 3);
  EXPECT_EQ(j["seed"], 3);
  std::filesystem::remove(path);

  Result json = plt("run --servers 2 --messages 4 --support 3 --q 5 --seed 3 --demand 1,2,3 --coeffs 2,1,1 --json");
  EXPECT_EQ(json.code, 0);
  EXPECT_EQ(json.out, line + "\n");
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(plt("").code, 2);
  EXPECT_EQ(plt("run --bogus").code, 2);
  EXPECT_EQ(plt("capacity --n 2").code, 2);
  EXPECT_EQ(plt("run --coeffs 1,2").code, 2);
  EXPECT_EQ(plt("run --support 2 --demand 1,x").code, 2);
  EXPECT_EQ(plt("audit tv --mutant nonsense --samples 1").code, 2);
  EXPECT_EQ(plt("capacity --n 2 --k 4 --d 3 --format xml").code, 2);
  EXPECT_EQ(plt("--help").code, 0);
}

TEST(Cli, ProtocolErrorsExitOneWithName) {
  Result np = plt("run --q 4");
  EXPECT_EQ(np.code, 1);
  EXPECT_TRUE(contains(np.out, "NotPrime"));
  Result small = plt("run --q 3 --messages 4 --support 2");
  EXPECT_EQ(small.code, 1);
  EXPECT_TRUE(contains(small.out, "FieldTooSmall"));
  Result demand = plt("run --messages 4 --support 2 --demand 1,9");
  EXPECT_EQ(demand.code, 1);
  EXPECT_TRUE(contains(demand.out, "InvalidDemand"));
  Result guard = plt("run --servers 3 --messages 8 --support 4");
  EXPECT_EQ(guard.code, 1);
  EXPECT_TRUE(contains(guard.out, "SizeGuard"));
  Result conn = plt("run --servers 2 --tcp 127.0.0.1:1,127.0.0.1:1");
  EXPECT_EQ(conn.code, 1);
  EXPECT_TRUE(contains(conn.out, "ConnectionFailed: 127.0.0.1:1"));
}

TEST(Cli, Audits) {
  Result s = plt("audit structure --q 7 --k 5 --d 3 --format json");
  EXPECT_EQ(s.code, 0) << s.out;
  auto j = nlohmann::json::parse(s.out);
  EXPECT_EQ(j["pass"], true);
  EXPECT_EQ(j["betas_per_subset"].size(), 10u);

  Result shape = plt("audit shape --n 2 --f 4 --r 2 --seeds 5");
  EXPECT_EQ(shape.code, 0) << shape.out;
  EXPECT_TRUE(contains(shape.out, "kept per server [12,12], drops per round [2,1,0,0]"));

  Result caught = plt("audit shape --n 2 --f 4 --r 2 --seeds 5 --mutant star-first-drop-order");
  EXPECT_EQ(caught.code, 1);
  EXPECT_TRUE(contains(caught.out, "CheckFailed"));

  Result rate = plt("audit rate --n 2 --k 4 --d 2 --q 7 --format json");
  EXPECT_EQ(rate.code, 0);
  auto rj = nlohmann::json::parse(rate.out);
  EXPECT_EQ(rj["measured"], "4/7");
  EXPECT_EQ(rj["equal"], true);

  Result tv = plt("audit tv --samples 2000 --mutant constant-alpha --format json");
  EXPECT_EQ(tv.code, 1);
  auto tj = nlohmann::json::parse(tv.out.substr(0, tv.out.find('\n')));
  EXPECT_GT(tj["tv_estimate"].get<double>(), 0.3);
}

}  // namespace
