#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "wmdrive/config.hpp"
#include "wmdrive/errors.hpp"

namespace wmdrive {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& s, char c) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == c) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

// Tag balance and attribute quoting; enough to reject truncated or interleaved output.
bool well_formed_xml(const std::string& s) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  while ((i = s.find('<', i)) != std::string::npos) {
    const auto j = s.find('>', i);
    if (j == std::string::npos) return false;
    std::string tag = s.substr(i + 1, j - i - 1);
    i = j + 1;
    if (tag.empty() || tag[0] == '?' || tag[0] == '!') continue;
    if (std::count(tag.begin(), tag.end(), '"') % 2 != 0) return false;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
    } else if (tag.back() != '/') {
      stack.push_back(tag.substr(0, tag.find_first_of(" \n\t")));
    }
  }
  return stack.empty();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("wmdrive_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return cli::run(args, out_, err_);
  }

  std::string p(const std::string& name) const { return (dir_ / name).string(); }

  std::vector<std::string> tiny() const {
    return {"--set", "model.feature_dim=16", "--set", "model.width=16",       "--set", "model.layers=1",
            "--set", "model.heads=2",        "--set", "model.planner_hidden=16", "--set", "model.head_hidden=16",
            "--set", "model.time_dim=8",     "--set", "model.embed_dim=4",    "--set", "train.batch_size=2",
            "--set", "train.stage2_batch=2"};
  }

  int run_tiny(std::vector<std::string> args) {
    auto a = tiny();
    a.insert(a.end(), args.begin(), args.end());
    return run(a);
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(CliTest, GenerateIsDeterministic) {
  ASSERT_EQ(run({"gen-scenarios", "--seed", "0", "--count", "10", "--out", p("a.jsonl")}), cli::kExitOk) << err_.str();
  ASSERT_EQ(run({"gen-scenarios", "--seed", "0", "--count", "10", "--out", p("b.jsonl")}), cli::kExitOk);
  EXPECT_EQ(lines(slurp(p("a.jsonl"))).size(), 10u);
  EXPECT_EQ(slurp(p("a.jsonl")), slurp(p("b.jsonl")));
  EXPECT_TRUE(fs::exists(p("a.jsonl.config.txt")));
  ASSERT_EQ(run({"gen-scenarios", "--seed", "0", "--count", "0", "--out", p("empty.jsonl")}), cli::kExitOk);
  EXPECT_EQ(slurp(p("empty.jsonl")), "");
}

TEST_F(CliTest, UsageAndIoErrors) {
  ASSERT_EQ(run({"gen-scenarios", "--count", "2", "--out", p("s.jsonl")}), cli::kExitOk);
  EXPECT_EQ(run({"train", "--stage", "2", "--scenarios", p("s.jsonl"), "--out", p("t")}), cli::kExitUsage);
  EXPECT_EQ(run({"bogus"}), cli::kExitUsage);
  EXPECT_EQ(run({"--set", "model.nope=1", "gen-scenarios", "--count", "1", "--out", p("x.jsonl")}), cli::kExitUsage);
  EXPECT_EQ(run({"eval", "--scenarios", p("s.jsonl"), "--out", p("e"), "--ckpt", p("missing.bin")}), cli::kExitIo);
  EXPECT_EQ(run({"eval", "--scenarios", p("nope.jsonl"), "--out", p("e"), "--baseline", "cv"}), cli::kExitIo);
}

TEST_F(CliTest, HelpListsEveryConfigKey) {
  run({"--help"});
  const std::string text = out_.str() + err_.str();
  for (const auto& k : config_keys()) EXPECT_NE(text.find(k.key), std::string::npos) << k.key;
}

TEST_F(CliTest, BaselineEvalWritesReports) {
  ASSERT_EQ(run({"gen-scenarios", "--seed", "100", "--count", "3", "--out", p("s.jsonl")}), cli::kExitOk);
  ASSERT_EQ(run({"eval", "--scenarios", p("s.jsonl"), "--out", p("e"), "--baseline", "zero-motion"}), cli::kExitOk)
      << err_.str();
  EXPECT_EQ(lines(slurp(dir_ / "e" / "scores.csv")).size(), 4u);
  EXPECT_NE(slurp(dir_ / "e" / "summary.json").find("\"aggregate\""), std::string::npos);
}

TEST_F(CliTest, TrainEvalAndRenderEndToEnd) {
  ASSERT_EQ(run({"gen-scenarios", "--seed", "0", "--count", "3", "--out", p("s.jsonl")}), cli::kExitOk);
  ASSERT_EQ(run_tiny({"train", "--stage", "1", "--scenarios", p("s.jsonl"), "--out", p("s1"), "--steps", "3",
                      "--quiet"}),
            cli::kExitOk)
      << err_.str();
  EXPECT_EQ(lines(slurp(dir_ / "s1" / "train_stage1.csv")).size(), 4u);
  ASSERT_EQ(run({"train", "--stage", "2", "--scenarios", p("s.jsonl"), "--out", p("s2"), "--init",
                 p("s1/checkpoint.bin"), "--steps", "2", "--quiet"}),
            cli::kExitOk)
      << err_.str();
  EXPECT_EQ(lines(slurp(dir_ / "s2" / "train_stage2.csv")).front(), "iter,mean_reward,reward_std,rl_loss,il_loss");
  // Stage 2 cannot start from a stage-2 checkpoint.
  EXPECT_EQ(run({"train", "--stage", "2", "--scenarios", p("s.jsonl"), "--out", p("s3"), "--init",
                 p("s2/checkpoint.bin"), "--steps", "1", "--quiet"}),
            cli::kExitUsage);
  ASSERT_EQ(run({"eval", "--scenarios", p("s.jsonl"), "--out", p("e"), "--ckpt", p("s2/checkpoint.bin")}),
            cli::kExitOk)
      << err_.str();

  ASSERT_EQ(run({"rollout", "--scenarios", p("s.jsonl"), "--index", "1", "--out", p("r"), "--ckpt",
                 p("s2/checkpoint.bin"), "--render", "--dump-forecasts"}),
            cli::kExitOk)
      << err_.str();
  const auto trace = lines(slurp(dir_ / "r" / "trace.csv"));
  ASSERT_EQ(trace.size(), 9u);
  int frames = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "r"))
    if (e.path().extension() == ".svg") ++frames;
  EXPECT_EQ(frames, 8);
  EXPECT_TRUE(fs::exists(dir_ / "r" / "forecasts.csv"));

  const std::string svg = slurp(dir_ / "r" / "frame_08.svg");
  EXPECT_TRUE(well_formed_xml(svg));
  auto points_of = [&](const std::string& id) {
    const std::regex re("id=\"" + id + "\" points=\"([^\"]*)\"");
    std::smatch m;
    EXPECT_TRUE(std::regex_search(svg, m, re)) << id;
    return split(m[1].str(), ' ');
  };
  const auto realized = points_of("realized");
  const auto planned = points_of("planned");
  ASSERT_EQ(realized.size(), 9u);  // origin plus one point per frame
  ASSERT_EQ(planned.size(), 8u);
  for (std::size_t k = 0; k < 8; ++k) {
    const auto f = split(trace[k + 1], ',');
    EXPECT_EQ(realized[k + 1], f[1] + "," + f[2]) << k;
    EXPECT_EQ(planned[k], f[5] + "," + f[6]) << k;
  }
  for (int k = 1; k <= 8; ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%02d.svg", k);
    EXPECT_TRUE(well_formed_xml(slurp(dir_ / "r" / name))) << name;
  }
}

}  // namespace
}  // namespace wmdrive
