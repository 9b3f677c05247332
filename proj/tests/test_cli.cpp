#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "support.hpp"

namespace {

struct Result {
  int code;
  std::string out;
};

// Runs the CLI with stdout and stderr captured together.
Result run(const std::string& args) {
  const std::string cmd = std::string(NCSC_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) out += buf;
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

const char* kTinyConfig =
    "network.num_clusters = 3\n"
    "network.intrinsic_dim_guess = 2\n"
    "network.encoder.0.kind = dense\n"
    "network.encoder.0.channels_or_units = 8\n"
    "network.encoder.0.activation = relu\n"
    "network.encoder.1.kind = dense\n"
    "network.encoder.1.channels_or_units = 6\n"
    "network.encoder.1.activation = none\n"
    "network.decoder.0.kind = dense\n"
    "network.decoder.0.channels_or_units = 12\n"
    "network.decoder.0.activation = none\n"
    "batch_size = 30\n"
    "epochs = 2\n"
    "pretrain_epochs = 3\n"
    "inner_se_steps = 2\n";

}  // namespace

TEST_CASE("synth is deterministic") {
  testing::TempDir dir("cli_synth");
  const std::string a = (dir / "a").string(), b = (dir / "b").string();
  CHECK(run("synth --k 3 --d 3 --D 30 --n-per 100 --seed 7 --out " + a).code == 0);
  CHECK(run("synth --k 3 --d 3 --D 30 --n-per 100 --seed 7 --out " + b).code == 0);
  CHECK(slurp(a + ".features.csv") == slurp(b + ".features.csv"));
  CHECK(slurp(a + ".labels.csv") == slurp(b + ".labels.csv"));
  CHECK(!slurp(a + ".features.csv").empty());
  const auto bad = run("synth --k 3 --d 20 --D 30 --out " + a);
  CHECK(bad.code == 1);
}

TEST_CASE("eval of perfect predictions") {
  testing::TempDir dir("cli_eval");
  std::ofstream(dir / "y.csv") << "0\n0\n1\n1\n2\n";
  const auto r = run("eval --truth " + (dir / "y.csv").string() + " --pred " + (dir / "y.csv").string());
  CHECK(r.code == 0);
  CHECK(r.out.find("5,0,1.000000,1.000000,1.000000") != std::string::npos);
  const auto missing = run("eval --truth " + (dir / "nope.csv").string() + " --pred " + (dir / "y.csv").string());
  CHECK(missing.code == 1);
  CHECK(missing.out.find("nope.csv") != std::string::npos);
}

TEST_CASE("gradcheck passes") {
  const auto r = run("gradcheck");
  CHECK(r.code == 0);
  CHECK(r.out.find("conv2d-strided,20,") != std::string::npos);
  CHECK(r.out.find("network,1,") != std::string::npos);
}

TEST_CASE("errors name the offending key or file") {
  testing::TempDir dir("cli_err");
  CHECK(run("synth --out " + (dir / "s").string()).code == 0);
  const std::string data = " --data " + (dir / "s.features.csv").string();
  auto r = run("pretrain" + data + " --set bogus_key=1");
  CHECK(r.code == 1);
  CHECK(r.out.find("bogus_key") != std::string::npos);
  std::ofstream(dir / "tiny.cfg") << kTinyConfig;
  r = run("pretrain --config " + (dir / "tiny.cfg").string() + " --data " + (dir / "absent.csv").string());
  CHECK(r.code == 1);
  CHECK(r.out.find("absent.csv") != std::string::npos);
  r = run("pretrain" + data + " --config " + (dir / "absent.cfg").string());
  CHECK(r.code == 1);
  CHECK(r.out.find("absent.cfg") != std::string::npos);
  r = run("pretrain" + data + " --lambda1 -2");
  CHECK(r.code == 1);
  CHECK(r.out.find("lambda1") != std::string::npos);
  // The config is checked before the data is read.
  r = run("pretrain --data " + (dir / "absent.csv").string());
  CHECK(r.code == 1);
  CHECK(r.out.find("network.encoder") != std::string::npos);
  CHECK(run("frobnicate").code == 1);
}

TEST_CASE("commands compose through files") {
  testing::TempDir dir("cli_pipe");
  const std::string d = dir.path.string() + "/";
  std::ofstream(dir / "tiny.cfg") << kTinyConfig;
  REQUIRE(run("synth --k 3 --d 2 --D 12 --n-per 20 --nonlinearity tanh-warp --out " + d + "s").code == 0);
  const std::string common = " --config " + d + "tiny.cfg --data " + d + "s.features.csv --labels " + d + "s.labels.csv";
  REQUIRE(run("pretrain" + common + " --out " + d + "pre.ckpt").code == 0);
  auto r = run("train" + common + " --init " + d + "pre.ckpt --out " + d + "m.ckpt --log " + d + "log.csv --metrics " +
               d + "metrics.csv");
  REQUIRE(r.code == 0);
  const std::string log = slurp(d + "log.csv");
  CHECK(log.rfind("epoch,batch,step,u,", 0) == 0);
  CHECK(std::count(log.begin(), log.end(), '\n') == 1 + 2 * 2);
  const std::string metrics = slurp(d + "metrics.csv");
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 1 + 3);

  // Same seed, same log; a different seed changes it.
  REQUIRE(run("train" + common + " --init " + d + "pre.ckpt --out " + d + "m2.ckpt --log " + d + "log2.csv").code == 0);
  CHECK(slurp(d + "log2.csv") == log);
  REQUIRE(run("train" + common + " --seed 3 --out " + d + "m3.ckpt --log " + d + "log3.csv").code == 0);
  CHECK(slurp(d + "log3.csv") != log);

  r = run("eval" + common + " --checkpoint " + d + "m.ckpt --pred-out " + d + "pred.csv");
  CHECK(r.code == 0);
  CHECK(r.out.find("n,k,acc,nmi,ari,cluster_sizes\n60,3,") != std::string::npos);
  const std::string pred = slurp(d + "pred.csv");
  CHECK(std::count(pred.begin(), pred.end(), '\n') == 60);

  r = run("export-affinity" + common + " --checkpoint " + d + "m.ckpt --batch 1 --out " + d + "aff");
  CHECK(r.code == 0);
  const std::string pgm = slurp(d + "aff_As.pgm");
  CHECK(pgm.rfind("P5\n30 30\n255\n", 0) == 0);
  CHECK(pgm.size() == std::string("P5\n30 30\n255\n").size() + 900);
  CHECK(!slurp(d + "aff_Ac.csv").empty());
  r = run("export-affinity" + common + " --checkpoint " + d + "m.ckpt --batch 5 --out " + d + "aff");
  CHECK(r.code == 1);
}
