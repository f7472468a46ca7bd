#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dashq/harness.hpp"
#include "dashq/rng.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

namespace {

std::string g_dir;

int run(const std::string& args) {
    const std::string cmd = std::string(DASHQ_CLI_PATH) + " " + args + " > " + g_dir +
                            "/stdout.txt 2> " + g_dir + "/stderr.txt";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream out;
    out << f.rdbuf();
    return out.str();
}

std::string path(const std::string& name) { return g_dir + "/" + name; }

struct DirSetup {
    DirSetup() {
        char tmpl[] = "/tmp/dashq_cli_XXXXXX";
        g_dir = mkdtemp(tmpl);
    }
} setup;

} // namespace

TEST_CASE("gen / quantize / eval round trip with byte-identical reruns") {
    REQUIRE(run("gen --kind heavy-tailed-cols --dims 24,24,12 --n 96 --heldout-n 128 --seed 5 --out " +
                path("toy")) == 0);
    REQUIRE(run("quantize --in " + path("toy_model.dqb") + " --calib " + path("toy_calib.dqb") +
                " --heldout " + path("toy_heldout.dqb") +
                " --method dashq --bits 2 --group-size 12 --iters 9 --alpha 0.5 --lambda 1e-2"
                " --seed 1 --out " + path("q1.dqb") + " --csv " + path("r1.csv")) == 0);
    REQUIRE(run("quantize --in " + path("toy_model.dqb") + " --calib " + path("toy_calib.dqb") +
                " --heldout " + path("toy_heldout.dqb") +
                " --method dashq --bits 2 --group-size 12 --iters 9 --alpha 0.5 --lambda 1e-2"
                " --seed 1 --threads 4 --out " + path("q2.dqb")) == 0);
    CHECK(slurp(path("q1.dqb")) == slurp(path("q2.dqb")));
    CHECK(slurp(path("r1.csv")).find("dashq,layer_loss,0,") != std::string::npos);

    CHECK(run("eval --in " + path("toy_model.dqb") + " --quant " + path("q1.dqb") + " --calib " +
              path("toy_calib.dqb") + " --heldout " + path("toy_heldout.dqb") + " --csv " +
              path("eval.csv")) == 0);
    CHECK(slurp(path("eval.csv")).find("e2e_mse") != std::string::npos);

    CHECK(run("dequantize --in " + path("q1.dqb") + " --out " + path("dense.dqb")) == 0);
}

TEST_CASE("config file feeds flags and the command line overrides it") {
    std::ofstream cfg(path("cfg.txt"));
    cfg << "# toy config\n";
    cfg << "bits=3\n";
    cfg << "group-size=8\n";
    cfg << "lambda=0.5\n";
    cfg.close();

    REQUIRE(run("gen --kind gaussian-iid --dims 16,8 --n 64 --seed 2 --out " + path("cfgdata")) == 0);
    // config only
    REQUIRE(run("quantize --in " + path("cfgdata_model.dqb") + " --calib " +
                path("cfgdata_calib.dqb") + " --config " + path("cfg.txt") + " --out " +
                path("cq1.dqb")) == 0);
    // CLI --bits 2 wins over config bits=3
    REQUIRE(run("quantize --in " + path("cfgdata_model.dqb") + " --calib " +
                path("cfgdata_calib.dqb") + " --config " + path("cfg.txt") + " --bits 2 --out " +
                path("cq2.dqb")) == 0);
    const std::string b1 = slurp(path("cq1.dqb"));
    const std::string b2 = slurp(path("cq2.dqb"));
    // 8x16 layer: 128 codes -> 48 packed bytes at 3 bits, 32 at 2 bits
    CHECK(b1.find("\"shape\":[48]") != std::string::npos);
    CHECK(b2.find("\"shape\":[32]") != std::string::npos);
}

TEST_CASE("compare emits one row per method") {
    REQUIRE(run("compare --in " + path("toy_model.dqb") + " --calib " + path("toy_calib.dqb") +
                " --heldout " + path("toy_heldout.dqb") +
                " --methods rtn,dashq --bits 2 --group-size 12 --csv " + path("cmp.csv")) == 0);
    const std::string csv = slurp(path("cmp.csv"));
    CHECK(csv.find("\nrtn,") != std::string::npos);
    CHECK(csv.find("\ndashq,") != std::string::npos);
}

TEST_CASE("analyze subcommands write their documented CSV headers") {
    REQUIRE(run("gen --kind gaussian-iid --dims 16 --n 1024 --heldout-n 8 --seed 7 --out " +
                path("acts")) == 0);
    REQUIRE(run("analyze stability --in " + path("acts_calib.dqb") + " --reference-n 1024 --csv " +
                path("stab.csv")) == 0);
    CHECK(slurp(path("stab.csv")).find("n,diag_rel_l1,offdiag_rel_l1\n") == 0);

    REQUIRE(run("analyze shrinkage --in " + path("acts_calib.dqb") +
                " --trials 10 --set-size 64 --csv " + path("shr.csv")) == 0);
    CHECK(slurp(path("shr.csv")).find("rho,R_mean,R_p10,R_p90\n") == 0);

    REQUIRE(run("analyze snr --in " + path("acts_calib.dqb") + " --samples 64 --csv " +
                path("snr.csv")) == 0);
    CHECK(slurp(path("snr.csv")).find("kind,bin_lo,bin_hi,count\n") == 0);

    REQUIRE(run("analyze snr --in " + path("acts_calib.dqb") + " --unit batch --samples 8") == 2);
    // a single batch tensor gives one per-sample estimate, which is rejected;
    // a multi-batch bundle works with the batch unit
    {
        dashq::TensorBundle multi;
        dashq::Rng rng(99);
        for (int64_t b = 0; b < 4; ++b) {
            dashq::ActivationBatch x(16, 8);
            for (auto& v : x.data) v = static_cast<float>(rng.normal());
            dashq::save_activations(multi, 0, b, x);
        }
        dashq::bundle_write_file(multi, path("multi.dqb"));
    }
    CHECK(run("analyze snr --in " + path("multi.dqb") + " --unit batch --samples 4 --csv " +
              path("snr_batch.csv")) == 0);
    CHECK(slurp(path("snr_batch.csv")).find("kind,") == 0);

    REQUIRE(run("calibrate --in " + path("acts_calib.dqb") + " --full --out " +
                path("hess.dqb")) == 0);
}

TEST_CASE("exit codes: 2 for validation problems, 3 for numerical failure") {
    CHECK(run("quantize --in " + path("nope.dqb") + " --calib " + path("toy_calib.dqb")) == 2);
    CHECK(run("quantize --in " + path("toy_model.dqb") + " --calib " + path("toy_calib.dqb") +
              " --bits 77") == 2);
    CHECK(run("bogus-subcommand") == 2);

    // 4 calibration columns for a 16-wide layer: rank-deficient Hessian,
    // damping disabled -> numerical failure, exit 3
    REQUIRE(run("gen --kind gaussian-iid --dims 16,8 --n 4 --seed 3 --out " + path("thin")) == 0);
    CHECK(run("quantize --in " + path("thin_model.dqb") + " --calib " + path("thin_calib.dqb") +
              " --method gptq --bits 4 --group-size 16 --damp-ratio 0 --out " +
              path("thin_q.dqb")) == 3);
}
