#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dashq/baselines.hpp"
#include "dashq/packing.hpp"
#include "dashq/rng.hpp"
#include "dashq/solver.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

using namespace dashq;

namespace {

QuantSpec spec_with(int bits, int64_t group_size) {
    QuantSpec spec;
    spec.bits = bits;
    spec.group_size = group_size;
    spec.ridge = 0.0;
    spec.smoothing = 1.0;
    return spec;
}

bool layers_identical(const QuantizedLayer& a, const QuantizedLayer& b) {
    return a.bits == b.bits && a.group_size == b.group_size && a.d_out == b.d_out &&
           a.d_in == b.d_in && a.packed_codes == b.packed_codes && a.scales == b.scales &&
           a.zeros == b.zeros;
}

HessianEstimate hessian_from(const Eigen::MatrixXd& m) {
    HessianEstimate h(m.rows());
    h.accum = m;
    h.sample_count = 1;
    return h;
}

WeightMatrix random_weights(Rng& rng, int64_t rows, int64_t cols) {
    WeightMatrix w(rows, cols);
    for (auto& v : w.data) v = static_cast<float>(rng.normal());
    return w;
}

} // namespace

TEST_CASE("rtn grid-aligned row is exact") {
    const WeightMatrix w(1, 4, {0.0f, 1.0f, 2.0f, 3.0f});
    const QuantizedLayer q = quantize_rtn(w, spec_with(2, 4));
    CHECK(q.scales[0] == 1.0f);
    CHECK(q.zeros[0] == 0.0f);
    CHECK(unpack_codes(q.packed_codes, 2, 4) == std::vector<int32_t>{0, 1, 2, 3});
    const WeightMatrix back = dequantize_layer(q);
    CHECK(back.data == w.data);
}

TEST_CASE("rtn direct formula on [-1, 0, 1] at 2 bits") {
    const WeightMatrix w(1, 3, {-1.0f, 0.0f, 1.0f});
    const QuantizedLayer q = quantize_rtn(w, spec_with(2, 3));
    CHECK(q.scales[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-7));
    CHECK(q.zeros[0] == 1.0f);
    // (0 + 1) / (2/3) = 1.5 rounds away from zero to 2
    CHECK(unpack_codes(q.packed_codes, 2, 3) == std::vector<int32_t>{0, 2, 3});
    const WeightMatrix back = dequantize_layer(q);
    CHECK(back.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-7));
    CHECK(back.at(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
    CHECK(back.at(0, 2) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("rtn equals the solver run with zero iterations") {
    Rng rng(7);
    const WeightMatrix w = random_weights(rng, 6, 20);
    DiagImportance imp(20);
    for (auto& v : imp.h) v = rng.uniform();
    QuantSpec spec = spec_with(3, 8);
    spec.iters = 0;
    const QuantizedLayer rtn = quantize_rtn(w, spec);
    const auto [dashq0, traces] = quantize_layer_dashq(w, imp, spec);
    CHECK(layers_identical(rtn, dashq0));
}

TEST_CASE("rtn is idempotent on its own reconstruction") {
    Rng rng(13);
    const QuantSpec spec = spec_with(2, 8);
    const WeightMatrix w = random_weights(rng, 5, 16);
    const QuantizedLayer q1 = quantize_rtn(w, spec);
    const WeightMatrix w2 = dequantize_layer(q1);
    const QuantizedLayer q2 = quantize_rtn(w2, spec);
    CHECK(q1.packed_codes == q2.packed_codes);
}

TEST_CASE("gptq with the identity Hessian is bit-identical to rtn") {
    Rng rng(17);
    const WeightMatrix w = random_weights(rng, 8, 12);
    GptqConfig cfg;
    cfg.spec = spec_with(2, 4);
    const HessianEstimate h = hessian_from(Eigen::MatrixXd::Identity(12, 12));
    const QuantizedLayer gptq = quantize_gptq(w, h, cfg);
    const QuantizedLayer rtn = quantize_rtn(w, cfg.spec);
    CHECK(layers_identical(gptq, rtn));
}

TEST_CASE("gptq with a non-uniform diagonal Hessian reduces to per-column rtn") {
    Rng rng(19);
    const WeightMatrix w = random_weights(rng, 4, 6);
    GptqConfig cfg;
    cfg.spec = spec_with(3, 3);
    Eigen::VectorXd d(6);
    d << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0;
    const QuantizedLayer gptq = quantize_gptq(w, hessian_from(d.asDiagonal()), cfg);
    const QuantizedLayer rtn = quantize_rtn(w, cfg.spec);
    CHECK(layers_identical(gptq, rtn));
}

TEST_CASE("hand-solved 2x2 block: the next column shifts by half the error") {
    // H couples the first two coordinates with [[2,1],[1,2]]; the inverse has
    // ratio [H^-1]_01 / [H^-1]_00 = -1/2, so column 1 moves by +e/2.
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(4, 4);
    h(0, 0) = 2.0;
    h(1, 1) = 2.0;
    h(0, 1) = h(1, 0) = 1.0;
    const WeightMatrix w(1, 4, {0.52f, 0.2f, 0.0f, 1.0f});
    GptqConfig cfg;
    cfg.spec = spec_with(2, 4);
    cfg.damp_ratio = 0.0; // keep the hand-computed ratio exact

    GptqRowTrace trace;
    const QuantizedLayer q = quantize_gptq(w, hessian_from(h), cfg, 1, &trace);

    // expected path, computed by hand from the group grid
    const auto [s0, z0] = init_params(w.row(0), 2, cfg.spec.scale_floor);
    const int32_t q0 = quantize_one(w.at(0, 0), s0, z0, 2);
    const double rec0 = s0 * q0 - z0;
    const double e0 = w.at(0, 0) - rec0;
    const double w1_shifted = static_cast<double>(w.at(0, 1)) + e0 / 2.0;

    REQUIRE(trace.states.size() == 4);
    CHECK(trace.states[0][1] == doctest::Approx(w1_shifted).epsilon(1e-12));

    const auto codes = unpack_codes(q.packed_codes, 2, 4);
    CHECK(codes[0] == q0);
    CHECK(codes[1] == quantize_one(w1_shifted, s0, z0, 2));
    // the shift is what changes the code: without it column 1 would round up
    CHECK(codes[1] != quantize_one(w.at(0, 1), s0, z0, 2));
}

TEST_CASE("grid-aligned weights incur zero compensation and exact output") {
    Rng rng(23);
    // one row on the grid w = q/3 with codes 0 and 3 present
    WeightMatrix w(2, 8);
    for (int64_t i = 0; i < 2; ++i) {
        for (int64_t j = 0; j < 8; ++j) {
            const int32_t q = (j == 0) ? 0 : (j == 1) ? 3 : static_cast<int32_t>(rng.uniform_int(0, 3));
            w.at(i, j) = static_cast<float>(q) / 4.0f; // s = 0.25, exact in f32
        }
    }
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(8, 8);
    h(0, 3) = h(3, 0) = 0.4; // would propagate errors if there were any
    GptqConfig cfg;
    cfg.spec = spec_with(2, 8);
    const QuantizedLayer q = quantize_gptq(w, hessian_from(h), cfg);
    const WeightMatrix back = dequantize_layer(q);
    CHECK(back.data == w.data);
}

TEST_CASE("after each column the remaining weights match a dense conditional solve") {
    Rng rng(31);
    for (int trial = 0; trial < 60; ++trial) {
        const int64_t d = rng.uniform_int(3, 6);
        // well-conditioned random PSD Hessian
        Eigen::MatrixXd a(d, d);
        for (int64_t i = 0; i < d; ++i) {
            for (int64_t j = 0; j < d; ++j) a(i, j) = rng.normal();
        }
        Eigen::MatrixXd h = a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(d, d);
        const WeightMatrix w = random_weights(rng, 1, d);
        GptqConfig cfg;
        cfg.spec = spec_with(2, d);
        cfg.damp_ratio = 0.0;

        GptqRowTrace trace;
        const QuantizedLayer q = quantize_gptq(w, hessian_from(h), cfg, 1, &trace);
        const auto codes = unpack_codes(q.packed_codes, 2, static_cast<size_t>(d));
        REQUIRE(trace.states.size() == static_cast<size_t>(d));

        // processed reconstructions from the emitted codes on the effective grid
        const auto [gs, gz] = init_params(w.row(0), 2, cfg.spec.scale_floor);
        Eigen::VectorXd orig(d), recon(d);
        for (int64_t j = 0; j < d; ++j) {
            orig(j) = w.at(0, j);
            recon(j) = gs * codes[static_cast<size_t>(j)] - gz;
        }
        for (int64_t j = 0; j + 1 < d; ++j) {
            // minimize (v - orig)^T H (v - orig) with v_0..j fixed at recon
            const int64_t nu = d - j - 1;
            const Eigen::MatrixXd h_uu = h.bottomRightCorner(nu, nu);
            const Eigen::MatrixXd h_up = h.bottomLeftCorner(nu, j + 1);
            const Eigen::VectorXd delta_p = recon.head(j + 1) - orig.head(j + 1);
            const Eigen::VectorXd delta_u = -h_uu.ldlt().solve(h_up * delta_p);
            const Eigen::VectorXd expect = orig.tail(nu) + delta_u;
            for (int64_t k = 0; k < nu; ++k) {
                CHECK(trace.states[static_cast<size_t>(j)][static_cast<size_t>(j + 1 + k)] ==
                      doctest::Approx(expect(k)).epsilon(1e-8));
            }
        }
    }
}

TEST_CASE("block size changes the schedule but not the result") {
    Rng rng(37);
    const WeightMatrix w = random_weights(rng, 3, 10);
    Eigen::MatrixXd a(10, 10);
    for (int64_t i = 0; i < 10; ++i) {
        for (int64_t j = 0; j < 10; ++j) a(i, j) = rng.normal();
    }
    const Eigen::MatrixXd h = a * a.transpose() + Eigen::MatrixXd::Identity(10, 10);
    GptqConfig wide;
    wide.spec = spec_with(2, 5);
    GptqConfig narrow = wide;
    narrow.block_size = 3;
    const QuantizedLayer q_wide = quantize_gptq(w, hessian_from(h), wide);
    const QuantizedLayer q_narrow = quantize_gptq(w, hessian_from(h), narrow);
    CHECK(layers_identical(q_wide, q_narrow));
}

TEST_CASE("gptq rows are deterministic across thread counts") {
    Rng rng(41);
    const WeightMatrix w = random_weights(rng, 12, 8);
    Eigen::MatrixXd a(8, 8);
    for (int64_t i = 0; i < 8; ++i) {
        for (int64_t j = 0; j < 8; ++j) a(i, j) = rng.normal();
    }
    const Eigen::MatrixXd h = a * a.transpose() + Eigen::MatrixXd::Identity(8, 8);
    GptqConfig cfg;
    cfg.spec = spec_with(3, 4);
    const QuantizedLayer serial = quantize_gptq(w, hessian_from(h), cfg, 1);
    const QuantizedLayer parallel = quantize_gptq(w, hessian_from(h), cfg, 4);
    CHECK(layers_identical(serial, parallel));
}

TEST_CASE("singular Hessian without damping reports a numerical failure") {
    Rng rng(43);
    const WeightMatrix w = random_weights(rng, 2, 5);
    Eigen::VectorXd x(5);
    for (int64_t i = 0; i < 5; ++i) x(i) = rng.normal();
    const Eigen::MatrixXd h = x * x.transpose(); // rank 1
    GptqConfig cfg;
    cfg.spec = spec_with(2, 5);
    cfg.damp_ratio = 0.0;
    CHECK_THROWS_AS((void)quantize_gptq(w, hessian_from(h), cfg), NumericalError);
    // default damping fixes it
    cfg.damp_ratio = 0.01;
    CHECK_NOTHROW((void)quantize_gptq(w, hessian_from(h), cfg));
}
