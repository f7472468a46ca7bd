#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dashq/hessian_analysis.hpp"
#include "dashq/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

using namespace dashq;

namespace {

Eigen::MatrixXd random_hessian(Rng& rng, int64_t d, int64_t n) {
    Eigen::MatrixXd x(d, n);
    for (int64_t i = 0; i < d; ++i) {
        for (int64_t k = 0; k < n; ++k) x(i, k) = rng.normal();
    }
    return x * x.transpose();
}

} // namespace

TEST_CASE("shrink endpoints and midpoint") {
    Eigen::MatrixXd h(2, 2);
    h << 2.0, 2.0, 2.0, 2.0;

    const Eigen::MatrixXd at0 = shrink(h, 0.0);
    CHECK(at0(0, 0) == 2.0);
    CHECK(at0(1, 1) == 2.0);
    CHECK(at0(0, 1) == 0.0);
    CHECK(at0(1, 0) == 0.0);

    CHECK((shrink(h, 1.0) - h).cwiseAbs().maxCoeff() == 0.0);

    const Eigen::MatrixXd mid = shrink(h, 0.5);
    CHECK(mid(0, 0) == 2.0);
    CHECK(mid(0, 1) == 1.0);
    CHECK(mid(1, 0) == 1.0);
    CHECK(mid(1, 1) == 2.0);
}

TEST_CASE("discrepancy of identical sets is zero at every rho") {
    Rng rng(3);
    const Eigen::MatrixXd h = random_hessian(rng, 6, 20);
    for (double rho : default_rho_grid()) CHECK(discrepancy(h, h, rho) == 0.0);
}

TEST_CASE("discrepancy at rho 0 compares diagonals only") {
    Rng rng(5);
    const Eigen::MatrixXd a = random_hessian(rng, 5, 12);
    const Eigen::MatrixXd b = random_hessian(rng, 5, 12);
    const double diag_only = (a.diagonal() - b.diagonal()).cwiseAbs().sum() /
                             a.diagonal().cwiseAbs().sum();
    CHECK(discrepancy(a, b, 0.0) == doctest::Approx(diag_only).epsilon(1e-12));
}

TEST_CASE("discrepancy at rho 1 equals the plain normalized L1 difference") {
    Rng rng(7);
    const Eigen::MatrixXd a = random_hessian(rng, 5, 12);
    const Eigen::MatrixXd b = random_hessian(rng, 5, 12);
    const double full = (a - b).cwiseAbs().sum() / a.cwiseAbs().sum();
    CHECK(discrepancy(a, b, 1.0) == doctest::Approx(full).epsilon(1e-12));
}

TEST_CASE("discrepancy is continuous in rho and non-negative") {
    Rng rng(9);
    const Eigen::MatrixXd a = random_hessian(rng, 4, 9);
    const Eigen::MatrixXd b = random_hessian(rng, 4, 9);
    double prev = discrepancy(a, b, 0.0);
    for (int i = 1; i <= 1000; ++i) {
        const double rho = i / 1000.0;
        const double cur = discrepancy(a, b, rho);
        CHECK(cur >= 0.0);
        CHECK(std::fabs(cur - prev) < 5e-3); // small rho step, small move
        prev = cur;
    }
}

TEST_CASE("discrepancy is zero exactly when the shrunk matrices agree") {
    Rng rng(8);
    Eigen::MatrixXd a = random_hessian(rng, 4, 9);
    Eigen::MatrixXd b = a;
    b(0, 1) = b(1, 0) = a(0, 1) + 1.0; // same diagonal, different off-diagonal
    CHECK(discrepancy(a, b, 0.0) == 0.0); // shrink(., 0) discards the difference
    CHECK(discrepancy(a, b, 0.5) > 0.0);
    CHECK(discrepancy(a, b, 1.0) > 0.0);
}

TEST_CASE("sweep rejects a non-ascending rho grid") {
    const Eigen::MatrixXd h = Eigen::MatrixXd::Identity(2, 2);
    const std::vector<double> bad{0.5, 0.1};
    CHECK_THROWS_AS((void)sweep_discrepancy(h, h, bad), ValidationError);
}

TEST_CASE("discrepancy signals a degenerate reference set") {
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 3);
    const Eigen::MatrixXd other = Eigen::MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS((void)discrepancy(zero, other, 0.5), NumericalError);
}

TEST_CASE("default rho grid is 33 ascending points from 0 to 1") {
    const auto grid = default_rho_grid();
    REQUIRE(grid.size() == 33);
    CHECK(grid.front() == 0.0);
    CHECK(grid[1] == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(grid.back() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::is_sorted(grid.begin(), grid.end()));
}

TEST_CASE("sweep evaluates the grid pointwise") {
    Rng rng(11);
    const Eigen::MatrixXd a = random_hessian(rng, 4, 10);
    const Eigen::MatrixXd b = random_hessian(rng, 4, 10);
    const auto grid = default_rho_grid();
    const ShrinkageSweep sweep = sweep_discrepancy(a, b, grid, "setA", "setB");
    REQUIRE(sweep.rho.size() == grid.size());
    REQUIRE(sweep.discrepancies.size() == grid.size());
    CHECK(sweep.set_a == "setA");
    for (size_t i = 0; i < grid.size(); ++i) {
        CHECK(sweep.discrepancies[i] == discrepancy(a, b, grid[i]));
    }
}

TEST_CASE("snr of a sign-alternating entry is zero") {
    Eigen::MatrixXd p(1, 1), n(1, 1);
    p << 1.0;
    n << -1.0;
    const std::vector<Eigen::MatrixXd> samples{p, n};
    const SnrReport report = snr(samples);
    REQUIRE(report.diag_snr.size() == 1);
    CHECK(report.diag_snr[0] == 0.0);
}

TEST_CASE("snr of a constant entry becomes the infinity sentinel, out of histograms") {
    Eigen::MatrixXd c(2, 2);
    c << 3.0, 1.0, 1.0, 3.0;
    Eigen::MatrixXd c2 = c;
    c2(0, 1) = c2(1, 0) = 2.0; // off-diagonal varies, diagonal constant
    const std::vector<Eigen::MatrixXd> samples{c, c2, c};
    const SnrReport report = snr(samples);
    REQUIRE(report.diag_snr.size() == 2);
    CHECK(std::isinf(report.diag_snr[0]));
    CHECK(std::isinf(report.diag_snr[1]));
    REQUIRE(report.offdiag_snr.size() == 1);
    CHECK(std::isfinite(report.offdiag_snr[0]));
    const int64_t diag_total =
        std::accumulate(report.diag_counts.begin(), report.diag_counts.end(), int64_t{0});
    const int64_t off_total =
        std::accumulate(report.offdiag_counts.begin(), report.offdiag_counts.end(), int64_t{0});
    CHECK(diag_total == 0); // both diagonal entries are sentinels
    CHECK(off_total == 1);
}

TEST_CASE("snr requires at least two samples") {
    const std::vector<Eigen::MatrixXd> one{Eigen::MatrixXd::Identity(2, 2)};
    CHECK_THROWS_AS((void)snr(one), ValidationError);
}

TEST_CASE("histogram counts add up to the finite value counts") {
    Rng rng(13);
    std::vector<Eigen::MatrixXd> samples;
    for (int s = 0; s < 24; ++s) {
        Eigen::VectorXd x(6);
        for (int i = 0; i < 6; ++i) x(i) = rng.normal();
        samples.push_back(x * x.transpose());
    }
    const SnrReport report = snr(samples, 16);
    auto finite_count = [](const std::vector<double>& v) {
        return std::count_if(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    CHECK(std::accumulate(report.diag_counts.begin(), report.diag_counts.end(), int64_t{0}) ==
          finite_count(report.diag_snr));
    CHECK(std::accumulate(report.offdiag_counts.begin(), report.offdiag_counts.end(),
                          int64_t{0}) == finite_count(report.offdiag_snr));
    REQUIRE(report.bin_edges.size() == 17);
    CHECK(std::is_sorted(report.bin_edges.begin(), report.bin_edges.end()));
}

TEST_CASE("independent channels put the median off-diagonal snr below the diagonal") {
    Rng rng(17);
    std::vector<Eigen::MatrixXd> samples;
    for (int s = 0; s < 128; ++s) {
        Eigen::VectorXd x(16);
        for (int i = 0; i < 16; ++i) x(i) = rng.normal();
        samples.push_back(x * x.transpose());
    }
    const SnrReport report = snr(samples);
    CHECK(report.median_offdiag() < report.median_diag());
}

TEST_CASE("stability curve: self-comparison has zero error") {
    Rng rng(19);
    Eigen::MatrixXd x(8, 64);
    for (int64_t i = 0; i < 8; ++i) {
        for (int64_t k = 0; k < 64; ++k) x(i, k) = rng.normal();
    }
    const std::vector<int64_t> sizes{64};
    const auto curve = stability_curve(x, sizes, 64);
    REQUIRE(curve.size() == 1);
    CHECK(curve[0].diag_rel_l1 == 0.0);
    CHECK(curve[0].offdiag_rel_l1 == 0.0);
}

TEST_CASE("stability curve improves with n and ranks off-diagonal above diagonal") {
    // median over 20 seeds of Gaussian independent-channel data
    std::vector<double> diag_small, diag_large;
    std::vector<std::vector<double>> off_by_size(2);
    std::vector<std::vector<double>> diag_by_size(2);
    const std::vector<int64_t> sizes{8, 64};
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(derive_seed(seed, 99));
        Eigen::MatrixXd x(16, 512);
        for (int64_t i = 0; i < 16; ++i) {
            for (int64_t k = 0; k < 512; ++k) x(i, k) = rng.normal();
        }
        const auto curve = stability_curve(x, sizes, 512);
        diag_small.push_back(curve[0].diag_rel_l1);
        diag_large.push_back(curve[1].diag_rel_l1);
        for (size_t s = 0; s < 2; ++s) {
            diag_by_size[s].push_back(curve[s].diag_rel_l1);
            off_by_size[s].push_back(curve[s].offdiag_rel_l1);
        }
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    CHECK(median(diag_large) < median(diag_small));
    for (size_t s = 0; s < 2; ++s) {
        CHECK(median(off_by_size[s]) > median(diag_by_size[s]));
    }
}

TEST_CASE("stability curve validates sizes against the reference") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 10);
    const std::vector<int64_t> too_big{11};
    CHECK_THROWS_AS((void)stability_curve(x, too_big, 10), ValidationError);
    const std::vector<int64_t> over_ref{9};
    CHECK_THROWS_AS((void)stability_curve(x, over_ref, 8), ValidationError);
}
