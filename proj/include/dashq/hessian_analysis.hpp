#pragma once

/**
 * Stability diagnostics for empirical Hessian estimates: the linear
 * shrinkage family H(rho) = D + rho * O, the normalized L1 discrepancy
 * between two calibration sets, entrywise SNR across per-sample estimates,
 * and the estimate-vs-reference stability curve.
 */

#include "dashq/error.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dashq {

/// H(rho) = D + rho * O: diagonal preserved, off-diagonal scaled.
Eigen::MatrixXd shrink(const Eigen::MatrixXd& h, double rho);

/// R(rho) = ||dD + rho dO||_1 / ||D_A + rho O_A||_1, entrywise L1 over all
/// matrix entries. Signals a degenerate set A on a zero denominator.
double discrepancy(const Eigen::MatrixXd& h_a, const Eigen::MatrixXd& h_b, double rho);

/// Default grid: {0} followed by 32 log-spaced points in [1e-4, 1].
std::vector<double> default_rho_grid();

struct ShrinkageSweep {
    std::vector<double> rho;          // ascending
    std::vector<double> discrepancies; // R(rho) per grid point
    std::string set_a;
    std::string set_b;
};

ShrinkageSweep sweep_discrepancy(const Eigen::MatrixXd& h_a, const Eigen::MatrixXd& h_b,
                                 std::span<const double> rho_grid, std::string set_a = "A",
                                 std::string set_b = "B");

/// Entrywise SNR = |mean| / std across per-sample Hessian estimates.
/// Entries with zero spread get an infinity sentinel and are excluded from
/// the histograms.
struct SnrReport {
    std::vector<double> diag_snr;    // length d
    std::vector<double> offdiag_snr; // upper triangle, row-major, d(d-1)/2
    std::vector<double> bin_edges;   // shared histogram edges, length bins+1
    std::vector<int64_t> diag_counts;
    std::vector<int64_t> offdiag_counts;
    size_t sample_count = 0;

    double median_diag() const;
    double median_offdiag() const;
};

/// Each element of per_sample is one sample's contribution X_s X_s^T.
/// Requires at least 2 samples. Std uses the n-1 denominator.
SnrReport snr(std::span<const Eigen::MatrixXd> per_sample, int bins = 32);

struct StabilityPoint {
    int64_t n;
    double diag_rel_l1;
    double offdiag_rel_l1;
};

/// Relative L1 error of the Hessian estimated from the first n columns of X
/// against the reference from reference_n columns, split into diagonal and
/// off-diagonal parts. With normalize=true (default) both estimates are
/// divided by their sample counts before comparison.
std::vector<StabilityPoint> stability_curve(const Eigen::MatrixXd& x,
                                            std::span<const int64_t> sizes, int64_t reference_n,
                                            bool normalize = true);

} // namespace dashq
