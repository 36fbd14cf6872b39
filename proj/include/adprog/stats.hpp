#pragma once

#include <vector>

namespace adprog {

// Regularized incomplete beta function I_x(a,b), evaluated by the continued
// fraction (Lentz's method). Accurate to ~1e-14; the statistical tests below
// need 10 significant digits.
double regularized_incomplete_beta(double a, double b, double x);

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
    // Set when both variances are zero (p pinned to 1 or 0 by mean equality).
    bool flagged = false;
};

// Two-sample Welch's t-test with Welch–Satterthwaite degrees of freedom and
// a two-sided p-value from the Student-t survival function.
WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct MannWhitneyResult {
    double u = 0.0;  // U statistic of the first sample
    double p = 1.0;  // two-sided, tie-corrected normal approx + continuity correction
};

MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b);

// Ordinary least-squares slope of values over months. Faults when all months
// are equal.
double linreg_slope(const std::vector<double>& values, const std::vector<double>& months);

}  // namespace adprog
