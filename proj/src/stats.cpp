#include "adprog/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "adprog/errors.hpp"

namespace adprog {

namespace {

// Continued fraction for the incomplete beta function, modified Lentz method.
double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    throw NumericalError("incomplete beta continued fraction failed to converge");
}

double sample_mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v, double mean) {
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size() - 1);
}

// Midranks (1-based) of the combined pool, returned aligned with the pool.
std::vector<double> midranks(std::vector<double> pool, std::vector<std::size_t>& order) {
    order.resize(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&pool](std::size_t i, std::size_t j) { return pool[i] < pool[j]; });
    std::vector<double> ranks(pool.size(), 0.0);
    std::size_t k = 0;
    while (k < order.size()) {
        std::size_t e = k;
        while (e + 1 < order.size() && pool[order[e + 1]] == pool[order[k]]) ++e;
        const double mid = (static_cast<double>(k + 1) + static_cast<double>(e + 1)) / 2.0;
        for (std::size_t t = k; t <= e; ++t) ranks[order[t]] = mid;
        k = e + 1;
    }
    return ranks;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0) throw NumericalError("incomplete beta: a,b must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
        b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw ContractError("Welch's t-test needs at least 2 values per sample");
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ma = sample_mean(a);
    const double mb = sample_mean(b);
    const double va = sample_var(a, ma);
    const double vb = sample_var(b, mb);

    WelchResult r;
    if (va == 0.0 && vb == 0.0) {
        // Degenerate: no within-sample variation at all.
        r.flagged = true;
        if (ma == mb) {
            r.t = 0.0;
            r.p = 1.0;
        } else {
            r.t = ma > mb ? std::numeric_limits<double>::infinity()
                          : -std::numeric_limits<double>::infinity();
            r.p = 0.0;
        }
        r.df = na + nb - 2.0;
        return r;
    }
    const double se2 = va / na + vb / nb;
    r.t = (ma - mb) / std::sqrt(se2);
    r.df = se2 * se2 /
           (va * va / (na * na * (na - 1.0)) + vb * vb / (nb * nb * (nb - 1.0)));
    // Two-sided p = I_{df/(df+t^2)}(df/2, 1/2) — the Student-t survival mass.
    const double x = r.df / (r.df + r.t * r.t);
    r.p = regularized_incomplete_beta(r.df / 2.0, 0.5, x);
    return r;
}

MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty())
        throw ContractError("Mann-Whitney U needs at least 1 value per sample");
    std::vector<double> pool = a;
    pool.insert(pool.end(), b.begin(), b.end());
    std::vector<std::size_t> order;
    const std::vector<double> ranks = midranks(pool, order);

    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    double rank_sum_a = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) rank_sum_a += ranks[i];

    MannWhitneyResult r;
    r.u = rank_sum_a - na * (na + 1.0) / 2.0;

    // Tie-corrected variance of U under H0.
    const double n = na + nb;
    double tie_term = 0.0;
    std::size_t k = 0;
    while (k < order.size()) {
        std::size_t e = k;
        while (e + 1 < order.size() && pool[order[e + 1]] == pool[order[k]]) ++e;
        const double t = static_cast<double>(e - k + 1);
        tie_term += t * t * t - t;
        k = e + 1;
    }
    const double var_u = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (var_u <= 0.0) {
        r.p = 1.0;  // everything tied
        return r;
    }
    const double mean_u = na * nb / 2.0;
    const double diff = std::fabs(r.u - mean_u);
    const double z = std::max(0.0, diff - 0.5) / std::sqrt(var_u);  // continuity correction
    r.p = std::erfc(z / std::sqrt(2.0));
    return r;
}

double linreg_slope(const std::vector<double>& values, const std::vector<double>& months) {
    if (values.size() != months.size() || values.size() < 2)
        throw ContractError("slope needs >= 2 aligned points");
    const double mx = sample_mean(months);
    const double my = sample_mean(values);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        sxx += (months[i] - mx) * (months[i] - mx);
        sxy += (months[i] - mx) * (values[i] - my);
    }
    if (sxx == 0.0) throw ContractError("slope undefined: all months equal");
    return sxy / sxx;
}

}  // namespace adprog
