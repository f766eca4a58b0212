#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

#include "error.hpp"

namespace kpir {

namespace detail {

// Continued fraction for the incomplete beta function, modified Lentz method.
inline double beta_continued_fraction(double a, double b, double x)
{
    constexpr int max_iter = 10000;
    constexpr double eps = 1e-16;
    constexpr double tiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) return h;
    }
    return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
inline double incomplete_beta(double a, double b, double x)
{
    if (!(a > 0) || !(b > 0)) throw usage_error("incomplete_beta requires a, b > 0");
    if (!(x >= 0 && x <= 1)) throw usage_error("incomplete_beta requires x in [0, 1]");
    if (x == 0 || x == 1) return x;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
inline double student_t_two_sided_p(double t, double df)
{
    if (std::isinf(t)) return 0.0;
    return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

struct t_test_result {
    double t_statistic = 0;
    double p_value = 1;
    int degrees_of_freedom = 0;
    bool significant_at_05 = false;
};

/// Student's paired t-test on a - b. Identical inputs (all differences zero)
/// give t = 0, p = 1. A constant non-zero difference gives t = +-inf, p = 0.
inline t_test_result paired_t_test(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) throw data_error("paired t-test needs equal-length samples");
    const std::size_t n = a.size();
    if (n < 2) throw data_error("paired t-test needs at least 2 pairs");
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dev = (a[i] - b[i]) - mean;
        ss += dev * dev;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    t_test_result r;
    r.degrees_of_freedom = static_cast<int>(n - 1);
    if (sd == 0) {
        if (mean == 0) {
            r.t_statistic = 0;
            r.p_value = 1;
        } else {
            r.t_statistic = mean > 0 ? std::numeric_limits<double>::infinity()
                                     : -std::numeric_limits<double>::infinity();
            r.p_value = 0;
        }
    } else {
        r.t_statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
        r.p_value = student_t_two_sided_p(r.t_statistic, r.degrees_of_freedom);
    }
    r.significant_at_05 = r.p_value < 0.05;
    return r;
}

}  // namespace kpir
