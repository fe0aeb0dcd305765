#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace levyq {

// Neumaier-compensated accumulator. The alternating sums in the p_k expansion
// and the high-order derivative recursions cancel heavily; plain doubles lose
// the closed-form anchors below 1e-10.
struct NeumaierSum {
    double sum = 0.0;
    double comp = 0.0;

    void add(double x) {
        double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            comp += (sum - t) + x;
        else
            comp += (x - t) + sum;
        sum = t;
    }
    double value() const { return sum + comp; }
};

inline std::uint64_t factorial_u64(int n) {
    if (n < 0 || n > 20) throw std::invalid_argument("factorial_u64: n out of [0,20]");
    std::uint64_t f = 1;
    for (int i = 2; i <= n; ++i) f *= static_cast<std::uint64_t>(i);
    return f;
}

inline std::uint64_t binom_u64(int n, int k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t c = 1;
    for (int i = 1; i <= k; ++i) c = c * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
    return c;
}

struct ValueWithError {
    double value = 0.0;
    double error = 0.0;
};

// Bisection on [lo, hi]; requires a sign change. Used for psi and all the
// Lundberg-type roots, where the objective is cheap and smooth.
template <class F>
double bisect_root(F&& f, double lo, double hi, int max_iter = 200, double xtol = 0.0) {
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0))
        throw std::runtime_error("bisect_root: no sign change in bracket");
    for (int it = 0; it < max_iter; ++it) {
        double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm > 0.0) == (fhi > 0.0)) {
            hi = mid;
            fhi = fm;
        } else {
            lo = mid;
            flo = fm;
        }
        if (hi - lo <= xtol) break;
    }
    return 0.5 * (lo + hi);
}

// Scans [lo, hi] on a uniform grid for the first sign change, then bisects.
template <class F>
double scan_bisect_root(F&& f, double lo, double hi, int grid = 64, int max_iter = 200) {
    double prev_x = lo;
    double prev_f = f(lo);
    for (int i = 1; i <= grid; ++i) {
        double x = lo + (hi - lo) * static_cast<double>(i) / grid;
        double fx = f(x);
        if (prev_f == 0.0) return prev_x;
        if ((prev_f > 0.0) != (fx > 0.0))
            return bisect_root(f, prev_x, x, max_iter);
        prev_x = x;
        prev_f = fx;
    }
    throw std::runtime_error("scan_bisect_root: no sign change on grid");
}

namespace detail {
template <class F>
double adaptive_simpson_rec(F&& f, double a, double b, double fa, double fm, double fb, double whole,
                            double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

template <class F>
double adaptive_simpson(F&& f, double a, double b, double tol = 1e-12, int depth = 40) {
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth);
}

// Central finite difference of given order with one Richardson step and an
// error estimate from the next refinement level.
template <class F>
ValueWithError central_derivative(F&& f, double x, int order, double h) {
    if (order < 0) throw std::invalid_argument("central_derivative: order < 0");
    if (order == 0) return {f(x), 0.0};
    auto stencil = [&](double step) {
        NeumaierSum s;
        for (int i = 0; i <= order; ++i) {
            double w = static_cast<double>(binom_u64(order, i));
            if (i % 2 == 1) w = -w;
            s.add(w * f(x + (0.5 * order - i) * step));
        }
        return s.value() / std::pow(step, order);
    };
    double d1 = stencil(h);
    double d2 = stencil(0.5 * h);
    double d3 = stencil(0.25 * h);
    // central differences have O(h^2) error
    double r1 = (4.0 * d2 - d1) / 3.0;
    double r2 = (4.0 * d3 - d2) / 3.0;
    double r3 = (16.0 * r2 - r1) / 15.0;
    return {r3, std::abs(r3 - r2)};
}

// Golden-section maximiser of f on [lo, hi] (f unimodal on the bracket).
template <class F>
double golden_section_max(F&& f, double lo, double hi, int iters = 120) {
    const double invphi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int i = 0; i < iters; ++i) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = f(x1);
        }
    }
    return 0.5 * (a + b);
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

inline MeanSe mean_se(double sum, double sum_sq, std::int64_t n) {
    double m = sum / static_cast<double>(n);
    double var = (sum_sq - static_cast<double>(n) * m * m) / (static_cast<double>(n) - 1.0);
    if (var < 0.0) var = 0.0;
    return {m, std::sqrt(var / static_cast<double>(n))};
}

inline MeanSe binomial_mean_se(std::int64_t hits, std::int64_t n) {
    double p = static_cast<double>(hits) / static_cast<double>(n);
    return {p, std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(n))};
}

}  // namespace levyq
