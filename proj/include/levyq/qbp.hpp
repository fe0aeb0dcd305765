#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "levyq/levy_model.hpp"
#include "levyq/math_util.hpp"

namespace levyq {

// Derivatives of 1/psi at xi: rho_l = d^l/dxi^l (1/psi(xi)), l = 0..L-1,
// from the product rule applied to psi * (1/psi) = 1.
inline std::vector<double> rho_derivs(const LevyModel& model, double xi, int L) {
    if (L < 1) throw std::invalid_argument("rho_derivs: L must be >= 1");
    double psi0 = model.psi(xi);
    std::vector<double> psid;  // psi^{(1..L-1)}
    if (L > 1) psid = model.psi_derivs(xi, L - 1);
    std::vector<double> rho(static_cast<std::size_t>(L), 0.0);
    rho[0] = 1.0 / psi0;
    for (int l = 1; l < L; ++l) {
        NeumaierSum s;
        for (int m = 0; m < l; ++m) {
            double c = static_cast<double>(binom_u64(l, m));
            s.add(c * rho[static_cast<std::size_t>(m)] * psid[static_cast<std::size_t>(l - m - 1)]);
        }
        rho[static_cast<std::size_t>(l)] = -s.value() / psi0;
    }
    return rho;
}

// Zero-probability table p_k = P(V_k = 0 | V_0 = 0), k = 1..K-1, built from
// p_k = sum_{l<k} (-xi)^l/l! * p1^{(l)} with p1^{(l)} = xi*rho_l + l*rho_{l-1}.
struct PkTable {
    double xi = 0.0;
    int K = 0;
    std::vector<double> p;         // p[k] valid for k = 1..K-1
    std::vector<double> p1_deriv;  // p1^{(l)}, l = 0..K-2
    std::vector<double> rho;       // rho_l, l = 0..K-2
    int max_trustworthy = 0;       // largest k with every p_1..p_k inside [-eps, 1+eps]

    static constexpr double kTol = 1e-8;
};

inline PkTable pk_table(const LevyModel& model, double xi, int K) {
    if (K < 2) throw std::invalid_argument("pk_table: K must be >= 2");
    PkTable t;
    t.xi = xi;
    t.K = K;
    t.rho = rho_derivs(model, xi, K - 1);
    t.p1_deriv.resize(static_cast<std::size_t>(K - 1), 0.0);
    for (int l = 0; l <= K - 2; ++l) {
        double v = xi * t.rho[static_cast<std::size_t>(l)];
        if (l >= 1) v += static_cast<double>(l) * t.rho[static_cast<std::size_t>(l - 1)];
        t.p1_deriv[static_cast<std::size_t>(l)] = v;
    }
    t.p.assign(static_cast<std::size_t>(K), 0.0);
    bool ok = true;
    for (int k = 1; k <= K - 1; ++k) {
        NeumaierSum s;
        double w = 1.0;  // (-xi)^l / l!
        for (int l = 0; l <= k - 1; ++l) {
            if (l > 0) w *= -xi / static_cast<double>(l);
            s.add(w * t.p1_deriv[static_cast<std::size_t>(l)]);
        }
        double pk = s.value();
        t.p[static_cast<std::size_t>(k)] = pk;
        if (ok && pk >= -PkTable::kTol && pk <= 1.0 + PkTable::kTol)
            t.max_trustworthy = k;
        else
            ok = false;
    }
    return t;
}

// Truncated QBP distribution {r_k}, k < K, with the remaining mass lumped.
struct QbpDistribution {
    double xi = 0.0;
    int K = 0;
    std::vector<double> r;  // r[k] valid for k = 1..K-1
    double lump = 0.0;
    bool clipped = false;   // some r_k in (-1e-8, 0) were clipped to zero
    bool shrunk = false;    // K was reduced after a numeric breakdown

    double mass(std::int64_t duration) const {
        if (duration < 1) throw std::invalid_argument("QbpDistribution: duration must be >= 1");
        if (duration >= K) return lump;
        return r[static_cast<std::size_t>(duration)];
    }
    double total() const {
        NeumaierSum s;
        for (int k = 1; k <= K - 1; ++k) s.add(r[static_cast<std::size_t>(k)]);
        s.add(lump);
        return s.value();
    }
};

inline QbpDistribution rk_table(const PkTable& pk) {
    QbpDistribution d;
    d.xi = pk.xi;
    int K = std::min(pk.K, pk.max_trustworthy + 1);
    if (K < 2) throw std::runtime_error("rk_table: p_k table numerically unusable at K >= 2");
    d.shrunk = K < pk.K;
    std::vector<double> r(static_cast<std::size_t>(K), 0.0);
    for (int k = 1; k <= K - 1; ++k) {
        NeumaierSum s;
        s.add(pk.p[static_cast<std::size_t>(k)]);
        for (int l = 1; l <= k - 1; ++l)
            s.add(-r[static_cast<std::size_t>(l)] * pk.p[static_cast<std::size_t>(k - l)]);
        double rk = s.value();
        if (rk < -PkTable::kTol) {
            // numeric breakdown: truncate the table just before this k
            K = k;
            r.resize(static_cast<std::size_t>(K));
            d.shrunk = true;
            break;
        }
        if (rk < 0.0) {
            rk = 0.0;
            d.clipped = true;
        }
        r[static_cast<std::size_t>(k)] = rk;
    }
    d.K = K;
    d.r = std::move(r);
    NeumaierSum s;
    for (int k = 1; k <= K - 1; ++k) s.add(-d.r[static_cast<std::size_t>(k)]);
    s.add(1.0);
    d.lump = std::max(s.value(), 0.0);
    return d;
}

inline QbpDistribution qbp_distribution(const LevyModel& model, double xi, int K) {
    return rk_table(pk_table(model, xi, K));
}

inline void require_compatible(const QbpDistribution& d0, const QbpDistribution& d1) {
    if (d0.K != d1.K || d0.xi != d1.xi)
        throw std::invalid_argument("QBP distributions must share xi and truncation K");
}

// Log-likelihood-ratio increment for one QBP duration. Increments are
// positive in expectation under H1, so rejection is an up-crossing.
inline double qbp_llr_increment(std::int64_t duration, const QbpDistribution& d0,
                                const QbpDistribution& d1) {
    require_compatible(d0, d1);
    double m0 = d0.mass(duration);
    double m1 = d1.mass(duration);
    if (m0 == m1) return 0.0;
    if (m0 <= 0.0 || m1 <= 0.0)
        throw std::runtime_error("qbp_llr_increment: zero mass at duration " +
                                 std::to_string(duration));
    return std::log(m1 / m0);
}

enum class Verdict { Continue, Reject, Accept };

inline const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::Continue: return "continue";
        case Verdict::Reject: return "reject";
        case Verdict::Accept: return "accept";
    }
    return "?";
}

struct QbptRun {
    double ell = 0.0;
    std::int64_t n = 0;          // QBPs consumed
    std::int64_t N = -1;         // stopping index (in QBPs) once terminal
    std::int64_t samples = 0;    // workload samples consumed by the QBPs
    Verdict verdict = Verdict::Continue;
};

// Two-sided sequential test on a stream of QBP durations; x0 = -inf gives the
// power-one variant. Stream exhaustion leaves a Continue verdict.
inline QbptRun sequential_qbpt(std::span<const std::int64_t> durations, const QbpDistribution& d0,
                               const QbpDistribution& d1, double x0, double x1) {
    if (!(x0 < 0.0) || !(x1 > 0.0))
        throw std::invalid_argument("sequential_qbpt: need x0 < 0 < x1");
    QbptRun run;
    for (std::int64_t rdur : durations) {
        run.ell += qbp_llr_increment(rdur, d0, d1);
        run.n += 1;
        run.samples += rdur;
        if (run.ell > x1) {
            run.verdict = Verdict::Reject;
            run.N = run.n;
            break;
        }
        if (run.ell < x0) {
            run.verdict = Verdict::Accept;
            run.N = run.n;
            break;
        }
    }
    return run;
}

// Per-duration expectation of f(increment) over a QBP distribution.
inline double qbp_expectation(const QbpDistribution& dist, const QbpDistribution& d0,
                              const QbpDistribution& d1,
                              const std::function<double(double)>& f) {
    require_compatible(d0, d1);
    require_compatible(dist, d0);
    NeumaierSum s;
    for (int k = 1; k <= dist.K - 1; ++k) {
        double m = dist.r[static_cast<std::size_t>(k)];
        if (m > 0.0) s.add(m * f(qbp_llr_increment(k, d0, d1)));
    }
    if (dist.lump > 0.0) s.add(dist.lump * f(qbp_llr_increment(dist.K, d0, d1)));
    return s.value();
}

inline double qbp_mean_increment(const QbpDistribution& under, const QbpDistribution& d0,
                                 const QbpDistribution& d1) {
    return qbp_expectation(under, d0, d1, [](double x) { return x; });
}

// kappa(beta) = log E_{H0} exp(beta * increment), the lump entering as a
// single atom at its log-ratio.
inline double qbpt_kappa(double beta, const QbpDistribution& d0, const QbpDistribution& d1) {
    return std::log(qbp_expectation(d0, d0, d1, [&](double x) { return std::exp(beta * x); }));
}

// Positive root of kappa; exists when the H0 drift is negative and positive
// increments carry mass.
inline double lundberg_gamma_qbp(const QbpDistribution& d0, const QbpDistribution& d1) {
    double drift = qbp_mean_increment(d0, d0, d1);
    if (!(drift < 0.0))
        throw std::runtime_error("lundberg_gamma_qbp: E_H0[increment] must be negative");
    double pos_mass = qbp_expectation(d0, d0, d1, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
    if (!(pos_mass > 0.0))
        throw std::runtime_error("lundberg_gamma_qbp: no positive increments under H0");
    double k0 = qbpt_kappa(0.0, d0, d1);
    if (std::abs(k0) > 1e-12)
        throw std::runtime_error("lundberg_gamma_qbp: kappa(0) != 0, distribution not normalised");
    auto f = [&](double b) { return qbpt_kappa(b, d0, d1); };
    // kappa is convex with kappa(0) = 0 and negative slope at 0; scan right
    // of a small offset for the sign change back to positive.
    double lo = 1e-6;
    if (f(lo) >= 0.0)
        throw std::runtime_error("lundberg_gamma_qbp: hypotheses too close to separate a root");
    double hi = 0.5;
    int grow = 0;
    while (f(hi) < 0.0) {
        hi *= 2.0;
        if (++grow > 60)
            throw std::runtime_error("lundberg_gamma_qbp: no positive root bracketed");
    }
    double g = bisect_root(f, lo, hi, 200);
    if (std::abs(f(g)) > 1e-10)
        throw std::runtime_error("lundberg_gamma_qbp: root refinement failed");
    return g;
}

// alpha(x) ~ e^{-gamma x} with the prefactor set to one.
inline double qbpt_error_approx(double gamma, double x) {
    if (x < 0.0) throw std::invalid_argument("qbpt_error_approx: x must be >= 0");
    return std::exp(-gamma * x);
}

// Expected number of QBPs until rejection under H1.
inline double qbpt_mean_rejection(const QbpDistribution& d1, const QbpDistribution& d0, double x) {
    double drift = qbp_mean_increment(d1, d0, d1);
    if (!(drift > 0.0))
        throw std::runtime_error("qbpt_mean_rejection: E_H1[increment] must be positive");
    return x / drift;
}

// Exponential-to-Erlang transform lift: alpha_k(xi|s) = sum_{l<k}
// (-xi)^l/l! d^l/dxi^l alpha_1(xi|s), with xi-derivatives by Richardson
// central differences.
template <class F>
double erlang_epoch_transform(F&& alpha1, double xi, double s, int k, double rel_noise_floor = 1e-4) {
    if (k < 1 || k > 6) throw std::invalid_argument("erlang_epoch_transform: need 1 <= k <= 6");
    NeumaierSum sum;
    double w = 1.0;
    for (int l = 0; l <= k - 1; ++l) {
        if (l > 0) w *= -xi / static_cast<double>(l);
        if (l == 0) {
            sum.add(alpha1(xi, s));
            continue;
        }
        double h = xi * 0.05 * std::pow(0.7, l);
        auto fx = [&](double x) { return alpha1(x, s); };
        ValueWithError d = central_derivative(fx, xi, l, h);
        double scale = std::max(std::abs(d.value), 1e-12);
        if (d.error > rel_noise_floor * scale)
            throw std::runtime_error(
                "erlang_epoch_transform: derivative noise floor exceeded; max reliable order " +
                std::to_string(l - 1));
        sum.add(w * d.value);
    }
    return sum.value();
}

// Transform of the workload at a single exponential epoch started from zero.
inline double workload_exp_epoch_lst(const LevyModel& model, double xi, double s) {
    double psi0 = model.psi(xi);
    return (xi / psi0) * (psi0 - s) / (xi - model.phi(s));
}

}  // namespace levyq
