#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "levyq/levy_model.hpp"
#include "levyq/math_util.hpp"
#include "levyq/parallel.hpp"
#include "levyq/rng.hpp"
#include "levyq/simulate.hpp"

namespace levyq {

// P(V_i = 0 | V_{i-1} = v) when theta = psi(xi).
inline double zero_prob(double v, double theta, double xi) {
    if (!(theta > xi) || !(xi > 0.0)) throw std::invalid_argument("zero_prob: need theta > xi > 0");
    if (v < 0.0) throw std::invalid_argument("zero_prob: v must be >= 0");
    return (xi / theta) * std::exp(-theta * v);
}

// Constants of the conditional likelihood ratio on zero/positive indicators.
struct ClrtParams {
    double xi = 0.0;
    double theta0 = 0.0;
    double theta1 = 0.0;
    double w1 = 0.0;  // log(theta0/theta1)
    double w2 = 0.0;  // theta0 - theta1

    ClrtParams(double xi_, double t0, double t1) : xi(xi_), theta0(t0), theta1(t1) {
        if (!(xi > 0.0)) throw std::invalid_argument("ClrtParams: xi must be > 0");
        if (!(t0 >= xi) || !(t1 >= xi))
            throw std::invalid_argument("ClrtParams: theta_k must be >= xi");
        w1 = std::log(theta0 / theta1);
        w2 = theta0 - theta1;
    }
    explicit ClrtParams(const HypothesisPair& pair)
        : ClrtParams(pair.xi, pair.theta0, pair.theta1) {}

    bool degenerate() const { return theta0 == theta1; }
    double theta(int k) const { return k == 0 ? theta0 : theta1; }

    double g(double v) const {
        if (degenerate()) return 0.0;
        return std::log((theta1 - xi * std::exp(-theta1 * v)) /
                        (theta0 - xi * std::exp(-theta0 * v)));
    }
    // hypothesis-indexed conditional zero probability
    double h(int k, double v) const { return (xi / theta(k)) * std::exp(-theta(k) * v); }

    // log-likelihood-ratio increment for the pair (V_{i-1}, Y_i)
    double increment(double v_prev, bool y) const {
        if (degenerate()) return 0.0;
        return y ? w1 + w2 * v_prev : w1 + g(v_prev);
    }
};

struct ClrtRun {
    double ell = 0.0;
    std::int64_t n = 0;
    bool stopped = false;
    std::int64_t N = -1;
    double threshold = 0.0;
};

// Power-one sequential CLRT over the (V_{i-1}, Y_i) pairs of a sample path;
// stream exhaustion returns the unstopped state.
inline ClrtRun sequential_clrt(const SamplePath& path, const ClrtParams& params, double x) {
    if (!(x > 0.0)) throw std::invalid_argument("sequential_clrt: x must be > 0");
    ClrtRun run;
    run.threshold = x;
    for (std::int64_t i = 1; i <= path.n(); ++i) {
        double v_prev = path.values[static_cast<std::size_t>(i - 1)];
        bool y = path.zero[static_cast<std::size_t>(i - 1)] != 0;
        run.ell += params.increment(v_prev, y);
        run.n = i;
        if (run.ell >= x) {
            run.stopped = true;
            run.N = i;
            break;
        }
    }
    return run;
}

// Threshold test on the average workload; the benchmark the likelihood tests
// are compared against.
inline bool naive_mean_reject(const SamplePath& path, double x) {
    if (path.n() == 0) return false;
    NeumaierSum s;
    for (std::int64_t i = 1; i <= path.n(); ++i) s.add(path.values[static_cast<std::size_t>(i)]);
    return s.value() / static_cast<double>(path.n()) >= x;
}

// Analytic stationary mean of the increment under hypothesis k. g is expanded
// into its geometric series so every term is one evaluation of the stationary
// LST; the reported error is the geometric tail bound.
inline ValueWithError mean_increment(const HypothesisPair& pair, int k, int j_max = 20000,
                                     double tol = 1e-14) {
    ClrtParams prm(pair);
    if (prm.degenerate()) return {0.0, 0.0};
    const LevyModel& model = pair.model(k);
    if (!model.stable()) throw std::invalid_argument("mean_increment: model k must be stable");
    double theta_k = prm.theta(k);
    double q0 = pair.xi / prm.theta0;
    double q1 = pair.xi / prm.theta1;
    if (!(q0 < 1.0) || !(q1 < 1.0))
        throw std::invalid_argument("mean_increment: need theta_k > xi for the series");

    NeumaierSum series_g;      // E_k g(V) + w1
    NeumaierSum series_hg;     // E_k e^{-theta_k V} g(V) + w1 * L_k(theta_k)
    double p0 = 1.0, p1 = 1.0;
    int j = 1;
    for (; j <= j_max; ++j) {
        p0 *= q0;
        p1 *= q1;
        double tg = (p0 * model.stationary_lst(prm.theta0 * j) -
                     p1 * model.stationary_lst(prm.theta1 * j)) /
                    static_cast<double>(j);
        double thg = (p0 * model.stationary_lst(prm.theta0 * j + theta_k) -
                      p1 * model.stationary_lst(prm.theta1 * j + theta_k)) /
                     static_cast<double>(j);
        series_g.add(tg);
        series_hg.add(thg);
        if ((p0 + p1) / static_cast<double>(j + 1) < tol) break;
    }
    double tail = (p0 * q0 / (1.0 - q0) + p1 * q1 / (1.0 - q1)) / static_cast<double>(j + 1);

    double e_g = -prm.w1 + series_g.value();
    double e_hg = (pair.xi / theta_k) *
                  (-prm.w1 * model.stationary_lst(theta_k) + series_hg.value());
    double e_hv = (pair.xi / theta_k) * model.stationary_v_exp(theta_k);
    double m = prm.w1 + prm.w2 * e_hv + e_g - e_hg;
    return {m, 2.0 * tail};
}

struct SigmaEstimate {
    double s = 0.0;
    double s_se = 0.0;
    double sigma2 = 0.0;
    double sigma2_se = 0.0;
    std::vector<double> cov;     // c_i, i = 1..lag_cap
    std::vector<double> cov_se;
    std::int64_t paths = 0;
    std::int64_t path_len = 0;
};

// Second moment s_k and FCLT variance sigma_k^2 = s - m^2 + 2 sum c_i by
// Monte Carlo over stationary paths; covariances are centred at the analytic
// mean, so the per-path estimates are unbiased and the across-path spread
// gives the standard errors.
inline SigmaEstimate estimate_sigma(const HypothesisPair& pair, int k, std::int64_t n_paths,
                                    std::int64_t path_len, int lag_cap, std::uint64_t seed,
                                    int threads = 0) {
    ClrtParams prm(pair);
    const LevyModel& model = pair.model(k);
    double m = mean_increment(pair, k).value;
    if (path_len <= lag_cap + 1)
        throw std::invalid_argument("estimate_sigma: path_len must exceed lag_cap + 1");

    const std::int64_t chunk = 16;
    const std::int64_t n_chunks = chunk_count(n_paths, chunk);
    struct Slot {
        std::vector<double> cov_sum, cov_sum2;
        double s_sum = 0.0, s_sum2 = 0.0, sig_sum = 0.0, sig_sum2 = 0.0;
    };
    std::vector<Slot> slots(static_cast<std::size_t>(n_chunks));
    const int L = lag_cap;
    parallel_chunks(n_paths, chunk, threads, [&](std::int64_t c, std::int64_t lo, std::int64_t hi) {
        Slot& slot = slots[static_cast<std::size_t>(c)];
        slot.cov_sum.assign(static_cast<std::size_t>(L), 0.0);
        slot.cov_sum2.assign(static_cast<std::size_t>(L), 0.0);
        std::vector<double> z(static_cast<std::size_t>(path_len));
        for (std::int64_t r = lo; r < hi; ++r) {
            Rng rng = make_rng(seed, 43, static_cast<std::uint64_t>(r));
            double v = sample_stationary_initial(model, rng);
            CpPathEngine eng(model, pair.xi, v, Rng(rng()));
            std::int64_t got = 0;
            double v_prev = v;
            while (got < path_len) {
                auto ev = eng.next();
                if (!ev.is_sample) continue;
                z[static_cast<std::size_t>(got)] = prm.increment(v_prev, ev.v == 0.0);
                v_prev = ev.v;
                ++got;
            }
            NeumaierSum s2;
            for (double zi : z) s2.add(zi * zi);
            double s_path = s2.value() / static_cast<double>(path_len);
            double sig_path = s_path - m * m;
            for (int i = 1; i <= L; ++i) {
                NeumaierSum cs;
                for (std::int64_t t = 0; t + i < path_len; ++t)
                    cs.add((z[static_cast<std::size_t>(t)] - m) *
                           (z[static_cast<std::size_t>(t + i)] - m));
                double c_path = cs.value() / static_cast<double>(path_len - i);
                slot.cov_sum[static_cast<std::size_t>(i - 1)] += c_path;
                slot.cov_sum2[static_cast<std::size_t>(i - 1)] += c_path * c_path;
                sig_path += 2.0 * c_path;
            }
            slot.s_sum += s_path;
            slot.s_sum2 += s_path * s_path;
            slot.sig_sum += sig_path;
            slot.sig_sum2 += sig_path * sig_path;
        }
    });
    SigmaEstimate out;
    out.paths = n_paths;
    out.path_len = path_len;
    out.cov.resize(static_cast<std::size_t>(L));
    out.cov_se.resize(static_cast<std::size_t>(L));
    NeumaierSum ssum, ssum2, gsum, gsum2;
    for (auto& slot : slots) {
        ssum.add(slot.s_sum);
        ssum2.add(slot.s_sum2);
        gsum.add(slot.sig_sum);
        gsum2.add(slot.sig_sum2);
    }
    MeanSe sm = mean_se(ssum.value(), ssum2.value(), n_paths);
    out.s = sm.mean;
    out.s_se = sm.se;
    MeanSe gm = mean_se(gsum.value(), gsum2.value(), n_paths);
    out.sigma2 = gm.mean;
    out.sigma2_se = gm.se;
    for (int i = 0; i < L; ++i) {
        NeumaierSum cs, cs2;
        for (auto& slot : slots) {
            cs.add(slot.cov_sum[static_cast<std::size_t>(i)]);
            cs2.add(slot.cov_sum2[static_cast<std::size_t>(i)]);
        }
        MeanSe cm = mean_se(cs.value(), cs2.value(), n_paths);
        out.cov[static_cast<std::size_t>(i)] = cm.mean;
        out.cov_se[static_cast<std::size_t>(i)] = cm.se;
    }
    return out;
}

// Brownian-motion approximations of the error probability and the expected
// rejection time.
inline double brownian_alpha(double m0, double sigma0_sq, double x) {
    if (!(m0 < 0.0)) throw std::invalid_argument("brownian_alpha: m0 must be negative");
    if (!(sigma0_sq > 0.0)) throw std::invalid_argument("brownian_alpha: sigma0^2 must be positive");
    if (x < 0.0) throw std::invalid_argument("brownian_alpha: x must be >= 0");
    return std::exp(2.0 * m0 * x / sigma0_sq);
}

inline double brownian_tau(double m1, double x) {
    if (m1 == 0.0) throw std::invalid_argument("brownian_tau: m1 must be nonzero");
    return x / std::abs(m1);
}

// Stationary cumulant of one increment under H0. The integrand keeps the xi
// factor inside both powers, matching exp(beta * g(V)); with that choice
// kappa1(1) = 0 (the conditional likelihood ratio integrates to one).
inline double kappa1(const HypothesisPair& pair, double beta, std::int64_t mc_reps = 200000,
                     std::uint64_t seed = 1) {
    ClrtParams prm(pair);
    if (prm.degenerate())
        throw std::invalid_argument("kappa1: degenerate pair has no cumulant structure");
    const LevyModel& m0 = pair.model0;
    if (!m0.stable()) throw std::invalid_argument("kappa1: H0 model must be stable");
    double s = beta * prm.theta1 + (1.0 - beta) * prm.theta0;
    if (!(s > 0.0)) throw std::invalid_argument("kappa1: beta outside transform domain");
    double t1 = pair.xi * s * m0.phi_prime0() / (prm.theta0 * m0.phi(s));
    auto f = [&](double v) {
        return std::pow(prm.theta1 - pair.xi * std::exp(-prm.theta1 * v), beta) *
               std::pow(prm.theta0 - pair.xi * std::exp(-prm.theta0 * v), 1.0 - beta);
    };
    double e_f;
    if (m0.kind() == LevyModel::Kind::CompoundPoissonExp) {
        double rho = m0.rho();
        double rate = m0.mu() - m0.lambda();
        double f_inf = std::pow(prm.theta1, beta) * std::pow(prm.theta0, 1.0 - beta);
        auto integrand = [&](double u) {
            if (u <= 0.0) return f_inf;
            return f(-std::log(u) / rate);
        };
        e_f = (1.0 - rho) * f(0.0) + rho * adaptive_simpson(integrand, 0.0, 1.0, 1e-13, 48);
    } else {
        NeumaierSum acc;
        for (std::int64_t r = 0; r < mc_reps; ++r) {
            Rng rng = make_rng(seed, 47, static_cast<std::uint64_t>(r));
            acc.add(f(sample_stationary_initial(m0, rng)));
        }
        e_f = acc.value() / static_cast<double>(mc_reps);
    }
    return beta * prm.w1 + std::log(t1 + e_f / prm.theta0);
}

// Positive root of kappa1 (exists since kappa1(0) = 0 with negative slope).
inline double gamma1(const HypothesisPair& pair, std::int64_t mc_reps = 200000,
                     std::uint64_t seed = 1) {
    auto f = [&](double b) { return kappa1(pair, b, mc_reps, seed); };
    double lo = 0.05;
    if (f(lo) >= 0.0) throw std::runtime_error("gamma1: no negative dip right of zero");
    double hi = 1.25;
    double cap = pair.theta1 < pair.theta0
                     ? 0.98 * pair.theta0 / (pair.theta0 - pair.theta1)
                     : 1e6;
    int grow = 0;
    while (f(hi) < 0.0) {
        hi = std::min(hi * 1.5, cap);
        if (++grow > 60 || hi >= cap)
            throw std::runtime_error("gamma1: no positive root bracketed");
    }
    return bisect_root(f, lo, hi, 200);
}

struct GammaSequence {
    std::vector<double> gamma;  // gamma_n, n = 1..n_max
    std::vector<double> se;
    std::int64_t reps = 0;
};

namespace detail {

// h_n(beta) from the covariance recursion, using prefix-sum exponentials.
// zmat is reps x n_max row-major; h1 is pooled over all positions.
struct HnEvaluator {
    const std::vector<double>& z;
    std::int64_t reps;
    int n_max;
    int threads;

    // returns ells[j] = mean_r e^{beta L_{r,j}} for j = 1..n, and pooled h1
    void pass(double beta, int n, std::vector<double>& mean_expL, double& h1) const {
        const std::int64_t chunk = 4096;
        const std::int64_t n_chunks = chunk_count(reps, chunk);
        std::vector<std::vector<double>> slots(static_cast<std::size_t>(n_chunks));
        parallel_chunks(reps, chunk, threads,
                        [&](std::int64_t c, std::int64_t lo, std::int64_t hi) {
                            auto& slot = slots[static_cast<std::size_t>(c)];
                            slot.assign(static_cast<std::size_t>(n) + 1, 0.0);
                            for (std::int64_t r = lo; r < hi; ++r) {
                                const double* zr = &z[static_cast<std::size_t>(r * n_max)];
                                double ell = 0.0;
                                for (int j = 1; j <= n; ++j) {
                                    ell += beta * zr[j - 1];
                                    slot[static_cast<std::size_t>(j)] += std::exp(ell);
                                }
                                for (int j = 0; j < n_max; ++j)
                                    slot[0] += std::exp(beta * zr[j]);
                            }
                        });
        mean_expL.assign(static_cast<std::size_t>(n) + 1, 0.0);
        NeumaierSum pooled;
        for (auto& slot : slots) {
            pooled.add(slot[0]);
            for (int j = 1; j <= n; ++j) mean_expL[static_cast<std::size_t>(j)] += slot[static_cast<std::size_t>(j)];
        }
        for (int j = 1; j <= n; ++j) mean_expL[static_cast<std::size_t>(j)] /= static_cast<double>(reps);
        h1 = pooled.value() / static_cast<double>(reps * n_max);
    }

    double operator()(double beta, int n) const {
        std::vector<double> a;
        double h1 = 0.0;
        pass(beta, n, a, h1);
        // Cov_j = mean e^{beta L_j} - mean e^{beta L_{j-1}} * mean e^{beta Z_j};
        // the per-position mean of e^{beta Z_j} is replaced by the pooled h1
        // (same stationary marginal).
        NeumaierSum hn;
        double h1pow = 1.0;  // h1^{n-j}
        std::vector<double> covs(static_cast<std::size_t>(n) + 1, 0.0);
        for (int j = 2; j <= n; ++j)
            covs[static_cast<std::size_t>(j)] =
                a[static_cast<std::size_t>(j)] - a[static_cast<std::size_t>(j - 1)] * h1;
        for (int j = n; j >= 2; --j) {
            hn.add(h1pow * covs[static_cast<std::size_t>(j)]);
            h1pow *= h1;
        }
        hn.add(std::pow(h1, n));
        return hn.value();
    }
};

// Safeguarded secant with a bisection fallback; each evaluation is a full
// Monte Carlo pass, so the iteration count matters.
inline double root_hn(const HnEvaluator& ev, int n) {
    auto f = [&](double b) { return ev(b, n) - 1.0; };
    double lo = 0.9, hi = 1.1;
    double flo = f(lo), fhi = f(hi);
    int grow = 0;
    while ((flo > 0.0) == (fhi > 0.0)) {
        lo = std::max(lo - 0.2, 1e-3);
        hi += 0.2;
        flo = f(lo);
        fhi = f(hi);
        if (++grow > 14) throw std::runtime_error("gamma_n: MC noise prevents a bracketed root");
    }
    for (int it = 0; it < 40; ++it) {
        double cand = (fhi != flo) ? hi - fhi * (hi - lo) / (fhi - flo) : 0.5 * (lo + hi);
        double mid = 0.5 * (lo + hi);
        if (!(cand > lo && cand < hi)) cand = mid;
        double fc = f(cand);
        if (fc == 0.0 || hi - lo < 1e-8) return cand;
        if ((fc > 0.0) == (fhi > 0.0)) {
            hi = cand;
            fhi = fc;
        } else {
            lo = cand;
            flo = fc;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

// Simulated solutions gamma_n of h_n(gamma_n) = 1 via the covariance
// recursion, with batch-based standard errors. Paths start stationary under
// H0.
inline GammaSequence gamma_n_sequence(const HypothesisPair& pair, int n_max, std::int64_t reps,
                                      std::uint64_t seed, int threads = 0, int n_batches = 20) {
    ClrtParams prm(pair);
    if (prm.degenerate())
        throw std::invalid_argument("gamma_n_sequence: degenerate pair has no root structure");
    if (n_max < 1) throw std::invalid_argument("gamma_n_sequence: n_max must be >= 1");
    const LevyModel& model = pair.model0;

    std::vector<double> z(static_cast<std::size_t>(reps * n_max));
    const std::int64_t chunk = 1024;
    parallel_chunks(reps, chunk, threads, [&](std::int64_t, std::int64_t lo, std::int64_t hi) {
        for (std::int64_t r = lo; r < hi; ++r) {
            Rng rng = make_rng(seed, 53, static_cast<std::uint64_t>(r));
            double v = sample_stationary_initial(model, rng);
            CpPathEngine eng(model, pair.xi, v, Rng(rng()));
            double v_prev = v;
            int got = 0;
            while (got < n_max) {
                auto ev = eng.next();
                if (!ev.is_sample) continue;
                z[static_cast<std::size_t>(r * n_max + got)] = prm.increment(v_prev, ev.v == 0.0);
                v_prev = ev.v;
                ++got;
            }
        }
    });

    GammaSequence out;
    out.reps = reps;
    detail::HnEvaluator full{z, reps, n_max, threads};
    out.gamma.resize(static_cast<std::size_t>(n_max));
    out.se.resize(static_cast<std::size_t>(n_max));
    for (int n = 1; n <= n_max; ++n)
        out.gamma[static_cast<std::size_t>(n - 1)] = detail::root_hn(full, n);

    // batch roots for standard errors
    std::int64_t batch_reps = reps / n_batches;
    if (batch_reps >= 100) {
        std::vector<std::vector<double>> batch_roots(static_cast<std::size_t>(n_batches));
        for (int b = 0; b < n_batches; ++b) {
            std::vector<double> zb(z.begin() + static_cast<std::ptrdiff_t>(b * batch_reps * n_max),
                                   z.begin() +
                                       static_cast<std::ptrdiff_t>((b + 1) * batch_reps * n_max));
            detail::HnEvaluator bev{zb, batch_reps, n_max, threads};
            auto& roots = batch_roots[static_cast<std::size_t>(b)];
            roots.resize(static_cast<std::size_t>(n_max));
            for (int n = 1; n <= n_max; ++n) roots[static_cast<std::size_t>(n - 1)] = detail::root_hn(bev, n);
        }
        for (int n = 0; n < n_max; ++n) {
            NeumaierSum s, s2;
            for (int b = 0; b < n_batches; ++b) {
                double g = batch_roots[static_cast<std::size_t>(b)][static_cast<std::size_t>(n)];
                s.add(g);
                s2.add(g * g);
            }
            MeanSe ms = mean_se(s.value(), s2.value(), n_batches);
            out.se[static_cast<std::size_t>(n)] = ms.se;
        }
    }
    return out;
}

}  // namespace levyq
