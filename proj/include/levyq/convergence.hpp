#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "levyq/levy_model.hpp"
#include "levyq/math_util.hpp"
#include "levyq/parallel.hpp"
#include "levyq/rng.hpp"
#include "levyq/simulate.hpp"

namespace levyq {

// k1(v): sum over n of (E[V_n | V_0 = v] - E V) equals xi * k1(v).
inline double k1(const LevyModel& model, double v) {
    double a = model.phi_prime0();
    if (!(a > 0.0)) throw std::invalid_argument("k1: model is unstable");
    double b = model.phi_deriv_at0(2);
    double c = model.phi_deriv_at0(3);
    return v * v / (2.0 * a) + c / (6.0 * a * a) - b * b / (4.0 * a * a * a);
}

// k2(v, alpha): sum over n of (E[e^{-alpha V_n} | V_0 = v] - E e^{-alpha V})
// equals xi * k2(v, alpha).
inline double k2(const LevyModel& model, double v, double alpha) {
    double a = model.phi_prime0();
    if (!(a > 0.0)) throw std::invalid_argument("k2: model is unstable");
    if (!(alpha > 0.0)) throw std::invalid_argument("k2: alpha must be > 0");
    double f = model.phi(alpha);
    double b = model.phi_deriv_at0(2);
    return -(std::exp(-alpha * v) + alpha * v) / f + alpha * a / (f * f) +
           (alpha / f) * b / (2.0 * a);
}

// k3(v, alpha) = -d/dalpha k2(v, alpha): sum over n of
// (E[V_n e^{-alpha V_n} | V_0 = v] - E[V e^{-alpha V}]) equals xi * k3(v, alpha).
inline double k3(const LevyModel& model, double v, double alpha) {
    double a = model.phi_prime0();
    if (!(a > 0.0)) throw std::invalid_argument("k3: model is unstable");
    if (!(alpha > 0.0)) throw std::invalid_argument("k3: alpha must be > 0");
    double f = model.phi(alpha);
    double fp = model.phi_deriv(alpha, 1);
    double b = model.phi_deriv_at0(2);
    double e = std::exp(-alpha * v);
    return v * (1.0 - e) / f - fp * (e + alpha * v) / (f * f) -
           a * (1.0 - 2.0 * alpha * fp / f) / (f * f) -
           (b / (2.0 * a)) * (1.0 - alpha * fp / f) / f;
}

// k2 at alpha -> infinity tends to phi''(0)/(2 phi'(0)) - v.
inline double k2_limit_large_alpha(const LevyModel& model, double v) {
    return model.phi_deriv_at0(2) / (2.0 * model.phi_prime0()) - v;
}

// sup over alpha > 0 of |k2(v, alpha)|: log-grid scan plus golden-section
// refinement, compared against the alpha -> infinity limit.
inline double k2_star(const LevyModel& model, double v) {
    double best = std::abs(k2_limit_large_alpha(model, v));
    const int n_grid = 240;
    const double lo = std::log(1e-6), hi = std::log(1e7);
    double best_x = lo;
    double best_grid = -1.0;
    for (int i = 0; i <= n_grid; ++i) {
        double x = lo + (hi - lo) * i / n_grid;
        double val = std::abs(k2(model, v, std::exp(x)));
        if (val > best_grid) {
            best_grid = val;
            best_x = x;
        }
    }
    double span = (hi - lo) / n_grid;
    double refined = golden_section_max(
        [&](double x) { return std::abs(k2(model, v, std::exp(x))); }, best_x - span,
        best_x + span);
    best_grid = std::max(best_grid, std::abs(k2(model, v, std::exp(refined))));
    return std::max(best, best_grid);
}

struct AbsoluteSumBounds {
    double lst_sum = 0.0;  // sum of |LST deviations| from V_0 = 0
    double ev_sum = 0.0;   // sum of |mean deviations| from V_0 = 0
    double xi_bound = 0.0; // uniform-in-alpha bound on lst_sum
};

inline AbsoluteSumBounds absolute_sum_bounds(const LevyModel& model, double xi, double alpha) {
    double a = model.phi_prime0();
    if (!(a > 0.0)) throw std::invalid_argument("absolute_sum_bounds: model is unstable");
    double b = model.phi_deriv_at0(2);
    double c = model.phi_deriv_at0(3);
    double f = model.phi(alpha);
    AbsoluteSumBounds out;
    out.lst_sum = xi * (-1.0 / f + alpha * a / (f * f) + (alpha / f) * b / (2.0 * a));
    out.ev_sum = xi * (b * b / (4.0 * a * a * a) - c / (6.0 * a * a));
    out.xi_bound = xi * b / (2.0 * a * a);
    return out;
}

enum class ObsFunction { Identity, Exp, VExp };

inline double eval_obs(ObsFunction g, double alpha, double v) {
    switch (g) {
        case ObsFunction::Identity: return v;
        case ObsFunction::Exp: return std::exp(-alpha * v);
        case ObsFunction::VExp: return v * std::exp(-alpha * v);
    }
    return 0.0;
}

struct SeriesEstimate {
    double mc = 0.0;
    double se = 0.0;
    double target = 0.0;
    double partial_half = 0.0;  // estimate truncated at n/2, tail diagnostic
    std::int64_t reps = 0;

    double z() const { return se > 0.0 ? (mc - target) / se : 0.0; }
};

namespace detail {

// One coupled replication: path A starts empty, path B stationary, shared
// driving noise. Returns the truncated sum of g(A_n) - g(B_n) and the
// partial sum at n/2. Terms vanish exactly once the paths merge.
template <class Accum>
void coupled_series_rep(const LevyModel& model, double xi, std::int64_t n_trunc, ObsFunction g,
                        double alpha, std::uint64_t seed, std::uint64_t stream, std::int64_t rep,
                        Accum&& accum) {
    Rng init_rng = make_rng(seed, stream, static_cast<std::uint64_t>(rep));
    double v_star = sample_stationary_initial(model, init_rng);
    if (v_star == 0.0) {
        accum(0.0, 0.0);
        return;
    }
    NeumaierSum sum;
    double partial_half = 0.0;
    std::int64_t half = n_trunc / 2;
    if (model.kind() == LevyModel::Kind::CompoundPoissonExp) {
        CoupledCpEngine eng(model, xi, 0.0, v_star, Rng(init_rng()));
        std::int64_t taken = 0;
        while (taken < n_trunc && !eng.coupled()) {
            auto ev = eng.next();
            if (!ev.is_sample) continue;
            ++taken;
            sum.add(eval_obs(g, alpha, ev.va) - eval_obs(g, alpha, ev.vb));
            if (taken == half) partial_half = sum.value();
        }
        if (taken < half) partial_half = sum.value();
    } else {
        double h = 1e-3 / xi;
        GammaGridEngine ea(model, h, 0.0, Rng(derive_seed(seed, stream + 1000, static_cast<std::uint64_t>(rep))));
        GammaGridEngine eb(model, h, v_star, Rng(derive_seed(seed, stream + 1000, static_cast<std::uint64_t>(rep))));
        double t = 0.0;
        for (std::int64_t i = 1; i <= n_trunc; ++i) {
            t += draw_exponential(init_rng, xi);
            ea.advance_to_epoch(t);
            eb.advance_to_epoch(t);
            if (ea.workload() == eb.workload()) break;
            sum.add(eval_obs(g, alpha, ea.workload()) - eval_obs(g, alpha, eb.workload()));
            if (i <= half) partial_half = sum.value();
        }
    }
    accum(sum.value(), partial_half);
}

}  // namespace detail

// Monte Carlo estimate of sum_{n<=n_trunc} (E[g(V_n) | V_0 = 0] - E g(V)).
inline SeriesEstimate mc_series_deviation(const LevyModel& model, double xi, ObsFunction g,
                                          double alpha, std::int64_t n_trunc, std::int64_t reps,
                                          std::uint64_t seed, int threads = 0) {
    double target = 0.0;
    switch (g) {
        case ObsFunction::Identity: target = xi * k1(model, 0.0); break;
        case ObsFunction::Exp: target = xi * k2(model, 0.0, alpha); break;
        case ObsFunction::VExp: target = xi * k3(model, 0.0, alpha); break;
    }
    const std::int64_t chunk = 4096;
    const std::int64_t n_chunks = chunk_count(reps, chunk);
    struct Slot {
        double s = 0.0, s2 = 0.0, half = 0.0;
    };
    std::vector<Slot> slots(static_cast<std::size_t>(n_chunks));
    parallel_chunks(reps, chunk, threads, [&](std::int64_t c, std::int64_t lo, std::int64_t hi) {
        Slot& slot = slots[static_cast<std::size_t>(c)];
        for (std::int64_t r = lo; r < hi; ++r) {
            detail::coupled_series_rep(model, xi, n_trunc, g, alpha, seed, 31, r,
                                       [&](double full, double half) {
                                           slot.s += full;
                                           slot.s2 += full * full;
                                           slot.half += half;
                                       });
        }
    });
    NeumaierSum s, s2, h;
    for (auto& slot : slots) {
        s.add(slot.s);
        s2.add(slot.s2);
        h.add(slot.half);
    }
    MeanSe m = mean_se(s.value(), s2.value(), reps);
    SeriesEstimate out;
    out.mc = m.mean;
    out.se = m.se;
    out.target = target;
    out.partial_half = h.value() / static_cast<double>(reps);
    out.reps = reps;
    return out;
}

struct PastaCheck {
    double integral_side = 0.0;  // xi * integral of E[g(V(t)) - g(V)] dt
    double sum_side = 0.0;       // sum of E[g(V_n) - g(V)]
    double se_diff = 0.0;        // paired standard error of the difference
    std::int64_t reps = 0;

    double z() const { return se_diff > 0.0 ? (integral_side - sum_side) / se_diff : 0.0; }
};

// Verifies the continuous-time/Poisson-epoch equivalence on coupled exact
// paths; the time integral over each linear segment is evaluated in closed
// form, so there is no discretisation error.
inline PastaCheck pasta_difference_check(const LevyModel& model, double xi, ObsFunction g,
                                         double alpha, std::int64_t n_trunc, std::int64_t reps,
                                         std::uint64_t seed, int threads = 0) {
    if (model.kind() != LevyModel::Kind::CompoundPoissonExp)
        throw std::invalid_argument(
            "pasta_difference_check: exact path integrals require compound Poisson input");
    if (g == ObsFunction::VExp)
        throw std::invalid_argument("pasta_difference_check: g must be identity or exp");
    const std::int64_t chunk = 4096;
    const std::int64_t n_chunks = chunk_count(reps, chunk);
    struct Slot {
        double si = 0.0, ss = 0.0, d2 = 0.0;
    };
    std::vector<Slot> slots(static_cast<std::size_t>(n_chunks));
    parallel_chunks(reps, chunk, threads, [&](std::int64_t c, std::int64_t lo, std::int64_t hi) {
        Slot& slot = slots[static_cast<std::size_t>(c)];
        for (std::int64_t r = lo; r < hi; ++r) {
            Rng init_rng = make_rng(seed, 37, static_cast<std::uint64_t>(r));
            double v_star = sample_stationary_initial(model, init_rng);
            double integ = 0.0, summ = 0.0;
            if (v_star > 0.0) {
                CoupledCpEngine eng(model, xi, 0.0, v_star, Rng(init_rng()));
                NeumaierSum isum, ssum;
                std::int64_t taken = 0;
                while (taken < n_trunc && !eng.coupled()) {
                    auto ev = eng.next();
                    double la = eng.last_segment_level_a();
                    double lb = eng.last_segment_level_b();
                    double dt = eng.last_segment_dt();
                    if (g == ObsFunction::Identity)
                        isum.add(segment_integral_identity(la, dt) -
                                 segment_integral_identity(lb, dt));
                    else
                        isum.add(segment_integral_exp(la, dt, alpha) -
                                 segment_integral_exp(lb, dt, alpha));
                    if (ev.is_sample) {
                        ++taken;
                        ssum.add(eval_obs(g, alpha, ev.va) - eval_obs(g, alpha, ev.vb));
                    }
                }
                integ = xi * isum.value();
                summ = ssum.value();
            }
            slot.si += integ;
            slot.ss += summ;
            double d = integ - summ;
            slot.d2 += d * d;
        }
    });
    NeumaierSum si, ss, d2;
    for (auto& slot : slots) {
        si.add(slot.si);
        ss.add(slot.ss);
        d2.add(slot.d2);
    }
    PastaCheck out;
    out.reps = reps;
    out.integral_side = si.value() / static_cast<double>(reps);
    out.sum_side = ss.value() / static_cast<double>(reps);
    double dmean = out.integral_side - out.sum_side;
    double var = (d2.value() - static_cast<double>(reps) * dmean * dmean) /
                 (static_cast<double>(reps) - 1.0);
    out.se_diff = std::sqrt(std::max(var, 0.0) / static_cast<double>(reps));
    return out;
}

}  // namespace levyq
