#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "levyq/levy_model.hpp"
#include "levyq/math_util.hpp"
#include "levyq/parallel.hpp"
#include "levyq/rng.hpp"

namespace levyq {

enum class InitKind { Empty, Stationary, Fixed };

struct SimConfig {
    double xi = 1.0;
    std::int64_t n = 1000;
    InitKind init = InitKind::Empty;
    double fixed_v = 0.0;
    double grid_step = 0.0;  // Gamma input only; 0 -> default 1e-3/xi
    double warmup = 50.0;    // Stationary init on models without a closed-form sampler
    std::uint64_t seed = 1;

    void validate() const {
        if (!(xi > 0.0)) throw std::invalid_argument("SimConfig: xi must be > 0");
        if (n < 1) throw std::invalid_argument("SimConfig: n must be >= 1");
        if (grid_step < 0.0) throw std::invalid_argument("SimConfig: grid_step must be > 0");
    }
    double effective_grid_step() const { return grid_step > 0.0 ? grid_step : 1e-3 / xi; }
};

// Workload observed at Poisson epochs. values holds V_0..V_n; zero holds
// Y_1..Y_n with Y_i = (V_i == 0) exactly; epochs holds S_1..S_n.
struct SamplePath {
    std::vector<double> values;
    std::vector<std::uint8_t> zero;
    std::vector<double> epochs;
    std::string model_tag;
    std::uint64_t seed = 0;

    std::int64_t n() const { return static_cast<std::int64_t>(zero.size()); }
};

struct QbpSample {
    std::vector<std::int64_t> durations;
    std::int64_t offset = 0;  // samples discarded before (and including) the first zero
};

// Drains the workload at unit rate over dt, with an exact floor at zero.
inline double drain(double v, double dt) { return v > dt ? v - dt : 0.0; }

// Event-driven simulation of the compound-Poisson-input workload: the jump
// stream (rate lambda, Exp(mu) marks) is merged with the sampling stream
// (rate xi). Recorded values are exact; in particular zeros are exact.
class CpPathEngine {
  public:
    CpPathEngine(const LevyModel& model, double xi, double v0, Rng rng)
        : lambda_(model.lambda()), mu_(model.mu()), xi_(xi), rng_(std::move(rng)), v_(v0) {
        if (model.kind() != LevyModel::Kind::CompoundPoissonExp)
            throw std::invalid_argument("CpPathEngine: compound Poisson model required");
        next_jump_ = lambda_ > 0.0 ? draw_exponential(rng_, lambda_) : kInf;
        next_sample_ = draw_exponential(rng_, xi_);
    }

    struct Event {
        double t;
        double v;  // workload just after the event
        bool is_sample;
    };

    Event next() {
        bool is_sample = next_sample_ <= next_jump_;
        double te = is_sample ? next_sample_ : next_jump_;
        seg_level_ = v_;
        seg_dt_ = te - t_;
        v_ = drain(v_, seg_dt_);
        t_ = te;
        if (is_sample) {
            next_sample_ = t_ + draw_exponential(rng_, xi_);
        } else {
            v_ += draw_exponential(rng_, mu_);
            next_jump_ = t_ + (lambda_ > 0.0 ? draw_exponential(rng_, lambda_) : kInf);
        }
        return {t_, v_, is_sample};
    }

    // Level and length of the linear segment consumed by the last next().
    double last_segment_level() const { return seg_level_; }
    double last_segment_dt() const { return seg_dt_; }
    double workload() const { return v_; }
    double time() const { return t_; }

  private:
    static constexpr double kInf = std::numeric_limits<double>::infinity();
    double lambda_, mu_, xi_;
    Rng rng_;
    double v_ = 0.0;
    double t_ = 0.0;
    double next_jump_ = 0.0;
    double next_sample_ = 0.0;
    double seg_level_ = 0.0;
    double seg_dt_ = 0.0;
};

// Two reflected workloads driven by one event stream (shared jumps and
// sampling epochs), differing only in the initial level. Levels stay ordered
// and merge exactly at the first zero of the upper path; after that the
// difference is identically zero, which the series estimators exploit.
class CoupledCpEngine {
  public:
    CoupledCpEngine(const LevyModel& model, double xi, double v_lo, double v_hi, Rng rng)
        : lambda_(model.lambda()), mu_(model.mu()), xi_(xi), rng_(std::move(rng)),
          va_(v_lo), vb_(v_hi) {
        next_jump_ = lambda_ > 0.0 ? draw_exponential(rng_, lambda_) : kInf;
        next_sample_ = draw_exponential(rng_, xi_);
    }

    struct Event {
        double t;
        double va;
        double vb;
        bool is_sample;
    };

    Event next() {
        bool is_sample = next_sample_ <= next_jump_;
        double te = is_sample ? next_sample_ : next_jump_;
        seg_a_ = va_;
        seg_b_ = vb_;
        seg_dt_ = te - t_;
        va_ = drain(va_, seg_dt_);
        vb_ = drain(vb_, seg_dt_);
        t_ = te;
        if (is_sample) {
            next_sample_ = t_ + draw_exponential(rng_, xi_);
        } else {
            double mark = draw_exponential(rng_, mu_);
            va_ += mark;
            vb_ += mark;
            next_jump_ = t_ + (lambda_ > 0.0 ? draw_exponential(rng_, lambda_) : kInf);
        }
        return {t_, va_, vb_, is_sample};
    }

    bool coupled() const { return va_ == vb_; }
    double last_segment_level_a() const { return seg_a_; }
    double last_segment_level_b() const { return seg_b_; }
    double last_segment_dt() const { return seg_dt_; }

  private:
    static constexpr double kInf = std::numeric_limits<double>::infinity();
    double lambda_, mu_, xi_;
    Rng rng_;
    double va_, vb_;
    double t_ = 0.0;
    double next_jump_ = 0.0;
    double next_sample_ = 0.0;
    double seg_a_ = 0.0, seg_b_ = 0.0, seg_dt_ = 0.0;
};

// Exact integral of v(t) over a drain segment of length dt starting at level v.
inline double segment_integral_identity(double v, double dt) {
    if (dt <= v) return v * dt - 0.5 * dt * dt;
    return 0.5 * v * v;
}

// Exact integral of e^{-alpha v(t)} over a drain segment.
inline double segment_integral_exp(double v, double dt, double alpha) {
    double busy = std::min(v, dt);
    double r = (std::exp(-alpha * (v - busy)) - std::exp(-alpha * v)) / alpha;
    if (dt > v) r += dt - v;
    return r;
}

// Grid Lindley recursion for Gamma input: increments Gamma(beta*h, gamma)
// per step of size h, reflected at zero by the max.
class GammaGridEngine {
  public:
    GammaGridEngine(const LevyModel& model, double h, double v0, Rng rng)
        : shape_(model.beta() * h), rate_(model.gamma()), h_(h), rng_(std::move(rng)), v_(v0) {
        if (model.kind() != LevyModel::Kind::GammaSubordinator)
            throw std::invalid_argument("GammaGridEngine: gamma model required");
        if (!(h > 0.0)) throw std::invalid_argument("GammaGridEngine: grid step must be > 0");
    }

    void step() {
        double dj = draw_gamma(rng_, shape_, rate_);
        double x = v_ + dj - h_;
        v_ = x > 0.0 ? x : 0.0;
        ++index_;
    }

    // Advances so the current grid point is the nearest one <= epoch.
    void advance_to_epoch(double epoch) {
        std::int64_t target = static_cast<std::int64_t>(std::floor(epoch / h_));
        while (index_ < target) step();
    }

    double workload() const { return v_; }
    std::int64_t grid_index() const { return index_; }

  private:
    double shape_, rate_, h_;
    Rng rng_;
    double v_;
    std::int64_t index_ = 0;
};

// Draws from the stationary workload law: closed form for compound Poisson
// with exponential jobs (atom 1-rho at zero, else Exp(mu-lambda)), warmup
// simulation from empty otherwise.
inline double sample_stationary_initial(const LevyModel& model, Rng& rng, double warmup = 50.0,
                                        double grid_step = 1e-3) {
    if (!model.stable())
        throw std::invalid_argument("sample_stationary_initial: model is unstable");
    if (model.kind() == LevyModel::Kind::CompoundPoissonExp) {
        if (draw_uniform(rng) >= model.rho()) return 0.0;
        return draw_exponential(rng, model.mu() - model.lambda());
    }
    GammaGridEngine eng(model, grid_step, 0.0, Rng(rng()));
    std::int64_t steps = static_cast<std::int64_t>(std::ceil(warmup / grid_step));
    for (std::int64_t i = 0; i < steps; ++i) eng.step();
    return eng.workload();
}

inline double initial_workload(const LevyModel& model, const SimConfig& cfg, Rng& rng) {
    switch (cfg.init) {
        case InitKind::Empty: return 0.0;
        case InitKind::Fixed: return cfg.fixed_v;
        case InitKind::Stationary:
            return sample_stationary_initial(model, rng, cfg.warmup, cfg.effective_grid_step());
    }
    return 0.0;
}

inline SamplePath simulate_path(const LevyModel& model, const SimConfig& cfg) {
    cfg.validate();
    SamplePath path;
    path.model_tag = model.tag();
    path.seed = cfg.seed;
    path.values.reserve(static_cast<std::size_t>(cfg.n) + 1);
    path.zero.reserve(static_cast<std::size_t>(cfg.n));
    path.epochs.reserve(static_cast<std::size_t>(cfg.n));

    Rng rng = make_rng(cfg.seed, 0, 0);
    double v0 = initial_workload(model, cfg, rng);
    path.values.push_back(v0);

    if (model.kind() == LevyModel::Kind::CompoundPoissonExp) {
        CpPathEngine eng(model, cfg.xi, v0, std::move(rng));
        std::int64_t recorded = 0;
        while (recorded < cfg.n) {
            auto ev = eng.next();
            if (!ev.is_sample) continue;
            path.values.push_back(ev.v);
            path.zero.push_back(ev.v == 0.0 ? 1 : 0);
            path.epochs.push_back(ev.t);
            ++recorded;
        }
    } else {
        double h = cfg.effective_grid_step();
        GammaGridEngine eng(model, h, v0, Rng(derive_seed(cfg.seed, 1, 0)));
        double t = 0.0;
        for (std::int64_t i = 0; i < cfg.n; ++i) {
            t += draw_exponential(rng, cfg.xi);
            eng.advance_to_epoch(t);
            double v = eng.workload();
            path.values.push_back(v);
            path.zero.push_back(v == 0.0 ? 1 : 0);
            path.epochs.push_back(t);
        }
    }
    return path;
}

// Quasi busy periods: drop everything up to and including the first observed
// zero, then record gaps between consecutive zeros. A trailing incomplete
// period is discarded so the durations stay i.i.d.
inline QbpSample extract_qbps(const SamplePath& path) {
    QbpSample out;
    std::int64_t n = path.n();
    std::int64_t prev_zero = -1;
    for (std::int64_t i = 1; i <= n; ++i) {
        if (!path.zero[static_cast<std::size_t>(i - 1)]) continue;
        if (prev_zero < 0) {
            out.offset = i;
        } else {
            out.durations.push_back(i - prev_zero);
        }
        prev_zero = i;
    }
    if (prev_zero < 0) out.offset = n;
    return out;
}

// Monte Carlo estimates of P(V_k = 0 | V_0 = 0) for k = 1..k_max.
inline std::vector<MeanSe> mc_zero_probs(const LevyModel& model, double xi, int k_max,
                                         std::int64_t reps, std::uint64_t seed, int threads = 0,
                                         double grid_step = 0.0) {
    if (k_max < 1) throw std::invalid_argument("mc_zero_probs: k_max must be >= 1");
    const std::int64_t chunk = 8192;
    const std::int64_t n_chunks = chunk_count(reps, chunk);
    std::vector<std::vector<std::int64_t>> counts(static_cast<std::size_t>(n_chunks),
                                                  std::vector<std::int64_t>(k_max, 0));
    const bool is_cp = model.kind() == LevyModel::Kind::CompoundPoissonExp;
    const double h = grid_step > 0.0 ? grid_step : 1e-3 / xi;
    parallel_chunks(reps, chunk, threads, [&](std::int64_t c, std::int64_t lo, std::int64_t hi) {
        auto& slot = counts[static_cast<std::size_t>(c)];
        for (std::int64_t r = lo; r < hi; ++r) {
            Rng rng = make_rng(seed, 17, static_cast<std::uint64_t>(r));
            if (is_cp) {
                CpPathEngine eng(model, xi, 0.0, std::move(rng));
                int k = 0;
                while (k < k_max) {
                    auto ev = eng.next();
                    if (!ev.is_sample) continue;
                    if (ev.v == 0.0) ++slot[static_cast<std::size_t>(k)];
                    ++k;
                }
            } else {
                GammaGridEngine eng(model, h, 0.0, Rng(derive_seed(seed, 18, static_cast<std::uint64_t>(r))));
                double t = 0.0;
                for (int k = 0; k < k_max; ++k) {
                    t += draw_exponential(rng, xi);
                    eng.advance_to_epoch(t);
                    if (eng.workload() == 0.0) ++slot[static_cast<std::size_t>(k)];
                }
            }
        }
    });
    std::vector<MeanSe> out;
    out.reserve(static_cast<std::size_t>(k_max));
    for (int k = 0; k < k_max; ++k) {
        std::int64_t hits = 0;
        for (auto& slot : counts) hits += slot[static_cast<std::size_t>(k)];
        out.push_back(binomial_mean_se(hits, reps));
    }
    return out;
}

inline MeanSe mc_zero_prob(const LevyModel& model, double xi, int k, std::int64_t reps,
                           std::uint64_t seed, int threads = 0) {
    return mc_zero_probs(model, xi, k, reps, seed, threads).back();
}

}  // namespace levyq
