#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "levyq/math_util.hpp"

namespace levyq {

// Subordinator-minus-unit-drift input models with closed-form Laplace
// exponents. phi(a) = a - integral (1 - e^{-ax}) nu(dx); the inverse psi and
// all derivatives feed the zero-probability recursions.
class LevyModel {
  public:
    enum class Kind { CompoundPoissonExp, GammaSubordinator };

    static LevyModel compound_poisson_exp(double lambda, double mu) {
        if (!(lambda >= 0.0) || !(mu > 0.0))
            throw std::invalid_argument("compound_poisson_exp: need lambda >= 0, mu > 0");
        LevyModel m;
        m.kind_ = Kind::CompoundPoissonExp;
        m.a_ = lambda;
        m.b_ = mu;
        return m;
    }

    static LevyModel gamma_subordinator(double beta, double gamma) {
        if (!(beta > 0.0) || !(gamma > 0.0))
            throw std::invalid_argument("gamma_subordinator: need beta, gamma > 0");
        LevyModel m;
        m.kind_ = Kind::GammaSubordinator;
        m.a_ = beta;
        m.b_ = gamma;
        return m;
    }

    Kind kind() const { return kind_; }
    double lambda() const { return a_; }
    double mu() const { return b_; }
    double beta() const { return a_; }
    double gamma() const { return b_; }

    // Expected input per unit time.
    double rho() const {
        return kind_ == Kind::CompoundPoissonExp ? a_ / b_ : a_ / b_;
    }
    bool stable() const { return rho() < 1.0; }
    double phi_prime0() const { return 1.0 - rho(); }

    double phi(double alpha) const {
        if (alpha < 0.0) throw std::invalid_argument("phi: alpha must be >= 0");
        switch (kind_) {
            case Kind::CompoundPoissonExp:
                return a_ * (b_ / (b_ + alpha) - 1.0) + alpha;
            case Kind::GammaSubordinator:
                return alpha - a_ * std::log1p(alpha / b_);
        }
        return 0.0;
    }

    // Exact k-th derivative of phi at alpha, k >= 1.
    double phi_deriv(double alpha, int k) const {
        if (k < 1) throw std::invalid_argument("phi_deriv: k must be >= 1 (use phi for k=0)");
        if (alpha < 0.0) throw std::invalid_argument("phi_deriv: alpha must be >= 0");
        switch (kind_) {
            case Kind::CompoundPoissonExp: {
                // d^k/da^k [mu/(mu+a)] = (-1)^k k! mu/(mu+a)^{k+1}
                if (k == 1) return 1.0 - a_ * b_ / ((b_ + alpha) * (b_ + alpha));
                double sign = (k % 2 == 0) ? 1.0 : -1.0;
                return sign * a_ * b_ * static_cast<double>(factorial_u64(k)) /
                       std::pow(b_ + alpha, k + 1);
            }
            case Kind::GammaSubordinator: {
                if (k == 1) return 1.0 - a_ / (b_ + alpha);
                double sign = (k % 2 == 0) ? 1.0 : -1.0;
                return sign * a_ * static_cast<double>(factorial_u64(k - 1)) /
                       std::pow(b_ + alpha, k);
            }
        }
        return 0.0;
    }

    bool has_closed_form_psi() const { return kind_ == Kind::CompoundPoissonExp; }

    // Inverse of phi: the unique root alpha > psi(0) of phi(alpha) = xi.
    double psi(double xi) const {
        if (!(xi > 0.0)) throw std::invalid_argument("psi: xi must be > 0");
        if (kind_ == Kind::CompoundPoissonExp) {
            double u = xi + a_ - b_;
            return 0.5 * (u + std::sqrt(u * u + 4.0 * xi * b_));
        }
        return psi_by_root_search(xi);
    }

    // psi^{(1)}(xi) .. psi^{(K)}(xi) via the inverse-function recursion: the
    // order-k term sums over all integer tuples m with m_1 + 2 m_2 + ... = k
    // except the trivial (0,...,0,1).
    std::vector<double> psi_derivs(double xi, int K) const {
        if (K < 1) throw std::invalid_argument("psi_derivs: K must be >= 1");
        if (K > kDerivativeCap)
            throw std::runtime_error("psi_derivs: order " + std::to_string(K) +
                                     " exceeds supported cap " + std::to_string(kDerivativeCap));
        double p = psi(xi);
        std::vector<double> fp(static_cast<std::size_t>(K) + 1, 0.0);  // phi^{(j)}(psi)
        for (int j = 1; j <= K; ++j) fp[static_cast<std::size_t>(j)] = phi_deriv(p, j);
        if (fp[1] == 0.0) throw std::runtime_error("psi_derivs: phi'(psi(xi)) = 0");

        std::vector<double> d(static_cast<std::size_t>(K) + 1, 0.0);  // d[j] = psi^{(j)}
        d[1] = 1.0 / fp[1];
        std::vector<int> mult(static_cast<std::size_t>(K) + 1, 0);
        for (int k = 2; k <= K; ++k) {
            NeumaierSum sum;
            enumerate_partitions(k, k - 1, k, mult, d, fp, sum);
            d[static_cast<std::size_t>(k)] = -sum.value() / fp[1];
        }
        return {d.begin() + 1, d.end()};
    }

    // First two stationary-workload moments.
    std::pair<double, double> stationary_moments() const {
        double a = phi_prime0();
        if (!(a > 0.0)) throw std::invalid_argument("stationary_moments: model is unstable");
        double b = phi_deriv_at0(2);
        double c = phi_deriv_at0(3);
        double ev = b / (2.0 * a);
        double ev2 = 0.5 * (b / a) * (b / a) - c / (3.0 * a);
        return {ev, ev2};
    }

    // E e^{-alpha V} for the stationary workload.
    double stationary_lst(double alpha) const {
        double a = phi_prime0();
        if (!(a > 0.0)) throw std::invalid_argument("stationary_lst: model is unstable");
        if (alpha < 0.0) throw std::invalid_argument("stationary_lst: alpha must be >= 0");
        if (alpha == 0.0) return 1.0;
        return alpha * a / phi(alpha);
    }

    // E[V e^{-alpha V}] for the stationary workload.
    double stationary_v_exp(double alpha) const {
        double a = phi_prime0();
        if (!(a > 0.0)) throw std::invalid_argument("stationary_v_exp: model is unstable");
        if (alpha < 0.0) throw std::invalid_argument("stationary_v_exp: alpha must be >= 0");
        if (alpha == 0.0) return stationary_moments().first;
        double f = phi(alpha);
        return a * (alpha * phi_deriv(alpha, 1) - f) / (f * f);
    }

    double phi_deriv_at0(int k) const { return phi_deriv(0.0, k); }

    std::string tag() const {
        std::ostringstream os;
        if (kind_ == Kind::CompoundPoissonExp)
            os << "cp_exp(lambda=" << a_ << ",mu=" << b_ << ")";
        else
            os << "gamma(beta=" << a_ << ",gamma=" << b_ << ")";
        return os.str();
    }

    bool operator==(const LevyModel& o) const {
        return kind_ == o.kind_ && a_ == o.a_ && b_ == o.b_;
    }

    static constexpr int kDerivativeCap = 20;

  private:
    LevyModel() = default;

    // alpha value minimising phi; the root of phi = xi lies to its right.
    double phi_argmin() const {
        switch (kind_) {
            case Kind::CompoundPoissonExp: {
                double s = std::sqrt(a_ * b_) - b_;
                return s > 0.0 ? s : 0.0;
            }
            case Kind::GammaSubordinator: {
                double s = a_ - b_;
                return s > 0.0 ? s : 0.0;
            }
        }
        return 0.0;
    }

    double psi_by_root_search(double xi) const {
        // phi(alpha) <= alpha, so the root is >= xi; phi(alpha)/alpha -> 1
        // guarantees an upper bracket under geometric growth.
        double lo = std::max(xi, phi_argmin());
        double hi = std::max(lo * 2.0, lo + 1.0);
        int grow = 0;
        while (phi(hi) < xi) {
            hi *= 2.0;
            if (++grow > 200) throw std::runtime_error("psi: failed to bracket root");
        }
        auto f = [&](double a) { return phi(a) - xi; };
        double root = bisect_root(f, lo, hi, 200);
        // Newton polish
        for (int i = 0; i < 4; ++i) {
            double d = phi_deriv(root, 1);
            if (d <= 0.0) break;
            double step = (phi(root) - xi) / d;
            double next = root - step;
            if (next <= lo || next >= hi) break;
            root = next;
        }
        if (std::abs(phi(root) - xi) > 1e-9 * std::max(1.0, xi))
            throw std::runtime_error("psi: root search did not converge");
        return root;
    }

    // Recursively assigns the multiplicity of part size j (descending) and
    // accumulates coefficient * phi^{(M)}(psi) * prod (psi^{(j)}/j!)^{m_j}.
    void enumerate_partitions(int k, int j, int remaining, std::vector<int>& mult,
                              const std::vector<double>& d, const std::vector<double>& fp,
                              NeumaierSum& sum) const {
        if (remaining == 0) {
            std::uint64_t den = 1;
            int order = 0;
            double prod = 1.0;
            for (int q = 1; q < k; ++q) {
                int m = mult[static_cast<std::size_t>(q)];
                if (m == 0) continue;
                order += m;
                den *= factorial_u64(m);
                std::uint64_t qf = factorial_u64(q);
                for (int r = 0; r < m; ++r) {
                    den *= qf;
                    prod *= d[static_cast<std::size_t>(q)];
                }
            }
            double coef = static_cast<double>(factorial_u64(k)) / static_cast<double>(den);
            sum.add(coef * fp[static_cast<std::size_t>(order)] * prod);
            return;
        }
        if (j < 1) return;
        int max_m = remaining / j;
        for (int m = max_m; m >= 0; --m) {
            mult[static_cast<std::size_t>(j)] = m;
            enumerate_partitions(k, j - 1, remaining - m * j, mult, d, fp, sum);
        }
        mult[static_cast<std::size_t>(j)] = 0;
    }

    Kind kind_ = Kind::CompoundPoissonExp;
    double a_ = 0.0;
    double b_ = 1.0;
};

// Two candidate input laws plus the sampling rate; theta_k = psi_k(xi) is the
// only quantity the zero/positive test sees. Degenerate pairs (theta0 ==
// theta1) are allowed so the never-stopping behaviour can be exercised.
struct HypothesisPair {
    LevyModel model0;
    LevyModel model1;
    double xi = 1.0;
    double theta0 = 0.0;
    double theta1 = 0.0;

    HypothesisPair(const LevyModel& m0, const LevyModel& m1, double xi_)
        : model0(m0), model1(m1), xi(xi_) {
        if (!(xi > 0.0)) throw std::invalid_argument("HypothesisPair: xi must be > 0");
        theta0 = model0.psi(xi);
        theta1 = model1.psi(xi);
    }

    bool degenerate() const { return theta0 == theta1; }
    const LevyModel& model(int k) const { return k == 0 ? model0 : model1; }
    double theta(int k) const { return k == 0 ? theta0 : theta1; }
};

}  // namespace levyq
