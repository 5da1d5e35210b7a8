#include "jive/distributions.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace jive {

namespace {

constexpr double pi = 3.14159265358979323846;

// --- adaptive Gauss-Kronrod (G7, K15) ---------------------------------------

const double gk_nodes[15] = {
    -0.991455371120813, -0.949107912342759, -0.864864423359769,
    -0.741531185599394, -0.586087235467691, -0.405845151377397,
    -0.207784955007898, 0.0,                0.207784955007898,
    0.405845151377397,  0.586087235467691,  0.741531185599394,
    0.864864423359769,  0.949107912342759,  0.991455371120813};
const double gk_wk[15] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728, 0.204432940075298,
    0.190350578064785, 0.169004726639267, 0.140653259715525,
    0.104790010322250, 0.063092092629979, 0.022935322010529};
const double gk_wg[7] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469, 0.381830050505119, 0.279705391489277,
    0.129484966168870};

template <typename F>
void gk15(const F& f, double a, double b, double* value, double* error) {
    double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double vk = 0.0, vg = 0.0;
    for (int i = 0; i < 15; ++i) {
        double fx = f(c + h * gk_nodes[i]);
        vk += gk_wk[i] * fx;
        if (i % 2 == 1) vg += gk_wg[i / 2] * fx;
    }
    *value = vk * h;
    *error = std::abs((vk - vg) * h);
}

// Adaptive bisection on an initial segment list; absolute tolerance.
template <typename F>
double integrate_adaptive(const F& f, std::vector<std::pair<double, double>> segments,
                          double abs_tol, bool* converged) {
    struct Piece {
        double a, b, value, error;
    };
    std::vector<Piece> heap;
    double total = 0.0, total_err = 0.0;
    for (auto [a, b] : segments) {
        Piece p{a, b, 0.0, 0.0};
        gk15(f, a, b, &p.value, &p.error);
        total += p.value;
        total_err += p.error;
        heap.push_back(p);
    }
    auto cmp = [](const Piece& x, const Piece& y) { return x.error < y.error; };
    std::make_heap(heap.begin(), heap.end(), cmp);
    int evals = static_cast<int>(heap.size());
    const int max_pieces = 200000;
    while (total_err > abs_tol && evals < max_pieces) {
        std::pop_heap(heap.begin(), heap.end(), cmp);
        Piece worst = heap.back();
        heap.pop_back();
        total -= worst.value;
        total_err -= worst.error;
        double mid = 0.5 * (worst.a + worst.b);
        for (auto [a, b] : {std::pair{worst.a, mid}, std::pair{mid, worst.b}}) {
            Piece p{a, b, 0.0, 0.0};
            gk15(f, a, b, &p.value, &p.error);
            total += p.value;
            total_err += p.error;
            heap.push_back(p);
            std::push_heap(heap.begin(), heap.end(), cmp);
        }
        evals += 2;
    }
    *converged = total_err <= abs_tol;
    return total;
}

// --- Imhof characteristic-function inversion ---------------------------------
//
// P(Q > t) = 1/2 + (1/pi) * Int_0^inf sin(theta(u)) / (u * rho(u)) du,
// theta(u) = 0.5 * sum_i atan(w_i u) - t u / 2,
// rho(u)   = prod_i (1 + w_i^2 u^2)^{1/4}.

struct ImhofIntegrand {
    const VectorXd& w;
    double t;

    double operator()(double u) const {
        if (u < 1e-100) return 0.5 * (w.sum() - t);
        double theta = -0.5 * t * u;
        double log_rho = 0.0;
        for (Index i = 0; i < w.size(); ++i) {
            double wu = w[i] * u;
            theta += 0.5 * std::atan(wu);
            log_rho += 0.25 * std::log1p(wu * wu);
        }
        return std::sin(theta) / (u * std::exp(log_rho));
    }
};

// Tail of the Imhof integral beyond U. Two bounds, take the smaller:
//  - amplitude decay: counting only weights with w_i U >= 1, the integrand is
//    below u^{-(1 + m'/2)} prod w_i^{-1/2}, which integrates in closed form;
//  - van der Corput: once theta' = t/2 - sum w_i/(2(1+w_i^2 u^2)) is positive
//    it stays so, giving 2 * amplitude(U) / theta'(U).
double imhof_tail_bound(const VectorXd& w, double t, double U) {
    double bound = std::numeric_limits<double>::infinity();
    int m_eff = 0;
    double log_c = 0.0;
    for (Index i = 0; i < w.size(); ++i) {
        if (w[i] * U >= 1.0) {
            ++m_eff;
            log_c -= 0.5 * std::log(w[i]);
        }
    }
    if (m_eff >= 1) {
        bound = std::min(bound,
                         std::exp(log_c - 0.5 * m_eff * std::log(U)) * 2.0 / m_eff);
    }
    double log_amp = -std::log(U);
    double dsum = 0.0;
    for (Index i = 0; i < w.size(); ++i) {
        double wu2 = w[i] * w[i] * U * U;
        log_amp -= 0.25 * std::log1p(wu2);
        dsum += 0.5 * w[i] / (1.0 + wu2);
    }
    double dtheta = 0.5 * t - dsum;
    if (dtheta > 0.0) {
        bound = std::min(bound, 2.0 * std::exp(log_amp) / dtheta);
    }
    return bound / pi;
}

double imhof_sf(const VectorXd& w, double t) {
    const double tail_tol = 1e-10;
    double U = 32.0;
    while (imhof_tail_bound(w, t, U) > tail_tol && U < 1e12) U *= 2.0;
    double achieved = imhof_tail_bound(w, t, U);
    if (achieved > tail_tol) {
        throw PrecisionError("chi-bar-square tail truncation did not reach target accuracy",
                             achieved);
    }
    // Seed segments: geometric split plus a cap on phase advance per segment
    // so the oscillation from the -tu/2 term is resolved.
    std::vector<std::pair<double, double>> segments;
    double lo = 0.0;
    double first = std::min(U, 1.0 / std::max(1e-300, w.maxCoeff()));
    double max_phase = 2.0 * pi;
    double step_cap = (t > 0) ? 2.0 * max_phase / t : U;
    double hi = std::min(first, step_cap);
    while (lo < U) {
        segments.emplace_back(lo, hi);
        lo = hi;
        hi = std::min(U, std::min(2.0 * hi, hi + step_cap));
        if (hi <= lo) hi = U;
    }
    ImhofIntegrand f{w, t};
    bool converged = false;
    double integral = integrate_adaptive(f, std::move(segments), 1e-9, &converged);
    if (!converged) {
        throw PrecisionError("chi-bar-square quadrature did not reach target accuracy", 1e-9);
    }
    return std::clamp(0.5 + integral / pi, 0.0, 1.0);
}

// Two positive weights: condition on one normal. With z* = sqrt(t / w2) and
// z = z* sin(u), P(Q <= t) = 2 Int_0^{pi/2} phi(z* sin u) erf(sqrt(t/(2 w1))
// cos u) z* cos u du, a smooth integrand.
double two_weight_sf(double w1, double w2, double t) {
    if (w1 < w2) std::swap(w1, w2);
    double zstar = std::sqrt(t / w2);
    double s = std::sqrt(t / (2.0 * w1));
    auto f = [&](double u) {
        double z = zstar * std::sin(u);
        double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * pi);
        return 2.0 * phi * boost::math::erf(s * std::cos(u)) * zstar * std::cos(u);
    };
    bool converged = false;
    double cdf = integrate_adaptive(f, {{0.0, pi / 2.0}}, 1e-11, &converged);
    if (!converged) {
        throw PrecisionError("two-weight quadrature did not reach target accuracy", 1e-11);
    }
    return std::clamp(1.0 - cdf, 0.0, 1.0);
}

}  // namespace

ChiBarSpec::ChiBarSpec(VectorXd w) : weights_(std::move(w)) {
    bool any_positive = false;
    for (Index i = 0; i < weights_.size(); ++i) {
        if (!(weights_[i] >= 0.0)) {
            throw ValidationError("chi-bar-square weights must be nonnegative");
        }
        if (weights_[i] > 0.0) any_positive = true;
    }
    if (!any_positive) {
        throw ValidationError("chi-bar-square requires at least one positive weight");
    }
}

double weighted_chisq_sf(const ChiBarSpec& spec, double t) {
    if (!std::isfinite(t)) throw ValidationError("weighted_chisq_sf: t must be finite");
    if (t <= 0.0) return 1.0;

    // Zero weights do not change the law; rescaling by the largest weight
    // keeps the quadrature well conditioned. Weights below 1e-11 of the
    // largest shift the survival function by far less than the 1e-8 accuracy
    // target and are dropped as well.
    double scale = spec.weights().maxCoeff();
    std::vector<double> wv;
    for (Index i = 0; i < spec.weights().size(); ++i) {
        if (spec.weights()[i] > 1e-11 * scale) wv.push_back(spec.weights()[i]);
    }
    VectorXd w(static_cast<Index>(wv.size()));
    for (size_t i = 0; i < wv.size(); ++i) w[static_cast<Index>(i)] = wv[i] / scale;
    double ts = t / scale;

    int m = static_cast<int>(w.size());
    if (m == 1) return chisq_sf(1, ts);
    if ((w.array() - w[0]).abs().maxCoeff() <= 1e-13) return chisq_sf(m, ts / w[0]);
    if (m == 2) return two_weight_sf(w[0], w[1], ts);
    return imhof_sf(w, ts);
}

double chisq_sf(int df, double t) {
    if (df < 1) throw ValidationError("chisq_sf: df must be >= 1");
    if (!(t >= 0.0)) throw ValidationError("chisq_sf: t must be >= 0");
    return boost::math::gamma_q(0.5 * df, 0.5 * t);
}

double normal_sf(double t) {
    return 0.5 * std::erfc(t / std::sqrt(2.0));
}

}  // namespace jive
