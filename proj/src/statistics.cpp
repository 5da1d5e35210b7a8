#include "jive/statistics.hpp"

#include "jive/distributions.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <map>
#include <optional>

namespace jive {

namespace {

// --- small symmetric helpers -------------------------------------------------

struct SymSolver {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es;
    explicit SymSolver(const MatrixXd& M) : es(M) {
        if (es.info() != Eigen::Success) {
            throw ConditioningError("symmetric eigendecomposition failed");
        }
    }
    double min_eig() const { return es.eigenvalues()(0); }
    void require_invertible(const char* what) const {
        double amax = es.eigenvalues().cwiseAbs().maxCoeff();
        if (es.eigenvalues().cwiseAbs().minCoeff() <= 1e-13 * std::max(amax, 1e-300)) {
            throw ConditioningError(std::string(what) + " is singular");
        }
    }
    VectorXd solve(const VectorXd& b) const {
        return es.eigenvectors() *
               (es.eigenvectors().transpose() * b).cwiseQuotient(es.eigenvalues());
    }
    MatrixXd inverse() const {
        return es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
               es.eigenvectors().transpose();
    }
};

// v' M^{-1} v with an exact-zero guard so degenerate (zero-residual)
// instances report a zero statistic instead of tripping on a singular M.
double qform_inv(const VectorXd& v, const SymSolver& M, const char* what) {
    if (v.isZero(0.0)) return 0.0;
    M.require_invertible(what);
    return v.dot(M.solve(v));
}

double qform(const VectorXd& v, const MatrixXd& M) {
    if (v.isZero(0.0)) return 0.0;
    return v.dot(M * v);
}

// Signed eigenvalues of Xi Phi, computed through the symmetric form
// L'(r K)L where Phi = L L' (PSD root) and K is H^{-1} or the restricted
// projector H^{-1}A'(A H^{-1} A')^{-1}A H^{-1}. Keeping the sign lets the
// single-weight case reduce to the ratio statistic/weight even when the
// estimated H is indefinite; the ratio is free of the common r_min factor.
VectorXd signed_chibar_weights(double r_min, const SymSolver& H_eig, const MatrixXd& Phi,
                               const MatrixXd* A) {
    H_eig.require_invertible("H");
    MatrixXd K;
    if (A) {
        MatrixXd HiA = H_eig.inverse() * A->transpose();  // g x p
        MatrixXd AHiA = *A * HiA;
        Eigen::FullPivLU<MatrixXd> lu(AHiA);
        if (!lu.isInvertible()) throw ConditioningError("A H^{-1} A' is singular");
        K = HiA * lu.solve(HiA.transpose());
    } else {
        K = H_eig.inverse();
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> ep(Phi);
    if (ep.info() != Eigen::Success) throw ConditioningError("Phi eigendecomposition failed");
    MatrixXd L = ep.eigenvectors() * ep.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    MatrixXd S = L.transpose() * (r_min * K) * L;
    S = 0.5 * (S + S.transpose());
    SymSolver es(S);
    return es.es.eigenvalues();
}

// Nonnegative weights for the reported reference: drop magnitudes below
// 1e-12 of the largest (exact zeros of the rank-p case) and clip the rest
// at zero.
VectorXd clip_weights(const VectorXd& w) {
    double wmax = w.size() ? w.cwiseAbs().maxCoeff() : 0.0;
    if (wmax <= 0.0) return VectorXd();
    std::vector<double> kept;
    for (Index i = 0; i < w.size(); ++i) {
        if (std::abs(w[i]) > 1e-12 * wmax) kept.push_back(std::max(w[i], 0.0));
    }
    VectorXd out(static_cast<Index>(kept.size()));
    for (std::size_t i = 0; i < kept.size(); ++i) out[static_cast<Index>(i)] = kept[i];
    return out;
}

double chibar_pvalue(double stat, const VectorXd& signed_weights) {
    double wmax = signed_weights.size() ? signed_weights.cwiseAbs().maxCoeff() : 0.0;
    if (wmax <= 0.0) return stat > 0.0 ? 0.0 : 1.0;
    std::vector<double> nonzero;
    for (Index i = 0; i < signed_weights.size(); ++i) {
        if (std::abs(signed_weights[i]) > 1e-12 * wmax) nonzero.push_back(signed_weights[i]);
    }
    if (nonzero.size() == 1) {
        // T / w ~ chi-square_1; the common sign of statistic and weight
        // cancels (a negative ratio sits at the lower end of the support).
        double ratio = stat / nonzero[0];
        return chisq_sf(1, std::max(ratio, 0.0));
    }
    std::vector<double> positive;
    for (double w : nonzero) {
        if (w > 0.0) positive.push_back(w);
    }
    if (positive.empty()) return stat > 0.0 ? 0.0 : 1.0;
    VectorXd w(static_cast<Index>(positive.size()));
    for (std::size_t i = 0; i < positive.size(); ++i) w[static_cast<Index>(i)] = positive[i];
    return weighted_chisq_sf(ChiBarSpec(w), stat);
}

double pvalue_for(const Reference& ref, double stat) {
    switch (ref.kind) {
        case Reference::Kind::chibar:
            return chibar_pvalue(stat, ref.weights);
        case Reference::Kind::chisq:
            return chisq_sf(ref.df, std::max(stat, 0.0));
        case Reference::Kind::std_normal:
            return 2.0 * normal_sf(std::abs(stat));
    }
    return 1.0;
}

Reference chibar_ref(const VectorXd& signed_weights) {
    Reference r;
    r.kind = Reference::Kind::chibar;
    r.weights = clip_weights(signed_weights);
    return r;
}

Reference chisq_ref(int df) {
    Reference r;
    r.kind = Reference::Kind::chisq;
    r.df = df;
    return r;
}

void check_reference_kind(Family family, Reference::Kind kind) {
    if (family == Family::AR) {
        throw UsageError("AR tests carry a normal reference; use ar_test");
    }
    if (is_starred(family) && kind != Reference::Kind::chisq) {
        throw UsageError("starred statistics are chi-square referenced");
    }
    if (!is_starred(family) && kind != Reference::Kind::chibar) {
        throw UsageError("unstarred statistics are chi-bar-square referenced");
    }
}

// Plug-in evaluation with a degenerate-limit fallback: a residual that is
// zero up to rounding (noiseless exactly identified data) gets sigma2 = 0,
// Phi = 0 and lambda = 0 so every statistic collapses to zero.
struct PluginEval {
    PluginSet set;
    std::optional<SymSolver> H_eig;
    bool degenerate = false;  // exact-fit residual

    const SymSolver& H() const { return *H_eig; }
};

PluginEval make_plugins(const JackknifeKernel& kernel, const VectorXd& y, const MatrixXd& X,
                        const VectorXd& beta, VarianceMode mode) {
    PluginEval out;
    VectorXd eps = y - X * beta;
    double y_scale = y.cwiseAbs().maxCoeff();
    if (eps.cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + y_scale)) {
        Index g = X.cols();
        PluginSet s;
        s.eval_point = beta;
        s.variance_mode = mode;
        s.residuals = VectorXd::Zero(y.size());
        s.lambda = 0.0;
        s.sigma2 = kernel.quadratic_objective() ? 1.0 : 0.0;
        s.sigma12 = VectorXd::Zero(g);
        s.XCeps = VectorXd::Zero(g);
        s.Q = 0.0;
        s.H.noalias() = X.transpose() * (kernel.C * X);
        s.H = 0.5 * (s.H + s.H.transpose());
        s.Phi = MatrixXd::Zero(g, g);
        out.set = std::move(s);
        out.degenerate = true;
    } else {
        out.set = plugin_set(kernel, y, X, beta, mode);
    }
    out.H_eig.emplace(out.set.H);
    out.set.r_min = out.H_eig->min_eig();
    return out;
}

bool exact_fit(const VectorXd& y, const MatrixXd& X, const VectorXd& beta) {
    VectorXd eps = y - X * beta;
    return eps.cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + y.cwiseAbs().maxCoeff());
}

// Exact-fit data at both plug-in points leaves every statistic without
// content: the quadratic forms all vanish.
TestReport degenerate_report(Method method, Family family, Hypothesis hyp,
                             Reference::Kind kind, VarianceMode mode, int df) {
    TestReport rep;
    rep.method = method;
    rep.family = family;
    rep.hypothesis = hyp;
    rep.variance_mode = mode;
    rep.statistic = 0.0;
    rep.reference = kind == Reference::Kind::chisq ? chisq_ref(df)
                                                   : chibar_ref(VectorXd());
    rep.p_value = 1.0;
    return rep;
}

VectorXd tau_vector(const JackknifeKernel& kernel, const PluginSet& p) {
    double rk = std::sqrt(static_cast<double>(kernel.k));
    return (p.XCeps - (p.lambda * kernel.trB) * p.sigma12) / rk;
}

void set_chibar(TestReport* rep, double stat, double r_min, const SymSolver& H_eig,
                const MatrixXd& Phi, const MatrixXd* A) {
    VectorXd sw = signed_chibar_weights(r_min, H_eig, Phi, A);
    rep->statistic = stat;
    rep->reference = chibar_ref(sw);
    rep->p_value = chibar_pvalue(stat, sw);
}

// ---------------------------------------------------------------------------
// Full-vector hypothesis engine. Estimation and plug-in sets are computed
// once and shared across the requested families.

class FullVectorEngine {
public:
    FullVectorEngine(const JackknifeKernel& kernel, const IVDataset& data,
                     const VectorXd& beta0)
        : kern_(kernel), data_(data), beta0_(beta0) {
        if (beta0.size() != data.g()) throw UsageError("beta0 has wrong length");
        unres_ = estimate_unrestricted(kernel, data.y, data.X);
        k_ = static_cast<double>(kernel.k);
    }

    TestReport run(Family family, Reference::Kind kind, VarianceMode mode) {
        check_reference_kind(family, kind);
        const Index g = data_.g();
        if (exact_fit(data_.y, data_.X, unres_.beta) && exact_fit(data_.y, data_.X, beta0_)) {
            return degenerate_report(kern_.method, family, Hypothesis::full_vector, kind,
                                     mode, static_cast<int>(g));
        }

        TestReport rep;
        rep.method = kern_.method;
        rep.family = family;
        rep.hypothesis = Hypothesis::full_vector;
        rep.variance_mode = mode;

        switch (family) {
            case Family::D: {
                const PluginEval& at_hat = plugins(true, mode);
                const PluginEval& at_null = plugins(false, mode);
                double stat =
                    -at_hat.set.r_min * at_hat.set.sigma2 / k_ * (at_hat.set.Q - at_null.set.Q);
                set_chibar(&rep, stat, at_hat.set.r_min, at_hat.H(), at_hat.set.Phi, nullptr);
                rep.plugin_points = {{"statistic", unres_.beta}, {"weights", unres_.beta}};
                break;
            }
            case Family::LM: {
                const PluginEval& at_null = plugins(false, mode);
                VectorXd tau = tau_vector(kern_, at_null.set);
                double stat = at_null.set.r_min * qform_inv(tau, at_null.H(), "H(beta0)");
                set_chibar(&rep, stat, at_null.set.r_min, at_null.H(), at_null.set.Phi,
                           nullptr);
                rep.plugin_points = {{"statistic", beta0_}, {"weights", beta0_}};
                break;
            }
            case Family::W1:
            case Family::W2: {
                const PluginEval& at_hat = plugins(true, mode);
                VectorXd psi = psi_vector(at_hat);
                double stat = at_hat.set.r_min * qform_inv(psi, at_hat.H(), "H(beta_hat)");
                set_chibar(&rep, stat, at_hat.set.r_min, at_hat.H(), at_hat.set.Phi, nullptr);
                rep.plugin_points = {{"statistic", unres_.beta}, {"weights", unres_.beta}};
                break;
            }
            case Family::LMstar: {
                const PluginEval& at_null = plugins(false, mode);
                VectorXd tau = tau_vector(kern_, at_null.set);
                SymSolver phi0(at_null.set.Phi);
                rep.statistic = qform_inv(tau, phi0, "Phi(beta0)");
                rep.reference = chisq_ref(static_cast<int>(g));
                rep.plugin_points = {{"statistic", beta0_}, {"variance", beta0_}};
                break;
            }
            case Family::W1star:
            case Family::W2star: {
                const PluginEval& at_hat = plugins(true, mode);
                VectorXd psi = psi_vector(at_hat);
                SymSolver phi_hat(at_hat.set.Phi);
                rep.statistic = qform_inv(psi, phi_hat, "Phi(beta_hat)");
                rep.reference = chisq_ref(static_cast<int>(g));
                rep.plugin_points = {{"statistic", unres_.beta}, {"variance", unres_.beta}};
                break;
            }
            case Family::Dstar1:
            case Family::Dstar2: {
                // Objective modified with J = C X Phi(beta0)^{-1} X' C; the
                // correction term is evaluated at beta_hat.
                const PluginEval& at_hat = plugins(true, mode);
                const PluginEval& at_null = plugins(false, mode);
                VectorXd psi = psi_vector(at_hat);
                double qs_hat = qstar(at_hat.set, at_null.set);
                double qs_null = qstar(at_null.set, at_null.set);
                double corr = 0.0;
                if (!psi.isZero(0.0) && !at_hat.set.XCeps.isZero(0.0)) {
                    SymSolver phi_hat(at_hat.set.Phi);
                    phi_hat.require_invertible("Phi(beta_hat)");
                    corr = 2.0 * std::sqrt(k_) / at_hat.set.sigma2 *
                           psi.dot(phi_hat.solve(at_hat.set.XCeps));
                }
                rep.statistic = -at_hat.set.sigma2 / k_ * (qs_hat - qs_null + corr);
                rep.reference = chisq_ref(static_cast<int>(g));
                rep.plugin_points = {{"statistic", unres_.beta}, {"variance", beta0_}};
                break;
            }
            case Family::AR:
                throw UsageError("AR tests carry a normal reference; use ar_test");
        }
        if (rep.reference.kind != Reference::Kind::chibar) {
            rep.p_value = pvalue_for(rep.reference, rep.statistic);
        }
        return rep;
    }

private:
    VectorXd psi_vector(const PluginEval& at_hat) const {
        return at_hat.set.H * (unres_.beta - beta0_) / std::sqrt(k_);
    }

    // Q*_n(beta) = u' Phi_0^{-1} u / sigma2(beta), u = X'C(y - X beta);
    // quadratic branch drops the denominator.
    double qstar(const PluginSet& at, const PluginSet& phi_point) {
        const VectorXd& u = at.XCeps;
        if (u.isZero(0.0)) return 0.0;
        SymSolver phi(phi_point.Phi);
        double num = qform_inv(u, phi, "Phi(beta0)");
        if (kern_.quadratic_objective()) return num;
        if (at.sigma2 <= 0.0) throw DegeneracyError("modified objective denominator vanished");
        return num / at.sigma2;
    }

    const PluginEval& plugins(bool at_hat, VarianceMode mode) {
        auto key = std::make_pair(at_hat, mode);
        auto it = cache_.find(key);
        if (it == cache_.end()) {
            const VectorXd& point = at_hat ? unres_.beta : beta0_;
            it = cache_.emplace(key, make_plugins(kern_, data_.y, data_.X, point, mode)).first;
        }
        return it->second;
    }

    const JackknifeKernel& kern_;
    const IVDataset& data_;
    VectorXd beta0_;
    EstimationResult unres_;
    double k_ = 1.0;
    std::map<std::pair<bool, VarianceMode>, PluginEval> cache_;
};

// ---------------------------------------------------------------------------
// Linear-restriction engine.

class RestrictionEngine {
public:
    RestrictionEngine(const JackknifeKernel& kernel, const IVDataset& data,
                      const LinearRestriction& restriction)
        : kern_(kernel), data_(data), rest_(restriction) {
        validate_restriction(restriction, data.g());
        unres_ = estimate_unrestricted(kernel, data.y, data.X);
        res_ = estimate_restricted(kernel, data.y, data.X, restriction);
        k_ = static_cast<double>(kernel.k);
    }

    TestReport run(Family family, Reference::Kind kind, VarianceMode mode) {
        check_reference_kind(family, kind);
        const int p = static_cast<int>(rest_.p());
        if (exact_fit(data_.y, data_.X, unres_.beta) && exact_fit(data_.y, data_.X, res_.beta)) {
            return degenerate_report(kern_.method, family, Hypothesis::linear_restriction,
                                     kind, mode, p);
        }

        TestReport rep;
        rep.method = kern_.method;
        rep.family = family;
        rep.hypothesis = Hypothesis::linear_restriction;
        rep.variance_mode = mode;

        VectorXd slack = rest_.A * unres_.beta - rest_.a;

        switch (family) {
            case Family::D: {
                const PluginEval& at_hat = plugins(true, mode);
                const PluginEval& at_til = plugins(false, mode);
                double stat =
                    -at_hat.set.r_min * at_hat.set.sigma2 / k_ * (at_hat.set.Q - at_til.set.Q);
                set_chibar(&rep, stat, at_hat.set.r_min, at_hat.H(), at_hat.set.Phi, &rest_.A);
                rep.plugin_points = {{"statistic", unres_.beta}, {"weights", unres_.beta}};
                break;
            }
            case Family::LM: {
                const PluginEval& at_til = plugins(false, mode);
                VectorXd xi = tau_vector(kern_, at_til.set);
                double stat = at_til.set.r_min * qform_inv(xi, at_til.H(), "H(beta_tilde)");
                set_chibar(&rep, stat, at_til.set.r_min, at_til.H(), at_til.set.Phi, &rest_.A);
                rep.plugin_points = {{"statistic", res_.beta}, {"weights", res_.beta}};
                break;
            }
            case Family::W1: {
                const PluginEval& at_hat = plugins(true, mode);
                double stat = at_hat.set.r_min / k_ * slack_quad(at_hat, slack);
                set_chibar(&rep, stat, at_hat.set.r_min, at_hat.H(), at_hat.set.Phi, &rest_.A);
                rep.plugin_points = {{"statistic", unres_.beta}, {"weights", unres_.beta}};
                break;
            }
            case Family::W2: {
                const PluginEval& at_hat = plugins(true, mode);
                VectorXd theta = theta_vector(at_hat);
                double stat = at_hat.set.r_min * qform_inv(theta, at_hat.H(), "H(beta_hat)");
                set_chibar(&rep, stat, at_hat.set.r_min, at_hat.H(), at_hat.set.Phi, &rest_.A);
                rep.plugin_points = {{"statistic", unres_.beta}, {"weights", unres_.beta}};
                break;
            }
            case Family::LMstar: {
                const PluginEval& at_til = plugins(false, mode);
                VectorXd xi = tau_vector(kern_, at_til.set);
                const RestrictionOperators& ops = operators(false, mode);
                rep.statistic = qform(xi, ops.GPhiG_pinv);
                rep.reference = chisq_ref(p);
                rep.plugin_points = {{"statistic", res_.beta}, {"variance", res_.beta}};
                break;
            }
            case Family::W1star: {
                // (A beta - a)'(A H^{-1} Phi H^{-1} A')^{-1}(A beta - a) / k at beta_hat
                const PluginEval& at_hat = plugins(true, mode);
                rep.statistic = slack_quad_star(at_hat, slack) / k_;
                rep.reference = chisq_ref(p);
                rep.plugin_points = {{"statistic", unres_.beta}, {"variance", unres_.beta}};
                break;
            }
            case Family::W2star: {
                const PluginEval& at_hat = plugins(true, mode);
                VectorXd theta = theta_vector(at_hat);
                const RestrictionOperators& ops = operators(true, mode);
                rep.statistic = qform(theta, ops.GPhiG_pinv);
                rep.reference = chisq_ref(p);
                rep.plugin_points = {{"statistic", unres_.beta}, {"variance", unres_.beta}};
                break;
            }
            case Family::Dstar1:
            case Family::Dstar2: {
                // Q*_an built from the beta_tilde operators; the correction
                // term is evaluated at beta_hat.
                const PluginEval& at_hat = plugins(true, mode);
                const PluginEval& at_til = plugins(false, mode);
                double qs_til = qstar_a(at_til, mode);
                double qs_hat = qstar_a(at_hat, mode);
                VectorXd carrier = family == Family::Dstar1 ? theta_vector(at_hat)
                                                            : tau_vector(kern_, at_til.set);
                double corr = 0.0;
                const VectorXd& u_hat = at_hat.set.XCeps;
                if (!carrier.isZero(0.0) && !u_hat.isZero(0.0)) {
                    const RestrictionOperators& ops_hat = operators(true, mode);
                    corr = 2.0 * std::sqrt(k_) / at_hat.set.sigma2 *
                           carrier.dot(ops_hat.GPhiG_pinv * (ops_hat.Gamma * u_hat));
                }
                rep.statistic = at_hat.set.sigma2 / k_ * (qs_til - qs_hat - corr);
                rep.reference = chisq_ref(p);
                rep.plugin_points = {{"statistic", unres_.beta}, {"variance", res_.beta}};
                break;
            }
            case Family::AR:
                throw UsageError("AR tests carry a normal reference; use ar_test");
        }
        if (rep.reference.kind != Reference::Kind::chibar) {
            rep.p_value = pvalue_for(rep.reference, rep.statistic);
        }
        return rep;
    }

    const EstimationResult& unrestricted() const { return unres_; }
    const RestrictedEstimationResult& restricted() const { return res_; }

private:
    VectorXd theta_vector(const PluginEval& at_hat) const {
        return at_hat.set.H * (unres_.beta - res_.beta) / std::sqrt(k_);
    }

    double slack_quad(const PluginEval& at, const VectorXd& slack) {
        if (slack.isZero(0.0)) return 0.0;
        at.H().require_invertible("H");
        MatrixXd HiA = at.H().inverse() * rest_.A.transpose();
        MatrixXd AHiA = rest_.A * HiA;
        SymSolver s(0.5 * (AHiA + AHiA.transpose()));
        return qform_inv(slack, s, "A H^{-1} A'");
    }

    double slack_quad_star(const PluginEval& at, const VectorXd& slack) {
        if (slack.isZero(0.0)) return 0.0;
        at.H().require_invertible("H");
        MatrixXd HiA = at.H().inverse() * rest_.A.transpose();  // g x p
        MatrixXd mid = HiA.transpose() * at.set.Phi * HiA;      // p x p
        SymSolver s(0.5 * (mid + mid.transpose()));
        return qform_inv(slack, s, "A H^{-1} Phi H^{-1} A'");
    }

    double qstar_a(const PluginEval& at, VarianceMode mode) {
        const VectorXd& u = at.set.XCeps;
        if (u.isZero(0.0)) return 0.0;
        const RestrictionOperators& ops = operators(false, mode);
        VectorXd gu = ops.Gamma * u;
        double num = gu.dot(ops.GPhiG_pinv * gu);
        if (kern_.quadratic_objective()) return num;
        if (at.set.sigma2 <= 0.0) {
            throw DegeneracyError("modified objective denominator vanished");
        }
        return num / at.set.sigma2;
    }

    const PluginEval& plugins(bool at_hat, VarianceMode mode) {
        auto key = std::make_pair(at_hat, mode);
        auto it = cache_.find(key);
        if (it == cache_.end()) {
            const VectorXd& point = at_hat ? unres_.beta : res_.beta;
            it = cache_.emplace(key, make_plugins(kern_, data_.y, data_.X, point, mode)).first;
        }
        return it->second;
    }

    const RestrictionOperators& operators(bool at_hat, VarianceMode mode) {
        auto key = std::make_pair(at_hat, mode);
        auto it = ops_cache_.find(key);
        if (it == ops_cache_.end()) {
            it = ops_cache_.emplace(key, restriction_operators(plugins(at_hat, mode).set, rest_))
                     .first;
        }
        return it->second;
    }

    const JackknifeKernel& kern_;
    const IVDataset& data_;
    LinearRestriction rest_;
    EstimationResult unres_;
    RestrictedEstimationResult res_;
    double k_ = 1.0;
    std::map<std::pair<bool, VarianceMode>, PluginEval> cache_;
    std::map<std::pair<bool, VarianceMode>, RestrictionOperators> ops_cache_;
};

}  // namespace

const char* family_name(Family f) {
    switch (f) {
        case Family::D: return "D";
        case Family::LM: return "LM";
        case Family::W1: return "W1";
        case Family::W2: return "W2";
        case Family::Dstar1: return "D1*";
        case Family::Dstar2: return "D2*";
        case Family::LMstar: return "LM*";
        case Family::W1star: return "W1*";
        case Family::W2star: return "W2*";
        case Family::AR: return "AR";
    }
    return "?";
}

Family family_from_name(const std::string& name) {
    static const std::array<Family, 10> all = {Family::D,      Family::LM,     Family::W1,
                                               Family::W2,     Family::Dstar1, Family::Dstar2,
                                               Family::LMstar, Family::W1star, Family::W2star,
                                               Family::AR};
    for (Family f : all) {
        if (name == family_name(f)) return f;
    }
    // accept ASCII aliases
    if (name == "D1star" || name == "Dstar1" || name == "D1s") return Family::Dstar1;
    if (name == "D2star" || name == "Dstar2") return Family::Dstar2;
    if (name == "LMstar" || name == "LMs") return Family::LMstar;
    if (name == "W1star" || name == "W1s") return Family::W1star;
    if (name == "W2star" || name == "W2s") return Family::W2star;
    throw UsageError("unknown statistic family: " + name);
}

bool is_starred(Family f) {
    return f == Family::Dstar1 || f == Family::Dstar2 || f == Family::LMstar ||
           f == Family::W1star || f == Family::W2star;
}

const char* hypothesis_name(Hypothesis h) {
    return h == Hypothesis::full_vector ? "full_vector" : "linear_restriction";
}

const char* reference_kind_name(Reference::Kind k) {
    switch (k) {
        case Reference::Kind::chibar: return "chibar";
        case Reference::Kind::chisq: return "chisq";
        case Reference::Kind::std_normal: return "std_normal";
    }
    return "?";
}

Reference::Kind reference_kind_from_name(const std::string& name) {
    if (name == "chibar") return Reference::Kind::chibar;
    if (name == "chisq") return Reference::Kind::chisq;
    if (name == "std_normal" || name == "normal") return Reference::Kind::std_normal;
    throw UsageError("unknown reference kind: " + name);
}

std::string report_to_json(const TestReport& report) {
    nlohmann::json j;
    j["method"] = method_name(report.method);
    j["family"] = family_name(report.family);
    j["hypothesis"] = hypothesis_name(report.hypothesis);
    j["statistic"] = report.statistic;
    j["reference"]["kind"] = reference_kind_name(report.reference.kind);
    if (report.reference.kind == Reference::Kind::chibar) {
        j["reference"]["weights"] =
            std::vector<double>(report.reference.weights.begin(), report.reference.weights.end());
    } else if (report.reference.kind == Reference::Kind::chisq) {
        j["reference"]["df"] = report.reference.df;
    }
    j["p_value"] = report.p_value;
    j["variance_mode"] = variance_mode_name(report.variance_mode);
    for (const auto& pp : report.plugin_points) {
        j["plugin_points"][pp.role] = std::vector<double>(pp.beta.begin(), pp.beta.end());
    }
    return j.dump();
}

TestReport test_full_vector(const JackknifeKernel& kernel, const IVDataset& data,
                            const VectorXd& beta0, Family family,
                            Reference::Kind reference, VarianceMode mode) {
    FullVectorEngine engine(kernel, data, beta0);
    return engine.run(family, reference, mode);
}

TestReport test_linear_restriction(const JackknifeKernel& kernel, const IVDataset& data,
                                   const LinearRestriction& restriction, Family family,
                                   Reference::Kind reference, VarianceMode mode) {
    RestrictionEngine engine(kernel, data, restriction);
    return engine.run(family, reference, mode);
}

std::vector<TestReport> evaluate_full_vector(const JackknifeKernel& kernel,
                                             const IVDataset& data, const VectorXd& beta0,
                                             const std::vector<StatRequest>& requests) {
    FullVectorEngine engine(kernel, data, beta0);
    std::vector<TestReport> out;
    out.reserve(requests.size());
    for (const auto& req : requests) out.push_back(engine.run(req.family, req.reference, req.mode));
    return out;
}

std::vector<TestReport> evaluate_linear_restriction(const JackknifeKernel& kernel,
                                                    const IVDataset& data,
                                                    const LinearRestriction& restriction,
                                                    const std::vector<StatRequest>& requests) {
    RestrictionEngine engine(kernel, data, restriction);
    std::vector<TestReport> out;
    out.reserve(requests.size());
    for (const auto& req : requests) out.push_back(engine.run(req.family, req.reference, req.mode));
    return out;
}

TestReport ar_test(const ArKernel& kernel, const IVDataset& data, const VectorXd& beta0,
                   VarianceMode mode, bool one_sided) {
    if (beta0.size() != data.g()) throw UsageError("beta0 has wrong length");
    VectorXd eps = data.y - data.X * beta0;
    if (eps.isZero(0.0)) {
        throw DegeneracyError("AR test needs a nonzero residual at the null");
    }
    double k = static_cast<double>(kernel.k);
    double num = eps.dot(kernel.C * eps);
    double omega = 0.0;
    if (mode == VarianceMode::plugin) {
        // naive: (2/k) eps^(2)' C^(2) eps^(2)
        VectorXd e2 = eps.array().square();
        omega = 2.0 / k * e2.dot(kernel.C.cwiseProduct(kernel.C) * e2);
    } else {
        VectorXd b = kernel.B.diagonal();
        MatrixXd denom = b * b.transpose() + kernel.B.cwiseProduct(kernel.B);
        if (denom.cwiseAbs().minCoeff() < 1e-14) {
            throw DegeneracyError("cross-fit weight denominator vanished");
        }
        MatrixXd M = kernel.C.cwiseProduct(kernel.C).cwiseQuotient(denom);
        VectorXd s = eps.cwiseProduct(kernel.B * eps);
        omega = 2.0 / k * s.dot(M * s);
    }
    if (!(omega > 0.0)) {
        throw DegeneracyError("AR variance estimate is not positive");
    }
    TestReport rep;
    rep.method = kernel.variant == ArVariant::CMS21 ? Method::JIVE1 : Method::JIVE2;
    rep.family = Family::AR;
    rep.hypothesis = Hypothesis::full_vector;
    rep.statistic = num / (std::sqrt(k) * std::sqrt(omega));
    rep.reference.kind = Reference::Kind::std_normal;
    rep.variance_mode = mode;
    rep.p_value = one_sided ? normal_sf(rep.statistic) : 2.0 * normal_sf(std::abs(rep.statistic));
    rep.plugin_points = {{"statistic", beta0}};
    return rep;
}

TestReport ar_test(const IVDataset& data, const VectorXd& beta0, ArVariant variant,
                   VarianceMode mode, bool one_sided) {
    ArKernel kern = build_ar_kernel(data.Z, variant);
    return ar_test(kern, data, beta0, mode, one_sided);
}

}  // namespace jive
