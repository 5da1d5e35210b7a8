#include "jive/estimators.hpp"

#include <cmath>
#include <vector>

namespace jive {

namespace {

struct Moments {
    MatrixXd WCW;  // [y X]'C[y X]
    MatrixXd WBW;  // [y X]'B[y X]
    double trB = 1.0;
};

Moments make_moments(const JackknifeKernel& kernel, const VectorXd& y, const MatrixXd& X) {
    Index n = y.size(), g = X.cols();
    MatrixXd W(n, g + 1);
    W.col(0) = y;
    W.rightCols(g) = X;
    Moments m;
    m.WCW.noalias() = W.transpose() * (kernel.C * W);
    m.WCW = 0.5 * (m.WCW + m.WCW.transpose());
    if (kernel.method == Method::HLIM || kernel.method == Method::JIVE2) {
        m.WBW.noalias() = W.transpose() * W;
    } else {
        m.WBW.noalias() = W.transpose() * (kernel.B * W);
    }
    m.WBW = 0.5 * (m.WBW + m.WBW.transpose());
    m.trB = kernel.trB;
    return m;
}

VectorXd stack_coef(const VectorXd& beta) {
    VectorXd a(beta.size() + 1);
    a[0] = 1.0;
    a.tail(beta.size()) = -beta;
    return a;
}

double quad(const MatrixXd& M, const VectorXd& a) { return a.dot(M * a); }

// Symmetric eigendecomposition wrapper used for H inverses and r_min.
struct SymEig {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es;

    explicit SymEig(const MatrixXd& M) : es(M) {
        if (es.info() != Eigen::Success) {
            throw ConditioningError("symmetric eigendecomposition failed");
        }
    }
    double min_eig() const { return es.eigenvalues()(0); }
    double max_abs() const {
        return std::max(std::abs(es.eigenvalues()(0)),
                        std::abs(es.eigenvalues()(es.eigenvalues().size() - 1)));
    }
    bool invertible() const {
        return es.eigenvalues().cwiseAbs().minCoeff() > 1e-13 * std::max(max_abs(), 1e-300);
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

// min_a a'M a / a'N a over first-component-one vectors, N PSD and possibly
// singular. Null directions of N are deflated through the Schur complement of
// M on them; ties among smallest eigenvalues break toward the largest first
// component.
struct PencilSolution {
    VectorXd a;       // normalised, a[0] == 1
    double value;     // the minimum of the ratio
    bool exact_fit;   // denominator had no positive directions at the optimum
};

PencilSolution solve_ratio_pencil(const MatrixXd& M, const MatrixXd& N) {
    Index d = M.rows();
    Eigen::SelfAdjointEigenSolver<MatrixXd> en(N);
    if (en.info() != Eigen::Success) throw ConditioningError("denominator eigendecomposition failed");
    double nmax = en.eigenvalues().cwiseAbs().maxCoeff();
    double tol = std::max(1e-14 * nmax, 1e-300);

    std::vector<Index> null_idx, pos_idx;
    for (Index i = 0; i < d; ++i) {
        (en.eigenvalues()(i) <= tol ? null_idx : pos_idx).push_back(i);
    }

    // Null directions of the denominator split three ways: a common null of
    // both forms with a nonzero first component is an exact-fit solution
    // (W a = 0); a common null with zero first component is a direction of
    // complete indifference and drops out; anything else couples into the
    // numerator and is eliminated through the Schur complement below.
    double mscale = M.cwiseAbs().maxCoeff() + 1e-300;
    std::vector<Index> coupled_null;
    for (Index idx : null_idx) {
        VectorXd u = en.eigenvectors().col(idx);
        VectorXd Mu = M * u;
        if (Mu.cwiseAbs().maxCoeff() <= 1e-12 * mscale) {
            if (std::abs(u[0]) > 1e-12 * u.norm()) {
                PencilSolution sol;
                sol.a = u / u[0];
                sol.value = 0.0;
                sol.exact_fit = true;
                return sol;
            }
        } else {
            coupled_null.push_back(idx);
        }
    }
    null_idx = std::move(coupled_null);

    if (pos_idx.empty()) {
        // Denominator identically zero on the slice: minimise the numerator.
        // Stationarity of a'Ma over a = (1, -b)' is M_xx b = m_x0; only a
        // zero-residual minimum keeps the objective meaningful.
        MatrixXd Mxx = M.bottomRightCorner(d - 1, d - 1);
        SymEig ex(Mxx);
        if (ex.min_eig() < -1e-10 * std::max(ex.max_abs(), 1.0) || !ex.invertible()) {
            throw ConditioningError("objective numerator is degenerate with zero denominator");
        }
        VectorXd b = ex.solve(M.block(1, 0, d - 1, 1).col(0));
        PencilSolution sol;
        sol.a = VectorXd(d);
        sol.a[0] = 1.0;
        sol.a.tail(d - 1) = -b;  // a = (1, -beta)' with beta = b
        double num = quad(M, sol.a);
        double scale = M.cwiseAbs().maxCoeff() + 1e-300;
        if (std::abs(num) > 1e-10 * scale) {
            throw DegeneracyError("objective denominator vanishes identically");
        }
        sol.value = 0.0;
        sol.exact_fit = true;
        return sol;
    }

    Index n0 = static_cast<Index>(null_idx.size());
    Index np = static_cast<Index>(pos_idx.size());
    MatrixXd U0(d, n0), Up(d, np);
    VectorXd lam_p(np);
    for (Index j = 0; j < n0; ++j) U0.col(j) = en.eigenvectors().col(null_idx[j]);
    for (Index j = 0; j < np; ++j) {
        Up.col(j) = en.eigenvectors().col(pos_idx[j]);
        lam_p(j) = en.eigenvalues()(pos_idx[j]);
    }

    MatrixXd S;          // numerator reduced to the positive subspace
    MatrixXd M00_inv_M0p;  // for recovering the deflated coordinates
    if (n0 > 0) {
        MatrixXd M00 = U0.transpose() * M * U0;
        MatrixXd M0p = U0.transpose() * M * Up;
        Eigen::LLT<MatrixXd> llt(M00);
        if (llt.info() != Eigen::Success) {
            throw ConditioningError(
                "numerator is not positive definite on the zero-denominator directions");
        }
        M00_inv_M0p = llt.solve(M0p);
        S = Up.transpose() * M * Up - M0p.transpose() * M00_inv_M0p;
    } else {
        S = Up.transpose() * M * Up;
    }
    S = 0.5 * (S + S.transpose());

    // Cholesky-style reduction with the diagonal positive part.
    VectorXd rsq = lam_p.cwiseSqrt().cwiseInverse();
    MatrixXd St = rsq.asDiagonal() * S * rsq.asDiagonal();
    St = 0.5 * (St + St.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(St);
    if (es.info() != Eigen::Success) throw ConditioningError("pencil eigendecomposition failed");

    auto assemble = [&](Index which) {
        VectorXd x = rsq.asDiagonal() * es.eigenvectors().col(which);
        VectorXd a = Up * x;
        if (n0 > 0) a -= U0 * (M00_inv_M0p * x);
        return a;
    };

    // Eigenvalues ascend; collect the (near-)multiple smallest and keep the
    // candidate with the largest first component.
    double lmin = es.eigenvalues()(0);
    double tie_tol = 1e-12 * (1.0 + std::abs(lmin));
    double best_a0 = -1.0;
    VectorXd best_a;
    for (Index i = 0; i < np && es.eigenvalues()(i) <= lmin + tie_tol; ++i) {
        VectorXd a = assemble(i);
        double a0 = std::abs(a[0]) / a.norm();
        if (a0 > best_a0) {
            best_a0 = a0;
            best_a = a;
        }
    }
    if (best_a0 < 1e-12) {
        throw ConditioningError(
            "minimising eigenvector has a vanishing first component; cannot normalise");
    }
    PencilSolution sol;
    sol.a = best_a / best_a[0];
    sol.value = lmin;
    sol.exact_fit = false;
    return sol;
}

void kkt_solve(const MatrixXd& H, const MatrixXd& A, const VectorXd& rhs_top,
               const VectorXd& a, VectorXd* beta, VectorXd* gamma) {
    Index g = H.rows(), p = A.rows();
    MatrixXd K(g + p, g + p);
    K.topLeftCorner(g, g) = H;
    K.topRightCorner(g, p) = A.transpose();
    K.bottomLeftCorner(p, g) = A;
    K.bottomRightCorner(p, p).setZero();
    Eigen::FullPivLU<MatrixXd> lu(K);
    if (!lu.isInvertible()) {
        throw ConditioningError("constrained FOC system is singular");
    }
    VectorXd rhs(g + p);
    rhs.head(g) = rhs_top;
    rhs.tail(p) = a;
    VectorXd sol = lu.solve(rhs);
    *beta = sol.head(g);
    *gamma = sol.tail(p);
}

double ratio_value(const Moments& m, const VectorXd& a, bool* zero_denominator) {
    double num = quad(m.WCW, a);
    double den = quad(m.WBW, a) / m.trB;
    double scale = std::abs(m.WBW.trace()) / m.trB + 1e-300;
    if (den <= scale * 1e-15) {
        *zero_denominator = true;
        return 0.0;
    }
    *zero_denominator = false;
    return num / den;
}

}  // namespace

double objective(const JackknifeKernel& kernel, const VectorXd& y, const MatrixXd& X,
                 const VectorXd& beta) {
    if (X.rows() != y.size() || beta.size() != X.cols()) {
        throw UsageError("objective: dimension mismatch");
    }
    VectorXd eps = y - X * beta;
    double num = eps.dot(kernel.C * eps);
    if (kernel.quadratic_objective()) return num;
    double den = eps.dot(kernel.B * eps) / kernel.trB;
    if (den <= 0.0) {
        throw DegeneracyError("objective denominator vanished (degenerate residual)");
    }
    return num / den;
}

EstimationResult estimate_unrestricted(const JackknifeKernel& kernel, const VectorXd& y,
                                       const MatrixXd& X) {
    Index g = X.cols();
    Moments m = make_moments(kernel, y, X);
    MatrixXd XCX = m.WCW.bottomRightCorner(g, g);
    VectorXd XCy = m.WCW.block(1, 0, g, 1).col(0);

    EstimationResult res;
    if (kernel.quadratic_objective()) {
        SymEig eh(XCX);
        if (!eh.invertible()) throw ConditioningError("X'CX is singular");
        res.beta = eh.solve(XCy);
        res.H = XCX;
        res.r_min = eh.min_eig();
        res.lambda = 0.0;
        res.sigma2 = 1.0;
        res.sigma12 = VectorXd::Zero(g);
        VectorXd a = stack_coef(res.beta);
        res.Q_min = quad(m.WCW, a);
        res.residuals = y - X * res.beta;
        return res;
    }

    PencilSolution sol = solve_ratio_pencil(m.WCW, m.WBW / m.trB);
    res.beta = -sol.a.tail(g);
    res.residuals = y - X * res.beta;
    bool zero_den = false;
    double q_direct = sol.exact_fit ? 0.0 : ratio_value(m, sol.a, &zero_den);
    if (!sol.exact_fit) {
        if (zero_den) {
            q_direct = 0.0;
        } else if (std::abs(q_direct - sol.value) > 1e-8 * (1.0 + std::abs(q_direct))) {
            throw ConditioningError("generalized eigenvalue disagrees with direct objective");
        }
    }
    res.Q_min = q_direct;
    res.lambda = res.Q_min / m.trB;
    res.H = XCX - res.lambda * m.WBW.bottomRightCorner(g, g);
    res.H = 0.5 * (res.H + res.H.transpose());
    res.r_min = SymEig(res.H).min_eig();
    VectorXd a = stack_coef(res.beta);
    double ebe = quad(m.WBW, a);
    res.sigma2 = ebe / m.trB;
    res.sigma12 = (m.WBW * a).tail(g) / m.trB;
    return res;
}

RestrictedEstimationResult estimate_restricted(const JackknifeKernel& kernel, const VectorXd& y,
                                               const MatrixXd& X,
                                               const LinearRestriction& restriction) {
    Index g = X.cols();
    validate_restriction(restriction, g);
    Moments m = make_moments(kernel, y, X);
    MatrixXd XCX = m.WCW.bottomRightCorner(g, g);
    VectorXd XCy = m.WCW.block(1, 0, g, 1).col(0);
    MatrixXd XBX = m.WBW.bottomRightCorner(g, g);
    VectorXd XBy = m.WBW.block(1, 0, g, 1).col(0);
    const MatrixXd& A = restriction.A;
    const VectorXd& a = restriction.a;

    RestrictedEstimationResult res;
    if (kernel.quadratic_objective()) {
        // beta_tilde = beta_hat - H^{-1} A' (A H^{-1} A')^{-1} (A beta_hat - a)
        SymEig eh(XCX);
        if (!eh.invertible()) throw ConditioningError("X'CX is singular");
        VectorXd beta_hat = eh.solve(XCy);
        MatrixXd Hinv = eh.inverse();
        MatrixXd AHiA = A * Hinv * A.transpose();
        Eigen::FullPivLU<MatrixXd> lu(AHiA);
        if (!lu.isInvertible()) throw ConditioningError("A H^{-1} A' is singular");
        VectorXd slack = A * beta_hat - a;
        VectorXd gamma = lu.solve(slack);
        res.beta = beta_hat - Hinv * (A.transpose() * gamma);
        res.gamma = gamma;
        res.H = XCX;
        res.r_min = eh.min_eig();
        res.lambda = 0.0;
        res.iterations = 0;
        res.residuals = y - X * res.beta;
        VectorXd av = stack_coef(res.beta);
        res.Q_restricted = quad(m.WCW, av);
        if ((A * res.beta - a).cwiseAbs().maxCoeff() > 1e-10) {
            throw ConditioningError("restricted solution violates the constraint");
        }
        return res;
    }

    // Fixed point on lambda. Initialise from the restricted quadratic
    // minimiser with the same C.
    VectorXd beta_t, gamma_t;
    kkt_solve(XCX, A, XCy, a, &beta_t, &gamma_t);
    bool zero_den = false;
    double lambda_t = ratio_value(m, stack_coef(beta_t), &zero_den) / m.trB;
    if (zero_den) lambda_t = 0.0;

    std::vector<double> trajectory{lambda_t};
    int alternations = 0;
    double prev_increment = 0.0;
    bool damped = false;
    const int max_iter = 500;
    int iter = 0;
    for (; iter < max_iter; ++iter) {
        MatrixXd Hl = XCX - lambda_t * XBX;
        VectorXd rhs = XCy - lambda_t * XBy;
        kkt_solve(Hl, A, rhs, a, &beta_t, &gamma_t);
        double q = ratio_value(m, stack_coef(beta_t), &zero_den);
        double lambda_raw = zero_den ? 0.0 : q / m.trB;
        double increment = lambda_raw - lambda_t;
        if (iter > 0 && increment * prev_increment < 0.0) {
            if (++alternations >= 2) damped = true;
        }
        prev_increment = increment;
        double lambda_next = damped ? lambda_t + 0.5 * increment : lambda_raw;
        trajectory.push_back(lambda_next);
        bool converged = std::abs(lambda_next - lambda_t) <= 1e-12 * (1.0 + std::abs(lambda_t));
        lambda_t = lambda_next;
        if (converged) {
            ++iter;
            break;
        }
    }
    if (iter >= max_iter) {
        throw NonconvergenceError("restricted ratio estimator did not converge", trajectory);
    }

    res.beta = beta_t;
    res.iterations = iter;
    res.residuals = y - X * res.beta;
    VectorXd av = stack_coef(res.beta);
    double q = ratio_value(m, av, &zero_den);
    res.Q_restricted = zero_den ? 0.0 : q;
    res.lambda = res.Q_restricted / m.trB;
    res.H = XCX - res.lambda * XBX;
    res.H = 0.5 * (res.H + res.H.transpose());
    res.r_min = SymEig(res.H).min_eig();
    double sigma2 = quad(m.WBW, av) / m.trB;
    res.gamma = sigma2 > 0 ? VectorXd(gamma_t / sigma2) : gamma_t;
    if ((A * res.beta - a).cwiseAbs().maxCoeff() > 1e-10) {
        throw ConditioningError("restricted solution violates the constraint");
    }
    return res;
}

}  // namespace jive
