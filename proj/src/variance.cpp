#include "jive/variance.hpp"

#include <cmath>

namespace jive {

namespace {

MatrixXd sym_inverse(const MatrixXd& M, const char* what) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(M);
    if (es.info() != Eigen::Success) {
        throw ConditioningError(std::string(what) + ": eigendecomposition failed");
    }
    double amax = es.eigenvalues().cwiseAbs().maxCoeff();
    if (es.eigenvalues().cwiseAbs().minCoeff() <= 1e-13 * std::max(amax, 1e-300)) {
        throw ConditioningError(std::string(what) + " is singular");
    }
    return es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
           es.eigenvectors().transpose();
}

}  // namespace

PluginSet plugin_set(const JackknifeKernel& kernel, const VectorXd& y, const MatrixXd& X,
                     const VectorXd& beta, VarianceMode mode) {
    Index n = y.size(), g = X.cols();
    if (X.rows() != n || beta.size() != g || kernel.n() != n) {
        throw UsageError("plugin_set: dimension mismatch");
    }
    if (!beta.allFinite()) throw UsageError("plugin_set: beta must be finite");

    PluginSet out;
    out.eval_point = beta;
    out.variance_mode = mode;
    out.residuals = y - X * beta;
    const VectorXd& eps = out.residuals;
    const double k = static_cast<double>(kernel.k);

    VectorXd Ceps = kernel.C * eps;
    MatrixXd CX = kernel.C * X;
    out.XCeps = X.transpose() * Ceps;

    MatrixXd Xt;  // Xtilde(beta)
    MatrixXd CXt;
    if (kernel.quadratic_objective()) {
        out.lambda = 0.0;
        out.sigma2 = 1.0;
        out.sigma12 = VectorXd::Zero(g);
        out.Q = eps.dot(Ceps);
        out.H.noalias() = X.transpose() * CX;
        Xt = X;
        CXt = CX;
    } else {
        bool identity_B = kernel.method == Method::HLIM;
        VectorXd Beps = identity_B ? eps : VectorXd(kernel.B * eps);
        double num = eps.dot(Ceps);
        double ebe = eps.dot(Beps);
        if (ebe <= 0.0) {
            throw DegeneracyError("plugin denominator vanished (degenerate residual)");
        }
        double sigma2 = ebe / kernel.trB;
        out.sigma2 = sigma2;
        out.Q = num / sigma2;
        out.lambda = out.Q / kernel.trB;
        out.sigma12 = X.transpose() * Beps / kernel.trB;
        MatrixXd BX = identity_B ? X : MatrixXd(kernel.B * X);
        out.H.noalias() = X.transpose() * CX;
        out.H.noalias() -= out.lambda * (X.transpose() * BX);
        // Xtilde = X - eps * sigma12' / sigma2
        Xt = X - eps * (out.sigma12.transpose() / sigma2);
        CXt = CX - Ceps * (out.sigma12.transpose() / sigma2);
    }
    out.H = 0.5 * (out.H + out.H.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> eh(out.H);
    if (eh.info() != Eigen::Success) throw ConditioningError("H eigendecomposition failed");
    out.r_min = eh.eigenvalues()(0);

    if (mode == VarianceMode::plugin) {
        // Phi = (Xt'C D_eps^2 C Xt + Xt' D_eps C^(2) D_eps Xt) / k
        MatrixXd DXt = eps.asDiagonal() * Xt;
        MatrixXd C2 = kernel.C.cwiseProduct(kernel.C);
        out.Phi.noalias() = CXt.transpose() * (eps.array().square().matrix().asDiagonal() * CXt);
        out.Phi.noalias() += DXt.transpose() * (C2 * DXt);
        out.Phi /= k;
    } else {
        // Cross-fit: v = B eps, b = diag(B),
        // M = (b b' + B^(2))^(-1) .* C^(2),
        // Phi = (Xt'C D_eps diag(b)^{-1} D_v C Xt + Xt' D_v M D_v Xt) / k
        bool identity_B = kernel.method == Method::HLIM || kernel.method == Method::JIVE2;
        VectorXd v = identity_B ? eps : VectorXd(kernel.B * eps);
        VectorXd b = kernel.B.diagonal();
        MatrixXd denom = b * b.transpose() + kernel.B.cwiseProduct(kernel.B);
        if (denom.cwiseAbs().minCoeff() < 1e-14) {
            throw DegeneracyError("cross-fit weight denominator vanished");
        }
        MatrixXd M = kernel.C.cwiseProduct(kernel.C).cwiseQuotient(denom);
        VectorXd mid = eps.cwiseQuotient(b).cwiseProduct(v);
        MatrixXd DvXt = v.asDiagonal() * Xt;
        out.Phi.noalias() = CXt.transpose() * (mid.asDiagonal() * CXt);
        out.Phi.noalias() += DvXt.transpose() * (M * DvXt);
        out.Phi /= k;
    }
    out.Phi = 0.5 * (out.Phi + out.Phi.transpose());

    // PSD is a consequence of the construction at this scale; a material
    // negative eigenvalue means the inputs are broken, so fail rather than
    // project.
    Eigen::SelfAdjointEigenSolver<MatrixXd> ep(out.Phi);
    if (ep.info() != Eigen::Success) throw ConditioningError("Phi eigendecomposition failed");
    double scale = std::max(out.Phi.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    if (ep.eigenvalues()(0) < -1e-10 * scale) {
        throw DegeneracyError("variance estimate has a negative eigenvalue");
    }
    return out;
}

RestrictionOperators restriction_operators(const PluginSet& plugins,
                                           const LinearRestriction& restriction) {
    const MatrixXd& A = restriction.A;
    Index g = plugins.H.rows();
    if (A.cols() != g) throw UsageError("restriction_operators: dimension mismatch");

    MatrixXd Hinv = sym_inverse(plugins.H, "H");
    MatrixXd AHi = A * Hinv;                      // p x g
    MatrixXd AHiA = AHi * A.transpose();          // p x p
    MatrixXd AHiA_inv = sym_inverse(0.5 * (AHiA + AHiA.transpose()), "A H^{-1} A'");

    RestrictionOperators ops;
    ops.Gamma = A.transpose() * AHiA_inv * AHi;
    ops.Xi_a = plugins.r_min * Hinv * A.transpose() * AHiA_inv * AHi;

    // (Gamma Phi Gamma')^+ =
    //   A'(AA')^{-1}(A H^{-1} A')(A H^{-1} Phi H^{-1} A')^{-1}(A H^{-1} A')(AA')^{-1}A
    MatrixXd AAt = A * A.transpose();
    MatrixXd AAt_inv = sym_inverse(0.5 * (AAt + AAt.transpose()), "A A'");
    MatrixXd mid = AHi * plugins.Phi * AHi.transpose();
    MatrixXd mid_inv = sym_inverse(0.5 * (mid + mid.transpose()), "A H^{-1} Phi H^{-1} A'");
    MatrixXd core = AHiA * mid_inv * AHiA;
    ops.GPhiG_pinv = A.transpose() * AAt_inv * core * AAt_inv * A;
    ops.GPhiG_pinv = 0.5 * (ops.GPhiG_pinv + ops.GPhiG_pinv.transpose());
    return ops;
}

}  // namespace jive
