#pragma once

#include "jive/kernels.hpp"
#include "jive/types.hpp"

namespace jive {

// Feasible plug-in quantities at an evaluation point beta. For JIVE1/JIVE2
// the simplifications sigma2 = 1, sigma12 = 0, Xtilde = X and H = X'CX apply,
// so Phi depends on beta only through the residual diagonal.
struct PluginSet {
    VectorXd eval_point;
    MatrixXd H;            // X' (C - lambda(beta) B) X
    double r_min = 0.0;    // smallest eigenvalue of H
    double lambda = 0.0;   // Q_n(beta) / tr(B)
    double sigma2 = 1.0;
    VectorXd sigma12;
    MatrixXd Phi;          // g x g, symmetric PSD
    VarianceMode variance_mode = VarianceMode::plugin;
    VectorXd residuals;
    VectorXd XCeps;        // X'C (y - X beta), plain C
    double Q = 0.0;        // objective value at beta
};

PluginSet plugin_set(const JackknifeKernel& kernel, const VectorXd& y, const MatrixXd& X,
                     const VectorXd& beta, VarianceMode mode);

// Gamma = A'(A H^{-1} A')^{-1} A H^{-1}, the explicit reflexive generalised
// inverse of Gamma Phi Gamma', and Xi_a = r_min H^{-1} A'(A H^{-1} A')^{-1} A H^{-1}.
struct RestrictionOperators {
    MatrixXd Gamma;
    MatrixXd GPhiG_pinv;
    MatrixXd Xi_a;
};

RestrictionOperators restriction_operators(const PluginSet& plugins,
                                           const LinearRestriction& restriction);

}  // namespace jive
