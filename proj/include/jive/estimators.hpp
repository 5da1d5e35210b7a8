#pragma once

#include "jive/kernels.hpp"
#include "jive/types.hpp"

namespace jive {

struct EstimationResult {
    VectorXd beta;       // minimiser of the objective
    double Q_min = 0.0;  // objective at beta
    double lambda = 0.0;    // Q_min / tr(B); identically 0 for JIVE1/JIVE2
    VectorXd residuals;     // y - X beta
    MatrixXd H;             // X' (C - lambda B) X at beta
    double r_min = 0.0;     // smallest eigenvalue of H
    double sigma2 = 1.0;    // (y-Xb)'B(y-Xb)/tr(B); identically 1 for JIVE1/JIVE2
    VectorXd sigma12;       // X'B(y-Xb)/tr(B); zero for JIVE1/JIVE2
};

struct RestrictedEstimationResult {
    VectorXd beta;
    VectorXd gamma;              // multipliers, scaled as in the ratio FOCs
    double Q_restricted = 0.0;
    double lambda = 0.0;
    VectorXd residuals;
    MatrixXd H;
    double r_min = 0.0;
    int iterations = 0;
};

// Q_n(beta): ratio of quadratic forms for SJIVE/HLIM, the numerator alone for
// JIVE1/JIVE2. Throws DegeneracyError when the ratio denominator vanishes.
double objective(const JackknifeKernel& kernel, const VectorXd& y, const MatrixXd& X,
                 const VectorXd& beta);

// JIVE branch: closed form (X'CX)^{-1} X'Cy. Ratio branch: smallest
// generalized eigenvalue of the pencil (W'CW, W'BW/trB) over W = [y X], with
// the eigenvector rescaled to first component one. Directions on which the
// denominator form vanishes (exogenous regressors that are also instruments)
// are deflated first.
EstimationResult estimate_unrestricted(const JackknifeKernel& kernel, const VectorXd& y,
                                       const MatrixXd& X);

// JIVE branch: exact equality-constrained quadratic minimiser. Ratio branch:
// fixed-point iteration on lambda, each step solving the linearly constrained
// quadratic FOC system at the current lambda; 0.5 damping kicks in when the
// lambda increments oscillate.
RestrictedEstimationResult estimate_restricted(const JackknifeKernel& kernel,
                                               const VectorXd& y, const MatrixXd& X,
                                               const LinearRestriction& restriction);

}  // namespace jive
