#pragma once

#include "jive/types.hpp"

#include <cstdint>

namespace jive {

// Single endogenous regressor design: k1 = alpha*n instruments (the first
// three are z1, z1^2, z1^3), g2 exogenous regressors that double as
// instruments, multiplicative heteroskedasticity through rho2.
struct DGP1Spec {
    Index n = 200;
    double alpha = 0.05;   // instrument share, k1 = alpha * n
    double r = 32.0;       // concentration strength
    double rho1 = 0.3;
    double rho2 = 0.2;
    double beta = 1.0;
    Index g2 = 5;          // exogenous regressors (intercept first)

    Index k1() const;
    Index k() const { return k1() + g2; }
    Index g() const { return 1 + g2; }
    double pi() const;     // sqrt((1 + 3 rho1^2 rho2^2) r / k)
    VectorXd beta_truth() const;
    LinearRestriction null_restriction() const;  // beta_1 = beta
};

// Two endogenous regressors driven by a shared factor u; exogenous block X3
// (intercept + one normal column) is part of the instrument set.
struct DGP2Spec {
    Index n = 200;
    double alpha = 0.05;
    double r = 0.1;
    double delta1 = 0.5;
    double delta2 = 0.4;
    double sigma_v = 0.3;
    double sigma_e = 0.3;
    double beta1 = 0.3;
    double beta2 = 0.7;
    VectorXd beta3 = VectorXd::Ones(2);

    Index kj() const;      // instruments per endogenous regressor
    Index k() const { return 2 * kj() + beta3.size(); }
    Index g() const { return 2 + beta3.size(); }
    double pij() const;    // sqrt(r / (kj (1 - r)))
    VectorXd beta_truth() const;
    LinearRestriction null_restriction() const;  // beta_1 + beta_2 = 1
};

IVDataset gen_dgp1(const DGP1Spec& spec, std::uint64_t seed, std::uint64_t stream = 0);
IVDataset gen_dgp2(const DGP2Spec& spec, std::uint64_t seed, std::uint64_t stream = 0);

}  // namespace jive
