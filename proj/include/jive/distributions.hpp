#pragma once

#include "jive/types.hpp"

namespace jive {

// Law of sum_i w_i Z_i^2 for independent standard normal Z_i; weights must be
// nonnegative with at least one strictly positive entry. Negative estimated
// eigenvalues are an upstream problem and are rejected here.
struct ChiBarSpec {
    explicit ChiBarSpec(VectorXd w);
    const VectorXd& weights() const { return weights_; }

private:
    VectorXd weights_;
};

// P(sum_i w_i Z_i^2 > t), absolute accuracy 1e-8.
double weighted_chisq_sf(const ChiBarSpec& spec, double t);

// Upper tail of chi-square with df degrees of freedom.
double chisq_sf(int df, double t);

// Standard normal upper tail.
double normal_sf(double t);

}  // namespace jive
