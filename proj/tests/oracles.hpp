#pragma once

// Brute-force reference implementations used only by the test suite. All
// quadratic forms are assembled by explicit index sums from the defining
// formulas, the hat matrix goes through the normal equations, and minimisers
// come from grid/golden-section search, so nothing here shares a code path
// with the library.

#include "jive/types.hpp"

#include <functional>
#include <string>
#include <vector>

namespace oracle {

using jive::Index;
using jive::MatrixXd;
using jive::VectorXd;

struct OracleReport {
    std::string oracle;
    std::string instance;
    double library_value = 0.0;
    double oracle_value = 0.0;
    double discrepancy = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

OracleReport make_report(const std::string& name, const std::string& instance, double lib,
                         double orc, double tol, bool relative);
std::string report_json(const OracleReport& r);
void record(const OracleReport& r);  // appended to JIVE_ORACLE_ARTIFACTS if set

// Jackknife matrices assembled literally from their definitions.
struct Kernels {
    MatrixXd P;
    MatrixXd C_sjive;
    MatrixXd B_sjive;
    MatrixXd C_hlim;   // P - D
    MatrixXd B_iminp;  // I - P
};
Kernels build_kernels(const MatrixXd& Z);

double quad_form(const MatrixXd& M, const VectorXd& a, const VectorXd& b);  // a'Mb by loops
MatrixXd cross_form(const MatrixXd& M, const MatrixXd& X);                  // X'MX by loops

// Objective values straight from the definitions.
double objective_ratio(const Kernels& k, bool sjive, const VectorXd& y, const MatrixXd& X,
                       const VectorXd& beta, double trB);
double objective_quadratic(const MatrixXd& C, const VectorXd& y, const MatrixXd& X,
                           const VectorXd& beta);

// Plug-in variance by index sums; sigma12/sigma2 normalised by tr(B).
MatrixXd phi_plugin(const MatrixXd& C, const VectorXd& eps, const MatrixXd& Xt, double k);
MatrixXd phi_crossfit(const MatrixXd& C, const MatrixXd& B, const VectorXd& eps,
                      const MatrixXd& Xt, double k);
MatrixXd xtilde(const MatrixXd& B, const VectorXd& eps, const MatrixXd& X, double trB);

double omega_naive(const MatrixXd& C, const VectorXd& eps, double k);
double omega_crossfit(const MatrixXd& C, const MatrixXd& B, const VectorXd& eps, double k);

// Derivative-free minimisation: golden-section refinement around the best
// point of a coarse grid, with cyclic coordinate descent for the remaining
// coordinates at each profile point.
double golden_minimize(const std::function<double(double)>& f, double lo, double hi,
                       double tol);

// Unrestricted minimiser of the profiled objective: grid+golden over
// coordinate `profile_coord`, inner cyclic coordinate descent over the rest.
VectorXd minimize_profiled(const std::function<double(const VectorXd&)>& f, VectorXd start,
                           Index profile_coord, double half_width, double tol);

// Minimiser over { beta : A beta = a } parametrised through the null space.
VectorXd minimize_restricted(const std::function<double(const VectorXd&)>& f,
                             const MatrixXd& A, const VectorXd& a, VectorXd start,
                             double half_width, double tol);

// Monte Carlo survival estimate for a weighted chi-square law.
struct McEstimate {
    double value = 0.0;
    double se = 0.0;
};
McEstimate mc_weighted_chisq_sf(const VectorXd& weights, double t, std::int64_t draws,
                                std::uint64_t seed);

// One pass over the draws, several evaluation points.
std::vector<McEstimate> mc_weighted_chisq_sf_multi(const VectorXd& weights,
                                                   const std::vector<double>& ts,
                                                   std::int64_t draws, std::uint64_t seed);

}  // namespace oracle
