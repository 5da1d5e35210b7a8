#pragma once

#include "jive/types.hpp"

#include <optional>
#include <string>
#include <utility>

namespace jive {

// Jackknife matrices for one method. C always has an exactly zero main
// diagonal (that is the jackknife device); B enters the denominator of the
// ratio objectives and the variance plug-ins. For the quadratic objectives
// the denominator is identically one: lambda(beta) = 0 and sigma^2 = 1, with
// B kept only for the variance plug-ins.
struct JackknifeKernel {
    Method method = Method::SJIVE;
    MatrixXd C;        // symmetric, zero diagonal
    MatrixXd B;        // symmetric PSD
    double trB = 0.0;  // = k for SJIVE/JIVE1, = n for HLIM/JIVE2
    VectorXd P_diag;
    Index k = 0;

    Index n() const { return C.rows(); }
    bool quadratic_objective() const { return !is_ratio_method(method); }
};

// Hat matrix P = Z (Z'Z)^{-1} Z' and its diagonal, via the orthogonal factor
// of a QR decomposition (never through normal equations).
std::pair<MatrixXd, VectorXd> projection_and_diag(const MatrixXd& Z);

JackknifeKernel build_kernel(const MatrixXd& Z, Method method);

// Same construction when P is already available (one hat matrix serves all
// four methods on a dataset).
JackknifeKernel kernel_from_projection(const MatrixXd& P, const VectorXd& P_diag, Index k,
                                       Method method);

// Anderson-Rubin comparators use their own (C, B) pair: the CMS21 variant
// takes both from the SJIVE construction, the MS22 variant takes C = P - D
// and B = I - P.
enum class ArVariant { CMS21, MS22 };
const char* ar_variant_name(ArVariant v);

struct ArKernel {
    ArVariant variant = ArVariant::CMS21;
    MatrixXd C;
    MatrixXd B;
    Index k = 0;
};

ArKernel build_ar_kernel(const MatrixXd& Z, ArVariant variant);
ArKernel ar_kernel_from_projection(const MatrixXd& P, const VectorXd& P_diag, Index k,
                                   ArVariant variant);

// Binary (C, B) cache keyed by a content hash of Z; returns nothing when the
// file is absent or was built from different data.
void save_kernel_cache(const std::string& path, const JackknifeKernel& kernel,
                       const MatrixXd& Z);
std::optional<JackknifeKernel> load_kernel_cache(const std::string& path, const MatrixXd& Z,
                                                 Method method);

}  // namespace jive
