#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace jive {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Index = Eigen::Index;

// The four objective functions. SJIVE/HLIM minimise a ratio of quadratic
// forms, JIVE1/JIVE2 the numerator alone.
enum class Method { SJIVE, HLIM, JIVE1, JIVE2 };

inline bool is_ratio_method(Method m) {
    return m == Method::SJIVE || m == Method::HLIM;
}

const char* method_name(Method m);
Method method_from_name(const std::string& name);

enum class VarianceMode { plugin, crossfit };
const char* variance_mode_name(VarianceMode m);
VarianceMode variance_mode_from_name(const std::string& name);

// ---------------------------------------------------------------------------
// Errors. `user_error()` distinguishes bad input (CLI exit 2) from internal
// numerical failures (exit 1).

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual bool user_error() const { return false; }
    virtual const char* kind() const { return "error"; }
};

class SchemaError : public Error {
public:
    using Error::Error;
    bool user_error() const override { return true; }
    const char* kind() const override { return "schema"; }
};

class ParseError : public Error {
public:
    using Error::Error;
    bool user_error() const override { return true; }
    const char* kind() const override { return "parse"; }
};

class ValidationError : public Error {
public:
    using Error::Error;
    bool user_error() const override { return true; }
    const char* kind() const override { return "validation"; }
};

class SpecError : public Error {
public:
    using Error::Error;
    bool user_error() const override { return true; }
    const char* kind() const override { return "spec"; }
};

class UsageError : public Error {
public:
    using Error::Error;
    bool user_error() const override { return true; }
    const char* kind() const override { return "usage"; }
};

class KernelError : public Error {
public:
    using Error::Error;
    const char* kind() const override { return "kernel"; }
};

class ConditioningError : public Error {
public:
    using Error::Error;
    const char* kind() const override { return "conditioning"; }
};

class DegeneracyError : public Error {
public:
    using Error::Error;
    const char* kind() const override { return "degeneracy"; }
};

class NonconvergenceError : public Error {
public:
    NonconvergenceError(const std::string& what, std::vector<double> trajectory)
        : Error(what), lambda_trajectory(std::move(trajectory)) {}
    const char* kind() const override { return "nonconvergence"; }
    std::vector<double> lambda_trajectory;
};

class PrecisionError : public Error {
public:
    PrecisionError(const std::string& what, double achieved)
        : Error(what), achieved_bound(achieved) {}
    const char* kind() const override { return "precision"; }
    double achieved_bound = 0.0;
};

// ---------------------------------------------------------------------------
// Core data. Immutable after construction/validation; shared read-only across
// replication workers.

struct IVDataset {
    VectorXd y;   // outcome, length n
    MatrixXd X;   // regressors, n x g (endogenous and exogenous)
    MatrixXd Z;   // instruments, n x k
    std::optional<std::vector<std::string>> labels;  // y, X..., Z... column names

    Index n() const { return y.size(); }
    Index g() const { return X.cols(); }
    Index k() const { return Z.cols(); }
};

// Validates dimensions (n > k >= g >= 1), finiteness and full column rank of
// Z. Throws ValidationError naming the dependent columns on rank deficiency.
void validate_dataset(const IVDataset& data);

// H0: A beta = a with A of full row rank p <= g.
struct LinearRestriction {
    MatrixXd A;  // p x g
    VectorXd a;  // length p

    Index p() const { return A.rows(); }
};

void validate_restriction(const LinearRestriction& r, Index g);

// Numerical-rank tolerance: singular values below rank_tol * sigma_max count
// as zero.
inline constexpr double rank_tol = 1e-10;

}  // namespace jive
