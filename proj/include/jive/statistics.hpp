#pragma once

#include "jive/estimators.hpp"
#include "jive/kernels.hpp"
#include "jive/types.hpp"
#include "jive/variance.hpp"

#include <string>
#include <vector>

namespace jive {

// Trinity families plus the Anderson-Rubin comparator. The unstarred families
// carry chi-bar-square references, the starred ones chi-square, AR a standard
// normal.
enum class Family { D, LM, W1, W2, Dstar1, Dstar2, LMstar, W1star, W2star, AR };
const char* family_name(Family f);
Family family_from_name(const std::string& name);
bool is_starred(Family f);

enum class Hypothesis { full_vector, linear_restriction };
const char* hypothesis_name(Hypothesis h);

struct Reference {
    enum class Kind { chibar, chisq, std_normal };
    Kind kind = Kind::chisq;
    VectorXd weights;  // chibar: clipped, zero weights dropped (may be empty)
    int df = 0;        // chisq
};
const char* reference_kind_name(Reference::Kind k);
Reference::Kind reference_kind_from_name(const std::string& name);

struct PluginPoint {
    std::string role;  // "statistic" / "weights" / "variance"
    VectorXd beta;
};

struct TestReport {
    Method method = Method::SJIVE;
    Family family = Family::D;
    Hypothesis hypothesis = Hypothesis::full_vector;
    double statistic = 0.0;
    Reference reference;
    double p_value = 1.0;
    VarianceMode variance_mode = VarianceMode::plugin;
    std::vector<PluginPoint> plugin_points;
};

std::string report_to_json(const TestReport& report);

// One (family, reference) evaluation request; `evaluate_*` amortises the
// estimation and plug-in work across a batch of them.
struct StatRequest {
    Family family = Family::D;
    Reference::Kind reference = Reference::Kind::chibar;
    VarianceMode mode = VarianceMode::plugin;
};

TestReport test_full_vector(const JackknifeKernel& kernel, const IVDataset& data,
                            const VectorXd& beta0, Family family,
                            Reference::Kind reference, VarianceMode mode);

TestReport test_linear_restriction(const JackknifeKernel& kernel, const IVDataset& data,
                                   const LinearRestriction& restriction, Family family,
                                   Reference::Kind reference, VarianceMode mode);

std::vector<TestReport> evaluate_full_vector(const JackknifeKernel& kernel,
                                             const IVDataset& data, const VectorXd& beta0,
                                             const std::vector<StatRequest>& requests);

std::vector<TestReport> evaluate_linear_restriction(const JackknifeKernel& kernel,
                                                    const IVDataset& data,
                                                    const LinearRestriction& restriction,
                                                    const std::vector<StatRequest>& requests);

// AR(beta0) = eps'C eps / (sqrt(k) sqrt(omega)), two-sided normal p-value by
// default. The naive omega uses the Hadamard square of C, the cross-fit one
// the variant's B.
TestReport ar_test(const ArKernel& kernel, const IVDataset& data, const VectorXd& beta0,
                   VarianceMode mode, bool one_sided = false);
TestReport ar_test(const IVDataset& data, const VectorXd& beta0, ArVariant variant,
                   VarianceMode mode, bool one_sided = false);

}  // namespace jive
