#pragma once

#include "jive/dgp.hpp"
#include "jive/statistics.hpp"
#include "jive/types.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace jive {

enum class DgpKind { dgp1, dgp2 };
const char* dgp_kind_name(DgpKind k);

// One size or power experiment: a DGP configuration, the methods, and the
// (family, reference, variance) cells to evaluate. AR requests attach the
// CMS21 comparator to SJIVE/JIVE1 rows and the MS22 one to HLIM/JIVE2 rows.
struct ExperimentSpec {
    DgpKind dgp = DgpKind::dgp1;
    DGP1Spec dgp1;
    DGP2Spec dgp2;
    std::vector<Method> methods{Method::SJIVE, Method::HLIM, Method::JIVE1, Method::JIVE2};
    std::vector<StatRequest> requests;
    std::vector<VarianceMode> ar_modes;  // AR columns, JIVE1/JIVE2 rows only
    Hypothesis hypothesis = Hypothesis::linear_restriction;
    int reps = 5000;
    double nominal = 0.05;
    std::uint64_t seed = 1;
    int workers = 0;  // 0: JIVE_INFER_THREADS or all hardware threads

    Index n() const { return dgp == DgpKind::dgp1 ? dgp1.n : dgp2.n; }
    double alpha() const { return dgp == DgpKind::dgp1 ? dgp1.alpha : dgp2.alpha; }
    double r() const { return dgp == DgpKind::dgp1 ? dgp1.r : dgp2.r; }
    Index endogenous_count() const { return dgp == DgpKind::dgp1 ? 1 : 2; }
    VectorXd beta_truth() const;
    LinearRestriction null_restriction() const;
    IVDataset draw(std::uint64_t replication) const;
};

// Evaluation point for the AR comparators: endogenous coordinates pinned at
// beta0, the exogenous block refitted by least squares (the usual way the AR
// statistic handles nuisance regression coefficients).
VectorXd ar_evaluation_point(const IVDataset& data, const VectorXd& beta0,
                             Index n_endogenous);

ExperimentSpec experiment_from_json(const std::string& json_text);
std::string experiment_to_json(const ExperimentSpec& spec);

struct RejectionRow {
    Method method = Method::SJIVE;
    Family family = Family::D;
    Reference::Kind reference = Reference::Kind::chibar;
    VarianceMode variance_mode = VarianceMode::plugin;
    double rate = 0.0;
    double mc_se = 0.0;
    int reps_used = 0;
    int failures = 0;
};

struct RejectionTable {
    std::string dgp;
    double alpha = 0.0;
    double r = 0.0;
    Index n = 0;
    int reps = 0;
    double nominal = 0.05;
    std::uint64_t seed = 0;
    double grid_value = 0.0;  // power runs only
    bool has_grid_value = false;
    std::vector<RejectionRow> rows;
    double failure_rate = 0.0;  // worst across rows
    bool warning = false;       // failure rate above 1%

    const RejectionRow* find(Method m, Family f, VarianceMode mode) const;
};

RejectionTable run_size_experiment(const ExperimentSpec& spec);

// Data generated at the truth; the tested null moves the given coordinate of
// beta across the grid (the restriction right side follows as A beta0).
struct PowerGrid {
    std::vector<double> values;
    Index coordinate = 0;
};

std::vector<std::pair<double, RejectionTable>> run_power_curve(const ExperimentSpec& spec,
                                                               const PowerGrid& grid);

// Harness self-check: a pseudo-test rejecting when an independent uniform
// falls below the nominal level, run through the same replication loop and
// aggregation as the real experiments.
RejectionTable run_calibration_check(int reps, double nominal, std::uint64_t seed, int workers);

std::string table_to_csv(const std::vector<RejectionTable>& tables);
std::string table_to_json(const std::vector<RejectionTable>& tables);
std::string table_to_text(const std::vector<RejectionTable>& tables);
std::string power_to_csv(const std::vector<std::pair<double, RejectionTable>>& curve);
std::string power_to_gnuplot(const std::vector<std::pair<double, RejectionTable>>& curve);

// The paper-table experiment grids: 4 (alpha, r) configurations each, all
// four methods, the main-table statistic columns and both AR variances.
std::vector<ExperimentSpec> table_dgp1_experiments(int reps, std::uint64_t seed);
std::vector<ExperimentSpec> table_dgp2_experiments(int reps, std::uint64_t seed);

int resolve_workers(int workers);

}  // namespace jive
