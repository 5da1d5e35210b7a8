#pragma once

#include "jive/types.hpp"

#include <string>
#include <vector>

namespace jive {

// Column-role map for CSV datasets. Roles are matched against the header row;
// order within each role is preserved in the loaded matrices. Regressors
// listed in `exogenous` are expected to appear among the instruments too (as
// instruments for themselves); the loader warns when one does not.
struct CsvSchema {
    std::string outcome;
    std::vector<std::string> regressors;
    std::vector<std::string> instruments;
    std::vector<std::string> exogenous;
};

CsvSchema schema_from_json_file(const std::string& path);
CsvSchema schema_from_json(const std::string& json_text);

IVDataset load_dataset(const std::string& path, const CsvSchema& schema,
                       std::vector<std::string>* warnings = nullptr);

// Writes header + rows in shortest round-trip precision (reload is
// bit-identical).
void save_dataset(const std::string& path, const IVDataset& data,
                  const CsvSchema& schema);

LinearRestriction load_restriction(const std::string& path);
LinearRestriction restriction_from_json(const std::string& json_text);
std::string restriction_to_json(const LinearRestriction& r);

// Diagnostic for the projection-diagonal condition max_i P_ii <= threshold.
// Report only; bad entries are flagged, never fatal here.
struct Assumption1Report {
    double max_p = 0.0;
    Index argmax = -1;
    std::vector<Index> flagged;
    double threshold = 0.0;
    bool pass = true;
};

Assumption1Report validate_assumption1(const VectorXd& P_diag, double threshold = 0.99);

}  // namespace jive
