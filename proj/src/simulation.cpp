#include "jive/simulation.hpp"

#include "jive/rng.hpp"

#include <json.hpp>
#include <omp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>

namespace jive {

namespace {

using nlohmann::json;

std::string fmt_full(double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

std::string fmt_fixed(double v, int digits) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

// One evaluated cell of a rejection table.
struct Cell {
    Method method;
    bool is_ar = false;
    StatRequest request;          // trinity cells
    VarianceMode ar_mode = VarianceMode::plugin;
};

enum class Outcome : std::uint8_t { reject, accept, failed };

std::vector<Cell> make_cells(const ExperimentSpec& spec) {
    std::vector<Cell> cells;
    for (Method m : spec.methods) {
        for (const StatRequest& req : spec.requests) {
            Cell c;
            c.method = m;
            c.request = req;
            cells.push_back(c);
        }
        if (!is_ratio_method(m)) {
            for (VarianceMode mode : spec.ar_modes) {
                Cell c;
                c.method = m;
                c.is_ar = true;
                c.ar_mode = mode;
                cells.push_back(c);
            }
        }
    }
    return cells;
}

RejectionTable aggregate(const ExperimentSpec& spec, const std::vector<Cell>& cells,
                         const std::vector<Outcome>& outcomes) {
    RejectionTable table;
    table.dgp = dgp_kind_name(spec.dgp);
    table.alpha = spec.alpha();
    table.r = spec.r();
    table.n = spec.n();
    table.reps = spec.reps;
    table.nominal = spec.nominal;
    table.seed = spec.seed;
    const std::size_t nc = cells.size();
    for (std::size_t c = 0; c < nc; ++c) {
        int rejects = 0, failures = 0;
        for (int rep = 0; rep < spec.reps; ++rep) {
            switch (outcomes[static_cast<std::size_t>(rep) * nc + c]) {
                case Outcome::reject: ++rejects; break;
                case Outcome::accept: break;
                case Outcome::failed: ++failures; break;
            }
        }
        RejectionRow row;
        row.method = cells[c].method;
        if (cells[c].is_ar) {
            row.family = Family::AR;
            row.reference = Reference::Kind::std_normal;
            row.variance_mode = cells[c].ar_mode;
        } else {
            row.family = cells[c].request.family;
            row.reference = cells[c].request.reference;
            row.variance_mode = cells[c].request.mode;
        }
        row.reps_used = spec.reps - failures;
        row.failures = failures;
        row.rate = row.reps_used > 0 ? static_cast<double>(rejects) / row.reps_used : 0.0;
        row.mc_se = row.reps_used > 0
                        ? std::sqrt(row.rate * (1.0 - row.rate) / row.reps_used)
                        : 0.0;
        table.rows.push_back(row);
        double frate = static_cast<double>(failures) / std::max(spec.reps, 1);
        table.failure_rate = std::max(table.failure_rate, frate);
    }
    table.warning = table.failure_rate > 0.01;
    return table;
}

// Right-tail AR rejection: the statistic drifts upward under the
// alternative, so the comparator rejects on AR > z_{1 - nominal/2}.
bool ar_rejects(const TestReport& report, double nominal) {
    return report.p_value < nominal && report.statistic > 0.0;
}

// Evaluates every cell for one replication dataset under one null.
void evaluate_replication(const ExperimentSpec& spec, const std::vector<Cell>& cells,
                          const IVDataset& data, const LinearRestriction& restriction,
                          const VectorXd& beta0_full, Outcome* out) {
    auto [P, P_diag] = projection_and_diag(data.Z);

    std::map<Method, JackknifeKernel> kernels;
    for (Method m : spec.methods) {
        if (!kernels.count(m)) {
            kernels.emplace(m, kernel_from_projection(P, P_diag, data.k(), m));
        }
    }
    std::map<ArVariant, ArKernel> ar_kernels;
    for (const Cell& c : cells) {
        if (!c.is_ar) continue;
        ArVariant v = c.method == Method::JIVE2 ? ArVariant::MS22 : ArVariant::CMS21;
        if (!ar_kernels.count(v)) {
            ar_kernels.emplace(v, ar_kernel_from_projection(P, P_diag, data.k(), v));
        }
    }

    // Group trinity cells by method so the engine work is shared.
    for (Method m : spec.methods) {
        std::vector<std::size_t> idx;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (cells[c].method == m && !cells[c].is_ar) idx.push_back(c);
        }
        if (idx.empty()) continue;
        std::vector<StatRequest> reqs;
        for (std::size_t c : idx) reqs.push_back(cells[c].request);
        try {
            std::vector<TestReport> reports =
                spec.hypothesis == Hypothesis::linear_restriction
                    ? evaluate_linear_restriction(kernels.at(m), data, restriction, reqs)
                    : evaluate_full_vector(kernels.at(m), data, beta0_full, reqs);
            for (std::size_t i = 0; i < idx.size(); ++i) {
                out[idx[i]] =
                    reports[i].p_value < spec.nominal ? Outcome::reject : Outcome::accept;
            }
        } catch (const Error&) {
            // shared estimation stage failed: retry cell by cell so an error
            // in one statistic does not take down its siblings
            for (std::size_t i = 0; i < idx.size(); ++i) {
                try {
                    TestReport rep =
                        spec.hypothesis == Hypothesis::linear_restriction
                            ? test_linear_restriction(kernels.at(m), data, restriction,
                                                      reqs[i].family, reqs[i].reference,
                                                      reqs[i].mode)
                            : test_full_vector(kernels.at(m), data, beta0_full, reqs[i].family,
                                               reqs[i].reference, reqs[i].mode);
                    out[idx[i]] =
                        rep.p_value < spec.nominal ? Outcome::reject : Outcome::accept;
                } catch (const Error&) {
                    out[idx[i]] = Outcome::failed;
                }
            }
        }
    }

    if (std::any_of(cells.begin(), cells.end(), [](const Cell& c) { return c.is_ar; })) {
        VectorXd ar_point;
        bool ar_point_ok = true;
        try {
            ar_point = ar_evaluation_point(data, beta0_full, spec.endogenous_count());
        } catch (const Error&) {
            ar_point_ok = false;
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (!cells[c].is_ar) continue;
            if (!ar_point_ok) {
                out[c] = Outcome::failed;
                continue;
            }
            ArVariant v = cells[c].method == Method::JIVE2 ? ArVariant::MS22 : ArVariant::CMS21;
            try {
                TestReport rep = ar_test(ar_kernels.at(v), data, ar_point, cells[c].ar_mode,
                                         /*one_sided=*/false);
                out[c] = ar_rejects(rep, spec.nominal) ? Outcome::reject : Outcome::accept;
            } catch (const Error&) {
                out[c] = Outcome::failed;
            }
        }
    }
}

}  // namespace

const char* dgp_kind_name(DgpKind k) { return k == DgpKind::dgp1 ? "dgp1" : "dgp2"; }

VectorXd ExperimentSpec::beta_truth() const {
    return dgp == DgpKind::dgp1 ? dgp1.beta_truth() : dgp2.beta_truth();
}

LinearRestriction ExperimentSpec::null_restriction() const {
    return dgp == DgpKind::dgp1 ? dgp1.null_restriction() : dgp2.null_restriction();
}

IVDataset ExperimentSpec::draw(std::uint64_t replication) const {
    return dgp == DgpKind::dgp1 ? gen_dgp1(dgp1, seed, replication)
                                : gen_dgp2(dgp2, seed, replication);
}

VectorXd ar_evaluation_point(const IVDataset& data, const VectorXd& beta0,
                             Index n_endogenous) {
    Index g = data.g();
    if (beta0.size() != g || n_endogenous < 1 || n_endogenous > g) {
        throw UsageError("ar_evaluation_point: bad arguments");
    }
    VectorXd point = beta0;
    Index n_exo = g - n_endogenous;
    if (n_exo > 0) {
        VectorXd w = data.y - data.X.leftCols(n_endogenous) * beta0.head(n_endogenous);
        MatrixXd Xe = data.X.rightCols(n_exo);
        point.tail(n_exo) = Xe.colPivHouseholderQr().solve(w);
    }
    return point;
}

int resolve_workers(int workers) {
    if (workers > 0) return workers;
    if (const char* env = std::getenv("JIVE_INFER_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    return omp_get_max_threads();
}

RejectionTable run_size_experiment(const ExperimentSpec& spec) {
    if (spec.reps < 1) throw SpecError("replication count must be >= 1");
    const std::vector<Cell> cells = make_cells(spec);
    const LinearRestriction restriction = spec.null_restriction();
    const VectorXd beta0 = spec.beta_truth();
    std::vector<Outcome> outcomes(static_cast<std::size_t>(spec.reps) * cells.size(),
                                  Outcome::failed);

    const int nw = resolve_workers(spec.workers);
#pragma omp parallel for schedule(dynamic) num_threads(nw)
    for (int rep = 0; rep < spec.reps; ++rep) {
        IVDataset data = spec.draw(static_cast<std::uint64_t>(rep));
        evaluate_replication(spec, cells, data, restriction, beta0,
                             outcomes.data() + static_cast<std::size_t>(rep) * cells.size());
    }
    return aggregate(spec, cells, outcomes);
}

std::vector<std::pair<double, RejectionTable>> run_power_curve(const ExperimentSpec& spec,
                                                               const PowerGrid& grid) {
    if (grid.values.empty()) throw SpecError("power grid must be nonempty");
    if (grid.coordinate < 0 || grid.coordinate >= spec.beta_truth().size()) {
        throw SpecError("power grid coordinate out of range");
    }
    const std::vector<Cell> cells = make_cells(spec);
    const std::size_t nc = cells.size();
    const std::size_t ng = grid.values.size();

    std::vector<LinearRestriction> restrictions;
    std::vector<VectorXd> nulls;
    for (double t : grid.values) {
        VectorXd beta0 = spec.beta_truth();
        beta0[grid.coordinate] = t;
        LinearRestriction rest = spec.null_restriction();
        rest.a = rest.A * beta0;
        restrictions.push_back(std::move(rest));
        nulls.push_back(std::move(beta0));
    }

    std::vector<Outcome> outcomes(static_cast<std::size_t>(spec.reps) * ng * nc,
                                  Outcome::failed);
    const int nw = resolve_workers(spec.workers);
#pragma omp parallel for schedule(dynamic) num_threads(nw)
    for (int rep = 0; rep < spec.reps; ++rep) {
        IVDataset data = spec.draw(static_cast<std::uint64_t>(rep));
        for (std::size_t gidx = 0; gidx < ng; ++gidx) {
            Outcome* out =
                outcomes.data() + (static_cast<std::size_t>(rep) * ng + gidx) * nc;
            evaluate_replication(spec, cells, data, restrictions[gidx], nulls[gidx], out);
        }
    }

    std::vector<std::pair<double, RejectionTable>> curve;
    std::vector<Outcome> slice(static_cast<std::size_t>(spec.reps) * nc);
    for (std::size_t gidx = 0; gidx < ng; ++gidx) {
        for (int rep = 0; rep < spec.reps; ++rep) {
            for (std::size_t c = 0; c < nc; ++c) {
                slice[static_cast<std::size_t>(rep) * nc + c] =
                    outcomes[(static_cast<std::size_t>(rep) * ng + gidx) * nc + c];
            }
        }
        RejectionTable table = aggregate(spec, cells, slice);
        table.grid_value = grid.values[gidx];
        table.has_grid_value = true;
        curve.emplace_back(grid.values[gidx], std::move(table));
    }
    return curve;
}

RejectionTable run_calibration_check(int reps, double nominal, std::uint64_t seed,
                                     int workers) {
    if (reps < 1) throw SpecError("replication count must be >= 1");
    std::vector<Outcome> outcomes(static_cast<std::size_t>(reps), Outcome::failed);
    const int nw = resolve_workers(workers);
#pragma omp parallel for schedule(static) num_threads(nw)
    for (int rep = 0; rep < reps; ++rep) {
        Philox rng = replication_rng(seed, static_cast<std::uint64_t>(rep));
        outcomes[static_cast<std::size_t>(rep)] =
            rng.next_double() < nominal ? Outcome::reject : Outcome::accept;
    }
    ExperimentSpec dummy;
    dummy.reps = reps;
    dummy.nominal = nominal;
    dummy.seed = seed;
    std::vector<Cell> cells(1);
    cells[0].method = Method::JIVE1;
    cells[0].request = StatRequest{Family::D, Reference::Kind::chibar, VarianceMode::plugin};
    RejectionTable table = aggregate(dummy, cells, outcomes);
    table.dgp = "uniform";
    return table;
}

const RejectionRow* RejectionTable::find(Method m, Family f, VarianceMode mode) const {
    for (const auto& row : rows) {
        if (row.method == m && row.family == f && row.variance_mode == mode) return &row;
    }
    return nullptr;
}

// --- serialization -----------------------------------------------------------

std::string table_to_csv(const std::vector<RejectionTable>& tables) {
    std::ostringstream os;
    os << "dgp,n,alpha,r,method,family,reference,variance_mode,nominal,rate,mc_se,"
          "reps_used,failures,seed\n";
    for (const auto& t : tables) {
        for (const auto& row : t.rows) {
            os << t.dgp << ',' << t.n << ',' << fmt_full(t.alpha) << ',' << fmt_full(t.r) << ','
               << method_name(row.method) << ',' << family_name(row.family) << ','
               << reference_kind_name(row.reference) << ','
               << variance_mode_name(row.variance_mode) << ',' << fmt_full(t.nominal) << ','
               << fmt_full(row.rate) << ',' << fmt_full(row.mc_se) << ',' << row.reps_used << ','
               << row.failures << ',' << t.seed << '\n';
        }
    }
    return os.str();
}

std::string table_to_json(const std::vector<RejectionTable>& tables) {
    json out = json::array();
    for (const auto& t : tables) {
        json jt;
        jt["dgp"] = t.dgp;
        jt["n"] = t.n;
        jt["alpha"] = t.alpha;
        jt["r"] = t.r;
        jt["reps"] = t.reps;
        jt["nominal"] = t.nominal;
        jt["seed"] = t.seed;
        jt["failure_rate"] = t.failure_rate;
        jt["warning"] = t.warning;
        if (t.has_grid_value) jt["grid_value"] = t.grid_value;
        jt["rows"] = json::array();
        for (const auto& row : t.rows) {
            json jr;
            jr["method"] = method_name(row.method);
            jr["family"] = family_name(row.family);
            jr["reference"] = reference_kind_name(row.reference);
            jr["variance_mode"] = variance_mode_name(row.variance_mode);
            jr["rate"] = row.rate;
            jr["mc_se"] = row.mc_se;
            jr["reps_used"] = row.reps_used;
            jr["failures"] = row.failures;
            jt["rows"].push_back(jr);
        }
        out.push_back(jt);
    }
    return out.dump(2);
}

namespace {

std::string column_key(const RejectionRow& row) {
    std::string key = family_name(row.family);
    if (row.family == Family::AR) {
        key += row.variance_mode == VarianceMode::plugin ? "_naive" : "_cf";
    } else if (row.variance_mode == VarianceMode::crossfit) {
        key += "_cf";
    }
    return key;
}

void pad_to(std::ostringstream& os, std::string text, std::size_t width) {
    while (text.size() < width) text.push_back(' ');
    os << text;
}

}  // namespace

std::string table_to_text(const std::vector<RejectionTable>& tables) {
    // Size-table layout: one row per (method, alpha, r), one column per
    // statistic; rates rounded to three decimals.
    std::vector<std::string> columns;
    for (const auto& t : tables) {
        for (const auto& row : t.rows) {
            std::string key = column_key(row);
            if (std::find(columns.begin(), columns.end(), key) == columns.end()) {
                columns.push_back(key);
            }
        }
    }
    const std::size_t colw = 9;
    std::ostringstream os;
    pad_to(os, "method", 7);
    pad_to(os, "alpha", 7);
    pad_to(os, "r", 7);
    for (const auto& c : columns) pad_to(os, c, colw);
    os << '\n';
    for (const auto& t : tables) {
        for (Method m : {Method::SJIVE, Method::HLIM, Method::JIVE1, Method::JIVE2}) {
            bool any = false;
            std::ostringstream line;
            pad_to(line, method_name(m), 7);
            pad_to(line, fmt_fixed(t.alpha, 2), 7);
            pad_to(line, fmt_fixed(t.r, 2), 7);
            for (const auto& c : columns) {
                const RejectionRow* found = nullptr;
                for (const auto& row : t.rows) {
                    if (row.method == m && column_key(row) == c) {
                        found = &row;
                        break;
                    }
                }
                pad_to(line, found ? fmt_fixed(found->rate, 3) : "", colw);
                if (found) any = true;
            }
            if (any) os << line.str() << '\n';
        }
        if (t.warning) {
            os << "# warning: replication failure rate " << fmt_fixed(t.failure_rate * 100, 2)
               << "% exceeds 1%\n";
        }
    }
    return os.str();
}

std::string power_to_csv(const std::vector<std::pair<double, RejectionTable>>& curve) {
    std::ostringstream os;
    os << "grid_value,dgp,n,alpha,r,method,family,reference,variance_mode,rate,mc_se,"
          "reps_used,failures\n";
    for (const auto& [value, t] : curve) {
        for (const auto& row : t.rows) {
            os << fmt_full(value) << ',' << t.dgp << ',' << t.n << ',' << fmt_full(t.alpha)
               << ',' << fmt_full(t.r) << ',' << method_name(row.method) << ','
               << family_name(row.family) << ',' << reference_kind_name(row.reference) << ','
               << variance_mode_name(row.variance_mode) << ',' << fmt_full(row.rate) << ','
               << fmt_full(row.mc_se) << ',' << row.reps_used << ',' << row.failures << '\n';
        }
    }
    return os.str();
}

std::string power_to_gnuplot(const std::vector<std::pair<double, RejectionTable>>& curve) {
    std::ostringstream os;
    os << "# grid_value method family variance rate\n";
    for (const auto& [value, t] : curve) {
        for (const auto& row : t.rows) {
            os << fmt_full(value) << ' ' << method_name(row.method) << ' '
               << family_name(row.family) << ' ' << variance_mode_name(row.variance_mode) << ' '
               << fmt_full(row.rate) << '\n';
        }
    }
    return os.str();
}

// --- experiment spec JSON ----------------------------------------------------

ExperimentSpec experiment_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid experiment JSON: ") + e.what());
    }
    ExperimentSpec spec;
    try {
        std::string dgp = j.value("dgp", "dgp1");
        if (dgp == "dgp1") {
            spec.dgp = DgpKind::dgp1;
            spec.dgp1.n = j.value("n", 200);
            spec.dgp1.alpha = j.value("alpha", 0.05);
            spec.dgp1.r = j.value("r", 32.0);
        } else if (dgp == "dgp2") {
            spec.dgp = DgpKind::dgp2;
            spec.dgp2.n = j.value("n", 200);
            spec.dgp2.alpha = j.value("alpha", 0.05);
            spec.dgp2.r = j.value("r", 0.1);
        } else {
            throw SpecError("unknown dgp: " + dgp);
        }
        if (j.contains("methods")) {
            spec.methods.clear();
            for (const auto& m : j.at("methods")) {
                spec.methods.push_back(method_from_name(m.get<std::string>()));
            }
        }
        if (j.contains("families")) {
            for (const auto& f : j.at("families")) {
                std::string name = f.at("family").get<std::string>();
                if (name == "AR") continue;  // AR columns come from ar_modes
                StatRequest req;
                req.family = family_from_name(name);
                req.reference = reference_kind_from_name(
                    f.value("reference", is_starred(req.family) ? "chisq" : "chibar"));
                req.mode = variance_mode_from_name(f.value("variance", "plugin"));
                spec.requests.push_back(req);
            }
        }
        if (j.contains("ar_modes")) {
            for (const auto& m : j.at("ar_modes")) {
                spec.ar_modes.push_back(m.get<std::string>() == "naive"
                                            ? VarianceMode::plugin
                                            : variance_mode_from_name(m.get<std::string>()));
            }
        }
        spec.hypothesis = j.value("hypothesis", std::string("linear_restriction")) ==
                                  std::string("full_vector")
                              ? Hypothesis::full_vector
                              : Hypothesis::linear_restriction;
        spec.reps = j.value("reps", 5000);
        spec.nominal = j.value("nominal", 0.05);
        spec.seed = j.value("seed", 1ull);
        spec.workers = j.value("workers", 0);
    } catch (const json::exception& e) {
        throw SpecError(std::string("bad experiment spec: ") + e.what());
    }
    if (spec.requests.empty() && spec.ar_modes.empty()) {
        throw SpecError("experiment spec requests no statistics");
    }
    return spec;
}

std::string experiment_to_json(const ExperimentSpec& spec) {
    json j;
    j["dgp"] = dgp_kind_name(spec.dgp);
    j["n"] = spec.n();
    j["alpha"] = spec.alpha();
    j["r"] = spec.r();
    j["methods"] = json::array();
    for (Method m : spec.methods) j["methods"].push_back(method_name(m));
    j["families"] = json::array();
    for (const auto& req : spec.requests) {
        json f;
        f["family"] = family_name(req.family);
        f["reference"] = reference_kind_name(req.reference);
        f["variance"] = variance_mode_name(req.mode);
        j["families"].push_back(f);
    }
    j["ar_modes"] = json::array();
    for (VarianceMode m : spec.ar_modes) {
        j["ar_modes"].push_back(m == VarianceMode::plugin ? "naive" : "crossfit");
    }
    j["hypothesis"] = hypothesis_name(spec.hypothesis);
    j["reps"] = spec.reps;
    j["nominal"] = spec.nominal;
    j["seed"] = spec.seed;
    j["workers"] = spec.workers;
    return j.dump(2);
}

namespace {

std::vector<StatRequest> main_table_requests() {
    return {
        {Family::D, Reference::Kind::chibar, VarianceMode::plugin},
        {Family::W1, Reference::Kind::chibar, VarianceMode::plugin},
        {Family::LM, Reference::Kind::chibar, VarianceMode::plugin},
        {Family::Dstar1, Reference::Kind::chisq, VarianceMode::plugin},
        {Family::W1star, Reference::Kind::chisq, VarianceMode::plugin},
        {Family::LMstar, Reference::Kind::chisq, VarianceMode::plugin},
    };
}

}  // namespace

std::vector<ExperimentSpec> table_dgp1_experiments(int reps, std::uint64_t seed) {
    std::vector<ExperimentSpec> specs;
    for (double alpha : {0.05, 0.10}) {
        for (double r : {32.0, 64.0}) {
            ExperimentSpec s;
            s.dgp = DgpKind::dgp1;
            s.dgp1.alpha = alpha;
            s.dgp1.r = r;
            s.requests = main_table_requests();
            s.ar_modes = {VarianceMode::plugin, VarianceMode::crossfit};
            s.reps = reps;
            s.seed = seed;
            specs.push_back(std::move(s));
        }
    }
    return specs;
}

std::vector<ExperimentSpec> table_dgp2_experiments(int reps, std::uint64_t seed) {
    std::vector<ExperimentSpec> specs;
    for (double alpha : {0.05, 0.10}) {
        for (double r : {0.1, 0.2}) {
            ExperimentSpec s;
            s.dgp = DgpKind::dgp2;
            s.dgp2.alpha = alpha;
            s.dgp2.r = r;
            s.requests = main_table_requests();
            s.ar_modes = {VarianceMode::plugin, VarianceMode::crossfit};
            s.reps = reps;
            s.seed = seed;
            specs.push_back(std::move(s));
        }
    }
    return specs;
}

}  // namespace jive
