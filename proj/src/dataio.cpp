#include "jive/dataio.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace jive {

namespace {

using nlohmann::json;

// RFC-4180 record reader: quoted fields, embedded commas/quotes/newlines,
// CRLF line ends. Returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>* fields) {
    fields->clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    int c;
    while ((c = in.get()) != EOF) {
        any = true;
        char ch = static_cast<char>(c);
        if (in_quotes) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    field.push_back('"');
                    in.get();
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"') {
            in_quotes = true;
        } else if (ch == ',') {
            fields->push_back(std::move(field));
            field.clear();
        } else if (ch == '\r') {
            if (in.peek() == '\n') in.get();
            fields->push_back(std::move(field));
            return true;
        } else if (ch == '\n') {
            fields->push_back(std::move(field));
            return true;
        } else {
            field.push_back(ch);
        }
    }
    if (!any) return false;
    fields->push_back(std::move(field));
    return true;
}

double parse_cell(const std::string& s, std::size_t row, const std::string& col) {
    const char* b = s.data();
    const char* e = b + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    while (e > b && (e[-1] == ' ' || e[-1] == '\t')) --e;
    double value = 0.0;
    auto r = std::from_chars(b, e, value);
    if (r.ec != std::errc{} || r.ptr != e || b == e) {
        throw ParseError("non-numeric cell at row " + std::to_string(row) + ", column '" +
                         col + "': '" + s + "'");
    }
    return value;
}

std::string format_double(double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

std::vector<Index> dependent_columns(const MatrixXd& M) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(M);
    qr.setThreshold(rank_tol);
    Index r = qr.rank();
    std::vector<Index> dep;
    for (Index i = r; i < M.cols(); ++i) {
        dep.push_back(qr.colsPermutation().indices()(i));
    }
    std::sort(dep.begin(), dep.end());
    return dep;
}

}  // namespace

void validate_dataset(const IVDataset& data) {
    Index n = data.n(), g = data.g(), k = data.k();
    if (data.X.rows() != n || data.Z.rows() != n) {
        throw ValidationError("y, X, Z must have the same number of rows");
    }
    if (!(n > k && k >= g && g >= 1)) {
        throw ValidationError("dimension check n > k >= g >= 1 failed (n=" +
                              std::to_string(n) + ", k=" + std::to_string(k) +
                              ", g=" + std::to_string(g) + ")");
    }
    if (!data.y.allFinite() || !data.X.allFinite() || !data.Z.allFinite()) {
        throw ValidationError("dataset contains non-finite entries");
    }
    auto dep = dependent_columns(data.Z);
    if (!dep.empty()) {
        std::string msg = "instrument matrix is rank deficient; dependent columns:";
        for (Index i : dep) {
            msg += ' ';
            if (data.labels && static_cast<std::size_t>(1 + data.g() + i) < data.labels->size()) {
                msg += (*data.labels)[1 + data.g() + i];
            } else {
                msg += std::to_string(i);
            }
        }
        throw ValidationError(msg);
    }
}

void validate_restriction(const LinearRestriction& r, Index g) {
    if (r.A.cols() != g) {
        throw ValidationError("restriction matrix A has " + std::to_string(r.A.cols()) +
                              " columns, expected g=" + std::to_string(g));
    }
    if (r.a.size() != r.p()) throw ValidationError("restriction vector a has wrong length");
    if (r.p() > g) throw ValidationError("restriction count p exceeds g");
    if (r.p() < 1) throw ValidationError("restriction must have at least one row");
    if (!r.A.allFinite() || !r.a.allFinite()) {
        throw ValidationError("restriction contains non-finite entries");
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(r.A.transpose());
    qr.setThreshold(rank_tol);
    if (qr.rank() != r.p()) throw ValidationError("restriction matrix A is not of full row rank");
}

CsvSchema schema_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid schema JSON: ") + e.what());
    }
    CsvSchema s;
    try {
        s.outcome = j.at("outcome").get<std::string>();
        s.regressors = j.at("regressors").get<std::vector<std::string>>();
        s.instruments = j.at("instruments").get<std::vector<std::string>>();
        if (j.contains("exogenous")) {
            s.exogenous = j.at("exogenous").get<std::vector<std::string>>();
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("schema must name outcome, regressors, instruments: ") +
                          e.what());
    }
    if (s.regressors.empty() || s.instruments.empty()) {
        throw SchemaError("schema needs at least one regressor and one instrument");
    }
    return s;
}

CsvSchema schema_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open schema file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return schema_from_json(ss.str());
}

IVDataset load_dataset(const std::string& path, const CsvSchema& schema,
                       std::vector<std::string>* warnings) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open dataset file: " + path);

    std::vector<std::string> header;
    if (!read_record(in, &header)) throw ParseError("empty CSV file: " + path);

    std::unordered_map<std::string, std::size_t> col_index;
    for (std::size_t i = 0; i < header.size(); ++i) col_index[header[i]] = i;
    auto require = [&](const std::string& name) -> std::size_t {
        auto it = col_index.find(name);
        if (it == col_index.end()) {
            throw SchemaError("column '" + name + "' not found in " + path);
        }
        return it->second;
    };

    std::size_t y_col = require(schema.outcome);
    std::vector<std::size_t> x_cols, z_cols;
    for (const auto& name : schema.regressors) x_cols.push_back(require(name));
    for (const auto& name : schema.instruments) z_cols.push_back(require(name));

    for (const auto& name : schema.exogenous) {
        if (std::find(schema.regressors.begin(), schema.regressors.end(), name) ==
            schema.regressors.end()) {
            throw SchemaError("exogenous column '" + name + "' is not a regressor");
        }
        if (std::find(schema.instruments.begin(), schema.instruments.end(), name) ==
                schema.instruments.end() &&
            warnings) {
            warnings->push_back("exogenous regressor '" + name +
                                "' is not included among the instruments");
        }
    }

    std::vector<double> y_vals;
    std::vector<std::vector<double>> x_vals(x_cols.size()), z_vals(z_cols.size());
    std::vector<std::string> fields;
    std::size_t row = 1;
    while (read_record(in, &fields)) {
        ++row;
        if (fields.size() == 1 && fields[0].empty()) continue;  // trailing blank line
        if (fields.size() != header.size()) {
            throw ParseError("row " + std::to_string(row) + " has " +
                             std::to_string(fields.size()) + " fields, expected " +
                             std::to_string(header.size()));
        }
        y_vals.push_back(parse_cell(fields[y_col], row, schema.outcome));
        for (std::size_t j = 0; j < x_cols.size(); ++j) {
            x_vals[j].push_back(parse_cell(fields[x_cols[j]], row, schema.regressors[j]));
        }
        for (std::size_t j = 0; j < z_cols.size(); ++j) {
            z_vals[j].push_back(parse_cell(fields[z_cols[j]], row, schema.instruments[j]));
        }
    }
    if (y_vals.empty()) throw ParseError("no data rows in " + path);

    Index n = static_cast<Index>(y_vals.size());
    IVDataset data;
    data.y = Eigen::Map<VectorXd>(y_vals.data(), n);
    data.X.resize(n, static_cast<Index>(x_cols.size()));
    for (std::size_t j = 0; j < x_cols.size(); ++j) {
        data.X.col(static_cast<Index>(j)) = Eigen::Map<VectorXd>(x_vals[j].data(), n);
    }
    data.Z.resize(n, static_cast<Index>(z_cols.size()));
    for (std::size_t j = 0; j < z_cols.size(); ++j) {
        data.Z.col(static_cast<Index>(j)) = Eigen::Map<VectorXd>(z_vals[j].data(), n);
    }
    std::vector<std::string> labels;
    labels.push_back(schema.outcome);
    labels.insert(labels.end(), schema.regressors.begin(), schema.regressors.end());
    labels.insert(labels.end(), schema.instruments.begin(), schema.instruments.end());
    data.labels = std::move(labels);

    validate_dataset(data);
    return data;
}

void save_dataset(const std::string& path, const IVDataset& data, const CsvSchema& schema) {
    if (static_cast<Index>(schema.regressors.size()) != data.g() ||
        static_cast<Index>(schema.instruments.size()) != data.k()) {
        throw SchemaError("schema shape does not match dataset");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open output file: " + path);
    out << schema.outcome;
    for (const auto& name : schema.regressors) out << ',' << name;
    for (const auto& name : schema.instruments) out << ',' << name;
    out << '\n';
    for (Index i = 0; i < data.n(); ++i) {
        out << format_double(data.y[i]);
        for (Index j = 0; j < data.g(); ++j) out << ',' << format_double(data.X(i, j));
        for (Index j = 0; j < data.k(); ++j) out << ',' << format_double(data.Z(i, j));
        out << '\n';
    }
}

LinearRestriction restriction_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid restriction JSON: ") + e.what());
    }
    LinearRestriction r;
    try {
        auto rows = j.at("A").get<std::vector<std::vector<double>>>();
        auto a = j.at("a").get<std::vector<double>>();
        if (rows.empty()) throw SchemaError("restriction matrix A is empty");
        r.A.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != rows[0].size()) {
                throw SchemaError("restriction matrix A has ragged rows");
            }
            for (std::size_t jcol = 0; jcol < rows[i].size(); ++jcol) {
                r.A(static_cast<Index>(i), static_cast<Index>(jcol)) = rows[i][jcol];
            }
        }
        r.a = Eigen::Map<VectorXd>(a.data(), static_cast<Index>(a.size()));
    } catch (const json::exception& e) {
        throw SchemaError(std::string("restriction JSON must carry A and a: ") + e.what());
    }
    return r;
}

LinearRestriction load_restriction(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open restriction file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return restriction_from_json(ss.str());
}

std::string restriction_to_json(const LinearRestriction& r) {
    json j;
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(r.p()));
    for (Index i = 0; i < r.p(); ++i) {
        rows[static_cast<std::size_t>(i)].assign(r.A.row(i).begin(), r.A.row(i).end());
    }
    j["A"] = rows;
    j["a"] = std::vector<double>(r.a.begin(), r.a.end());
    return j.dump();
}

Assumption1Report validate_assumption1(const VectorXd& P_diag, double threshold) {
    Assumption1Report report;
    report.threshold = threshold;
    for (Index i = 0; i < P_diag.size(); ++i) {
        if (!(P_diag[i] >= 0.0 && P_diag[i] <= 1.0)) {
            throw ValidationError("projection diagonal entries must lie in [0, 1]");
        }
        if (P_diag[i] > report.max_p || report.argmax < 0) {
            report.max_p = P_diag[i];
            report.argmax = i;
        }
        if (P_diag[i] > threshold) report.flagged.push_back(i);
    }
    report.pass = report.flagged.empty();
    return report;
}

const char* method_name(Method m) {
    switch (m) {
        case Method::SJIVE: return "SJIVE";
        case Method::HLIM: return "HLIM";
        case Method::JIVE1: return "JIVE1";
        case Method::JIVE2: return "JIVE2";
    }
    return "?";
}

Method method_from_name(const std::string& name) {
    std::string u;
    for (char c : name) u.push_back(static_cast<char>(std::toupper(c)));
    if (u == "SJIVE") return Method::SJIVE;
    if (u == "HLIM") return Method::HLIM;
    if (u == "JIVE1") return Method::JIVE1;
    if (u == "JIVE2") return Method::JIVE2;
    throw UsageError("unknown method: " + name);
}

const char* variance_mode_name(VarianceMode m) {
    return m == VarianceMode::plugin ? "plugin" : "crossfit";
}

VarianceMode variance_mode_from_name(const std::string& name) {
    if (name == "plugin") return VarianceMode::plugin;
    if (name == "crossfit") return VarianceMode::crossfit;
    throw UsageError("unknown variance mode: " + name);
}

}  // namespace jive
