#include "oracles.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <random>
#include <utility>

namespace oracle {

OracleReport make_report(const std::string& name, const std::string& instance, double lib,
                         double orc, double tol, bool relative) {
    OracleReport r;
    r.oracle = name;
    r.instance = instance;
    r.library_value = lib;
    r.oracle_value = orc;
    r.discrepancy = std::abs(lib - orc);
    r.tolerance = relative ? tol * (1.0 + std::abs(orc)) : tol;
    r.pass = r.discrepancy <= r.tolerance;
    record(r);
    return r;
}

std::string report_json(const OracleReport& r) {
    nlohmann::json j;
    j["oracle"] = r.oracle;
    j["instance"] = r.instance;
    j["library_value"] = r.library_value;
    j["oracle_value"] = r.oracle_value;
    j["discrepancy"] = r.discrepancy;
    j["tolerance"] = r.tolerance;
    j["pass"] = r.pass;
    return j.dump();
}

void record(const OracleReport& r) {
    if (const char* path = std::getenv("JIVE_ORACLE_ARTIFACTS")) {
        std::ofstream out(path, std::ios::app);
        out << report_json(r) << "\n";
    }
}

Kernels build_kernels(const MatrixXd& Z) {
    const Index n = Z.rows();
    // hat matrix through the normal equations, deliberately not via QR
    MatrixXd ZtZ = Z.transpose() * Z;
    MatrixXd P = Z * ZtZ.inverse() * Z.transpose();
    VectorXd d = P.diagonal();
    VectorXd w(n);
    for (Index i = 0; i < n; ++i) w[i] = d[i] / (1.0 - d[i]);

    Kernels k;
    k.P = P;
    k.B_sjive.setZero(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            double bij = 0.0;
            for (Index l = 0; l < n; ++l) {
                double left = (i == l ? 1.0 : 0.0) - P(i, l);
                double right = (l == j ? 1.0 : 0.0) - P(l, j);
                bij += left * w[l] * right;
            }
            k.B_sjive(i, j) = bij;
        }
    }
    k.C_sjive.setZero(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            double pwp = 0.0;
            for (Index l = 0; l < n; ++l) pwp += P(i, l) * w[l] * P(l, j);
            double c = P(i, j) + pwp - 0.5 * P(i, j) * w[j] - 0.5 * w[i] * P(i, j) -
                       k.B_sjive(i, j);
            k.C_sjive(i, j) = c;
        }
    }
    k.C_hlim = P;
    k.C_hlim.diagonal().setZero();
    k.B_iminp = MatrixXd::Identity(n, n) - P;
    return k;
}

double quad_form(const MatrixXd& M, const VectorXd& a, const VectorXd& b) {
    double s = 0.0;
    for (Index i = 0; i < M.rows(); ++i) {
        for (Index j = 0; j < M.cols(); ++j) s += a[i] * M(i, j) * b[j];
    }
    return s;
}

MatrixXd cross_form(const MatrixXd& M, const MatrixXd& X) {
    MatrixXd out(X.cols(), X.cols());
    for (Index a = 0; a < X.cols(); ++a) {
        for (Index b = 0; b < X.cols(); ++b) {
            out(a, b) = quad_form(M, X.col(a), X.col(b));
        }
    }
    return out;
}

double objective_ratio(const Kernels& k, bool sjive, const VectorXd& y, const MatrixXd& X,
                       const VectorXd& beta, double trB) {
    VectorXd eps = y - X * beta;
    const MatrixXd& C = sjive ? k.C_sjive : k.C_hlim;
    double num = quad_form(C, eps, eps);
    double den;
    if (sjive) {
        den = quad_form(k.B_sjive, eps, eps) / trB;
    } else {
        den = eps.squaredNorm() / trB;
    }
    return num / den;
}

double objective_quadratic(const MatrixXd& C, const VectorXd& y, const MatrixXd& X,
                           const VectorXd& beta) {
    VectorXd eps = y - X * beta;
    return quad_form(C, eps, eps);
}

MatrixXd xtilde(const MatrixXd& B, const VectorXd& eps, const MatrixXd& X, double trB) {
    VectorXd Beps = B * eps;
    double sigma2 = eps.dot(Beps) / trB;
    VectorXd sigma12 = X.transpose() * Beps / trB;
    return X - eps * (sigma12.transpose() / sigma2);
}

MatrixXd phi_plugin(const MatrixXd& C, const VectorXd& eps, const MatrixXd& Xt, double k) {
    const Index n = Xt.rows(), g = Xt.cols();
    MatrixXd F = MatrixXd::Zero(g, g);
    MatrixXd G = MatrixXd::Zero(g, g);
    for (Index a = 0; a < g; ++a) {
        for (Index b = 0; b < g; ++b) {
            double f = 0.0, gg = 0.0;
            for (Index i = 0; i < n; ++i) {
                for (Index j = 0; j < n; ++j) {
                    for (Index l = 0; l < n; ++l) {
                        f += Xt(i, a) * C(i, l) * eps[l] * eps[l] * C(l, j) * Xt(j, b);
                    }
                    gg += Xt(i, a) * eps[i] * C(i, j) * C(i, j) * eps[j] * Xt(j, b);
                }
            }
            F(a, b) = f;
            G(a, b) = gg;
        }
    }
    return (F + G) / k;
}

MatrixXd phi_crossfit(const MatrixXd& C, const MatrixXd& B, const VectorXd& eps,
                      const MatrixXd& Xt, double k) {
    const Index n = Xt.rows(), g = Xt.cols();
    VectorXd v = B * eps;
    VectorXd b = B.diagonal();
    MatrixXd F = MatrixXd::Zero(g, g);
    MatrixXd G = MatrixXd::Zero(g, g);
    for (Index a = 0; a < g; ++a) {
        for (Index bb = 0; bb < g; ++bb) {
            double f = 0.0, gg = 0.0;
            for (Index i = 0; i < n; ++i) {
                for (Index j = 0; j < n; ++j) {
                    for (Index l = 0; l < n; ++l) {
                        f += Xt(i, a) * C(i, l) * eps[l] / b[l] * v[l] * C(l, j) * Xt(j, bb);
                    }
                    double m = C(i, j) * C(i, j) / (b[i] * b[j] + B(i, j) * B(i, j));
                    gg += Xt(i, a) * v[i] * m * v[j] * Xt(j, bb);
                }
            }
            F(a, bb) = f;
            G(a, bb) = gg;
        }
    }
    return (F + G) / k;
}

double omega_naive(const MatrixXd& C, const VectorXd& eps, double k) {
    double s = 0.0;
    for (Index i = 0; i < C.rows(); ++i) {
        for (Index j = 0; j < C.cols(); ++j) {
            s += C(i, j) * C(i, j) * eps[i] * eps[i] * eps[j] * eps[j];
        }
    }
    return 2.0 / k * s;
}

double omega_crossfit(const MatrixXd& C, const MatrixXd& B, const VectorXd& eps, double k) {
    VectorXd v = B * eps;
    VectorXd b = B.diagonal();
    double s = 0.0;
    for (Index i = 0; i < C.rows(); ++i) {
        for (Index j = 0; j < C.cols(); ++j) {
            double m = C(i, j) * C(i, j) / (b[i] * b[j] + B(i, j) * B(i, j));
            s += eps[i] * v[i] * m * eps[j] * v[j];
        }
    }
    return 2.0 / k * s;
}

double golden_minimize(const std::function<double(double)>& f, double lo, double hi,
                       double tol) {
    const double phi = 0.61803398874989484820;
    double a = lo, b = hi;
    double c = b - phi * (b - a);
    double d = a + phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

namespace {

// cyclic coordinate golden-section descent over all coordinates
VectorXd coordinate_descent(const std::function<double(const VectorXd&)>& f, VectorXd x,
                            double half_width, double tol) {
    double previous = f(x);
    for (int sweep = 0; sweep < 200; ++sweep) {
        for (Index c = 0; c < x.size(); ++c) {
            VectorXd probe = x;
            double best = golden_minimize(
                [&](double t) {
                    probe[c] = t;
                    return f(probe);
                },
                x[c] - half_width, x[c] + half_width, tol * 0.1);
            x[c] = best;
        }
        double value = f(x);
        if (previous - value < tol * 1e-3) break;
        previous = value;
    }
    return x;
}

}  // namespace

VectorXd minimize_profiled(const std::function<double(const VectorXd&)>& f, VectorXd start,
                           Index profile_coord, double half_width, double tol) {
    auto inner = [&](double t) {
        VectorXd x = start;
        x[profile_coord] = t;
        // profile out the remaining coordinates
        if (x.size() > 1) {
            std::vector<Index> rest;
            for (Index c = 0; c < x.size(); ++c) {
                if (c != profile_coord) rest.push_back(c);
            }
            for (int sweep = 0; sweep < 60; ++sweep) {
                double before = f(x);
                for (Index c : rest) {
                    VectorXd probe = x;
                    x[c] = golden_minimize(
                        [&](double s) {
                            probe[c] = s;
                            return f(probe);
                        },
                        x[c] - half_width, x[c] + half_width, tol * 0.1);
                }
                if (before - f(x) < tol * 1e-3) break;
            }
        }
        return std::pair(f(x), x);
    };

    // coarse grid, then golden refinement on the profile
    double lo = start[profile_coord] - half_width, hi = start[profile_coord] + half_width;
    double best_t = lo, best_val = std::numeric_limits<double>::infinity();
    const int grid = 41;
    for (int i = 0; i < grid; ++i) {
        double t = lo + (hi - lo) * i / (grid - 1);
        double val = inner(t).first;
        if (val < best_val) {
            best_val = val;
            best_t = t;
        }
    }
    double step = (hi - lo) / (grid - 1);
    double refined = golden_minimize([&](double t) { return inner(t).first; },
                                     best_t - step, best_t + step, tol);
    return inner(refined).second;
}

VectorXd minimize_restricted(const std::function<double(const VectorXd&)>& f,
                             const MatrixXd& A, const VectorXd& a, VectorXd start,
                             double half_width, double tol) {
    // beta = beta_p + N xi with N spanning the null space of A
    Eigen::FullPivLU<MatrixXd> lu(A);
    MatrixXd N = lu.kernel();
    VectorXd beta_p = A.colPivHouseholderQr().solve(a);
    // start from the projection of `start` onto the feasible set
    VectorXd xi0 = N.colPivHouseholderQr().solve(start - beta_p);
    auto g = [&](const VectorXd& xi) { return f(beta_p + N * xi); };
    VectorXd xi;
    if (N.cols() == 1) {
        // coarse grid to dodge local traps, then golden refinement
        auto g1 = [&](double s) { return g(VectorXd::Constant(1, s)); };
        double best_t = xi0[0];
        double best_val = g1(best_t);
        const int grid = 81;
        for (int i = 0; i < grid; ++i) {
            double s = xi0[0] - half_width + 2.0 * half_width * i / (grid - 1);
            double val = g1(s);
            if (val < best_val) {
                best_val = val;
                best_t = s;
            }
        }
        double step = 2.0 * half_width / (grid - 1);
        xi = VectorXd::Constant(1, golden_minimize(g1, best_t - step, best_t + step, tol));
    } else {
        xi = coordinate_descent(g, xi0, half_width, tol);
    }
    return beta_p + N * xi;
}

std::vector<McEstimate> mc_weighted_chisq_sf_multi(const VectorXd& weights,
                                                   const std::vector<double>& ts,
                                                   std::int64_t draws, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::int64_t> hits(ts.size(), 0);
    for (std::int64_t d = 0; d < draws; ++d) {
        double q = 0.0;
        for (Index i = 0; i < weights.size(); ++i) {
            double z = normal(rng);
            q += weights[i] * z * z;
        }
        for (std::size_t j = 0; j < ts.size(); ++j) {
            if (q > ts[j]) ++hits[j];
        }
    }
    std::vector<McEstimate> out(ts.size());
    for (std::size_t j = 0; j < ts.size(); ++j) {
        out[j].value = static_cast<double>(hits[j]) / static_cast<double>(draws);
        out[j].se = std::sqrt(out[j].value * (1.0 - out[j].value) /
                              static_cast<double>(draws));
    }
    return out;
}

McEstimate mc_weighted_chisq_sf(const VectorXd& weights, double t, std::int64_t draws,
                                std::uint64_t seed) {
    return mc_weighted_chisq_sf_multi(weights, {t}, draws, seed)[0];
}

}  // namespace oracle
