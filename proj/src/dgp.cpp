#include "jive/dgp.hpp"

#include "jive/rng.hpp"

#include <cmath>

namespace jive {

namespace {

Index integral_share(double alpha, Index n, const char* what) {
    double k = alpha * static_cast<double>(n);
    double rounded = std::round(k);
    if (std::abs(k - rounded) > 1e-9 || rounded < 1.0) {
        throw SpecError(std::string(what) + ": alpha * n = " + std::to_string(k) +
                        " is not a positive integer");
    }
    return static_cast<Index>(rounded);
}

VectorXd normal_vector(Philox& rng, Index n) {
    VectorXd v(n);
    for (Index i = 0; i < n; ++i) v[i] = rng.next_normal();
    return v;
}

MatrixXd normal_matrix(Philox& rng, Index n, Index m) {
    MatrixXd M(n, m);
    for (Index j = 0; j < m; ++j) {
        for (Index i = 0; i < n; ++i) M(i, j) = rng.next_normal();
    }
    return M;
}

}  // namespace

Index DGP1Spec::k1() const { return integral_share(alpha, n, "DGP1"); }

// Calibrated so the concentration pi^2 iota'Z'Z iota is about
// (1 + 3 rho1^2 rho2^2) r: the per-instrument coefficient shrinks with both
// k and n.
double DGP1Spec::pi() const {
    return std::sqrt((1.0 + 3.0 * rho1 * rho1 * rho2 * rho2) * r /
                     (static_cast<double>(k()) * static_cast<double>(n)));
}

VectorXd DGP1Spec::beta_truth() const {
    VectorXd b = VectorXd::Ones(g());
    b[0] = beta;
    return b;
}

LinearRestriction DGP1Spec::null_restriction() const {
    LinearRestriction rest;
    rest.A = MatrixXd::Zero(1, g());
    rest.A(0, 0) = 1.0;
    rest.a = VectorXd::Constant(1, beta);
    return rest;
}

IVDataset gen_dgp1(const DGP1Spec& spec, std::uint64_t seed, std::uint64_t stream) {
    const Index n = spec.n, k1 = spec.k1(), g2 = spec.g2;
    if (k1 < 3) throw SpecError("DGP1 needs k1 >= 3 for the polynomial instruments");
    Philox rng = replication_rng(seed, stream);

    // First three instruments are the orthonormalised (Hermite) polynomials
    // of z1, so each instrument column carries unit signal and the
    // first-stage coefficient calibrates the concentration to r.
    VectorXd z1 = normal_vector(rng, n);
    MatrixXd Z1(n, k1);
    Z1.col(0) = z1;
    Z1.col(1) = (z1.array().square() - 1.0) / std::sqrt(2.0);
    Z1.col(2) = (z1.array().cube() - 3.0 * z1.array()) / std::sqrt(6.0);
    if (k1 > 3) Z1.rightCols(k1 - 3) = normal_matrix(rng, n, k1 - 3);

    MatrixXd Z2(n, g2);
    Z2.col(0).setOnes();
    if (g2 > 1) Z2.rightCols(g2 - 1) = normal_matrix(rng, n, g2 - 1);

    VectorXd u1 = normal_vector(rng, n);
    VectorXd u2 = normal_vector(rng, n);

    VectorXd eps = (1.0 + spec.rho2 * z1.array().square()) * u2.array();
    VectorXd v = spec.rho1 * eps + std::sqrt(1.0 - spec.rho1 * spec.rho1) * u1;

    MatrixXd Z(n, k1 + g2);
    Z << Z1, Z2;
    VectorXd x1 = spec.pi() * (Z * VectorXd::Ones(spec.k())) + v;
    VectorXd y = x1 * spec.beta + Z2 * VectorXd::Ones(g2) + eps;

    IVDataset data;
    data.y = std::move(y);
    data.X.resize(n, 1 + g2);
    data.X.col(0) = x1;
    data.X.rightCols(g2) = Z2;
    data.Z = std::move(Z);
    return data;
}

Index DGP2Spec::kj() const { return integral_share(alpha, n, "DGP2"); }

double DGP2Spec::pij() const {
    return std::sqrt(r / (static_cast<double>(kj()) * (1.0 - r)));
}

VectorXd DGP2Spec::beta_truth() const {
    VectorXd b(g());
    b[0] = beta1;
    b[1] = beta2;
    b.tail(beta3.size()) = beta3;
    return b;
}

LinearRestriction DGP2Spec::null_restriction() const {
    LinearRestriction rest;
    rest.A = MatrixXd::Zero(1, g());
    rest.A(0, 0) = 1.0;
    rest.A(0, 1) = 1.0;
    rest.a = VectorXd::Constant(1, beta1 + beta2);
    return rest;
}

IVDataset gen_dgp2(const DGP2Spec& spec, std::uint64_t seed, std::uint64_t stream) {
    const Index n = spec.n, kj = spec.kj(), g3 = spec.beta3.size();
    Philox rng = replication_rng(seed, stream);

    MatrixXd Z1 = normal_matrix(rng, n, kj);
    MatrixXd Z2 = normal_matrix(rng, n, kj);
    MatrixXd X3(n, g3);
    X3.col(0).setOnes();
    if (g3 > 1) X3.rightCols(g3 - 1) = normal_matrix(rng, n, g3 - 1);

    VectorXd u = normal_vector(rng, n);
    VectorXd e = spec.sigma_e * normal_vector(rng, n);
    VectorXd v1 = spec.sigma_v * normal_vector(rng, n);
    VectorXd v2 = spec.sigma_v * normal_vector(rng, n);

    VectorXd eps = 0.2 * u + e;
    double pij = spec.pij();
    VectorXd x1 = pij * (Z1 * VectorXd::Ones(kj)) + spec.delta1 * u + v1;
    VectorXd x2 = pij * (Z2 * VectorXd::Ones(kj)) + spec.delta2 * u + v2;
    VectorXd y = x1 * spec.beta1 + x2 * spec.beta2 + X3 * spec.beta3 + eps;

    IVDataset data;
    data.y = std::move(y);
    data.X.resize(n, 2 + g3);
    data.X.col(0) = x1;
    data.X.col(1) = x2;
    data.X.rightCols(g3) = X3;
    data.Z.resize(n, 2 * kj + g3);
    data.Z << Z1, Z2, X3;
    return data;
}

}  // namespace jive
