#include "jive/kernels.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace jive {

namespace {

// One-sided guard for D (I - D)^{-1}: Assumption 1 is a maintained
// hypothesis, so a diagonal entry this close to one is an error, not
// something to regularise away.
void check_leverage(const VectorXd& P_diag) {
    for (Index i = 0; i < P_diag.size(); ++i) {
        if (1.0 - P_diag[i] < 1e-8) {
            throw KernelError("projection diagonal entry " + std::to_string(i) +
                              " is " + std::to_string(P_diag[i]) +
                              "; leave-out weights are singular");
        }
    }
}

// C and B of the SJIVE construction. With W = D (I-D)^{-1},
//   B = (I-P) W (I-P)
//   C = P + (P W P - P W / 2 - W P / 2) - B = P - W + (P W + W P) / 2,
// which has an exactly zero diagonal.
void build_sjive_parts(const MatrixXd& P, const VectorXd& P_diag, MatrixXd* C, MatrixXd* B) {
    Index n = P.rows();
    VectorXd w = P_diag.array() / (1.0 - P_diag.array());
    MatrixXd PW = P * w.asDiagonal();
    MatrixXd IP = MatrixXd::Identity(n, n) - P;
    B->noalias() = IP * w.asDiagonal() * IP;
    *B = 0.5 * (*B + B->transpose());
    *C = P + 0.5 * (PW + PW.transpose());
    C->diagonal() -= w;
    *C = 0.5 * (*C + C->transpose());
    C->diagonal().setZero();  // analytically zero; enforce exactly
}

std::uint64_t fnv1a(const void* bytes, std::size_t size, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t hash_matrix(const MatrixXd& Z) {
    std::uint64_t h = 14695981039346656037ull;
    std::int64_t dims[2] = {Z.rows(), Z.cols()};
    h = fnv1a(dims, sizeof(dims), h);
    return fnv1a(Z.data(), sizeof(double) * static_cast<std::size_t>(Z.size()), h);
}

constexpr std::uint64_t cache_magic = 0x4a49564543414348ull;  // "JIVECACH"

}  // namespace

std::pair<MatrixXd, VectorXd> projection_and_diag(const MatrixXd& Z) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(Z);
    qr.setThreshold(rank_tol);
    if (qr.rank() != Z.cols()) {
        throw KernelError("instrument matrix is rank deficient (rank " +
                          std::to_string(qr.rank()) + " of " + std::to_string(Z.cols()) + ")");
    }
    MatrixXd Q = qr.householderQ() * MatrixXd::Identity(Z.rows(), Z.cols());
    MatrixXd P(Z.rows(), Z.rows());
    P.setZero();
    P.selfadjointView<Eigen::Lower>().rankUpdate(Q);
    P = P.selfadjointView<Eigen::Lower>();
    VectorXd diag = Q.rowwise().squaredNorm();
    P.diagonal() = diag;
    return {std::move(P), std::move(diag)};
}

JackknifeKernel kernel_from_projection(const MatrixXd& P, const VectorXd& P_diag, Index k,
                                       Method method) {
    check_leverage(P_diag);
    JackknifeKernel kern;
    kern.method = method;
    kern.P_diag = P_diag;
    kern.k = k;
    Index n = P.rows();
    if (method == Method::SJIVE || method == Method::JIVE1) {
        build_sjive_parts(P, P_diag, &kern.C, &kern.B);
        kern.trB = static_cast<double>(k);  // tr(B) = tr(P) = k
    } else {
        kern.C = P;
        kern.C.diagonal().setZero();  // C = P - D
        kern.B = MatrixXd::Identity(n, n);
        kern.trB = static_cast<double>(n);
    }
    return kern;
}

JackknifeKernel build_kernel(const MatrixXd& Z, Method method) {
    auto [P, diag] = projection_and_diag(Z);
    return kernel_from_projection(P, diag, Z.cols(), method);
}

const char* ar_variant_name(ArVariant v) {
    return v == ArVariant::CMS21 ? "CMS21" : "MS22";
}

ArKernel ar_kernel_from_projection(const MatrixXd& P, const VectorXd& P_diag, Index k,
                                   ArVariant variant) {
    check_leverage(P_diag);
    ArKernel kern;
    kern.variant = variant;
    kern.k = k;
    if (variant == ArVariant::CMS21) {
        build_sjive_parts(P, P_diag, &kern.C, &kern.B);
    } else {
        kern.C = P;
        kern.C.diagonal().setZero();
        kern.B = MatrixXd::Identity(P.rows(), P.rows()) - P;
    }
    return kern;
}

ArKernel build_ar_kernel(const MatrixXd& Z, ArVariant variant) {
    auto [P, diag] = projection_and_diag(Z);
    return ar_kernel_from_projection(P, diag, Z.cols(), variant);
}

void save_kernel_cache(const std::string& path, const JackknifeKernel& kernel,
                       const MatrixXd& Z) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open kernel cache for writing: " + path);
    std::uint64_t header[4] = {cache_magic, hash_matrix(Z),
                               static_cast<std::uint64_t>(kernel.method),
                               static_cast<std::uint64_t>(kernel.n())};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    std::int64_t k = kernel.k;
    out.write(reinterpret_cast<const char*>(&k), sizeof(k));
    out.write(reinterpret_cast<const char*>(&kernel.trB), sizeof(double));
    auto write_block = [&](const double* p, Index count) {
        out.write(reinterpret_cast<const char*>(p),
                  static_cast<std::streamsize>(sizeof(double) * count));
    };
    write_block(kernel.C.data(), kernel.C.size());
    write_block(kernel.B.data(), kernel.B.size());
    write_block(kernel.P_diag.data(), kernel.P_diag.size());
}

std::optional<JackknifeKernel> load_kernel_cache(const std::string& path, const MatrixXd& Z,
                                                 Method method) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::uint64_t header[4];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in || header[0] != cache_magic || header[1] != hash_matrix(Z) ||
        header[2] != static_cast<std::uint64_t>(method) ||
        header[3] != static_cast<std::uint64_t>(Z.rows())) {
        return std::nullopt;
    }
    JackknifeKernel kern;
    kern.method = method;
    Index n = static_cast<Index>(header[3]);
    std::int64_t k = 0;
    in.read(reinterpret_cast<char*>(&k), sizeof(k));
    in.read(reinterpret_cast<char*>(&kern.trB), sizeof(double));
    kern.k = static_cast<Index>(k);
    kern.C.resize(n, n);
    kern.B.resize(n, n);
    kern.P_diag.resize(n);
    auto read_block = [&](double* p, Index count) {
        in.read(reinterpret_cast<char*>(p),
                static_cast<std::streamsize>(sizeof(double) * count));
    };
    read_block(kern.C.data(), kern.C.size());
    read_block(kern.B.data(), kern.B.size());
    read_block(kern.P_diag.data(), kern.P_diag.size());
    if (!in) return std::nullopt;
    return kern;
}

}  // namespace jive
