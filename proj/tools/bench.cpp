// Benchmark: kernel construction and test evaluation at a few sizes, and the
// Monte Carlo engine with one worker (serial reference) against all hardware
// threads. The two runs must agree cell for cell.

#include "jive/dgp.hpp"
#include "jive/kernels.hpp"
#include "jive/simulation.hpp"
#include "jive/statistics.hpp"

#include <chrono>
#include <cstdio>

using namespace jive;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void bench_kernels() {
    printf("kernel construction + one full test battery\n");
    for (Index n : {200, 600, 1200}) {
        DGP1Spec spec;
        spec.n = n;
        IVDataset data = gen_dgp1(spec, 7, 0);
        auto t0 = std::chrono::steady_clock::now();
        auto [P, pd] = projection_and_diag(data.Z);
        auto k1 = kernel_from_projection(P, pd, data.k(), Method::SJIVE);
        auto k2 = kernel_from_projection(P, pd, data.k(), Method::HLIM);
        double t_kern = seconds_since(t0);

        auto rest = spec.null_restriction();
        std::vector<StatRequest> reqs = {
            {Family::D, Reference::Kind::chibar, VarianceMode::plugin},
            {Family::W1, Reference::Kind::chibar, VarianceMode::plugin},
            {Family::LM, Reference::Kind::chibar, VarianceMode::plugin},
            {Family::Dstar1, Reference::Kind::chisq, VarianceMode::plugin},
            {Family::W1star, Reference::Kind::chisq, VarianceMode::plugin},
            {Family::LMstar, Reference::Kind::chisq, VarianceMode::plugin},
        };
        t0 = std::chrono::steady_clock::now();
        auto r1 = evaluate_linear_restriction(k1, data, rest, reqs);
        auto r2 = evaluate_linear_restriction(k2, data, rest, reqs);
        double t_tests = seconds_since(t0);
        printf("  n=%5ld k=%3ld: kernels %.3fs, %zu statistics %.3fs\n", (long)n,
               (long)data.k(), t_kern, r1.size() + r2.size(), t_tests);
    }
}

void bench_harness() {
    printf("Monte Carlo engine, serial reference vs OpenMP\n");
    auto specs = table_dgp1_experiments(200, 99);
    ExperimentSpec spec = specs[0];

    spec.workers = 1;
    auto t0 = std::chrono::steady_clock::now();
    RejectionTable serial = run_size_experiment(spec);
    double t_serial = seconds_since(t0);

    spec.workers = 0;  // all hardware threads
    t0 = std::chrono::steady_clock::now();
    RejectionTable parallel = run_size_experiment(spec);
    double t_parallel = seconds_since(t0);

    bool identical = serial.rows.size() == parallel.rows.size();
    for (std::size_t i = 0; identical && i < serial.rows.size(); ++i) {
        identical = serial.rows[i].rate == parallel.rows[i].rate &&
                    serial.rows[i].failures == parallel.rows[i].failures;
    }
    printf("  %d reps: serial %.2fs, parallel (%d workers) %.2fs, speedup %.2fx, %s\n",
           spec.reps, t_serial, resolve_workers(0), t_parallel, t_serial / t_parallel,
           identical ? "tables identical" : "TABLES DIFFER");
}

}  // namespace

int main() {
    bench_kernels();
    bench_harness();
    return 0;
}
