// Times the fused OpenMP solver step against the serial reference on the
// same random instance and checks that the two stay bitwise identical.

#include "CLI11.hpp"

#include "cmfseg/solver.hpp"

#include <omp.h>

#include <chrono>
#include <cstring>
#include <iostream>
#include <random>

using namespace cmfseg;

namespace {

CapacityField random_instance(int n, std::uint64_t seed) {
    const Dims dims{n, n, n};
    CapacityField caps{Volume3D(dims, Spacing{}), Volume3D(dims, Spacing{}),
                       Volume3D(dims, Spacing{}, 0.3)};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (auto& v : caps.cs.data) v = u(rng);
    for (auto& v : caps.ct.data) v = u(rng);
    return caps;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool states_match(const FlowState& a, const FlowState& b) {
    return same_bits(a.ps.data, b.ps.data) && same_bits(a.pt.data, b.pt.data) &&
           same_bits(a.lambda.data, b.lambda.data) &&
           same_bits(a.p.x, b.p.x) && same_bits(a.p.y, b.p.y) &&
           same_bits(a.p.z, b.p.z);
}

template <typename F>
double time_ms(F&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"solver step benchmark: fused OpenMP kernel vs serial reference"};
    int size = 64;
    int iters = 50;
    int threads = 0;
    std::uint64_t seed = 1;
    app.add_option("--size", size, "grid edge length")->check(CLI::Range(2, 512));
    app.add_option("--iters", iters, "step count")->check(CLI::PositiveNumber);
    app.add_option("--threads", threads, "worker thread count (0 = runtime default)");
    app.add_option("--seed", seed, "instance seed");
    CLI11_PARSE(app, argc, argv);

    if (threads > 0) omp_set_num_threads(threads);

    const CapacityField caps = random_instance(size, seed);
    const CmfConfig cfg;
    FlowState fused = init_flow_state(caps, cfg);
    FlowState serial = fused;

    double r_fused = 0.0, r_serial = 0.0;
    const double ms_fused = time_ms([&] {
        for (int i = 0; i < iters; ++i) r_fused = step(fused, caps, cfg);
    });
    const double ms_serial = time_ms([&] {
        for (int i = 0; i < iters; ++i) r_serial = step_serial(serial, caps, cfg);
    });

    const bool identical =
        states_match(fused, serial) &&
        std::memcmp(&r_fused, &r_serial, sizeof(double)) == 0;

    std::cout << "grid = " << size << "^3, iters = " << iters
              << ", threads = " << omp_get_max_threads() << "\n";
    std::cout << "fused:  " << ms_fused << " ms  (" << ms_fused / iters
              << " ms/step), residual " << r_fused << "\n";
    std::cout << "serial: " << ms_serial << " ms  (" << ms_serial / iters
              << " ms/step), residual " << r_serial << "\n";
    std::cout << "speedup x" << (ms_serial / ms_fused) << "\n";
    std::cout << "bitwise identical: " << (identical ? "yes" : "NO") << "\n";
    return identical ? 0 : 1;
}
