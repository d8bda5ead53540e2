#pragma once

// Test-side oracles, kept independent of the library's quadrature and
// solver paths.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <utility>

#include "pchsl/hamfit.hpp"

namespace testutil {

using PolyMap = std::map<std::pair<int, int>, double>;

inline PolyMap to_map(const pchsl::PolyHamiltonian& h) {
    PolyMap m;
    for (int i = 0; i <= h.max_degree; ++i)
        for (int j = 0; j <= h.max_degree - i; ++j)
            if (h.coeff(i, j) != 0.0) m[{i, j}] = h.coeff(i, j);
    return m;
}

inline PolyMap poly_sub(const PolyMap& a, const PolyMap& b) {
    PolyMap out = a;
    for (const auto& [ij, c] : b) out[ij] -= c;
    return out;
}

inline PolyMap poly_mul(const PolyMap& a, const PolyMap& b) {
    PolyMap out;
    for (const auto& [ij_a, ca] : a)
        for (const auto& [ij_b, cb] : b)
            out[{ij_a.first + ij_b.first, ij_a.second + ij_b.second}] += ca * cb;
    return out;
}

// exact integral of z^k over [lo, hi]
inline double monomial_integral(int k, double lo, double hi) {
    return (std::pow(hi, k + 1) - std::pow(lo, k + 1)) / (k + 1);
}

// exact integral of the polynomial over the domain box (analytic, no grid)
inline double exact_box_integral(const PolyMap& p, const pchsl::Domain& dom) {
    double total = 0.0;
    for (const auto& [ij, c] : p)
        total += c * monomial_integral(ij.first, dom.z1_range[0], dom.z1_range[1]) *
                 monomial_integral(ij.second, dom.z2_range[0], dom.z2_range[1]);
    return total;
}

// mean over the same midpoint grid the library integrates on, computed
// from scratch
inline double grid_mean_oracle(const PolyMap& p, const pchsl::Domain& dom) {
    const int res = dom.grid_resolution;
    double sum = 0.0;
    for (int a = 0; a < res; ++a)
        for (int b = 0; b < res; ++b) {
            const double z1 = dom.z1_at(a), z2 = dom.z2_at(b);
            double v = 0.0;
            for (const auto& [ij, c] : p)
                v += c * std::pow(z1, ij.first) * std::pow(z2, ij.second);
            sum += v;
        }
    return sum / (static_cast<double>(res) * res);
}

// reference quadratic pair used across the suites (hand-pinned values)
inline pchsl::PolyHamiltonian reference_before() {
    pchsl::PolyHamiltonian h(2);
    h.set_coeff(0, 0, 0.045);
    h.set_coeff(0, 1, -0.095);
    h.set_coeff(0, 2, 0.149);
    h.set_coeff(1, 0, -0.046);
    h.set_coeff(1, 1, -0.236);
    h.set_coeff(2, 0, 0.058);
    return h;
}

inline pchsl::PolyHamiltonian reference_after() {
    pchsl::PolyHamiltonian h(2);
    h.set_coeff(0, 0, 0.070);
    h.set_coeff(0, 1, 0.082);
    h.set_coeff(0, 2, 0.044);
    h.set_coeff(1, 0, -0.192);
    h.set_coeff(1, 1, 0.002);
    h.set_coeff(2, 0, -0.008);
    return h;
}

// bounded-orbit quadratic: positive-definite quadratic part, small linear part
inline pchsl::PolyHamiltonian random_bounded_quadratic(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> quad(0.3, 0.7);
    std::uniform_real_distribution<double> cross(-0.2, 0.2);
    pchsl::PolyHamiltonian h(2);
    h.set_coeff(2, 0, quad(rng));
    h.set_coeff(0, 2, quad(rng));
    h.set_coeff(1, 1, cross(rng));
    h.set_coeff(1, 0, cross(rng));
    h.set_coeff(0, 1, cross(rng));
    return h;
}

inline std::filesystem::path temp_dir(const std::string& tag) {
    static int counter = 0;
    static const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    const auto dir = std::filesystem::temp_directory_path() /
                     ("pchsl_test_" + tag + "_" + std::to_string(stamp) + "_" +
                      std::to_string(counter++));
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::filesystem::path write_file(const std::filesystem::path& path,
                                        const std::string& content) {
    std::ofstream out(path);
    out << content;
    return path;
}

}  // namespace testutil
