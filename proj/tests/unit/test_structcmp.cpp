#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "pchsl/errors.hpp"
#include "pchsl/structcmp.hpp"

using namespace pchsl;

namespace {

PolyHamiltonian monomial(int i, int j, double c) {
    PolyHamiltonian h(2);
    h.set_coeff(i, j, c);
    return h;
}

// independent quadrature-free oracle: exact integral of (H_b - H_a)^2 with
// both polynomials shifted to zero analytic... the library removes the grid
// mean, so the oracle removes the exact grid mean too before integrating.
double distance_oracle(const PolyHamiltonian& hb, const PolyHamiltonian& ha, const Domain& dom) {
    testutil::PolyMap mb = testutil::to_map(hb);
    testutil::PolyMap ma = testutil::to_map(ha);
    mb[{0, 0}] -= testutil::grid_mean_oracle(mb, dom);
    ma[{0, 0}] -= testutil::grid_mean_oracle(ma, dom);
    const testutil::PolyMap diff = testutil::poly_sub(mb, ma);
    return testutil::exact_box_integral(testutil::poly_mul(diff, diff), dom);
}

}  // namespace

TEST_SUITE("structcmp") {

TEST_CASE("landscape_distance: identical landscapes have distance zero") {
    const PolyHamiltonian h = testutil::reference_before();
    CHECK(landscape_distance(h, h, Domain{}) <= 1e-14);
}

TEST_CASE("landscape_distance: zero-mean gauge absorbs constants") {
    const PolyHamiltonian hb = monomial(1, 0, 1.0);  // z1
    PolyHamiltonian ha = monomial(1, 0, 1.0);
    ha.set_coeff(0, 0, 1.0);  // z1 + 1
    CHECK(landscape_distance(hb, ha, Domain{}) <= 1e-10);
}

TEST_CASE("landscape_distance: z1 vs 2 z1 integrates to 4/3 over [-1,1]^2") {
    const PolyHamiltonian hb = monomial(1, 0, 1.0);
    const PolyHamiltonian ha = monomial(1, 0, 2.0);
    const double d101 = landscape_distance(hb, ha, Domain{});
    CHECK(d101 == doctest::Approx(4.0 / 3.0).epsilon(1e-3));
    Domain fine;
    fine.grid_resolution = 201;
    CHECK(landscape_distance(hb, ha, fine) == doctest::Approx(4.0 / 3.0).epsilon(1e-4));
}

TEST_CASE("landscape_distance: symmetric in its arguments") {
    std::mt19937_64 rng(103);
    for (int rep = 0; rep < 10; ++rep) {
        const PolyHamiltonian a = testutil::random_bounded_quadratic(rng);
        const PolyHamiltonian b = testutil::random_bounded_quadratic(rng);
        const double dab = landscape_distance(a, b, Domain{});
        const double dba = landscape_distance(b, a, Domain{});
        CHECK(std::abs(dab - dba) <= 1e-12 * std::max(1.0, dab));
    }
}

TEST_CASE("landscape_distance: quadrature converges and matches the exact-integral oracle") {
    std::mt19937_64 rng(107);
    for (int rep = 0; rep < 5; ++rep) {
        const PolyHamiltonian a = testutil::random_bounded_quadratic(rng);
        const PolyHamiltonian b = testutil::random_bounded_quadratic(rng);
        Domain coarse;
        coarse.grid_resolution = 101;
        Domain fine;
        fine.grid_resolution = 201;
        const double d_coarse = landscape_distance(a, b, coarse);
        const double d_fine = landscape_distance(a, b, fine);
        if (d_fine > 1e-12) CHECK(std::abs(d_fine - d_coarse) / d_fine <= 1e-3);
        // degree-4 integrand, so the analytic oracle pins the limit
        const double exact = distance_oracle(a, b, fine);
        CHECK(d_fine == doctest::Approx(exact).epsilon(1e-3));
    }
}

TEST_CASE("landscape_distance: invariant under adding constants (zero-mean gauge)") {
    std::mt19937_64 rng(109);
    const PolyHamiltonian a = testutil::random_bounded_quadratic(rng);
    PolyHamiltonian b = testutil::random_bounded_quadratic(rng);
    const double base = landscape_distance(a, b, Domain{});
    b.set_coeff(0, 0, 123.0);
    PolyHamiltonian a2 = a;
    a2.set_coeff(0, 0, -42.0);
    CHECK(std::abs(landscape_distance(a2, b, Domain{}) - base) <= 1e-10 * std::max(1.0, base));
}

TEST_CASE("landscape_distance: frame mismatch is refused unless forced") {
    PolyHamiltonian a = monomial(2, 0, 1.0);
    PolyHamiltonian b = monomial(2, 0, 1.0);
    a.frame_id = "frame-one";
    b.frame_id = "frame-two";
    CHECK_THROWS_AS((void)landscape_distance(a, b, Domain{}), Error);
    CHECK(landscape_distance(a, b, Domain{}, /*force_frame=*/true) <= 1e-14);
    b.frame_id = "frame-one";
    CHECK(landscape_distance(a, b, Domain{}) <= 1e-14);
}

TEST_CASE("norm_l2: zero polynomial, analytic value, homogeneity") {
    CHECK(norm_l2(PolyHamiltonian(2), Domain{}) == 0.0);
    const PolyHamiltonian z1 = monomial(1, 0, 1.0);
    CHECK(norm_l2(z1, Domain{}) == doctest::Approx(std::sqrt(4.0 / 3.0)).epsilon(1e-3));
    const PolyHamiltonian scaled = monomial(1, 0, -2.0);
    CHECK(norm_l2(scaled, Domain{}) == doctest::Approx(2.0 * norm_l2(z1, Domain{})).epsilon(1e-12));
}

TEST_CASE("sir: hand-checked paper_literal value for z1 vs 2 z1") {
    const ComparisonReport r =
        sir(monomial(1, 0, 1.0), monomial(1, 0, 2.0), Domain{}, SirMode::paper_literal, 0.07);
    // d / |H_b| = (4/3) / sqrt(4/3) = sqrt(4/3)
    CHECK(r.sir == doctest::Approx(std::sqrt(4.0 / 3.0)).epsilon(1e-3));
    CHECK(r.verdict == Verdict::irreversible);
    // dimensionless mode: sqrt(d)/|H_b| = 1
    const ComparisonReport rd =
        sir(monomial(1, 0, 1.0), monomial(1, 0, 2.0), Domain{}, SirMode::dimensionless, 0.07);
    CHECK(rd.sir == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("sir: identical landscapes are reversible with index zero") {
    const PolyHamiltonian h = testutil::reference_before();
    const ComparisonReport r = sir(h, h, Domain{});
    CHECK(r.sir == 0.0);
    CHECK(r.verdict == Verdict::reversible);
    CHECK(r.false_recovery_fraction == 0.0);
    CHECK(r.diff_grid.diff.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("sir: strictly positive whenever non-constant coefficients differ") {
    std::mt19937_64 rng(113);
    for (int rep = 0; rep < 10; ++rep) {
        const PolyHamiltonian a = testutil::random_bounded_quadratic(rng);
        PolyHamiltonian b = testutil::random_bounded_quadratic(rng);
        const ComparisonReport r = sir(a, b, Domain{});
        CHECK(r.sir > 0.0);
        CHECK(r.distance_d >= 0.0);
    }
}

TEST_CASE("sir: verdict is monotone in the threshold") {
    std::mt19937_64 rng(127);
    const PolyHamiltonian a = testutil::random_bounded_quadratic(rng);
    const PolyHamiltonian b = testutil::random_bounded_quadratic(rng);
    Verdict prev = Verdict::irreversible;
    for (double threshold : {0.0001, 0.01, 0.07, 1.0, 100.0}) {
        const ComparisonReport r = sir(a, b, Domain{}, SirMode::paper_literal, threshold);
        if (prev == Verdict::reversible) CHECK(r.verdict == Verdict::reversible);
        prev = r.verdict;
    }
}

TEST_CASE("sir: flat reference landscape is rejected") {
    const PolyHamiltonian flat(2);
    const PolyHamiltonian other = monomial(1, 0, 1.0);
    CHECK_THROWS_AS((void)sir(flat, other, Domain{}), Error);
}

TEST_CASE("false_recovery_fraction: identical landscapes score zero") {
    const PolyHamiltonian h = testutil::reference_before();
    CHECK(false_recovery_fraction(h, h, Domain{}, 0.1) == 0.0);
}

TEST_CASE("false_recovery_fraction: large constant shift floods every cell") {
    // inputs are evaluated as given (no re-gauge), so a shift of
    // 10 * RMS(H_b) trips the threshold everywhere
    PolyHamiltonian hb = monomial(1, 0, 1.0);
    hb.gauge = Gauge::zero_at_origin;
    const double rms = std::sqrt(1.0 / 3.0);  // RMS of z1 over the box
    PolyHamiltonian ha = monomial(1, 0, 1.0);
    ha.set_coeff(0, 0, 10.0 * rms);
    ha.gauge = Gauge::zero_at_origin;
    CHECK(false_recovery_fraction(hb, ha, Domain{}, 0.1) == doctest::Approx(1.0));
}

TEST_CASE("false_recovery_fraction: sign flip matches the brute-force grid count") {
    const PolyHamiltonian hb = monomial(1, 0, 1.0);
    const PolyHamiltonian ha = monomial(1, 0, -1.0);
    const Domain dom{};
    const double tau = 0.1;

    // oracle: count midpoints with |2 z1| > tau * RMS(z1) directly
    double rms_acc = 0.0;
    for (int a = 0; a < dom.grid_resolution; ++a)
        for (int b = 0; b < dom.grid_resolution; ++b)
            rms_acc += dom.z1_at(a) * dom.z1_at(a);
    const double rms = std::sqrt(rms_acc / (dom.grid_resolution * dom.grid_resolution));
    int count = 0;
    for (int a = 0; a < dom.grid_resolution; ++a)
        if (std::abs(2.0 * dom.z1_at(a)) > tau * rms) count += dom.grid_resolution;
    const double expected =
        static_cast<double>(count) / (dom.grid_resolution * dom.grid_resolution);

    const double fraction = false_recovery_fraction(hb, ha, dom, tau);
    CHECK(fraction == doctest::Approx(expected).epsilon(1e-12));
    CHECK(fraction == doctest::Approx(0.9703).epsilon(1e-3));  // 98 of 101 columns
}

TEST_CASE("fixed points: harmonic bowl has a single minimum at the origin") {
    PolyHamiltonian h(2);
    h.set_coeff(2, 0, 0.5);
    h.set_coeff(0, 2, 0.5);
    const auto points = fixed_point_analysis(h, Domain{});
    REQUIRE(points.size() == 1);
    CHECK(points[0].location.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(points[0].kind == CriticalPointKind::minimum);
}

TEST_CASE("fixed points: z1^2 - z2^2 is a saddle at the origin") {
    PolyHamiltonian h(2);
    h.set_coeff(2, 0, 1.0);
    h.set_coeff(0, 2, -1.0);
    const auto points = fixed_point_analysis(h, Domain{});
    REQUIRE(points.size() == 1);
    CHECK(points[0].kind == CriticalPointKind::saddle);
    CHECK(points[0].hessian_eigenvalues[0] == doctest::Approx(-2.0));
    CHECK(points[0].hessian_eigenvalues[1] == doctest::Approx(2.0));
}

TEST_CASE("fixed points: reference after-polynomial solved by hand Cramer rule") {
    const PolyHamiltonian h = testutil::reference_after();
    // hand oracle: Hess = [[-0.016, 0.002], [0.002, 0.088]], rhs = -(h10, h01)
    const double a = 2.0 * h.coeff(2, 0), bb = h.coeff(1, 1), c = 2.0 * h.coeff(0, 2);
    const double det = a * c - bb * bb;
    const double z1 = (-h.coeff(1, 0) * c - bb * -h.coeff(0, 1)) / det;
    const double z2 = (a * -h.coeff(0, 1) - -h.coeff(1, 0) * bb) / det;

    Domain wide;
    wide.z1_range = {-20.0, 20.0};
    wide.z2_range = {-20.0, 20.0};
    const auto points = fixed_point_analysis(h, wide);
    REQUIRE(points.size() == 1);
    CHECK(points[0].location[0] == doctest::Approx(z1).epsilon(1e-12));
    CHECK(points[0].location[1] == doctest::Approx(z2).epsilon(1e-12));
    CHECK(points[0].kind == CriticalPointKind::saddle);  // eigenvalues of opposite sign
    CHECK(points[0].hessian_eigenvalues[0] < 0.0);
    CHECK(points[0].hessian_eigenvalues[1] > 0.0);

    // the same point lies outside the default box, so the default search is empty
    CHECK(fixed_point_analysis(h, Domain{}).empty());
}

TEST_CASE("fixed points: quartic double well via grid search and Newton refinement") {
    // H = (z1^2 - 1)^2 + z2^2: minima at (-1, 0) and (1, 0), saddle at origin
    PolyHamiltonian h(4);
    h.set_coeff(4, 0, 1.0);
    h.set_coeff(2, 0, -2.0);
    h.set_coeff(0, 0, 1.0);
    h.set_coeff(0, 2, 1.0);
    Domain dom;
    dom.z1_range = {-2.0, 2.0};
    dom.z2_range = {-1.0, 1.0};
    dom.grid_resolution = 41;
    auto points = fixed_point_analysis(h, dom);
    REQUIRE(points.size() == 3);
    int minima = 0, saddles = 0;
    for (const auto& p : points) {
        if (p.kind == CriticalPointKind::minimum) {
            ++minima;
            CHECK(std::abs(std::abs(p.location[0]) - 1.0) <= 1e-9);
        }
        if (p.kind == CriticalPointKind::saddle)
            ++saddles;
    }
    CHECK(minima == 2);
    CHECK(saddles == 1);
}

TEST_CASE("diff grid csv: plot-ready export with header") {
    const ComparisonReport r = sir(monomial(1, 0, 1.0), monomial(1, 0, 2.0), Domain{});
    const auto dir = testutil::temp_dir("diffgrid");
    const auto path = (dir / "diff_grid.csv").string();
    write_diff_grid_csv(path, r.diff_grid);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "z1,z2,h_before,h_after,diff");
    int lines = 0;
    std::string line;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 101 * 101);
}

}  // TEST_SUITE
