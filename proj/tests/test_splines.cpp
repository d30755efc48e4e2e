#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include <mdlselect/simlab.hpp>
#include <mdlselect/splines.hpp>

using namespace mdlselect;
using namespace mdlselect::splines;

namespace {

// Cox-de Boor recursion straight from the definition, with 0/0 = 0 and the
// right endpoint folded into the last nonempty span.
double cox_de_boor(const std::vector<double>& t, int i, int k, double x, double b) {
    if (k == 0) {
        const double lo = t[static_cast<std::size_t>(i)], hi = t[static_cast<std::size_t>(i + 1)];
        if (lo < hi && ((lo <= x && x < hi) || (x == b && hi == b))) return 1.0;
        return 0.0;
    }
    double out = 0.0;
    const double d1 = t[static_cast<std::size_t>(i + k)] - t[static_cast<std::size_t>(i)];
    const double d2 = t[static_cast<std::size_t>(i + k + 1)] - t[static_cast<std::size_t>(i + 1)];
    if (d1 > 0) out += (x - t[static_cast<std::size_t>(i)]) / d1 * cox_de_boor(t, i, k - 1, x, b);
    if (d2 > 0) out += (t[static_cast<std::size_t>(i + k + 1)] - x) / d2 * cox_de_boor(t, i + 1, k - 1, x, b);
    return out;
}

Vector uniform_points(Index n, unsigned seed, double a = 0.0, double b = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(a, b);
    Vector x(n);
    for (Index i = 0; i < n; ++i) x(i) = u(rng);
    return x;
}

}  // namespace

TEST(SplineSpec, CubicDefaultHasNineFunctions) {
    const SplineBasisSpec spec;
    EXPECT_EQ(spec.degree, 3);
    EXPECT_EQ(spec.basis_dim, 9);
    EXPECT_EQ(spec.interior_knots(), 5);
    EXPECT_EQ(knot_vector(spec, 0, 1).size(), 13u);
    EXPECT_THROW((SplineBasisSpec{3, 3}).validate(), InputError);
}

TEST(SplineBasis, MatchesRecursiveDefinition) {
    for (const auto spec : {SplineBasisSpec{3, 9}, SplineBasisSpec{2, 6}, SplineBasisSpec{1, 4}, SplineBasisSpec{0, 3}}) {
        for (const auto [a, b] : {std::pair{0.0, 1.0}, std::pair{-2.0, 5.0}}) {
            const auto t = knot_vector(spec, a, b);
            Vector x = uniform_points(50, 3, a, b);
            x(0) = 0.5 * (a + b);
            x(1) = a;
            x(2) = b;
            const Matrix B = basis_eval(spec, a, b, x);
            for (Index i = 0; i < x.size(); ++i)
                for (int j = 0; j < spec.basis_dim; ++j)
                    EXPECT_NEAR(B(i, j), cox_de_boor(t, j, spec.degree, x(i), b), 1e-12)
                        << "degree " << spec.degree << " x " << x(i) << " j " << j;
        }
    }
}

TEST(SplineBasis, PartitionOfUnityAndNonnegativity) {
    const SplineBasisSpec spec;
    const Vector x = uniform_points(1000, 7, -1.0, 3.0);
    const Matrix B = basis_eval(spec, -1.0, 3.0, x);
    EXPECT_LE((B.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_GE(B.minCoeff(), 0.0);
}

TEST(SplineBasis, LocalSupport) {
    const SplineBasisSpec spec;
    const Matrix B = basis_eval(spec, 0.0, 1.0, uniform_points(1000, 8));
    for (Index i = 0; i < B.rows(); ++i) EXPECT_LE((B.row(i).array() != 0.0).count(), spec.degree + 1);
}

TEST(SplineBasis, EndpointsAreUnitVectors) {
    const SplineBasisSpec spec;
    Vector x(2);
    x << 2.0, 4.0;
    const Matrix B = basis_eval(spec, 2.0, 4.0, x);
    Vector e_first = Vector::Zero(9), e_last = Vector::Zero(9);
    e_first(0) = 1.0;
    e_last(8) = 1.0;
    EXPECT_LE((B.row(0).transpose() - e_first).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((B.row(1).transpose() - e_last).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SplineBasis, ClampsOutsideDomain) {
    Vector x(2), edge(2);
    x << -5.0, 9.0;
    edge << 0.0, 1.0;
    EXPECT_EQ(basis_eval({}, 0.0, 1.0, x), basis_eval({}, 0.0, 1.0, edge));
    EXPECT_THROW(basis_eval({}, 1.0, 1.0, x), InputError);
}

// Cubic splines reproduce cubic polynomials exactly: least squares on the
// basis leaves no residual.
TEST(SplineBasis, ReproducesCubics) {
    const Vector x = uniform_points(200, 9, -1.0, 2.0);
    const Matrix B = basis_eval({}, -1.0, 2.0, x);
    const Vector y = (1.0 - 2.0 * x.array() + 0.5 * x.array().square() + 0.75 * x.array().cube()).matrix();
    const Vector fit = B * B.colPivHouseholderQr().solve(y);
    EXPECT_LE((fit - y).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(SplineBasis, SpanIndependentOfLocationAndScale) {
    const Vector x = uniform_points(100, 10);
    const Matrix B1 = basis_eval({}, 0.0, 1.0, x);
    const Vector moved = (3.0 * x.array() - 7.0).matrix();
    const Matrix B2 = basis_eval({}, -7.0, -4.0, moved);
    EXPECT_LE((B1 - B2).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GroupBasis, CenteredColumnsAndEvaluateAgree) {
    const Vector x = uniform_points(80, 11, 1.0, 4.0);
    Matrix X(80, 1);
    X.col(0) = x;
    const Dataset d(Vector::Zero(80), X);
    Matrix centered;
    const auto g = fit_group_basis(d, 0, {}, &centered);
    EXPECT_LE(centered.colwise().sum().cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((g.evaluate({}, x) - centered).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_DOUBLE_EQ(g.lower, x.minCoeff());
    EXPECT_DOUBLE_EQ(g.upper, x.maxCoeff());
}

TEST(GroupBasis, ConstantCovariateIsDegenerate) {
    const Dataset d(Vector::Zero(5), Matrix::Constant(5, 1, 2.0));
    EXPECT_THROW(fit_group_basis(d, 0, {}, nullptr), NumericalError);
}

TEST(AdditiveDesign, BlocksAreIndependentAcrossCovariates) {
    Matrix X(300, 3);
    for (Index j = 0; j < 3; ++j) X.col(j) = uniform_points(300, 20 + static_cast<unsigned>(j));
    const Dataset d(Vector::Zero(300), X);
    const auto design = build_additive_design(d, ModelSubset({0, 2}, 3), {});
    ASSERT_EQ(design.group_count(), 2);
    EXPECT_EQ(design.B.cols(), 18);
    // each block alone has rank d_n - 1 (centering removes the constant)
    Eigen::ColPivHouseholderQR<Matrix> q0(design.block(0));
    EXPECT_EQ(q0.rank(), 8);
    const Matrix Z = design.identifiable_columns({0, 1});
    EXPECT_EQ(Z.cols(), 16);
    Eigen::ColPivHouseholderQR<Matrix> qz(Z);
    EXPECT_EQ(qz.rank(), 16);
    EXPECT_LE((Z.leftCols(8) - design.block(0).leftCols(8)).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LE((Z.rightCols(8) - design.block(1).leftCols(8)).cwiseAbs().maxCoeff(), 0.0);
}

// A noise-free f2 sample is recovered on the training points to within the
// spline approximation error, which is small for a quadratic.
TEST(AdditiveDesign, RecoversQuadraticSignalExactly) {
    const Vector x = uniform_points(200, 30);
    Matrix X(200, 1);
    X.col(0) = x;
    Vector y(200);
    for (Index i = 0; i < 200; ++i) y(i) = simlab::additive_truth(2, x(i));
    const Dataset d(y, X);
    const auto design = build_additive_design(d, ModelSubset({0}, 1), {});
    const Matrix Z = design.identifiable_columns({0});
    const Vector yc = (y.array() - y.mean()).matrix();
    const Vector fit = Z * Z.colPivHouseholderQr().solve(yc);
    EXPECT_LE((fit - yc).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(AdditiveDesign, FivePointSingleGroupIsCentered) {
    Matrix X(5, 2);
    X << 0.1, 3, 0.4, 1, 0.5, 4, 0.8, 1, 0.95, 5;
    const Dataset d(Vector::Zero(5), X);
    const auto one = build_additive_design(d, ModelSubset({0}, 2), {});
    EXPECT_EQ(one.B.rows(), 5);
    EXPECT_EQ(one.B.cols(), 9);
    EXPECT_LE(one.B.colwise().mean().cwiseAbs().maxCoeff(), 1e-15);
    const auto both = build_additive_design(d, ModelSubset({0, 1}, 2), {});
    const auto second = build_additive_design(d, ModelSubset({1}, 2), {});
    EXPECT_EQ(both.B.cols(), 18);
    EXPECT_EQ(both.block(1), second.B);
    EXPECT_EQ(both.block(0), one.B);
}

TEST(AdditiveDesign, CenteringKeepsSpanWithIntercept) {
    const Vector x = uniform_points(60, 31);
    const Vector y = uniform_points(60, 32);
    Matrix X(60, 1);
    X.col(0) = x;
    const auto design = build_additive_design(Dataset(y, X), ModelSubset({0}, 1), {});
    Matrix centered(60, 10), raw(60, 10);
    centered << Matrix::Ones(60, 1), design.B;
    raw << Matrix::Ones(60, 1), basis_eval({}, x.minCoeff(), x.maxCoeff(), x);
    const Vector f1 = centered * centered.colPivHouseholderQr().solve(y);
    const Vector f2 = raw * raw.colPivHouseholderQr().solve(y);
    EXPECT_LE((f1 - f2).cwiseAbs().maxCoeff(), 1e-10);
}
