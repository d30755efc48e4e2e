#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include <mdlselect/paths.hpp>
#include <mdlselect/simlab.hpp>

using namespace mdlselect;
using namespace mdlselect::paths;

namespace {

Matrix gaussian(Index n, Index p, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    Matrix X(n, p);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < p; ++j) X(i, j) = z(rng);
    return X;
}

Dataset centered_standardized(const Matrix& X, const Vector& y) {
    const auto d = standardize(Dataset(y, X));
    return d.with_response((y.array() - y.mean()).matrix());
}

// Cyclic coordinate descent for 1/2|y - Xb|^2 + lambda |b|_1 on a dense
// geometric grid, warm-started; records the order in which coefficients
// first become nonzero.
std::vector<Index> lasso_cd_order(const Matrix& X, const Vector& y, int grid) {
    const Index p = X.cols();
    const Vector norms = X.colwise().squaredNorm().transpose();
    const double lmax = (X.transpose() * y).cwiseAbs().maxCoeff();
    Vector b = Vector::Zero(p);
    Vector r = y;
    std::vector<Index> order;
    for (int k = 0; k < grid && static_cast<Index>(order.size()) < p; ++k) {
        const double lambda = lmax * std::pow(1e-4, static_cast<double>(k) / (grid - 1));
        for (int sweep = 0; sweep < 100000; ++sweep) {
            double change = 0.0;
            for (Index j = 0; j < p; ++j) {
                const double rho = X.col(j).dot(r) + norms(j) * b(j);
                const double nb = std::copysign(std::max(std::abs(rho) - lambda, 0.0), rho) / norms(j);
                if (nb != b(j)) {
                    r -= (nb - b(j)) * X.col(j);
                    change = std::max(change, std::abs(nb - b(j)));
                    b(j) = nb;
                }
            }
            if (change < 1e-13) break;
        }
        std::vector<std::pair<double, Index>> fresh;
        for (Index j = 0; j < p; ++j)
            if (b(j) != 0.0 && std::find(order.begin(), order.end(), j) == order.end())
                fresh.emplace_back(-std::abs(b(j)), j);
        std::sort(fresh.begin(), fresh.end());
        for (const auto& f : fresh) order.push_back(f.second);
    }
    return order;
}

// Proximal gradient (FISTA) on the whole group-lasso problem over a dense
// grid; first-activation order of the groups.
std::vector<Index> group_lasso_ista_order(const Matrix& B, Index width, const Vector& y, int grid) {
    const Index G = B.cols() / width;
    const double w = std::sqrt(static_cast<double>(width));
    Eigen::SelfAdjointEigenSolver<Matrix> es(B.transpose() * B, Eigen::EigenvaluesOnly);
    const double L = es.eigenvalues().maxCoeff();
    double lmax = 0.0;
    for (Index g = 0; g < G; ++g) lmax = std::max(lmax, (B.middleCols(g * width, width).transpose() * y).norm() / w);
    Vector a = Vector::Zero(B.cols());
    std::vector<Index> order;
    const auto prox = [&](const Vector& z, double lambda) {
        Vector out(z.size());
        for (Index g = 0; g < G; ++g) {
            const auto zg = z.segment(g * width, width);
            const double n = zg.norm(), t = lambda * w / L;
            out.segment(g * width, width) = n > t ? Vector((1.0 - t / n) * zg) : Vector(Vector::Zero(width));
        }
        return out;
    };
    for (int k = 0; k < grid && static_cast<Index>(order.size()) < G; ++k) {
        const double lambda = lmax * std::pow(1e-3, static_cast<double>(k) / (grid - 1));
        Vector v = a;
        double t = 1.0;
        for (int it = 0; it < 20000; ++it) {
            const Vector next = prox(v + B.transpose() * (y - B * v) / L, lambda);
            const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            v = next + ((t - 1.0) / tn) * (next - a);
            const double diff = (next - a).norm();
            a = next;
            t = tn;
            if (diff <= 1e-12 * std::max(1.0, a.norm())) break;
        }
        std::vector<std::pair<double, Index>> fresh;
        for (Index g = 0; g < G; ++g)
            if (a.segment(g * width, width).norm() > 0.0 && std::find(order.begin(), order.end(), g) == order.end())
                fresh.emplace_back(-a.segment(g * width, width).norm(), g);
        std::sort(fresh.begin(), fresh.end());
        for (const auto& f : fresh) order.push_back(f.second);
    }
    return order;
}

splines::AdditiveDesign additive_instance(Index n, Index p, unsigned seed, Vector& yc) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u;
    std::normal_distribution<double> z;
    Matrix X(n, p);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < p; ++j) X(i, j) = u(rng);
    Vector y(n);
    for (Index i = 0; i < n; ++i)
        y(i) = simlab::additive_truth(1, X(i, 0)) + 0.5 * simlab::additive_truth(3, X(i, 1)) + z(rng);
    yc = (y.array() - y.mean()).matrix();
    std::vector<Index> all(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) all[static_cast<std::size_t>(j)] = j;
    return splines::build_additive_design(Dataset(y, X), ModelSubset(all, p), {});
}

}  // namespace

TEST(LassoOrder, OrthogonalDesignFollowsInnerProducts) {
    // Hadamard-like orthogonal columns with mean zero and 1/n variance one
    Matrix X(8, 4);
    X << 1, 1, 1, 1,
         1, -1, 1, -1,
         1, 1, -1, -1,
         1, -1, -1, 1,
         -1, 1, 1, -1,
         -1, -1, 1, 1,
         -1, 1, -1, 1,
         -1, -1, -1, -1;
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector y = gaussian(8, 1, rng).col(0);
        const auto d = centered_standardized(X, y);
        ASSERT_LE((d.X().transpose() * d.X() - 8.0 * Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
        const auto path = lasso_order(d, 4);
        const Vector c = (d.X().transpose() * d.y()).cwiseAbs();
        std::vector<Index> expect{0, 1, 2, 3};
        std::stable_sort(expect.begin(), expect.end(), [&](Index a, Index b) { return c(a) > c(b); });
        EXPECT_EQ(path.activation_order, expect);
    }
}

TEST(LassoOrder, FirstStepIsLargestInnerProduct) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix X = gaussian(25, 10, rng);
        const Vector y = X.col(trial % 10) * 0.3 + gaussian(25, 1, rng).col(0);
        const auto d = centered_standardized(X, y);
        const auto path = lasso_order(d);
        Index arg;
        (d.X().transpose() * d.y()).cwiseAbs().maxCoeff(&arg);
        EXPECT_EQ(path.activation_order.front(), arg);
    }
}

TEST(LassoOrder, MatchesCoordinateDescentOracle) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        Matrix X = gaussian(30, 6, rng);
        for (Index j = 1; j < 6; ++j) X.col(j) = 0.6 * X.col(j - 1) + 0.8 * X.col(j);
        Vector beta(6);
        beta << 2.0, 0.0, -1.5, 0.0, 1.0, 0.5;
        const Vector y = X * beta + gaussian(30, 1, rng).col(0);
        const auto d = centered_standardized(X, y);
        const auto path = lasso_order(d, 6);
        const auto oracle = lasso_cd_order(d.X(), d.y(), 3000);
        EXPECT_EQ(path.activation_order, oracle) << "trial " << trial;
    }
}

TEST(LassoOrder, CandidatesAreStrictlyNestedAndCapped) {
    std::mt19937_64 rng(4);
    const Matrix X = gaussian(12, 30, rng);
    const auto d = centered_standardized(X, gaussian(12, 1, rng).col(0));
    const auto path = lasso_order(d);
    EXPECT_LE(path.length(), 11);
    EXPECT_EQ(std::set<Index>(path.activation_order.begin(), path.activation_order.end()).size(),
              path.activation_order.size());
    for (Index k = 0; k < path.length(); ++k) {
        const auto a = path.candidate(k), b = path.candidate(k + 1);
        EXPECT_EQ(b.size(), a.size() + 1);
        for (const auto j : a.indices()) EXPECT_TRUE(b.contains(j));
    }
}

TEST(LassoOrder, InvariantToPositiveScalingOfResponse) {
    std::mt19937_64 rng(5);
    const Matrix X = gaussian(40, 15, rng);
    const Vector y = X.col(3) - 0.5 * X.col(7) + gaussian(40, 1, rng).col(0);
    const auto a = lasso_order(centered_standardized(X, y));
    const auto b = lasso_order(centered_standardized(X, Vector(42.0 * y)));
    EXPECT_EQ(a.activation_order, b.activation_order);
}

TEST(LassoOrder, RequiresStandardizedColumns) {
    EXPECT_THROW(lasso_order(Dataset(Vector::LinSpaced(4, 0, 1), Matrix::Random(4, 2))), ContractError);
}

TEST(RobustOrder, AgreesWithLassoOnCleanData) {
    std::mt19937_64 rng(6);
    int agree = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const Matrix X = gaussian(60, 10, rng);
        const Vector y = 1.5 * X.col(trial % 10) + 0.5 * X.col((trial + 3) % 10) + gaussian(60, 1, rng).col(0);
        const auto d = centered_standardized(X, y);
        if (robust_order(d, 1).activation_order.front() == lasso_order(d, 1).activation_order.front()) ++agree;
    }
    EXPECT_GE(agree, 180);
}

TEST(RobustOrder, GrossOutlierDoesNotMoveFirstVariable) {
    std::mt19937_64 rng(7);
    const Matrix X = gaussian(50, 5, rng);
    Vector y = 2.0 * X.col(0);
    // a y-outlier placed where x5 is most extreme pulls the plain ordering
    Index far;
    X.col(4).cwiseAbs().maxCoeff(&far);
    y(far) += std::copysign(1e4, X(far, 4));
    const auto d = centered_standardized(X, y);
    EXPECT_EQ(robust_order(d).activation_order.front(), 0);
    EXPECT_EQ(lasso_order(d).activation_order.front(), 4);
}

TEST(RobustOrder, SingleColumn) {
    std::mt19937_64 rng(8);
    const auto d = centered_standardized(gaussian(10, 1, rng), gaussian(10, 1, rng).col(0));
    EXPECT_EQ(robust_order(d).activation_order, (std::vector<Index>{0}));
    EXPECT_EQ(lasso_order(d).activation_order, (std::vector<Index>{0}));
}

TEST(Winsorize, BoundedCenteredUnitNorm) {
    Vector x(7);
    x << 1, 2, 3, 4, 5, 6, 1000;
    const Vector w = winsorize(x);
    EXPECT_NEAR(w.norm(), 1.0, 1e-12);
    EXPECT_NEAR(w.sum(), 0.0, 1e-12);
    EXPECT_TRUE(winsorize(Vector::Constant(5, 3.0)).isZero());
    // the outlier is clipped to the same value as any point beyond 2 MAD
    Vector x2 = x;
    x2(6) = 50;
    EXPECT_LE((winsorize(x2) - w).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GroupLasso, SingleGroup) {
    Vector yc;
    const auto design = additive_instance(60, 1, 9, yc);
    const auto path = group_lasso_order(design, yc);
    EXPECT_EQ(path.activation_order, (std::vector<Index>{0}));
    EXPECT_EQ(path.kind, SubsetKind::additive_group);
}

TEST(GroupLasso, AboveLambdaMaxIsZero) {
    Vector yc;
    const auto design = additive_instance(80, 4, 10, yc);
    GroupLassoSolver solver(design.B, 9, yc);
    double lmax = 0.0;
    for (Index g = 0; g < 4; ++g) lmax = std::max(lmax, (design.block(g).transpose() * yc).norm() / 3.0);
    EXPECT_NEAR(solver.lambda_max(), lmax, 1e-12 * lmax);
    solver.solve(lmax * (1.0 + 1e-9));
    EXPECT_TRUE(solver.coefficients().isZero(0.0));
    solver.solve(lmax * 0.99);
    EXPECT_FALSE(solver.coefficients().isZero(0.0));
}

TEST(GroupLasso, MatchesDenseGridProximalOracle) {
    for (unsigned seed : {11u, 12u, 13u}) {
        Vector yc;
        const auto design = additive_instance(100, 3, seed, yc);
        const auto path = group_lasso_order(design, yc, 3);
        const auto oracle = group_lasso_ista_order(design.B, 9, yc, 1000);
        EXPECT_EQ(path.activation_order, oracle) << "seed " << seed;
    }
}

TEST(GroupLasso, BlockUpdatesNeverIncreaseObjective) {
    Vector yc;
    const auto design = additive_instance(120, 6, 14, yc);
    GroupLassoSolver solver(design.B, 9, yc);
    GroupLassoOptions opt;
    long updates = 0;
    double worst = -INFINITY;
    opt.on_block_update = [&](double before, double after) {
        ++updates;
        worst = std::max(worst, (after - before) / std::max(1.0, std::abs(before)));
    };
    for (const double lambda : lambda_grid(solver.lambda_max(), 20, 1e-3)) solver.solve(lambda, opt);
    EXPECT_GT(updates, 0);
    EXPECT_LE(worst, 1e-12);
}

TEST(GroupLasso, KktConditionsAtSolution) {
    Vector yc;
    const auto design = additive_instance(150, 8, 15, yc);
    GroupLassoSolver solver(design.B, 9, yc);
    const double w = solver.group_weight();
    for (const double frac : {0.5, 0.1, 0.02}) {
        const double lambda = frac * solver.lambda_max();
        solver.solve(lambda);
        int active = 0;
        for (Index g = 0; g < 8; ++g) {
            const Vector grad = design.block(g).transpose() * solver.residual();
            const Vector a = solver.block(g);
            if (a.norm() == 0.0) {
                EXPECT_LE(grad.norm(), lambda * w + 1e-6);
            } else {
                ++active;
                EXPECT_LE((grad - lambda * w * a / a.norm()).norm(), 1e-3 * lambda * w);
            }
        }
        EXPECT_GT(active, 0);
    }
}

TEST(GroupLasso, DefaultCapAndErrors) {
    Vector yc;
    const auto design = additive_instance(40, 8, 16, yc);
    const auto path = group_lasso_order(design, yc);
    EXPECT_LE(path.length(), 39 / 9);
    EXPECT_THROW(GroupLassoSolver(Matrix(5, 0), 9, Vector::Zero(5)), InputError);
    EXPECT_THROW(GroupLassoSolver(Matrix::Ones(5, 10), 9, Vector::Zero(5)), InputError);
}
