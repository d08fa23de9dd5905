#include "doctest.h"

#include <cmath>
#include <random>
#include <unsupported/Eigen/MatrixFunctions>

#include "railkf/dynamics.hpp"
#include "railkf/errors.hpp"
#include "railkf/estimator.hpp"
#include "railkf/track.hpp"

using namespace railkf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

dynamics::LinearLateralModel table1_model() { return dynamics::assemble_sm(dynamics::SmParams::table1(), 20.0); }

// Twin data: SM-generated states and noiseless measurements.
struct Twin {
    MatrixXd X, Z;
};

Twin twin_data(const estimator::FilterBundle& b, const dynamics::LinearLateralModel& mdl, double seconds,
               std::uint64_t seed) {
    const double dt = b.dt, V = mdl.V;
    const auto N = static_cast<Eigen::Index>(std::llround(seconds / dt)) + 1;
    const track::Signal prof = track::generate_psd_profile(track::default_alignment(seed), V * seconds + 1.0, V * dt);
    const VectorXd xi = prof.head(N);
    const auto r = dynamics::simulate_sm(mdl, xi, dt);
    Twin t;
    t.X.resize(N, 7);
    t.X << r.q, r.qd, xi;
    t.Z = t.X * b.H.transpose();
    t.Z.col(3).setZero();
    return t;
}

double lag1(const VectorXd& v) {
    const VectorXd c = v.array() - v.mean();
    return c.head(c.size() - 1).dot(c.tail(c.size() - 1)) / c.squaredNorm();
}

}  // namespace

TEST_CASE("continuous model structure") {
    const auto mdl = table1_model();
    const auto c = estimator::build_continuous(mdl);
    CHECK(c.Fc.block(0, 0, 3, 3).isZero());
    CHECK(c.Fc.block(0, 3, 3, 3).isIdentity());
    CHECK(c.Fc.block(0, 6, 3, 1).isZero());
    CHECK(c.Fc.row(6).isZero());
    CHECK(c.Fc.block(3, 0, 3, 3).isApprox(-mdl.Minv * mdl.K()));
    CHECK(c.Fc.block(3, 3, 3, 3).isApprox(-mdl.Minv * mdl.C()));
    CHECK(c.Fc(3, 6) == doctest::Approx(-6.990e3 / 1109.0).epsilon(1e-3));
    CHECK(c.Fc(4, 6) == doctest::Approx(9.706e5 / 606.0).epsilon(1e-3));
    CHECK(c.Fc(5, 6) == 0.0);

    CHECK(c.Hc.row(0) == c.Fc.row(3));
    CHECK(c.Hc.row(2) == c.Fc.row(5));
    VectorXd e = VectorXd::Zero(7);
    e(4) = 1.0;
    const VectorXd col = c.Hc * e;
    CHECK(col(1) == 1.0);
    CHECK(col(2) == 0.0);
    CHECK(col(3) == 0.0);
    // Only the f23 lateral/spin coupling puts yaw rate into the wheelset accelerometer row.
    CHECK(col(0) == doctest::Approx(-2.0 * 9.3e3 / 20.0 / 1109.0));
    CHECK(c.Hc(1, 4) == 1.0);
    CHECK(c.Hc(3, 6) == 1.0);
    CHECK(c.Hc.row(3).sum() == 1.0);
}

TEST_CASE("discretization") {
    CHECK(estimator::discretize(MatrixXd::Zero(7, 7), 1e-3).isIdentity());
    MatrixXd di(2, 2);
    di << 0, 1, 0, 0;
    MatrixXd expect(2, 2);
    expect << 1, 0.01, 0, 1;
    CHECK(estimator::discretize(di, 0.01).isApprox(expect));
    CHECK_THROWS_AS(estimator::discretize(di, 0.0), ConfigError);

    // Position rows are second order, velocity and xi rows first order.
    const auto c = estimator::build_continuous(table1_model());
    const double dt = 1e-3;
    const MatrixXd F = estimator::discretize(c.Fc, dt);
    const MatrixXd E = (c.Fc * dt).exp();
    const MatrixXd I = MatrixXd::Identity(7, 7);
    const MatrixXd first = I + dt * c.Fc;
    const MatrixXd second = first + 0.5 * dt * dt * c.Fc * c.Fc;
    CHECK(F.topRows(3).isApprox(second.topRows(3)));
    CHECK(F.bottomRows(4).isApprox(first.bottomRows(4)));
    const double pos_err = (F.topRows(3) - E.topRows(3)).cwiseAbs().rowwise().sum().maxCoeff();
    const double third = (c.Fc * c.Fc * c.Fc).topRows(3).cwiseAbs().rowwise().sum().maxCoeff() * dt * dt * dt / 6.0;
    CHECK(pos_err <= 2.0 * third);
}

TEST_CASE("covariance estimation: zero residuals") {
    const auto mdl = table1_model();
    auto b = estimator::make_bundle(mdl, 1e-3);
    // States propagated exactly by F, measurements exactly H x.
    MatrixXd X(500, 7);
    X.row(0) << 1e-3, 1e-4, 5e-4, 0, 0, 0, 1e-3;
    for (Eigen::Index k = 1; k < X.rows(); ++k) X.row(k) = (b.F * X.row(k - 1).transpose()).transpose();
    const MatrixXd Z = X * b.H.transpose();
    const auto cov = estimator::estimate_covariances(X, Z, b.F, b.H, 0.0);
    CHECK(cov.Q.cwiseAbs().maxCoeff() < 1e-20);
    CHECK(cov.R.cwiseAbs().maxCoeff() < 1e-20);
    CHECK_FALSE(cov.low_sample_warning);
    const auto loaded = estimator::estimate_covariances(X, Z, b.F, b.H);
    CHECK(loaded.Q.diagonal().minCoeff() == doctest::Approx(1e-12));
}

TEST_CASE("covariance estimation recovers injected measurement noise") {
    const auto mdl = table1_model();
    auto b = estimator::make_bundle(mdl, 1e-3);
    const auto tw = twin_data(b, mdl, 20.0, 3);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd(0.0, 1.0);
    const double sig[3] = {0.01, 5e-4, 0.02};
    MatrixXd Z = tw.Z;
    for (Eigen::Index k = 0; k < Z.rows(); ++k)
        for (int j = 0; j < 3; ++j) Z(k, j) += sig[j] * nd(rng);
    const auto cov = estimator::estimate_covariances(tw.X, Z, b.F, b.H);
    for (int j = 0; j < 3; ++j) CHECK(cov.R(j, j) == doctest::Approx(sig[j] * sig[j]).epsilon(0.10));
    // Virtual channel residual is -xi, so R[3,3] is the mean square of xi.
    CHECK(cov.R(3, 3) == doctest::Approx(tw.X.col(6).squaredNorm() / tw.X.rows()).epsilon(1e-6));
    CHECK(cov.R(3, 3) == doctest::Approx(2.25e-6).epsilon(0.15));
    CHECK(cov.R.isApprox(cov.R.transpose()));
    CHECK(cov.Q.isApprox(cov.Q.transpose()));
}

TEST_CASE("covariance estimation: small sample warning and dimension errors") {
    const MatrixXd F = MatrixXd::Identity(7, 7), H = MatrixXd::Identity(4, 7);
    const auto cov = estimator::estimate_covariances(MatrixXd::Zero(50, 7), MatrixXd::Zero(50, 4), F, H);
    CHECK(cov.low_sample_warning);
    CHECK_THROWS_AS(estimator::estimate_covariances(MatrixXd::Zero(1, 7), MatrixXd::Zero(1, 4), F, H), ConfigError);
    CHECK_THROWS_AS(estimator::estimate_covariances(MatrixXd::Zero(50, 7), MatrixXd::Zero(49, 4), F, H), ConfigError);
}

TEST_CASE("scalar filter reaches the closed-form Riccati steady state") {
    estimator::FilterBundle b;
    b.F = b.H = b.Q = b.R = MatrixXd::Ones(1, 1);
    b.dt = 1.0;
    const MatrixXd z = MatrixXd::Zero(200, 1);
    const auto r = estimator::kf_run(b, z, VectorXd::Zero(1), MatrixXd::Ones(1, 1), true);
    const double phi = 0.5 * (1.0 + std::sqrt(5.0));
    const double Pminus = r.P.back()(0, 0) + 1.0;
    CHECK(std::abs(Pminus - phi) < 1e-9);
    CHECK(std::abs(Pminus / (Pminus + 1.0) - (phi - 1.0)) < 1e-9);
}

TEST_CASE("zero-gain limit follows the model prediction") {
    const auto mdl = table1_model();
    auto b = estimator::make_bundle(mdl, 1e-3);
    b.Q = MatrixXd::Zero(7, 7);
    b.R = MatrixXd::Identity(4, 4) * 1e30;
    b.R(3, 3) = 1e-6;
    const MatrixXd z = MatrixXd::Random(300, 4) * 0.1;
    VectorXd x0 = VectorXd::Zero(7);
    x0 << 1e-3, 0, 1e-3, 0, 0, 0, 0;
    const auto r = estimator::kf_run(b, z, x0, MatrixXd::Zero(7, 7));
    VectorXd x = x0;
    for (Eigen::Index k = 1; k < 300; ++k) x = b.F * x;
    CHECK((r.x.row(299).transpose() - x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("observability rank") {
    const auto mdl = table1_model();
    const auto b = estimator::make_bundle(mdl, 1e-3);
    CHECK(estimator::observability_rank(b.F, b.H) == 7);
    CHECK(estimator::observability_rank(b.F, MatrixXd::Identity(7, 7)) == 7);

    SUBCASE("disconnected irregularity state") {
        auto c = estimator::build_continuous(mdl);
        c.Fc.col(6).setZero();
        const MatrixXd F = estimator::discretize(c.Fc, 1e-3);
        MatrixXd H = c.Hc.topRows(3);
        H.col(6).setZero();
        CHECK(estimator::observability_rank(F, H) < 7);
    }
}

TEST_CASE("twin filter: accuracy and symmetric covariance") {
    const auto mdl = table1_model();
    auto b = estimator::make_bundle(mdl, 1e-3);
    const auto tw = twin_data(b, mdl, 10.0, 1);
    auto cov = estimator::estimate_covariances(tw.X, tw.Z, b.F, b.H);
    cov.Q(6, 6) *= 1e3;
    cov.R(3, 3) = 1.0;
    b.Q = cov.Q;
    b.R = cov.R;
    const MatrixXd P0 = estimator::default_P0_diagonal().asDiagonal();
    const auto r = estimator::kf_run(b, tw.Z, VectorXd::Zero(7), P0, true);

    const Eigen::Index w = 2000;
    const VectorXd e = r.x.col(6).tail(r.x.rows() - w) - tw.X.col(6).tail(r.x.rows() - w);
    CHECK(std::sqrt(e.squaredNorm() / e.size()) < 0.1 * std::sqrt(tw.X.col(6).squaredNorm() / tw.X.rows()));

    for (const auto& P : r.P) {
        CHECK((P - P.transpose()).cwiseAbs().maxCoeff() == 0.0);
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(r.P.back());
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);

}

// Noise-free measurements at 1 kHz: the innovations are dominated by the smooth
// mismatch between the random-walk model of xi and the actual profile.
TEST_CASE("innovation whiteness on the noise-free matched twin" * doctest::may_fail()) {
    const auto mdl = table1_model();
    auto b = estimator::make_bundle(mdl, 1e-3);
    const auto tw = twin_data(b, mdl, 10.0, 1);
    auto cov = estimator::estimate_covariances(tw.X, tw.Z, b.F, b.H);
    cov.Q(6, 6) *= 1e3;
    cov.R(3, 3) = 1.0;
    b.Q = cov.Q;
    b.R = cov.R;
    const MatrixXd P0 = estimator::default_P0_diagonal().asDiagonal();
    const auto r = estimator::kf_run(b, tw.Z, VectorXd::Zero(7), P0);
    const Eigen::Index w = 2000;
    for (int j = 0; j < 3; ++j) {
        const double rho = lag1(r.innovations.col(j).tail(r.innovations.rows() - w));
        MESSAGE("lag-1 autocorrelation channel " << j << ": " << rho);
        CHECK(std::abs(rho) < 0.2);
    }
}

TEST_CASE("innovation whiteness on the matched twin with sensor noise" * doctest::may_fail()) {
    const auto mdl = table1_model();
    auto b = estimator::make_bundle(mdl, 1e-3);
    const auto tw = twin_data(b, mdl, 10.0, 1);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd(0.0, 1.0);
    MatrixXd Z = tw.Z;
    for (int j = 0; j < 3; ++j) {
        const double sig = 0.1 * tw.Z.col(j).cwiseAbs().maxCoeff();
        for (Eigen::Index k = 0; k < Z.rows(); ++k) Z(k, j) += sig * nd(rng);
    }
    auto cov = estimator::estimate_covariances(tw.X, Z, b.F, b.H);
    cov.Q(6, 6) *= 1e3;
    cov.R(3, 3) = 1.0;
    b.Q = cov.Q;
    b.R = cov.R;
    const MatrixXd P0 = estimator::default_P0_diagonal().asDiagonal();
    const auto r = estimator::kf_run(b, Z, VectorXd::Zero(7), P0);
    const Eigen::Index w = 2000;
    for (int j = 0; j < 3; ++j) {
        const double rho = lag1(r.innovations.col(j).tail(r.innovations.rows() - w));
        MESSAGE("lag-1 autocorrelation channel " << j << ": " << rho);
        CHECK(std::abs(rho) < 0.2);
    }
}

TEST_CASE("filter superposition and gain-limit monotonicity") {
    const auto mdl = table1_model();
    auto b = estimator::make_bundle(mdl, 1e-3);
    const auto tw = twin_data(b, mdl, 4.0, 2);
    auto cov = estimator::estimate_covariances(tw.X, tw.Z, b.F, b.H);
    b.Q = cov.Q;
    b.R = cov.R;
    const MatrixXd P0 = estimator::default_P0_diagonal().asDiagonal();
    const VectorXd x0 = VectorXd::Zero(7);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd(0.0, 0.01);
    MatrixXd z2(tw.Z.rows(), 4);
    for (Eigen::Index i = 0; i < z2.size(); ++i) z2.data()[i] = nd(rng);
    const auto a = estimator::kf_run(b, tw.Z, x0, P0);
    const auto c = estimator::kf_run(b, z2, x0, P0);
    const auto s = estimator::kf_run(b, tw.Z + z2, x0, P0);
    const auto zero = estimator::kf_run(b, MatrixXd::Zero(tw.Z.rows(), 4), x0, P0);
    CHECK((s.x - (a.x + c.x - zero.x)).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + s.x.cwiseAbs().maxCoeff()));

    auto b100 = b;
    b100.R *= 100.0;
    const auto slow = estimator::kf_run(b100, tw.Z, x0, P0);
    CHECK(slow.corrections.norm() < a.corrections.norm());
}

TEST_CASE("kf_run failure modes name the step") {
    estimator::FilterBundle b;
    b.F = b.H = MatrixXd::Ones(1, 1);
    b.Q = b.R = MatrixXd::Zero(1, 1);
    b.dt = 1.0;
    try {
        estimator::kf_run(b, MatrixXd::Zero(5, 1), VectorXd::Zero(1), MatrixXd::Zero(1, 1));
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    }
    b.Q = b.R = MatrixXd::Ones(1, 1);
    MatrixXd z = MatrixXd::Zero(5, 1);
    z(3, 0) = std::nan("");
    try {
        estimator::kf_run(b, z, VectorXd::Zero(1), MatrixXd::Ones(1, 1));
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("step 3") != std::string::npos);
    }
    CHECK_THROWS_AS(estimator::kf_run(b, MatrixXd::Zero(0, 1), VectorXd::Zero(1), MatrixXd::Ones(1, 1)), ConfigError);
}
