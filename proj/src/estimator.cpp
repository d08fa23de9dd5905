#include "railkf/estimator.hpp"

#include <cmath>
#include <string>

#include "railkf/errors.hpp"

namespace railkf::estimator {

ContinuousModel build_continuous(const dynamics::LinearLateralModel& mdl) {
    Eigen::FullPivLU<Eigen::Matrix3d> lu(mdl.M);
    if (!lu.isInvertible()) throw NumericError("build_continuous: mass matrix is singular");
    const Eigen::Matrix3d Mi = lu.inverse();

    ContinuousModel c;
    c.Fc = MatrixXd::Zero(kNx, kNx);
    c.Fc.block<3, 3>(0, 3).setIdentity();
    c.Fc.block<3, 3>(3, 0) = -Mi * mdl.K();
    c.Fc.block<3, 3>(3, 3) = -Mi * mdl.C();
    c.Fc.block<3, 1>(3, 6) = Mi * mdl.Kd;

    c.Hc = MatrixXd::Zero(kNz, kNx);
    c.Hc.row(0) = c.Fc.row(3);
    c.Hc(1, 4) = 1.0;
    c.Hc.row(2) = c.Fc.row(5);
    c.Hc(3, 6) = 1.0;
    return c;
}

MatrixXd discretize(const MatrixXd& Fc, double dt) {
    if (!(dt > 0.0)) throw ConfigError("discretize: dt must be positive");
    const Eigen::Index n = Fc.rows();
    MatrixXd F = MatrixXd::Identity(n, n) + dt * Fc;
    const Eigen::Index npos = std::min<Eigen::Index>(3, n);
    const MatrixXd F2 = Fc * Fc;
    F.topRows(npos) += 0.5 * dt * dt * F2.topRows(npos);
    return F;
}

Covariances estimate_covariances(const MatrixXd& X, const MatrixXd& Z, const MatrixXd& F,
                                 const MatrixXd& H, double loading) {
    if (X.rows() < 2) throw ConfigError("estimate_covariances: need at least two state samples");
    if (Z.rows() != X.rows()) throw ConfigError("estimate_covariances: states and measurements misaligned");
    if (F.rows() != X.cols() || F.cols() != X.cols() || H.cols() != X.cols() || H.rows() != Z.cols())
        throw ConfigError("estimate_covariances: dimension mismatch");

    const Eigen::Index N = X.rows();
    const MatrixXd ex = X.bottomRows(N - 1) - X.topRows(N - 1) * F.transpose();
    const MatrixXd ez = Z - X * H.transpose();

    Covariances c;
    c.samples = static_cast<long>(N - 1);
    c.low_sample_warning = N - 1 < 100;
    c.Q = ex.transpose() * ex / static_cast<double>(ex.rows());
    c.R = ez.transpose() * ez / static_cast<double>(ez.rows());
    c.Q = (0.5 * (c.Q + c.Q.transpose())).eval();
    c.R = (0.5 * (c.R + c.R.transpose())).eval();
    c.Q.diagonal().array() += loading;
    c.R.diagonal().array() += loading;

    for (const auto* m : {&c.Q, &c.R}) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(*m, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()))
            throw NumericError("estimate_covariances: covariance is not positive semidefinite");
    }
    return c;
}

void FilterBundle::validate() const {
    const Eigen::Index n = F.rows();
    if (F.cols() != n || H.cols() != n || Q.rows() != n || Q.cols() != n || R.rows() != H.rows() ||
        R.cols() != H.rows())
        throw ConfigError("filter bundle: inconsistent matrix dimensions");
    if (!F.allFinite() || !H.allFinite() || !Q.allFinite() || !R.allFinite())
        throw NumericError("filter bundle: non-finite entries");
}

FilterBundle make_bundle(const dynamics::LinearLateralModel& mdl, double dt) {
    const ContinuousModel c = build_continuous(mdl);
    FilterBundle b;
    b.Fc = c.Fc;
    b.Hc = c.Hc;
    b.F = discretize(c.Fc, dt);
    b.H = c.Hc;
    b.dt = dt;
    return b;
}

KfResult kf_run(const FilterBundle& b, const MatrixXd& z, const VectorXd& x0, const MatrixXd& P0,
                bool keep_P) {
    b.validate();
    const Eigen::Index n = b.F.rows(), m = b.H.rows(), N = z.rows();
    if (N == 0) throw ConfigError("kf_run: empty measurement sequence");
    if (z.cols() != m || x0.size() != n || P0.rows() != n || P0.cols() != n)
        throw ConfigError("kf_run: dimension mismatch");

    KfResult r;
    r.x.setZero(N, n);
    r.innovations.setZero(N, m);
    r.corrections.setZero(N, n);
    if (keep_P) r.P.reserve(static_cast<std::size_t>(N));

    VectorXd x = x0;
    MatrixXd P = P0;
    r.x.row(0) = x.transpose();
    if (keep_P) r.P.push_back(P);

    const MatrixXd I = MatrixXd::Identity(n, n);
    const MatrixXd Ft = b.F.transpose(), Ht = b.H.transpose();
    for (Eigen::Index k = 1; k < N; ++k) {
        const VectorXd xm = b.F * x;
        const MatrixXd Pm = b.F * P * Ft + b.Q;
        const MatrixXd S = b.H * Pm * Ht + b.R;
        Eigen::LDLT<MatrixXd> ldlt(S);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
            ldlt.vectorD().cwiseAbs().minCoeff() <= 1e-300)
            throw NumericError("kf_run: innovation covariance not invertible at step " + std::to_string(k));
        // K = Pm H^T S^-1, computed as (S^-1 H Pm)^T since S and Pm are symmetric.
        const MatrixXd K = ldlt.solve(b.H * Pm).transpose();
        const VectorXd innov = z.row(k).transpose() - b.H * xm;
        x = xm + K * innov;
        P = (I - K * b.H) * Pm;
        P = (0.5 * (P + P.transpose())).eval();
        if (!x.allFinite() || !P.allFinite())
            throw NumericError("kf_run: non-finite estimate at step " + std::to_string(k));
        r.x.row(k) = x.transpose();
        r.innovations.row(k) = innov.transpose();
        r.corrections.row(k) = (x - xm).transpose();
        if (keep_P) r.P.push_back(P);
    }
    return r;
}

int observability_rank(const MatrixXd& F, const MatrixXd& H, double tol) {
    const Eigen::Index n = F.rows(), m = H.rows();
    MatrixXd O(n * m, n);
    MatrixXd HFk = H;
    for (Eigen::Index i = 0; i < n; ++i) {
        O.middleRows(i * m, m) = HFk;
        HFk = HFk * F;
    }
    for (Eigen::Index j = 0; j < n; ++j) {
        const double c = O.col(j).norm();
        if (c > 0.0) O.col(j) /= c;
    }
    Eigen::JacobiSVD<MatrixXd> svd(O);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) == 0.0) return 0;
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > tol * sv(0)) ++rank;
    return rank;
}

VectorXd default_P0_diagonal() {
    VectorXd d(kNx);
    d << 1e-8, 1e-8, 1e-8, 1e-8, 1e-8, 1e-8, 2.5e-5;
    return d;
}

}  // namespace railkf::estimator
