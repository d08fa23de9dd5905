#include "railkf/ident.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "railkf/errors.hpp"

namespace railkf::ident {

namespace {

double population_std(const Eigen::VectorXd& v) {
    const double mean = v.mean();
    return std::sqrt((v.array() - mean).square().mean());
}

struct Context {
    const IdentProblem* problem;
    std::array<double, 4> best_p{};
    double best_J = std::numeric_limits<double>::infinity();
    long evaluations = 0;
};

std::array<double, 4> from_log(const gsl_vector* u, const IdentProblem& pr) {
    std::array<double, 4> p{};
    for (std::size_t i = 0; i < 4; ++i) {
        const double lo = std::log(pr.bounds[i][0]), hi = std::log(pr.bounds[i][1]);
        p[i] = std::exp(std::clamp(gsl_vector_get(u, i), lo, hi));
    }
    return p;
}

double objective(const gsl_vector* u, void* params) {
    auto* ctx = static_cast<Context*>(params);
    const auto p = from_log(u, *ctx->problem);
    const double J = misfit(p, *ctx->problem).J;
    ++ctx->evaluations;
    if (J < ctx->best_J) {
        ctx->best_J = J;
        ctx->best_p = p;
    }
    return J;
}

}  // namespace

void IdentProblem::validate() const {
    base.validate();
    if (!(V > 0.0) || !(dt > 0.0)) throw ConfigError("ident: V and dt must be positive");
    if (xi.size() < 2) throw ConfigError("ident: empty input record");
    if (y_ref.size() != xi.size() || psi_ref.size() != xi.size())
        throw ConfigError("ident: reference and input lengths differ");
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& b = bounds[i];
        if (!(b[0] > 0.0 && b[0] < b[1]))
            throw ConfigError(std::string("ident: invalid bounds for ") + dynamics::SmParams::opt_names[i]);
        if (!(guess[i] >= b[0] && guess[i] <= b[1]))
            throw ConfigError(std::string("ident: initial guess outside bounds for ") +
                              dynamics::SmParams::opt_names[i]);
    }
    if (!(population_std(y_ref) > 0.0) || !(population_std(psi_ref) > 0.0))
        throw ConfigError("ident: reference channels have zero variance");
}

std::array<std::array<double, 2>, 4> IdentProblem::decade_bounds(const std::array<double, 4>& c,
                                                                 double decades) {
    std::array<std::array<double, 2>, 4> b{};
    const double f = std::pow(10.0, decades);
    for (std::size_t i = 0; i < 4; ++i) b[i] = {c[i] / f, c[i] * f};
    return b;
}

Misfit misfit(const std::array<double, 4>& p_opt, const IdentProblem& pr) {
    const auto model = dynamics::assemble_sm(pr.base.with_opt(p_opt), pr.V);
    const auto resp = dynamics::simulate_sm(model, pr.xi, pr.dt);
    if (resp.diverged || !resp.q.allFinite()) return {kPenalty, true};
    const double sy = population_std(pr.y_ref), sp = population_std(pr.psi_ref);
    const double ey = ((resp.q.col(0) - pr.y_ref) / sy).squaredNorm();
    const double ep = ((resp.q.col(1) - pr.psi_ref) / sp).squaredNorm();
    const double J = (ey + ep) / static_cast<double>(pr.xi.size());
    if (!std::isfinite(J)) return {kPenalty, true};
    return {J, false};
}

IdentResult identify(const IdentProblem& pr, const IdentOptions& opts) {
    pr.validate();
    if (opts.max_iter < 1 || !(opts.size_tol > 0.0) || !(opts.initial_step > 0.0))
        throw ConfigError("ident: invalid optimizer options");

    gsl_set_error_handler_off();
    Context ctx{&pr};
    gsl_multimin_function fn{&objective, 4, &ctx};

    using VecPtr = std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)>;
    VecPtr u0(gsl_vector_alloc(4), &gsl_vector_free);
    VecPtr step(gsl_vector_alloc(4), &gsl_vector_free);
    for (std::size_t i = 0; i < 4; ++i) {
        gsl_vector_set(u0.get(), i, std::log(pr.guess[i]));
        gsl_vector_set(step.get(), i, opts.initial_step);
    }

    std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)> s(
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 4), &gsl_multimin_fminimizer_free);
    if (!s) throw NumericError("ident: could not allocate the simplex minimizer");

    IdentResult r;
    r.J_initial = misfit(pr.guess, pr).J;
    if (gsl_multimin_fminimizer_set(s.get(), &fn, u0.get(), step.get()) != GSL_SUCCESS)
        throw NumericError("ident: simplex initialisation failed");

    double size = std::numeric_limits<double>::infinity();
    int iter = 0;
    while (iter < opts.max_iter) {
        ++iter;
        if (gsl_multimin_fminimizer_iterate(s.get()) != GSL_SUCCESS) break;
        size = gsl_multimin_fminimizer_size(s.get());
        r.trace.push_back(ctx.best_J);
        if (size < opts.size_tol) break;
    }

    r.iterations = iter;
    r.converged = size < opts.size_tol && ctx.best_J < kPenalty;
    if (ctx.best_J <= r.J_initial) {
        r.p_opt = ctx.best_p;
        r.J = ctx.best_J;
    } else {
        r.p_opt = pr.guess;
        r.J = r.J_initial;
    }
    return r;
}

}  // namespace railkf::ident
