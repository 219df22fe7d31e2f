/**
 * @file portfolio.cpp
 * @brief Regression, optimization and inversion routines
 */

#include "rdoll/portfolio.hpp"

#include "rdoll/errors.hpp"

#include <cmath>
#include <iostream>
#include <string>

namespace rdoll::portfolio
{

    namespace
    {

        Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& series)
        {
            const Eigen::MatrixXd centered = series.rowwise() - series.colwise().mean();
            return centered.transpose() * centered / static_cast<double>(series.rows() - 1);
        }

        std::vector<Index> nonzero_columns(const Eigen::MatrixXd& m)
        {
            std::vector<Index> keep;
            for (Index c = 0; c < m.cols(); ++c)
                if (m.rows() > 0 && m.col(c).cwiseAbs().maxCoeff() > 0.0)
                    keep.push_back(c);
            return keep;
        }

        // Throws naming the columns a pivoted QR could not add to the span.
        void require_full_rank(const Eigen::MatrixXd& y, const std::vector<Index>& original_columns)
        {
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(y);
            qr.setThreshold(1e-10);
            const Index rank = qr.rank();
            if (rank == y.cols())
                return;
            std::string cols;
            for (Index k = rank; k < y.cols(); ++k)
            {
                if (!cols.empty())
                    cols += ", ";
                cols += std::to_string(original_columns[qr.colsPermutation().indices()(k)]);
            }
            throw RegressionError("regression loadings are rank deficient (rank " + std::to_string(rank) +
                                  " of " + std::to_string(y.cols()) + "); dependent column(s): " + cols);
        }

    } // namespace

    RegressionResult weighted_regression(const Eigen::VectorXd& returns, const RegressionSpec& spec)
    {
        const Index n = returns.size();
        if (spec.loadings.rows() != n || spec.weights.size() != n)
            throw DimensionError("regression: " + std::to_string(n) + " returns, loadings " +
                                 std::to_string(spec.loadings.rows()) + " rows, " +
                                 std::to_string(spec.weights.size()) + " weights");
        for (Index i = 0; i < n; ++i)
            if (!(spec.weights(i) > 0.0) || !std::isfinite(spec.weights(i)))
                throw ValidationError("regression weight " + std::to_string(i) + " must be positive");

        RegressionResult out;
        out.kept_columns = nonzero_columns(spec.loadings);
        Eigen::MatrixXd y(n, static_cast<Index>(out.kept_columns.size()));
        for (std::size_t k = 0; k < out.kept_columns.size(); ++k)
            y.col(k) = spec.loadings.col(out.kept_columns[k]);

        const Eigen::VectorXd sqrt_w = spec.weights.cwiseSqrt();
        require_full_rank(sqrt_w.asDiagonal() * y, out.kept_columns);

        const Eigen::MatrixXd yz = y.transpose() * spec.weights.asDiagonal();
        const Eigen::MatrixXd q = yz * y;
        out.factor_returns = q.ldlt().solve(yz * returns);
        out.residuals = returns - y * out.factor_returns;
        return out;
    }

    Holdings regression_holdings(const Eigen::VectorXd& residuals, const Eigen::VectorXd& weights,
                                 double investment)
    {
        if (residuals.size() != weights.size())
            throw DimensionError("regression_holdings: residual and weight lengths differ");
        if (!(investment > 0.0))
            throw ValidationError("investment level must be positive");
        const Eigen::VectorXd regressed = weights.cwiseProduct(residuals);
        const double norm = regressed.cwiseAbs().sum();
        if (!(norm > 0.0) || !std::isfinite(norm))
            throw NoTradeError("all regression residuals vanish; no trade");
        return Holdings{-regressed * (investment / norm), investment};
    }

    DenseInverse::DenseInverse(const Eigen::MatrixXd& covariance) : size_(covariance.rows()), llt_(covariance)
    {
        if (covariance.rows() != covariance.cols())
            throw DimensionError("covariance must be square");
        if (llt_.info() != Eigen::Success)
            throw ValidationError("covariance is not positive definite (Cholesky failed)");
    }

    Eigen::VectorXd DenseInverse::solve(const Eigen::VectorXd& v) const
    {
        return llt_.solve(v);
    }

    FactorInverse::FactorInverse(const risk::FlatFactorModel& model) : model_(model)
    {
        const Index m = model_.n_factors();
        const bool specific_ok = model_.specific_variances.size() > 0 && model_.specific_variances.minCoeff() > 0.0;
        if (specific_ok)
        {
            inv_specific_ = model_.specific_variances.cwiseInverse();
            const Eigen::MatrixXd weighted = inv_specific_.asDiagonal() * model_.loadings;
            Eigen::MatrixXd small = Eigen::MatrixXd::Identity(m, m);
            small.noalias() += model_.loadings.transpose() * weighted * model_.fcm;
            small_.compute(small);
            if (m == 0 || small_.rcond() > 1e-13)
                return;
        }
        std::clog << "warning: factor covariance inversion degenerate; using dense inversion\n";
        dense_ = std::make_unique<DenseInverse>(model_.covariance());
    }

    Eigen::VectorXd FactorInverse::solve(const Eigen::VectorXd& v) const
    {
        if (v.size() != size())
            throw DimensionError("inverse: vector length " + std::to_string(v.size()) + " vs N=" +
                                 std::to_string(size()));
        if (dense_)
            return dense_->solve(v);
        const Eigen::VectorXd dv = inv_specific_.cwiseProduct(v);
        if (model_.n_factors() == 0)
            return dv;
        const Eigen::VectorXd inner = small_.solve(model_.loadings.transpose() * dv);
        return dv - inv_specific_.cwiseProduct(model_.loadings * (model_.fcm * inner));
    }

    FactorInverse invert_factor_covariance(const risk::FlatFactorModel& model)
    {
        return FactorInverse(model);
    }

    Holdings optimize_sharpe(const Eigen::VectorXd& expected_returns, const InverseCovariance& inverse,
                             double investment)
    {
        const Index n = expected_returns.size();
        if (inverse.size() != n)
            throw DimensionError("optimize_sharpe: " + std::to_string(n) + " expected returns for a " +
                                 std::to_string(inverse.size()) + "-stock covariance");
        if (!(investment > 0.0))
            throw ValidationError("investment level must be positive");

        const Eigen::VectorXd inv_e = inverse.solve(expected_returns);
        const Eigen::VectorXd inv_one = inverse.solve(Eigen::VectorXd::Ones(n));
        const double ratio = inv_one.sum() == 0.0 ? 0.0 : inv_e.sum() / inv_one.sum();
        const Eigen::VectorXd direction = inv_e - inv_one * ratio;

        // E ~ 1 makes the two terms cancel up to rounding.
        const double size = direction.cwiseAbs().sum();
        const double reference = inv_e.cwiseAbs().sum() + std::abs(ratio) * inv_one.cwiseAbs().sum();
        if (!(size > 1e-10 * reference) || !std::isfinite(size))
            throw NoTradeError("expected returns are proportional to the unit vector; no dollar-neutral trade");
        return Holdings{direction * (investment / size), investment};
    }

    Holdings optimize_sharpe(const Eigen::VectorXd& expected_returns, const Eigen::MatrixXd& covariance,
                             double investment)
    {
        return optimize_sharpe(expected_returns, DenseInverse(covariance), investment);
    }

    double sharpe_objective(const Eigen::VectorXd& holdings, const Eigen::VectorXd& expected_returns,
                            const Eigen::MatrixXd& covariance)
    {
        return holdings.dot(expected_returns) / std::sqrt(holdings.dot(covariance * holdings));
    }

    FallacyReport fallacy_diagnostics(const Eigen::MatrixXd& returns, const Eigen::MatrixXd& loadings)
    {
        const Index t = returns.rows();
        const Index n = returns.cols();
        if (t < 2)
            throw DimensionError("fallacy diagnostics need at least 2 dates");
        if (loadings.rows() != n)
            throw DimensionError("fallacy diagnostics: loadings have " + std::to_string(loadings.rows()) +
                                 " rows for " + std::to_string(n) + " stocks");
        std::vector<Index> all(loadings.cols());
        for (Index c = 0; c < loadings.cols(); ++c)
            all[c] = c;
        require_full_rank(loadings, all);

        const Eigen::MatrixXd gram = loadings.transpose() * loadings;
        const Eigen::LDLT<Eigen::MatrixXd> gram_ldlt(gram);
        const Eigen::MatrixXd projector = loadings * gram_ldlt.solve(loadings.transpose());

        // Per-date regressions; rows of f and eps are dates.
        const Eigen::MatrixXd factor_returns = gram_ldlt.solve(loadings.transpose() * returns.transpose()).transpose();
        const Eigen::MatrixXd residuals = returns - factor_returns * loadings.transpose();

        const Eigen::MatrixXd c = sample_covariance(returns);
        const Eigen::MatrixXd eps_cov = sample_covariance(residuals);
        const Eigen::MatrixXd factor_part = loadings * sample_covariance(factor_returns) * loadings.transpose();

        FallacyReport report;
        report.projector_idempotence_error = (projector * projector - projector).cwiseAbs().maxCoeff();
        report.projector_symmetry_error = (projector - projector.transpose()).cwiseAbs().maxCoeff();
        report.model_trace = eps_cov.trace() + factor_part.trace();
        report.sample_trace = c.trace();
        report.trace_relative_error =
            std::abs(report.model_trace - report.sample_trace) / std::max(std::abs(report.sample_trace), 1e-300);
        report.variance_gap = eps_cov.diagonal() + factor_part.diagonal() - c.diagonal();
        report.naive_specific = c.diagonal() - factor_part.diagonal();
        // Rounding noise on a saturated model must not count as negative.
        const double floor = -1e-12 * c.diagonal().cwiseAbs().maxCoeff();
        report.negative_specific_count = (report.naive_specific.array() < floor).count();
        return report;
    }

} // namespace rdoll::portfolio
