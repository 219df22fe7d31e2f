/**
 * @file portfolio.hpp
 * @brief Cross-sectional regression alphas, dollar-neutral Sharpe maximization,
 *        factor-structured covariance inversion and regression diagnostics
 *
 * Weighted regression (Z = diag(z), Q = Y^T Z Y):
 *
 *     eps = R - Y Q^{-1} Y^T Z R,    h = -Z eps * I / sum|Z eps|
 *
 * Sharpe maximization under 1^T h = 0 has the closed form
 *
 *     h ~ Theta^{-1} E - Theta^{-1} 1 * (1^T Theta^{-1} E) / (1^T Theta^{-1} 1)
 *
 * scaled so that sum|h| = I.
 */

#pragma once

#include "rdoll/risk_model.hpp"

#include <Eigen/Dense>

#include <memory>
#include <vector>

namespace rdoll::portfolio
{

    using Index = Eigen::Index;

    /// Regression loadings Y (N x m) and positive weights z (N).
    struct RegressionSpec
    {
        Eigen::MatrixXd loadings;
        Eigen::VectorXd weights;
    };

    struct RegressionResult
    {
        Eigen::VectorXd residuals;
        Eigen::VectorXd factor_returns;  ///< one entry per kept column
        std::vector<Index> kept_columns; ///< columns of Y that had at least one nonzero entry
    };

    /**
     * @brief Weighted least squares of R on Y; empty columns are dropped first.
     * @throws RegressionError naming the linearly dependent columns when Q is singular
     * @throws ValidationError for nonpositive weights
     */
    RegressionResult weighted_regression(const Eigen::VectorXd& returns, const RegressionSpec& spec);

    /// Signed dollar holdings at gross investment level I.
    struct Holdings
    {
        Eigen::VectorXd h;
        double investment = 0.0;

        double gross() const { return h.cwiseAbs().sum(); }
        double net() const { return h.sum(); }
    };

    /// h_i = -z_i eps_i * I / sum_j |z_j eps_j|. @throws NoTradeError when all z_i eps_i vanish.
    Holdings regression_holdings(const Eigen::VectorXd& residuals, const Eigen::VectorXd& weights,
                                 double investment);

    /// Applies Theta^{-1} to vectors.
    class InverseCovariance
    {
    public:
        virtual ~InverseCovariance() = default;
        virtual Index size() const = 0;
        virtual Eigen::VectorXd solve(const Eigen::VectorXd& v) const = 0;
    };

    /// Cholesky-based inverse of a dense SPD matrix.
    class DenseInverse : public InverseCovariance
    {
    public:
        /// @throws ValidationError if the matrix is not positive definite.
        explicit DenseInverse(const Eigen::MatrixXd& covariance);

        Index size() const override { return size_; }
        Eigen::VectorXd solve(const Eigen::VectorXd& v) const override;

    private:
        Index size_;
        Eigen::LLT<Eigen::MatrixXd> llt_;
    };

    /**
     * @class FactorInverse
     * @brief Inverse of diag(xi^2) + w phi w^T through an m x m solve
     *
     * Uses (D + w phi w^T)^{-1} = D^{-1} - D^{-1} w phi (I + w^T D^{-1} w phi)^{-1} w^T D^{-1},
     * which stays valid for singular (PSD) phi. When the small system is
     * ill-conditioned or some xi^2 is zero, the dense matrix is inverted instead
     * and used_dense_fallback() reports it.
     */
    class FactorInverse : public InverseCovariance
    {
    public:
        explicit FactorInverse(const risk::FlatFactorModel& model);

        Index size() const override { return model_.n_stocks(); }
        Eigen::VectorXd solve(const Eigen::VectorXd& v) const override;
        bool used_dense_fallback() const { return dense_ != nullptr; }

    private:
        risk::FlatFactorModel model_;
        Eigen::VectorXd inv_specific_;
        Eigen::PartialPivLU<Eigen::MatrixXd> small_;
        std::unique_ptr<DenseInverse> dense_;
    };

    FactorInverse invert_factor_covariance(const risk::FlatFactorModel& model);

    /**
     * @brief Dollar-neutral Sharpe-maximizing holdings with sum|h| = I.
     *
     * gamma is taken positive, so E . h >= 0.
     * @throws NoTradeError when E is (numerically) proportional to the ones vector
     */
    Holdings optimize_sharpe(const Eigen::VectorXd& expected_returns, const InverseCovariance& inverse,
                             double investment);

    Holdings optimize_sharpe(const Eigen::VectorXd& expected_returns, const Eigen::MatrixXd& covariance,
                             double investment);

    /// E . h / sqrt(h^T Theta h)
    double sharpe_objective(const Eigen::VectorXd& holdings, const Eigen::VectorXd& expected_returns,
                            const Eigen::MatrixXd& covariance);

    /**
     * @brief Outcome of identifying regression factor returns / residuals with a factor model
     *
     * With unit-weight regression of every date's returns on Omega, the time-series
     * covariances of residuals and factor returns reproduce the sample covariance
     * only in trace; individual total variances generally differ.
     */
    struct FallacyReport
    {
        double projector_idempotence_error = 0.0; ///< max |Q^2 - Q|
        double projector_symmetry_error = 0.0;    ///< max |Q - Q^T|
        double model_trace = 0.0;                 ///< Tr(<eps,eps^T> + Omega <f,f^T> Omega^T)
        double sample_trace = 0.0;                ///< Tr(C)
        double trace_relative_error = 0.0;
        Eigen::VectorXd variance_gap;             ///< naive Gamma_ii - C_ii
        Eigen::VectorXd naive_specific;           ///< C_ii - (Omega <f,f^T> Omega^T)_ii
        Index negative_specific_count = 0;
    };

    /// @param returns T x N (dates x stocks), T >= 2. @throws RegressionError for rank-deficient Omega.
    FallacyReport fallacy_diagnostics(const Eigen::MatrixXd& returns, const Eigen::MatrixXd& loadings);

} // namespace rdoll::portfolio
