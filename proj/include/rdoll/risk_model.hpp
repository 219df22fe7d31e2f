/**
 * @file risk_model.hpp
 * @brief Nested ("Russian-doll") factor-model covariance construction
 *
 * A one-level factor model is
 *
 *     Gamma = diag(xi^2) + Omega * Phi * Omega^T
 *
 * A nested model replaces the factor covariance Phi by another factor model
 * over fewer factors, and so on, ending in an explicit small FCM, a scalar
 * variance loaded on every remaining factor, or nothing:
 *
 *     Gamma = diag(xi^2)   + Omega  Phi   Omega^T
 *     Phi   = diag(zeta^2) + Lambda Psi   Lambda^T
 *     Psi   = diag(eta^2)  + Delta  Theta Delta^T
 *     ...
 *
 * Flattening rewrites the stack as a single, larger factor model whose
 * loadings are the cumulative products Omega, Omega*Lambda, ... and whose
 * factor covariance is block diagonal with at most one dense block.
 *
 * Thread Safety: all model types are immutable values; functions are pure.
 */

#pragma once

#include "rdoll/taxonomy.hpp"

#include <Eigen/Dense>

#include <span>
#include <variant>
#include <vector>

namespace rdoll::risk
{

    using Index = Eigen::Index;

    /// Dense covariance matrices larger than this are refused unless the caller raises the cap.
    inline constexpr Index kDefaultDenseCap = 4000;

    /// One level of a nested model: rows x cols loadings plus per-row specific variances.
    struct FactorModelLevel
    {
        Eigen::MatrixXd loadings;
        Eigen::VectorXd specific_variances;
    };

    /// Terminal FCM supplied as a dense symmetric PSD matrix.
    struct ExplicitFcm
    {
        Eigen::MatrixXd matrix;
    };

    /// Terminal single factor with unit loadings on every remaining factor and variance x.
    struct ScalarVariance
    {
        double x = 0.0;
    };

    /// No terminal FCM ("zero-factor" model).
    struct NoTerminal
    {
    };

    using Terminal = std::variant<NoTerminal, ScalarVariance, ExplicitFcm>;

    /**
     * @class NestedRiskModel
     * @brief Stack of factor-model levels, outermost (stocks) first
     *
     * Level l has loadings of shape rows_l x cols_l with cols_l == rows_{l+1}.
     * The terminal describes the covariance of the last level's factors.
     */
    class NestedRiskModel
    {
    public:
        /// @throws DimensionError / ValidationError on inconsistent shapes or bad variances.
        NestedRiskModel(std::vector<FactorModelLevel> levels, Terminal terminal);

        const std::vector<FactorModelLevel>& levels() const { return levels_; }
        const Terminal& terminal() const { return terminal_; }
        Index n_stocks() const { return levels_.front().loadings.rows(); }

        /// Covariance of the innermost factors implied by the terminal (zeros for NoTerminal).
        Eigen::MatrixXd terminal_fcm() const;

        /// Gamma by recursive substitution of each level's FCM into its parent.
        Eigen::MatrixXd nested_expansion() const;

    private:
        std::vector<FactorModelLevel> levels_;
        Terminal terminal_;
    };

    /**
     * @brief Single-level equivalent of a nested model
     *
     * Invariant: fcm is block diagonal; every block except possibly the last is diagonal.
     */
    struct FlatFactorModel
    {
        Eigen::MatrixXd loadings;          ///< N x m
        Eigen::MatrixXd fcm;               ///< m x m
        Eigen::VectorXd specific_variances; ///< N

        Index n_stocks() const { return loadings.rows(); }
        Index n_factors() const { return loadings.cols(); }

        /// Dense N x N covariance. @throws ValidationError if N exceeds cap.
        Eigen::MatrixXd covariance(Index cap = kDefaultDenseCap) const;

        /// Gamma * v without forming Gamma.
        Eigen::VectorXd apply(const Eigen::VectorXd& v) const;

        /// Restriction to a subset of stocks; factor columns left without any loading are dropped.
        FlatFactorModel select_rows(std::span<const Index> rows) const;
    };

    /// Gamma = diag(xi^2) + Omega Phi Omega^T. @throws DimensionError.
    Eigen::MatrixXd gamma(const FactorModelLevel& level, const Eigen::MatrixXd& fcm);
    Eigen::MatrixXd gamma(const FlatFactorModel& model, Index cap = kDefaultDenseCap);

    FlatFactorModel flatten(const NestedRiskModel& model);

    /// Per-group variances of a binary model: specific (N), one vector per tree level, and the market X.
    struct BinaryVariances
    {
        Eigen::VectorXd specific;
        std::vector<Eigen::VectorXd> level_variances;
        double market = 0.0;
    };

    /// Gamma_ij of the binary closed form: sum of variances of every level shared by i and j, plus X.
    double binary_gamma_entry(const taxonomy::ClassificationTree& tree, const BinaryVariances& variances,
                              Index i, Index j);

    Eigen::MatrixXd binary_gamma(const taxonomy::ClassificationTree& tree, const BinaryVariances& variances);

    /**
     * @brief Level weights of the correlation Ansatz
     *
     * specific + sum(levels) + market must equal 1 so the modeled correlation
     * matrix has unit diagonal. levels[0] is the finest (sub-industry) level.
     */
    struct AnsatzWeights
    {
        double specific = 0.2;
        std::vector<double> levels{0.2, 0.2, 0.2};
        double market = 0.2;

        /// (xi^2, zeta^2, eta^2, sigma^2, X) = 1/5 each.
        static AnsatzWeights equal_fifths();
        /// xi^2 = zeta^2 = 1/2 on a three-level tree, everything coarser zero.
        static AnsatzWeights half_and_half();

        /// Flat order: specific, levels..., market.
        std::vector<double> to_vector() const;
        /// Inverse of to_vector; needs at least two entries.
        static AnsatzWeights from_vector(std::span<const double> values);
    };

    /// @throws ValidationError if any weight is negative or the sum is off 1 by more than 1e-12.
    void validate_weights(const AnsatzWeights& weights, std::size_t tree_depth);

    BinaryVariances ansatz_variances(const taxonomy::ClassificationTree& tree, const AnsatzWeights& weights);

    /**
     * @brief Nested correlation model over a binary tree with constant per-level weights.
     *
     * Levels are [Omega, xi^2], [Lambda, zeta^2], [Delta, eta^2], [1_L, sigma^2]
     * with a ScalarVariance(X) terminal, so the diagonal is exactly 1.
     */
    NestedRiskModel heuristic_correlation_model(const taxonomy::ClassificationTree& tree,
                                                const AnsatzWeights& weights);

    /// Theta_ij = sqrt(C_ii C_jj) Gamma_ij. @throws ValidationError naming the first nonpositive C_ii.
    Eigen::MatrixXd scale_correlation_to_covariance(const Eigen::MatrixXd& correlation,
                                                    const Eigen::VectorXd& variances);

    /// Same scaling applied to the factored form: loadings rows and specific variances rescaled.
    FlatFactorModel scale_correlation_to_covariance(const FlatFactorModel& correlation,
                                                    const Eigen::VectorXd& variances);

    /**
     * @brief Binary tree plus U style factors.
     *
     * Each level's loadings become block diagonal [industry block, identity on
     * the style columns]; style factors get zero specific variance at every
     * intermediate level, and terminal_fcm is the (L+U) x (L+U) FCM of
     * sectors plus styles.
     */
    NestedRiskModel extend_with_style(const taxonomy::ClassificationTree& tree,
                                      const Eigen::MatrixXd& style_loadings,
                                      const Eigen::MatrixXd& terminal_fcm,
                                      const Eigen::VectorXd& stock_specific,
                                      const Eigen::VectorXd& sub_industry_specific,
                                      const Eigen::VectorXd& industry_specific);

    /**
     * @brief Correlation model with an arbitrary loadings matrix and diagonal FCM.
     *
     * xi_i^2 = 1 - sum_A zeta_A^2 Omega_iA^2, so Gamma has unit diagonal.
     * @throws ValidationError when some xi_i^2 would be negative.
     */
    NestedRiskModel diagonal_fcm_correlation_model(const Eigen::MatrixXd& loadings,
                                                   const Eigen::VectorXd& factor_variances);

    struct PdReport
    {
        double min_eigenvalue = 0.0;
        double max_eigenvalue = 0.0;
        bool cholesky_ok = false;
        bool positive_definite = false;     ///< min > tol * max
        bool positive_semidefinite = false; ///< min > -tol * max
    };

    /// @throws ValidationError if the input is asymmetric beyond 1e-10 relative.
    PdReport check_positive_definite(const Eigen::MatrixXd& matrix, double relative_tolerance = 1e-10);

    /// Sample variance (divisor T-1) of the equal-weighted cross-sectional mean return; returns is T x N.
    double market_variance(const Eigen::MatrixXd& returns);

} // namespace rdoll::risk
