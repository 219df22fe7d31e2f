/**
 * @file backtest.hpp
 * @brief Intraday mean-reversion horse race: overnight-return alphas traded open-to-close
 *
 * Date convention: column s of every panel is a trading date, s = 0 is the most
 * recent and s increases into the past. Missing observations are NaN.
 *
 * For each 21-day interval the universe (top-N by ADDV) and the trailing
 * variances C_ii are computed from the d dates immediately preceding the
 * interval and held fixed inside it. Each date the configured strategy turns
 * overnight returns into dollar holdings established at the open and
 * liquidated at the close:
 *
 *     pnl_is = H_is (P^C_is / P^O_is - 1),   shares_is = 2 |H_is| / P^O_is
 */

#pragma once

#include "rdoll/risk_model.hpp"
#include "rdoll/taxonomy.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rdoll::backtest
{

    using Index = Eigen::Index;

    /// Stocks x dates price/volume panel; NaN marks a missing observation.
    struct PricePanel
    {
        std::vector<std::string> tickers;
        std::vector<std::string> dates; ///< dates[s], s = 0 latest
        Eigen::MatrixXd open;
        Eigen::MatrixXd close;
        Eigen::MatrixXd adj_open;
        Eigen::MatrixXd adj_close;
        Eigen::MatrixXd volume;

        Index n_stocks() const { return static_cast<Index>(tickers.size()); }
        Index n_dates() const { return static_cast<Index>(dates.size()); }

        /// Same panel restricted to the given stock rows, in that order.
        PricePanel select_stocks(std::span<const Index> rows) const;
    };

    /// Overnight log returns, stocks x dates, NaN where undefined (last date, missing prices).
    struct ReturnsPanel
    {
        Eigen::MatrixXd values;

        bool defined(Index i, Index s) const { return std::isfinite(values(i, s)); }
    };

    /// R_is = ln(P^AO_is / P^AC_{i,s+1}). @throws DataError naming ticker and date on a nonpositive price.
    ReturnsPanel overnight_returns(const PricePanel& panel);

    /// Average daily dollar volume over dates s+1..s+d; NaN when the window is incomplete.
    Eigen::VectorXd addv(const PricePanel& panel, Index s, Index d);

    /// Indices of the top_n finite entries, largest first; ties keep input order.
    std::vector<Index> select_universe(const Eigen::VectorXd& addv, Index top_n);

    struct VarianceEstimate
    {
        Eigen::VectorXd variance;          ///< NaN where fewer than d returns are available
        std::vector<Index> zero_variance;  ///< stocks with constant returns (unusable as weights)
    };

    /// Unbiased (divisor d-1) variance of returns at s+1..s+d.
    VarianceEstimate trailing_variance(const ReturnsPanel& returns, Index s, Index d);

    enum class RegressionTarget
    {
        Intercept,
        Sector,
        Industry,
        SubIndustry
    };

    enum class Weighting
    {
        InverseVariance,
        Unit
    };

    /// One horse-race entrant.
    struct Strategy
    {
        enum class Kind
        {
            Regression,
            Optimization
        };

        Kind kind = Kind::Regression;
        RegressionTarget target = RegressionTarget::Intercept;
        Weighting weighting = Weighting::InverseVariance;
        risk::AnsatzWeights ansatz = risk::AnsatzWeights::equal_fifths();
        /// Expected returns of the optimizer: unit-weight residuals over this level.
        RegressionTarget alpha_target = RegressionTarget::SubIndustry;

        /// "regression-intercept", "regression-sector-unit", "optimization", ...
        std::string name() const;

        /// Inverse of name(). @throws ValidationError for unknown names.
        static Strategy parse(const std::string& name);
    };

    /// Four inverse-variance regressions plus the optimized alpha.
    std::vector<Strategy> table_one_strategies();

    /// Four unit-weight regressions.
    std::vector<Strategy> table_two_strategies();

    struct BacktestConfig
    {
        Index lookback = 21;
        Index universe_size = 2000;
        Index interval = 21;
        double investment = 20e6;
        std::vector<Strategy> strategies = table_one_strategies();
        /// Use the same-day overnight return (open price at s) as the signal.
        bool delay0 = true;
        /// Limit the simulated period to the most recent max_days dates (0 = all available).
        Index max_days = 0;
        int jobs = 1;
        bool keep_holdings = false;

        /// @throws ValidationError
        void validate() const;
    };

    struct DailyRecord
    {
        Index s = 0;
        std::string date;
        double pnl = 0.0;
        double shares = 0.0;
        double gross = 0.0;
        double net = 0.0;
        bool traded = false;
        Index cross_section = 0;  ///< stocks priced and held that date
        Index dropped = 0;        ///< universe stocks dropped for missing data
        std::vector<std::pair<Index, double>> holdings; ///< filled when keep_holdings
    };

    struct Metrics
    {
        double roc = 0.0;            ///< annualized, as a fraction
        std::optional<double> sharpe; ///< annualized; empty when the P&L stdev is zero
        std::optional<double> cps;    ///< cents per share; empty when nothing traded
    };

    /**
     * ROC = mean(pnl) / I * 252, SR = mean(pnl) / stdev(pnl) * sqrt(252) with the
     * sample (n-1) stdev, CPS = 100 * sum(pnl) / sum(shares).
     */
    Metrics metrics(std::span<const double> pnl, std::span<const double> shares, double investment);

    struct StrategyReport
    {
        std::string name;
        std::vector<DailyRecord> days; ///< chronological
        Metrics metrics;
    };

    struct BacktestReport
    {
        std::vector<StrategyReport> strategies;
        std::vector<Index> interval_anchors; ///< first (oldest) date of each interval
        double investment = 0.0;
    };

    /**
     * @brief Runs every configured strategy over the same dates and universes.
     *
     * tree must classify exactly the panel's stocks, in panel order.
     * Results do not depend on config.jobs.
     */
    BacktestReport run_backtest(const BacktestConfig& config, const PricePanel& panel,
                                const taxonomy::ClassificationTree& tree);

} // namespace rdoll::backtest
