/**
 * @file backtest.cpp
 * @brief Interval scheduling, per-date portfolio construction and P&L accrual
 */

#include "rdoll/backtest.hpp"

#include "rdoll/errors.hpp"
#include "rdoll/portfolio.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iostream>
#include <limits>
#include <numeric>
#include <thread>

namespace rdoll::backtest
{

    namespace
    {

        constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
        constexpr double kTradingDays = 252.0;

        std::size_t tree_level(RegressionTarget target)
        {
            switch (target)
            {
            case RegressionTarget::SubIndustry:
                return 0;
            case RegressionTarget::Industry:
                return 1;
            case RegressionTarget::Sector:
                return 2;
            case RegressionTarget::Intercept:
                break;
            }
            throw ValidationError("intercept has no tree level");
        }

        const char* target_name(RegressionTarget target)
        {
            switch (target)
            {
            case RegressionTarget::Intercept:
                return "intercept";
            case RegressionTarget::Sector:
                return "sector";
            case RegressionTarget::Industry:
                return "industry";
            case RegressionTarget::SubIndustry:
                return "sub-industry";
            }
            return "";
        }

        Eigen::MatrixXd cross_section_loadings(const taxonomy::ClassificationTree& tree, RegressionTarget target,
                                               const std::vector<Index>& stocks)
        {
            const auto n = static_cast<Index>(stocks.size());
            if (target == RegressionTarget::Intercept)
                return Eigen::MatrixXd::Ones(n, 1);
            const std::size_t level = tree_level(target);
            const auto& groups = tree.stock_groups(level);
            Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, tree.group_count(level));
            for (Index r = 0; r < n; ++r)
                y(r, groups[stocks[r]]) = 1.0;
            return y;
        }

        struct Interval
        {
            Index anchor = 0; // oldest date
            Index last = 0;   // most recent date
            std::vector<Index> universe;
            Eigen::VectorXd variance;
        };

        struct Inputs
        {
            const PricePanel& panel;
            const ReturnsPanel& returns;
            const taxonomy::ClassificationTree& tree;
            const BacktestConfig& config;
        };

        DailyRecord evaluate(const Strategy& strategy, const risk::FlatFactorModel* correlation,
                             const Interval& interval, Index s, const Inputs& in)
        {
            DailyRecord rec;
            rec.s = s;
            rec.date = in.panel.dates[s];
            const Index signal_date = in.config.delay0 ? s : s + 1;

            std::vector<Index> stocks;
            for (Index i : interval.universe)
            {
                const double o = in.panel.open(i, s);
                const double c = in.panel.close(i, s);
                if (in.returns.defined(i, signal_date) && std::isfinite(o) && o > 0.0 && std::isfinite(c) && c > 0.0)
                    stocks.push_back(i);
                else
                    ++rec.dropped;
            }
            const auto n = static_cast<Index>(stocks.size());
            rec.cross_section = n;
            if (n < 2)
                return rec;

            Eigen::VectorXd r(n), var(n);
            for (Index k = 0; k < n; ++k)
            {
                r(k) = in.returns.values(stocks[k], signal_date);
                var(k) = interval.variance(stocks[k]);
            }

            portfolio::Holdings holdings;
            try
            {
                if (strategy.kind == Strategy::Kind::Regression)
                {
                    const Eigen::VectorXd z = strategy.weighting == Weighting::InverseVariance
                                                  ? var.cwiseInverse().eval()
                                                  : Eigen::VectorXd::Ones(n).eval();
                    const auto reg = portfolio::weighted_regression(
                        r, {cross_section_loadings(in.tree, strategy.target, stocks), z});
                    holdings = portfolio::regression_holdings(reg.residuals, z, in.config.investment);
                }
                else
                {
                    const auto alpha = portfolio::weighted_regression(
                        r, {cross_section_loadings(in.tree, strategy.alpha_target, stocks), Eigen::VectorXd::Ones(n)});
                    const auto theta = risk::scale_correlation_to_covariance(correlation->select_rows(stocks), var);
                    const portfolio::FactorInverse inverse(theta);
                    holdings = portfolio::optimize_sharpe(-alpha.residuals, inverse, in.config.investment);
                }
            }
            catch (const NoTradeError&)
            {
                return rec;
            }

            rec.traded = true;
            for (Index k = 0; k < n; ++k)
            {
                const Index i = stocks[k];
                const double h = holdings.h(k);
                const double o = in.panel.open(i, s);
                rec.pnl += h * (in.panel.close(i, s) / o - 1.0);
                rec.shares += 2.0 * std::abs(h) / o;
                rec.gross += std::abs(h);
                rec.net += h;
                if (in.config.keep_holdings)
                    rec.holdings.emplace_back(i, h);
            }
            return rec;
        }

    } // namespace

    PricePanel PricePanel::select_stocks(std::span<const Index> rows) const
    {
        PricePanel out;
        out.dates = dates;
        const auto n = static_cast<Index>(rows.size());
        for (auto* m : {&out.open, &out.close, &out.adj_open, &out.adj_close, &out.volume})
            m->resize(n, n_dates());
        for (Index r = 0; r < n; ++r)
        {
            const Index i = rows[r];
            out.tickers.push_back(tickers.at(i));
            out.open.row(r) = open.row(i);
            out.close.row(r) = close.row(i);
            out.adj_open.row(r) = adj_open.row(i);
            out.adj_close.row(r) = adj_close.row(i);
            out.volume.row(r) = volume.row(i);
        }
        return out;
    }

    ReturnsPanel overnight_returns(const PricePanel& panel)
    {
        const Index n = panel.n_stocks();
        const Index dates = panel.n_dates();
        ReturnsPanel out{Eigen::MatrixXd::Constant(n, dates, kNaN)};
        for (Index i = 0; i < n; ++i)
        {
            for (Index s = 0; s < dates; ++s)
            {
                for (const auto* m : {&panel.adj_open, &panel.adj_close})
                {
                    const double p = (*m)(i, s);
                    if (!std::isnan(p) && !(p > 0.0))
                        throw DataError("nonpositive adjusted price " + std::to_string(p) + " for " +
                                        panel.tickers[i] + " on " + panel.dates[s]);
                }
                if (s + 1 < dates)
                {
                    const double today_open = panel.adj_open(i, s);
                    const double prior_close = panel.adj_close(i, s + 1);
                    if (std::isfinite(today_open) && std::isfinite(prior_close))
                        out.values(i, s) = std::log(today_open / prior_close);
                }
            }
        }
        return out;
    }

    Eigen::VectorXd addv(const PricePanel& panel, Index s, Index d)
    {
        Eigen::VectorXd out = Eigen::VectorXd::Constant(panel.n_stocks(), kNaN);
        if (d < 1 || s + d >= panel.n_dates())
            return out;
        for (Index i = 0; i < panel.n_stocks(); ++i)
        {
            double sum = 0.0;
            bool complete = true;
            for (Index r = 1; r <= d && complete; ++r)
            {
                const double dollars = panel.volume(i, s + r) * panel.close(i, s + r);
                complete = std::isfinite(dollars);
                sum += dollars;
            }
            if (complete)
                out(i) = sum / static_cast<double>(d);
        }
        return out;
    }

    std::vector<Index> select_universe(const Eigen::VectorXd& addv, Index top_n)
    {
        std::vector<Index> candidates;
        for (Index i = 0; i < addv.size(); ++i)
            if (std::isfinite(addv(i)))
                candidates.push_back(i);
        std::stable_sort(candidates.begin(), candidates.end(),
                         [&](Index a, Index b) { return addv(a) > addv(b); });
        if (static_cast<Index>(candidates.size()) < top_n)
            std::clog << "warning: only " << candidates.size() << " stocks eligible for a universe of " << top_n
                      << "; taking all\n";
        else
            candidates.resize(static_cast<std::size_t>(top_n));
        return candidates;
    }

    VarianceEstimate trailing_variance(const ReturnsPanel& returns, Index s, Index d)
    {
        const Index n = returns.values.rows();
        VarianceEstimate out{Eigen::VectorXd::Constant(n, kNaN), {}};
        if (d < 2 || s + d >= returns.values.cols())
            return out;
        for (Index i = 0; i < n; ++i)
        {
            const Eigen::VectorXd window = returns.values.row(i).segment(s + 1, d).transpose();
            if (!window.allFinite())
                continue;
            const double mean = window.mean();
            out.variance(i) = (window.array() - mean).square().sum() / static_cast<double>(d - 1);
            if (out.variance(i) == 0.0)
                out.zero_variance.push_back(i);
        }
        return out;
    }

    std::string Strategy::name() const
    {
        if (kind == Kind::Optimization)
            return "optimization";
        std::string out = std::string("regression-") + target_name(target);
        if (weighting == Weighting::Unit)
            out += "-unit";
        return out;
    }

    Strategy Strategy::parse(const std::string& name)
    {
        Strategy s;
        if (name == "optimization")
        {
            s.kind = Kind::Optimization;
            return s;
        }
        std::string rest = name;
        const std::string prefix = "regression-";
        if (rest.rfind(prefix, 0) != 0)
            throw ValidationError("unknown strategy '" + name + "'");
        rest = rest.substr(prefix.size());
        const std::string unit = "-unit";
        if (rest.size() > unit.size() && rest.compare(rest.size() - unit.size(), unit.size(), unit) == 0)
        {
            s.weighting = Weighting::Unit;
            rest.resize(rest.size() - unit.size());
        }
        for (auto t : {RegressionTarget::Intercept, RegressionTarget::Sector, RegressionTarget::Industry,
                       RegressionTarget::SubIndustry})
        {
            if (rest == target_name(t))
            {
                s.target = t;
                return s;
            }
        }
        throw ValidationError("unknown strategy '" + name + "'");
    }

    std::vector<Strategy> table_one_strategies()
    {
        std::vector<Strategy> out;
        for (const char* n : {"regression-intercept", "regression-sector", "regression-industry",
                              "regression-sub-industry", "optimization"})
            out.push_back(Strategy::parse(n));
        return out;
    }

    std::vector<Strategy> table_two_strategies()
    {
        std::vector<Strategy> out;
        for (const char* n : {"regression-intercept-unit", "regression-sector-unit", "regression-industry-unit",
                              "regression-sub-industry-unit"})
            out.push_back(Strategy::parse(n));
        return out;
    }

    void BacktestConfig::validate() const
    {
        if (lookback < 2)
            throw ValidationError("lookback must be >= 2");
        if (universe_size < 1)
            throw ValidationError("universe size must be >= 1");
        if (interval < 1)
            throw ValidationError("interval length must be >= 1");
        if (!(investment > 0.0) || !std::isfinite(investment))
            throw ValidationError("investment level must be positive");
        if (strategies.empty())
            throw ValidationError("no strategies configured");
        if (jobs < 1)
            throw ValidationError("jobs must be >= 1");
        if (max_days < 0)
            throw ValidationError("max_days must be >= 0");
    }

    Metrics metrics(std::span<const double> pnl, std::span<const double> shares, double investment)
    {
        if (pnl.empty())
            throw ValidationError("metrics need a nonempty P&L series");
        if (pnl.size() != shares.size())
            throw DimensionError("metrics: P&L and shares series differ in length");
        const double n = static_cast<double>(pnl.size());
        const double total = std::accumulate(pnl.begin(), pnl.end(), 0.0);
        const double mean = total / n;

        Metrics m;
        m.roc = mean / investment * kTradingDays;
        if (pnl.size() > 1)
        {
            double ss = 0.0;
            for (double p : pnl)
                ss += (p - mean) * (p - mean);
            const double sd = std::sqrt(ss / (n - 1.0));
            if (sd > 0.0)
                m.sharpe = mean / sd * std::sqrt(kTradingDays);
        }
        const double total_shares = std::accumulate(shares.begin(), shares.end(), 0.0);
        if (total_shares > 0.0)
            m.cps = 100.0 * total / total_shares;
        return m;
    }

    BacktestReport run_backtest(const BacktestConfig& config, const PricePanel& panel,
                                const taxonomy::ClassificationTree& tree)
    {
        config.validate();
        if (tree.n_stocks() != panel.n_stocks())
            throw DimensionError("classification has " + std::to_string(tree.n_stocks()) + " stocks, panel has " +
                                 std::to_string(panel.n_stocks()));
        for (const auto& st : config.strategies)
        {
            const bool needs_tree = st.kind == Strategy::Kind::Optimization || st.target != RegressionTarget::Intercept;
            if (needs_tree && tree.depth() < 3)
                throw ValidationError("strategy " + st.name() + " needs a three-level classification");
            if (st.kind == Strategy::Kind::Optimization)
                risk::validate_weights(st.ansatz, tree.depth());
        }

        const ReturnsPanel returns = overnight_returns(panel);
        const Index last_index = panel.n_dates() - 1;
        Index first = last_index - config.lookback - 1;
        if (config.max_days > 0)
            first = std::min(first, config.max_days - 1);
        if (first < 0)
            throw DataError("not enough history: " + std::to_string(panel.n_dates()) + " dates for lookback " +
                            std::to_string(config.lookback));

        std::vector<Interval> intervals;
        for (Index anchor = first; anchor >= 0; anchor -= config.interval)
        {
            Interval iv;
            iv.anchor = anchor;
            iv.last = std::max<Index>(anchor - config.interval + 1, 0);
            const auto var = trailing_variance(returns, anchor, config.lookback);
            for (Index i : select_universe(addv(panel, anchor, config.lookback), config.universe_size))
                if (std::isfinite(var.variance(i)) && var.variance(i) > 0.0)
                    iv.universe.push_back(i);
            std::sort(iv.universe.begin(), iv.universe.end());
            iv.variance = var.variance;
            intervals.push_back(std::move(iv));
        }

        struct Slot
        {
            std::size_t interval;
            Index s;
        };
        std::vector<Slot> slots;
        for (std::size_t k = 0; k < intervals.size(); ++k)
            for (Index s = intervals[k].anchor; s >= intervals[k].last; --s)
                slots.push_back({k, s});

        std::vector<std::optional<risk::FlatFactorModel>> correlation(config.strategies.size());
        for (std::size_t k = 0; k < config.strategies.size(); ++k)
            if (config.strategies[k].kind == Strategy::Kind::Optimization)
                correlation[k] = risk::flatten(risk::heuristic_correlation_model(tree, config.strategies[k].ansatz));

        const Inputs inputs{panel, returns, tree, config};
        const std::size_t n_tasks = slots.size() * config.strategies.size();
        std::vector<DailyRecord> records(n_tasks);
        std::vector<std::exception_ptr> errors(n_tasks);
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t t = next++; t < n_tasks; t = next++)
            {
                const std::size_t k = t / slots.size();
                const Slot& slot = slots[t % slots.size()];
                try
                {
                    const auto* corr = correlation[k] ? &*correlation[k] : nullptr;
                    records[t] = evaluate(config.strategies[k], corr, intervals[slot.interval], slot.s, inputs);
                }
                catch (...)
                {
                    errors[t] = std::current_exception();
                }
            }
        };
        const auto n_threads = static_cast<std::size_t>(std::max(1, config.jobs));
        std::vector<std::thread> pool;
        for (std::size_t w = 1; w < n_threads; ++w)
            pool.emplace_back(worker);
        worker();
        for (auto& th : pool)
            th.join();
        for (const auto& e : errors)
            if (e)
                std::rethrow_exception(e);

        BacktestReport report;
        report.investment = config.investment;
        for (const auto& iv : intervals)
            report.interval_anchors.push_back(iv.anchor);
        for (std::size_t k = 0; k < config.strategies.size(); ++k)
        {
            StrategyReport sr;
            sr.name = config.strategies[k].name();
            sr.days.assign(std::make_move_iterator(records.begin() + k * slots.size()),
                           std::make_move_iterator(records.begin() + (k + 1) * slots.size()));
            std::vector<double> pnl, shares;
            for (const auto& d : sr.days)
            {
                pnl.push_back(d.pnl);
                shares.push_back(d.shares);
            }
            sr.metrics = metrics(pnl, shares, config.investment);
            report.strategies.push_back(std::move(sr));
        }
        return report;
    }

} // namespace rdoll::backtest
