#include "rdoll/backtest.hpp"
#include "rdoll/errors.hpp"
#include "rdoll/synthetic.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace rdoll;
using namespace rdoll::backtest;
using rdoll::fixtures::Rng;

namespace
{

    /// Random-walk prices with adjusted columns equal to the raw ones.
    PricePanel random_walk_panel(Rng& rng, Index n, Index dates)
    {
        PricePanel p = fixtures::blank_panel(n, dates);
        std::normal_distribution<double> normal(0.0, 0.01);
        for (Index i = 0; i < n; ++i)
        {
            double price = 50.0 + static_cast<double>(i);
            for (Index s = dates - 1; s >= 0; --s)
            {
                const double open = price * std::exp(normal(rng));
                const double close = open * std::exp(normal(rng));
                p.open(i, s) = p.adj_open(i, s) = open;
                p.close(i, s) = p.adj_close(i, s) = close;
                p.volume(i, s) = 1000.0 + 10.0 * static_cast<double>(i);
                price = close;
            }
        }
        return p;
    }

    taxonomy::ClassificationTree small_tree(Index n)
    {
        std::vector<int> g(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i)
            g[i] = static_cast<int>(i % 6);
        return taxonomy::ClassificationTree::three_level(g, {0, 0, 1, 1, 2, 2}, {0, 0, 1});
    }

    void set_prices(PricePanel& p, Index i, std::vector<double> open, std::vector<double> close)
    {
        for (std::size_t s = 0; s < open.size(); ++s)
        {
            p.open(i, s) = p.adj_open(i, s) = open[s];
            p.close(i, s) = p.adj_close(i, s) = close[s];
        }
    }

} // namespace

TEST(OvernightReturns, DirectFormula)
{
    PricePanel p = fixtures::blank_panel(1, 2);
    p.adj_open(0, 0) = 102.0;
    p.adj_close(0, 1) = 100.0;
    const auto r = overnight_returns(p);
    EXPECT_NEAR(r.values(0, 0), 0.0198026272961797, 1e-15);
    EXPECT_FALSE(r.defined(0, 1));
}

TEST(OvernightReturns, EqualPricesGiveZero)
{
    PricePanel p = fixtures::blank_panel(2, 3);
    const auto r = overnight_returns(p);
    EXPECT_EQ(r.values(0, 0), 0.0);
    EXPECT_EQ(r.values(1, 1), 0.0);
}

TEST(OvernightReturns, SplitInRawColumnsDoesNotAffectAdjustedReturn)
{
    Rng rng(61);
    const PricePanel plain = random_walk_panel(rng, 1, 10);
    PricePanel split = plain;
    for (Index s = 5; s < 10; ++s)
    {
        split.open(0, s) *= 2.0;
        split.close(0, s) *= 2.0;
    }
    EXPECT_EQ(overnight_returns(plain).values.leftCols(9), overnight_returns(split).values.leftCols(9));
}

TEST(OvernightReturns, MissingPriceGivesUndefinedReturn)
{
    PricePanel p = fixtures::blank_panel(1, 3);
    p.adj_close(0, 1) = std::nan("");
    const auto r = overnight_returns(p);
    EXPECT_FALSE(r.defined(0, 0));
    EXPECT_TRUE(r.defined(0, 1));
}

TEST(OvernightReturns, NonpositiveAdjustedPriceNamesTickerAndDate)
{
    PricePanel p = fixtures::blank_panel(2, 3);
    p.adj_open(1, 2) = 0.0;
    try
    {
        overnight_returns(p);
        FAIL() << "expected DataError";
    }
    catch (const DataError& e)
    {
        const std::string what = e.what();
        EXPECT_NE(what.find(p.tickers[1]), std::string::npos);
        EXPECT_NE(what.find(p.dates[2]), std::string::npos);
    }
}

TEST(Addv, TwoDayArithmetic)
{
    PricePanel p = fixtures::blank_panel(1, 3);
    p.volume(0, 1) = 100.0;
    p.volume(0, 2) = 200.0;
    p.close(0, 1) = p.close(0, 2) = 10.0;
    EXPECT_DOUBLE_EQ(addv(p, 0, 2)(0), 1500.0);
}

TEST(Addv, ZeroVolumeAndConstantSeries)
{
    PricePanel p = fixtures::blank_panel(2, 30);
    p.volume.row(0).setZero();
    p.volume.row(1).setConstant(1000.0);
    p.close.row(1).setConstant(50.0);
    const Eigen::VectorXd a = addv(p, 0, 21);
    EXPECT_EQ(a(0), 0.0);
    EXPECT_DOUBLE_EQ(a(1), 50000.0);
}

TEST(Addv, IncompleteWindowIsNaN)
{
    PricePanel p = fixtures::blank_panel(2, 5);
    p.volume(0, 3) = std::nan("");
    const Eigen::VectorXd a = addv(p, 0, 3);
    EXPECT_TRUE(std::isnan(a(0)));
    EXPECT_FALSE(std::isnan(a(1)));
    EXPECT_TRUE(std::isnan(addv(p, 2, 3)(1)));
}

TEST(SelectUniverse, TopByAddv)
{
    EXPECT_EQ(select_universe(Eigen::Vector3d(5, 1, 9), 2), (std::vector<Index>{2, 0}));
}

TEST(SelectUniverse, TopNAtLeastNReturnsAll)
{
    const auto u = select_universe(Eigen::Vector3d(5, 1, 9), 10);
    EXPECT_EQ(std::set<Index>(u.begin(), u.end()), (std::set<Index>{0, 1, 2}));
}

TEST(SelectUniverse, TiesKeepInputOrderAndNaNIsExcluded)
{
    const Eigen::Vector4d a(3.0, std::nan(""), 3.0, 3.0);
    EXPECT_EQ(select_universe(a, 2), (std::vector<Index>{0, 2}));
    EXPECT_EQ(select_universe(a, 3), (std::vector<Index>{0, 2, 3}));
}

TEST(TrailingVariance, UnbiasedDivisor)
{
    ReturnsPanel r{Eigen::MatrixXd(1, 3)};
    r.values << 0.0, 1.0, -1.0;
    const auto v = trailing_variance(r, 0, 2);
    EXPECT_DOUBLE_EQ(v.variance(0), 2.0);
}

TEST(TrailingVariance, ConstantReturnsAreFlagged)
{
    ReturnsPanel r{Eigen::MatrixXd::Constant(2, 5, 0.01)};
    r.values(1, 2) = 0.02;
    const auto v = trailing_variance(r, 0, 3);
    EXPECT_EQ(v.variance(0), 0.0);
    EXPECT_EQ(v.zero_variance, (std::vector<Index>{0}));
    EXPECT_GT(v.variance(1), 0.0);
}

TEST(TrailingVariance, MissingHistoryIsNaN)
{
    ReturnsPanel r{Eigen::MatrixXd::Constant(1, 5, 0.01)};
    r.values(0, 3) = std::nan("");
    EXPECT_TRUE(std::isnan(trailing_variance(r, 0, 3).variance(0)));
    EXPECT_FALSE(std::isnan(trailing_variance(r, 0, 2).variance(0)));
}

TEST(TrailingVariance, MonteCarloMeanNearOne)
{
    Rng rng(62);
    ReturnsPanel r{fixtures::normal_matrix(rng, 2000, 22)};
    const auto v = trailing_variance(r, 0, 21);
    EXPECT_NEAR(v.variance.mean(), 1.0, 0.1);
}

TEST(Metrics, RocArithmetic)
{
    const std::vector<double> pnl{100, 100}, shares{10, 10};
    EXPECT_DOUBLE_EQ(metrics(pnl, shares, 25200).roc, 1.0);
}

TEST(Metrics, ConstantPnlHasUndefinedSharpe)
{
    const std::vector<double> pnl{100, 100, 100}, shares{10, 10, 10};
    EXPECT_FALSE(metrics(pnl, shares, 1e6).sharpe.has_value());
}

TEST(Metrics, CentsPerShare)
{
    const std::vector<double> pnl{200, 0}, shares{1000, 1000};
    const auto m = metrics(pnl, shares, 1e6);
    ASSERT_TRUE(m.cps.has_value());
    EXPECT_DOUBLE_EQ(*m.cps, 10.0);
    // mean 100, sample stdev sqrt(20000)
    ASSERT_TRUE(m.sharpe.has_value());
    EXPECT_NEAR(*m.sharpe, 100.0 / std::sqrt(20000.0) * std::sqrt(252.0), 1e-12);
}

TEST(Metrics, NoSharesMeansUndefinedCps)
{
    const std::vector<double> pnl{0, 0}, shares{0, 0};
    EXPECT_FALSE(metrics(pnl, shares, 1e6).cps.has_value());
    const std::vector<double> empty;
    EXPECT_THROW(metrics(empty, empty, 1e6), ValidationError);
}

TEST(Strategy, NamesRoundTrip)
{
    for (const auto& s : table_one_strategies())
        EXPECT_EQ(Strategy::parse(s.name()).name(), s.name());
    for (const auto& s : table_two_strategies())
    {
        EXPECT_EQ(Strategy::parse(s.name()).name(), s.name());
        EXPECT_EQ(s.weighting, Weighting::Unit);
    }
    EXPECT_EQ(table_one_strategies().size(), 5u);
    EXPECT_EQ(table_two_strategies().size(), 4u);
    EXPECT_THROW(Strategy::parse("regression-country"), ValidationError);
    EXPECT_THROW(Strategy::parse("momentum"), ValidationError);
}

TEST(BacktestConfig, RejectsInvalidSettings)
{
    BacktestConfig c;
    c.lookback = 1;
    EXPECT_THROW(c.validate(), ValidationError);
    c = {};
    c.investment = -1.0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = {};
    c.strategies.clear();
    EXPECT_THROW(c.validate(), ValidationError);
    c = {};
    c.jobs = 0;
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(RunBacktest, SingleDateGoldenPnl)
{
    // Stock 0 gaps up less than stock 1 overnight, so the intercept alpha buys 0 and sells 1.
    PricePanel p = fixtures::blank_panel(2, 4);
    set_prices(p, 0, {128, 102, 101, 100}, {160, 100, 100, 100});
    set_prices(p, 1, {64, 96, 99, 100}, {48, 40, 100, 100});
    BacktestConfig c;
    c.lookback = 2;
    c.universe_size = 2;
    c.investment = 1048576.0;
    c.strategies = {Strategy::parse("regression-intercept")};
    c.keep_holdings = true;
    const auto tree = taxonomy::ClassificationTree::three_level({0, 1}, {0, 0}, {0});
    const auto report = run_backtest(c, p, tree);
    ASSERT_EQ(report.strategies.size(), 1u);
    const auto& days = report.strategies[0].days;
    ASSERT_EQ(days.size(), 1u);
    const auto& d = days[0];
    EXPECT_TRUE(d.traded);
    ASSERT_EQ(d.holdings.size(), 2u);
    EXPECT_DOUBLE_EQ(d.holdings[0].second, 524288.0);
    EXPECT_DOUBLE_EQ(d.holdings[1].second, -524288.0);
    // +25% on the long, -25% on the short.
    EXPECT_DOUBLE_EQ(d.pnl, 262144.0);
    EXPECT_DOUBLE_EQ(d.shares, 2.0 * (524288.0 / 128.0 + 524288.0 / 64.0));
    EXPECT_DOUBLE_EQ(report.strategies[0].metrics.roc, 63.0);
    EXPECT_FALSE(report.strategies[0].metrics.sharpe.has_value());
}

TEST(RunBacktest, ZeroIntradayMovesGiveZeroPnl)
{
    Rng rng(63);
    PricePanel p = random_walk_panel(rng, 12, 40);
    p.close = p.open;
    p.adj_close = p.adj_open;
    BacktestConfig c;
    c.lookback = 5;
    c.interval = 7;
    c.strategies = table_one_strategies();
    for (auto s : table_two_strategies())
        c.strategies.push_back(s);
    const auto report = run_backtest(c, p, small_tree(12));
    for (const auto& s : report.strategies)
        for (const auto& d : s.days)
        {
            EXPECT_TRUE(d.traded);
            EXPECT_EQ(d.pnl, 0.0);
        }
}

TEST(RunBacktest, UniverseChangesOnlyAtIntervalBoundary)
{
    Rng rng(64);
    PricePanel p = random_walk_panel(rng, 4, 8);
    // Stocks 0,1 dominate volume on older dates, stocks 2,3 on recent ones.
    for (Index s = 0; s < 8; ++s)
    {
        const bool old = s >= 5;
        p.volume(0, s) = p.volume(1, s) = old ? 1e6 : 1.0;
        p.volume(2, s) = p.volume(3, s) = old ? 1.0 : 1e6;
    }
    BacktestConfig c;
    c.lookback = 2;
    c.interval = 2;
    c.universe_size = 2;
    c.keep_holdings = true;
    c.strategies = {Strategy::parse("regression-intercept")};
    const auto tree = taxonomy::ClassificationTree::three_level({0, 0, 0, 0}, {0}, {0});
    const auto report = run_backtest(c, p, tree);
    EXPECT_EQ(report.interval_anchors, (std::vector<Index>{4, 2, 0}));
    const auto& days = report.strategies[0].days;
    ASSERT_EQ(days.size(), 5u);
    std::vector<std::set<Index>> held;
    for (const auto& d : days)
    {
        std::set<Index> names;
        for (const auto& [i, h] : d.holdings)
            names.insert(i);
        held.push_back(names);
    }
    EXPECT_EQ(days[0].s, 4);
    EXPECT_EQ(held[0], (std::set<Index>{0, 1}));
    EXPECT_EQ(held[1], (std::set<Index>{0, 1}));
    EXPECT_EQ(held[2], (std::set<Index>{2, 3}));
    EXPECT_EQ(held[3], (std::set<Index>{2, 3}));
    EXPECT_EQ(held[4], (std::set<Index>{2, 3}));
}

TEST(RunBacktest, MissingQuoteDropsStockForThatDateOnly)
{
    Rng rng(65);
    PricePanel p = random_walk_panel(rng, 6, 12);
    p.close(2, 3) = std::nan("");
    BacktestConfig c;
    c.lookback = 3;
    c.strategies = {Strategy::parse("regression-intercept")};
    c.keep_holdings = true;
    const auto tree = taxonomy::ClassificationTree::three_level({0, 0, 0, 1, 1, 1}, {0, 0}, {0});
    const auto report = run_backtest(c, p, tree);
    for (const auto& d : report.strategies[0].days)
    {
        EXPECT_EQ(d.dropped, d.s == 3 ? 1 : 0);
        EXPECT_NEAR(d.gross, c.investment, 1e-9 * c.investment);
        EXPECT_LE(std::abs(d.net), 1e-9 * c.investment);
    }
}

TEST(RunBacktest, NoLookAhead)
{
    Rng rng(66);
    const PricePanel base = random_walk_panel(rng, 18, 50);
    PricePanel changed = base;
    // Perturb everything on the most recent date only.
    for (Index i = 0; i < 18; ++i)
    {
        changed.open(i, 0) *= 1.3;
        changed.adj_open(i, 0) *= 1.3;
        changed.close(i, 0) *= 0.7;
        changed.adj_close(i, 0) *= 0.7;
        changed.volume(i, 0) *= 5.0;
    }
    BacktestConfig c;
    c.lookback = 5;
    c.interval = 4;
    const auto a = run_backtest(c, base, small_tree(18));
    const auto b = run_backtest(c, changed, small_tree(18));
    for (std::size_t k = 0; k < a.strategies.size(); ++k)
    {
        const auto& da = a.strategies[k].days;
        const auto& db = b.strategies[k].days;
        ASSERT_EQ(da.size(), db.size());
        for (std::size_t t = 0; t + 1 < da.size(); ++t)
        {
            EXPECT_EQ(da[t].pnl, db[t].pnl);
            EXPECT_EQ(da[t].shares, db[t].shares);
        }
        EXPECT_NE(da.back().pnl, db.back().pnl);
    }
}

TEST(RunBacktest, ParallelMatchesSequentialAndMetricsRecompute)
{
    synthetic::SyntheticConfig sc;
    sc.n_stocks = 80;
    sc.n_dates = 90;
    const auto market = synthetic::generate(sc);
    BacktestConfig c;
    c.universe_size = 60;
    c.strategies = table_one_strategies();
    const auto seq = run_backtest(c, market.panel, market.classification.tree);
    c.jobs = 4;
    const auto par = run_backtest(c, market.panel, market.classification.tree);
    ASSERT_EQ(seq.strategies.size(), 5u);
    for (std::size_t k = 0; k < seq.strategies.size(); ++k)
    {
        const auto& s = seq.strategies[k];
        const auto& q = par.strategies[k];
        ASSERT_EQ(s.days.size(), q.days.size());
        std::vector<double> pnl, shares;
        for (std::size_t t = 0; t < s.days.size(); ++t)
        {
            EXPECT_EQ(s.days[t].pnl, q.days[t].pnl);
            EXPECT_EQ(s.days[t].shares, q.days[t].shares);
            EXPECT_TRUE(s.days[t].traded);
            EXPECT_LE(std::abs(s.days[t].net), 1e-9 * c.investment);
            EXPECT_NEAR(s.days[t].gross, c.investment, 1e-9 * c.investment);
            pnl.push_back(s.days[t].pnl);
            shares.push_back(s.days[t].shares);
        }
        const auto m = metrics(pnl, shares, c.investment);
        EXPECT_EQ(m.roc, s.metrics.roc);
        EXPECT_EQ(m.sharpe, s.metrics.sharpe);
        EXPECT_EQ(m.cps, s.metrics.cps);
    }
}

TEST(RunBacktest, MaxDaysLimitsSimulatedWindow)
{
    Rng rng(67);
    const PricePanel p = random_walk_panel(rng, 12, 40);
    BacktestConfig c;
    c.lookback = 5;
    c.max_days = 10;
    c.strategies = {Strategy::parse("regression-sector")};
    const auto report = run_backtest(c, p, small_tree(12));
    EXPECT_EQ(report.strategies[0].days.size(), 10u);
    EXPECT_EQ(report.strategies[0].days.back().s, 0);
}

TEST(RunBacktest, RejectsMismatchedInputs)
{
    Rng rng(68);
    const PricePanel p = random_walk_panel(rng, 12, 40);
    BacktestConfig c;
    EXPECT_THROW(run_backtest(c, p, small_tree(6)), DimensionError);
    c.lookback = 39;
    EXPECT_THROW(run_backtest(c, p, small_tree(12)), DataError);
}

TEST(Synthetic, DeterministicForSeedAndSplitOnlyInRawPrices)
{
    synthetic::SyntheticConfig sc;
    sc.n_stocks = 60;
    sc.n_dates = 40;
    const auto a = synthetic::generate(sc);
    const auto b = synthetic::generate(sc);
    EXPECT_EQ(a.panel.open, b.panel.open);
    EXPECT_EQ(a.panel.volume, b.panel.volume);
    EXPECT_EQ(a.classification.tree, b.classification.tree);
    EXPECT_EQ(a.panel.open(0, 39), 2.0 * a.panel.adj_open(0, 39));
    EXPECT_EQ(a.panel.open(0, 0), a.panel.adj_open(0, 0));
    EXPECT_EQ(a.panel.open(1, 39), a.panel.adj_open(1, 39));
    EXPECT_EQ(a.classification.tree.group_counts(), (std::vector<int>{54, 18, 6}));
    sc.seed += 1;
    EXPECT_NE(synthetic::generate(sc).panel.open, a.panel.open);
}
