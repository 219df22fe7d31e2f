/**
 * @file cli.cpp
 * @brief Subcommand wiring for the rdoll tool
 */

#include "rdoll/cli.hpp"

#include "rdoll/backtest.hpp"
#include "rdoll/data_io.hpp"
#include "rdoll/errors.hpp"
#include "rdoll/portfolio.hpp"
#include "rdoll/risk_model.hpp"
#include "rdoll/synthetic.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>

namespace rdoll::cli
{

    namespace
    {

        using Index = Eigen::Index;
        namespace fs = std::filesystem;

        struct BacktestArgs
        {
            std::string data;
            std::string classification;
            std::string out = "out";
            Index lookback = 21;
            Index universe_size = 2000;
            Index interval = 21;
            double investment = 20e6;
            std::vector<double> weights{0.2, 0.2, 0.2, 0.2, 0.2};
            std::vector<std::string> strategies{"table1"};
            int jobs = 1;
            Index max_days = 0;
            bool derive_adj_open = false;
        };

        /// Applies key = value lines to options the command line left unset.
        void apply_config_file(CLI::App& cmd, const std::string& path)
        {
            for (const auto& item : CLI::ConfigINI().from_file(path))
            {
                const bool top = item.parents.empty() || (item.parents.size() == 1 && item.parents[0] == "default");
                const bool own = item.parents.size() == 1 && item.parents[0] == cmd.get_name();
                if (item.name == "++" || item.name == "--")
                    continue;
                CLI::Option* opt = cmd.get_option_no_throw("--" + item.name);
                if (!(top || own) || opt == nullptr || item.name == "config")
                    throw ValidationError(path + ": unknown config key '" + item.fullname() + "'");
                if (opt->count() > 0)
                    continue;
                opt->add_result(item.inputs);
                opt->run_callback();
            }
        }

        std::vector<backtest::Strategy> resolve_strategies(const std::vector<std::string>& names,
                                                           const risk::AnsatzWeights& ansatz)
        {
            std::vector<backtest::Strategy> out;
            for (const auto& name : names)
            {
                if (name == "table1" || name == "all")
                    for (auto s : backtest::table_one_strategies())
                        out.push_back(s);
                if (name == "table2" || name == "all")
                    for (auto s : backtest::table_two_strategies())
                        out.push_back(s);
                if (name != "table1" && name != "table2" && name != "all")
                    out.push_back(backtest::Strategy::parse(name));
            }
            for (auto& s : out)
                s.ansatz = ansatz;
            for (std::size_t a = 0; a < out.size(); ++a)
                for (std::size_t b = a + 1; b < out.size(); ++b)
                    if (out[a].name() == out[b].name())
                        throw ValidationError("strategy " + out[a].name() + " listed twice");
            return out;
        }

        std::string show(const std::optional<double>& v, int precision)
        {
            if (!v)
                return "undefined";
            std::ostringstream ss;
            ss << std::fixed << std::setprecision(precision) << *v;
            return ss.str();
        }

        int cmd_backtest(const BacktestArgs& args, const std::string& echoed_config, std::ostream& out)
        {
            const auto ansatz = risk::AnsatzWeights::from_vector(args.weights);
            backtest::BacktestConfig config;
            config.lookback = args.lookback;
            config.universe_size = args.universe_size;
            config.interval = args.interval;
            config.investment = args.investment;
            config.jobs = args.jobs;
            config.max_days = args.max_days;
            config.strategies = resolve_strategies(args.strategies, ansatz);
            config.validate();

            const auto ds = io::load_dataset(args.data, args.classification, {args.derive_adj_open});
            if (!ds.manifest.excluded.empty())
                out << "excluded " << ds.manifest.excluded.size() << " unclassified ticker(s)\n";
            const auto report = backtest::run_backtest(config, ds.panel, ds.classification.tree);

            const fs::path dir = args.out;
            io::write_report(report, dir);
            io::write_label_map(ds.classification, dir / "classification_map.csv");
            {
                std::ofstream cfg(dir / "run_config.ini", std::ios::binary | std::ios::trunc);
                cfg << echoed_config;
                std::ofstream mf(dir / "manifest.txt", std::ios::binary | std::ios::trunc);
                const auto& m = ds.manifest;
                mf << "prices=" << m.price_path << "\nclassification=" << m.classification_path
                   << "\nfirst_date=" << m.first_date << "\nlast_date=" << m.last_date
                   << "\ntickers=" << m.ticker_count << "\nchecksum=" << std::hex << m.checksum << std::dec
                   << "\nadj_open_derived=" << (m.adj_open_derived ? "true" : "false")
                   << "\nexcluded=" << m.excluded.size() << "\nvariance_divisor=d-1\n";
                if (!cfg || !mf)
                    throw DataError("failed writing run metadata to " + dir.string());
            }

            out << std::left << std::setw(30) << "strategy" << std::right << std::setw(10) << "ROC" << std::setw(10)
                << "SR" << std::setw(10) << "CPS" << '\n';
            for (const auto& s : report.strategies)
            {
                out << std::left << std::setw(30) << s.name << std::right << std::setw(9)
                    << show(s.metrics.roc * 100.0, 2) << '%' << std::setw(10) << show(s.metrics.sharpe, 2)
                    << std::setw(10) << show(s.metrics.cps, 2) << '\n';
            }
            out << "wrote " << (dir / "metrics.csv").string() << " and " << (dir / "pnl_daily.csv").string() << '\n';
            return 0;
        }

        int cmd_model_check(const std::string& classification, const std::vector<double>& weights, Index dense_cap,
                            std::ostream& out)
        {
            const auto cls = io::load_classification(classification);
            const auto& tree = cls.tree;
            const auto ansatz = risk::AnsatzWeights::from_vector(weights);
            const auto model = risk::heuristic_correlation_model(tree, ansatz);

            out << "stocks N=" << tree.n_stocks() << "  K=" << tree.sub_industry_count()
                << "  F=" << tree.industry_count() << "  L=" << tree.sector_count() << '\n';

            const auto flat = risk::flatten(model);
            const Eigen::MatrixXd from_flat = flat.covariance(dense_cap);
            const Eigen::MatrixXd nested = model.nested_expansion();
            const double deviation =
                (from_flat - nested).cwiseAbs().maxCoeff() / std::max(nested.cwiseAbs().maxCoeff(), 1e-300);
            const auto pd = risk::check_positive_definite(from_flat);
            const double diag_error = (from_flat.diagonal().array() - 1.0).abs().maxCoeff();

            const bool flat_ok = deviation <= 1e-12;
            const bool pd_ok = pd.positive_definite && pd.cholesky_ok;
            const bool diag_ok = diag_error <= 1e-12;
            out << std::setprecision(6) << std::scientific;
            out << "flatten vs nested max relative deviation: " << deviation << (flat_ok ? "  PASS" : "  FAIL")
                << '\n';
            out << "min eigenvalue: " << pd.min_eigenvalue << "  (max " << pd.max_eigenvalue << ")"
                << (pd_ok ? "  PASS" : "  FAIL") << '\n';
            out << "unit diagonal max error: " << diag_error << (diag_ok ? "  PASS" : "  FAIL") << '\n';
            out << std::defaultfloat;
            return flat_ok && pd_ok && diag_ok ? 0 : 1;
        }

        int cmd_demo_fallacy(const std::string& data, const std::string& classification, const std::string& level,
                             Index window, bool derive_adj_open, std::ostream& out)
        {
            const auto ds = io::load_dataset(data, classification, {derive_adj_open});
            const auto returns = backtest::overnight_returns(ds.panel);
            const Index available = ds.panel.n_dates() - 1;
            const Index t = window > 0 ? std::min(window, available) : available;
            if (t < 2)
                throw DataError("demo-fallacy needs at least 2 return dates");

            std::vector<Index> stocks;
            for (Index i = 0; i < ds.panel.n_stocks(); ++i)
                if (returns.values.row(i).head(t).allFinite())
                    stocks.push_back(i);
            const auto n = static_cast<Index>(stocks.size());
            if (n < 2)
                throw DataError("demo-fallacy: fewer than 2 stocks with complete history");

            Eigen::MatrixXd r(t, n);
            for (Index k = 0; k < n; ++k)
                r.col(k) = returns.values.row(stocks[k]).head(t).transpose();

            Eigen::MatrixXd loadings;
            if (level == "identity")
                loadings = Eigen::MatrixXd::Identity(n, n);
            else if (level == "intercept")
                loadings = Eigen::MatrixXd::Ones(n, 1);
            else
            {
                std::size_t l = 0;
                if (level == "sub-industry")
                    l = 0;
                else if (level == "industry")
                    l = 1;
                else if (level == "sector")
                    l = 2;
                else
                    throw ValidationError("unknown level '" + level + "'");
                const auto& groups = ds.classification.tree.stock_groups(l);
                Eigen::MatrixXd full = Eigen::MatrixXd::Zero(n, ds.classification.tree.group_count(l));
                for (Index k = 0; k < n; ++k)
                    full(k, groups[stocks[k]]) = 1.0;
                std::vector<Index> keep;
                for (Index c = 0; c < full.cols(); ++c)
                    if (full.col(c).sum() > 0.0)
                        keep.push_back(c);
                loadings.resize(n, static_cast<Index>(keep.size()));
                for (std::size_t c = 0; c < keep.size(); ++c)
                    loadings.col(c) = full.col(keep[c]);
            }

            const auto report = portfolio::fallacy_diagnostics(r, loadings);
            const bool projector_ok =
                report.projector_idempotence_error <= 1e-10 && report.projector_symmetry_error <= 1e-10;
            const bool trace_ok = report.trace_relative_error <= 1e-8;

            std::vector<double> gaps(report.variance_gap.data(), report.variance_gap.data() + n);
            std::sort(gaps.begin(), gaps.end());
            out << "panel: T=" << t << " dates, N=" << n << " stocks, " << loadings.cols() << " factors (" << level
                << ")\n";
            out << std::scientific << std::setprecision(6);
            out << "projector |Q^2-Q| = " << report.projector_idempotence_error
                << ", |Q-Q^T| = " << report.projector_symmetry_error << (projector_ok ? "  PASS" : "  FAIL") << '\n';
            out << "trace: model " << report.model_trace << " vs sample " << report.sample_trace << " (relative "
                << report.trace_relative_error << ")" << (trace_ok ? "  PASS" : "  FAIL") << '\n';
            out << "naive Gamma_ii - C_ii: min " << gaps.front() << ", median " << gaps[gaps.size() / 2] << ", max "
                << gaps.back() << ", mean |gap| " << report.variance_gap.cwiseAbs().mean() << '\n';
            out << std::defaultfloat;
            out << "negative naive specific variances: " << report.negative_specific_count << " of " << n << '\n';
            return projector_ok && trace_ok ? 0 : 1;
        }

        int cmd_synth(const std::string& dir, Index stocks, Index dates, std::uint64_t seed, std::ostream& out)
        {
            synthetic::SyntheticConfig config;
            config.n_stocks = stocks;
            config.n_dates = dates;
            config.seed = seed;
            const auto market = synthetic::generate(config);
            std::error_code ec;
            fs::create_directories(dir, ec);
            if (ec)
                throw DataError("cannot create " + dir + ": " + ec.message());
            io::write_prices(market.panel, fs::path(dir) / "prices.csv");
            io::write_classification(market.classification, fs::path(dir) / "classification.csv");
            out << "wrote " << stocks << " stocks x " << dates << " dates to " << dir << '\n';
            return 0;
        }

    } // namespace

    int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
    {
        CLI::App app{"Nested factor risk models and intraday mean-reversion backtests", "rdoll"};
        app.require_subcommand(1);

        BacktestArgs bt;
        auto* backtest_cmd = app.add_subcommand("backtest", "Run the regression/optimization horse race");
        std::string bt_config;
        backtest_cmd->add_option("--config", bt_config, "Key-value config file; flags override it")
            ->check(CLI::ExistingFile);
        backtest_cmd->add_option("--data", bt.data, "Price CSV (required)");
        backtest_cmd->add_option("--classification", bt.classification, "Classification CSV (required)");
        backtest_cmd->add_option("--out", bt.out, "Output directory")->capture_default_str();
        backtest_cmd->add_option("--lookback", bt.lookback, "ADDV / variance lookback in days")->capture_default_str();
        backtest_cmd->add_option("--universe-size", bt.universe_size, "Top-N by ADDV")->capture_default_str();
        backtest_cmd->add_option("--interval", bt.interval, "Rebalance interval in days")->capture_default_str();
        backtest_cmd->add_option("--investment", bt.investment, "Gross dollar investment I")->capture_default_str();
        backtest_cmd->add_option("--weights", bt.weights, "Ansatz weights: specific,sub-industry,industry,sector,market")
            ->delimiter(',')
            ->capture_default_str();
        backtest_cmd->add_option("--strategies", bt.strategies,
                                 "table1, table2, all, or names like regression-sector-unit, optimization")
            ->delimiter(',')
            ->capture_default_str();
        backtest_cmd->add_option("--jobs", bt.jobs, "Worker threads")->capture_default_str();
        backtest_cmd->add_option("--max-days", bt.max_days, "Simulate only the most recent N dates (0 = all)")
            ->capture_default_str();
        backtest_cmd->add_flag("--derive-adj-open", bt.derive_adj_open,
                               "Derive missing adj_open from open * adj_close / close");

        std::string mc_classification;
        std::vector<double> mc_weights{0.2, 0.2, 0.2, 0.2, 0.2};
        Index mc_cap = risk::kDefaultDenseCap;
        auto* model_cmd = app.add_subcommand("model-check", "Validate the correlation model on a classification");
        model_cmd->add_option("--classification", mc_classification, "Classification CSV")
            ->required()
            ->check(CLI::ExistingFile);
        model_cmd->add_option("--weights", mc_weights, "Ansatz weights")->delimiter(',')->capture_default_str();
        model_cmd->add_option("--dense-cap", mc_cap, "Largest N for dense checks")->capture_default_str();

        std::string df_data, df_classification, df_level = "sub-industry";
        Index df_window = 0;
        bool df_derive = false;
        auto* fallacy_cmd = app.add_subcommand("demo-fallacy", "Show why regression residuals are not specific risk");
        fallacy_cmd->add_option("--data", df_data, "Price CSV")->required()->check(CLI::ExistingFile);
        fallacy_cmd->add_option("--classification", df_classification, "Classification CSV")
            ->required()
            ->check(CLI::ExistingFile);
        fallacy_cmd->add_option("--level", df_level, "identity, intercept, sector, industry or sub-industry")
            ->capture_default_str();
        fallacy_cmd->add_option("--window", df_window, "Number of most recent return dates (0 = all)")
            ->capture_default_str();
        fallacy_cmd->add_flag("--derive-adj-open", df_derive, "Derive missing adj_open");

        std::string sy_out = "synthetic";
        Index sy_stocks = 500, sy_dates = 560;
        std::uint64_t sy_seed = synthetic::SyntheticConfig{}.seed;
        auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic market with planted industry structure");
        synth_cmd->add_option("--out", sy_out, "Output directory")->capture_default_str();
        synth_cmd->add_option("--stocks", sy_stocks, "Number of stocks")->capture_default_str();
        synth_cmd->add_option("--dates", sy_dates, "Number of trading dates")->capture_default_str();
        synth_cmd->add_option("--seed", sy_seed, "RNG seed")->capture_default_str();

        try
        {
            app.parse(argc, argv);
        }
        catch (const CLI::ParseError& e)
        {
            return app.exit(e, out, err);
        }

        try
        {
            if (backtest_cmd->parsed())
            {
                if (!bt_config.empty())
                    apply_config_file(*backtest_cmd, bt_config);
                if (bt.data.empty() || bt.classification.empty())
                    throw ValidationError("backtest needs --data and --classification (flag or config key)");
                return cmd_backtest(bt, backtest_cmd->config_to_str(true, false), out);
            }
            if (model_cmd->parsed())
                return cmd_model_check(mc_classification, mc_weights, mc_cap, out);
            if (fallacy_cmd->parsed())
                return cmd_demo_fallacy(df_data, df_classification, df_level, df_window, df_derive, out);
            if (synth_cmd->parsed())
                return cmd_synth(sy_out, sy_stocks, sy_dates, sy_seed, out);
        }
        catch (const std::exception& e)
        {
            err << "error: " << e.what() << '\n';
            return 1;
        }
        return 1;
    }

} // namespace rdoll::cli
