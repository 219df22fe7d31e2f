/**
 * @file data_io.hpp
 * @brief CSV loading of prices and classifications, report and matrix persistence
 *
 * Price CSV:          date,ticker,open,close,adj_open,adj_close,volume
 * Classification CSV: ticker,sector,industry,sub_industry
 * metrics.csv:        strategy,roc,sr,cps
 * pnl_daily.csv:      date,strategy,pnl,shares,gross,net
 *
 * Dates are ISO-8601 (YYYY-MM-DD). Floats are written with 17 significant digits
 * so every file round-trips bit-for-bit.
 */

#pragma once

#include "rdoll/backtest.hpp"
#include "rdoll/risk_model.hpp"
#include "rdoll/taxonomy.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rdoll::io
{

    using Index = Eigen::Index;

    struct PriceLoadOptions
    {
        /// Fill an empty adj_open field with open * adj_close / close.
        bool derive_adj_open = false;
    };

    struct LoadedPrices
    {
        backtest::PricePanel panel; ///< tickers sorted, dates latest first
        bool adj_open_derived = false;
    };

    /// @throws DataError with the 1-based line number on malformed input.
    LoadedPrices read_prices(std::istream& in, const PriceLoadOptions& options = {});
    LoadedPrices load_prices(const std::filesystem::path& path, const PriceLoadOptions& options = {});

    /// Level names in tree order (finest first).
    inline constexpr std::array<const char*, 3> kLevelNames{"sub_industry", "industry", "sector"};

    struct Classification
    {
        taxonomy::ClassificationTree tree;
        std::vector<std::string> tickers;                   ///< classified tickers, tree stock order
        std::vector<std::string> excluded;                  ///< requested tickers without a classification row
        std::array<std::vector<std::string>, 3> labels;     ///< interned labels per level, index = group id
    };

    /**
     * @brief Reads a classification and interns labels in first-seen order.
     *
     * When tickers is nonempty only those tickers are classified, in that order;
     * otherwise every row is used in file order.
     * @throws TaxonomyError when a label has two different parents.
     */
    Classification read_classification(std::istream& in, std::span<const std::string> tickers = {});
    Classification load_classification(const std::filesystem::path& path, std::span<const std::string> tickers = {});

    struct DataManifest
    {
        std::string price_path;
        std::string classification_path;
        std::string first_date;
        std::string last_date;
        std::size_t ticker_count = 0;
        std::uint64_t checksum = 0; ///< FNV-1a over the parsed panel and tree
        bool adj_open_derived = false;
        std::vector<std::string> excluded;
    };

    struct Dataset
    {
        backtest::PricePanel panel; ///< classified stocks only, tree order
        Classification classification;
        DataManifest manifest;
    };

    /// Loads both files and drops unclassified tickers from the panel.
    Dataset load_dataset(const std::filesystem::path& prices, const std::filesystem::path& classification,
                         const PriceLoadOptions& options = {});

    std::uint64_t checksum(const backtest::PricePanel& panel, const taxonomy::ClassificationTree& tree);

    /// 17-significant-digit formatting; "nan" for NaN.
    std::string format_double(double value);

    /// Writes metrics.csv and pnl_daily.csv. @throws DataError when the directory is unwritable.
    void write_report(const backtest::BacktestReport& report, const std::filesystem::path& dir);

    struct MetricsRow
    {
        std::string strategy;
        double roc = 0.0;
        std::optional<double> sharpe;
        std::optional<double> cps;
    };

    std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

    void write_prices(const backtest::PricePanel& panel, const std::filesystem::path& path);
    void write_classification(const Classification& classification, const std::filesystem::path& path);
    void write_label_map(const Classification& classification, const std::filesystem::path& path);

    void write_matrix_csv(const Eigen::MatrixXd& matrix, const std::filesystem::path& path);
    Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);

    /**
     * @brief Key-value model description
     *
     *     weights = 0.2,0.2,0.2,0.2,0.2   # specific, sub-industry, industry, sector, market
     *     terminal = scalar-x | none | explicit-fcm
     *     fcm = sector_fcm.csv            # explicit-fcm only: (L+U) x (L+U)
     *     style_loadings = styles.csv     # optional N x U, explicit-fcm only
     *
     * With scalar-x the last weight is X; with none it must be 0. With
     * explicit-fcm the weights list specific, sub-industry and industry only.
     */
    struct ModelSpec
    {
        std::vector<double> weights{0.2, 0.2, 0.2, 0.2, 0.2};
        std::string terminal = "scalar-x";
        std::filesystem::path fcm_path;
        std::filesystem::path style_loadings_path;
    };

    ModelSpec read_model_spec(std::istream& in, const std::filesystem::path& base_dir = {});
    ModelSpec load_model_spec(const std::filesystem::path& path);

    /// @throws ValidationError / DimensionError when the spec does not fit the tree.
    risk::NestedRiskModel build_model(const ModelSpec& spec, const taxonomy::ClassificationTree& tree);

} // namespace rdoll::io
