/**
 * @file data_io.cpp
 * @brief CSV parsing and report persistence
 */

#include "rdoll/data_io.hpp"

#include "rdoll/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace rdoll::io
{

    namespace
    {

        constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

        std::vector<std::string> split(const std::string& line)
        {
            std::vector<std::string> out;
            std::string field;
            std::istringstream ss(line);
            while (std::getline(ss, field, ','))
                out.push_back(field);
            if (!line.empty() && line.back() == ',')
                out.emplace_back();
            return out;
        }

        std::string trim(std::string s)
        {
            const auto not_space = [](unsigned char c) { return !std::isspace(c); };
            s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
            s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
            return s;
        }

        bool next_line(std::istream& in, std::string& line)
        {
            if (!std::getline(in, line))
                return false;
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            return true;
        }

        std::string at_line(std::size_t line_no)
        {
            return "line " + std::to_string(line_no) + ": ";
        }

        double parse_double(const std::string& text, const char* field, std::size_t line_no)
        {
            double value = 0.0;
            const char* first = text.data();
            const char* last = text.data() + text.size();
            if (!text.empty() && *first == '+')
                ++first;
            const auto [ptr, ec] = std::from_chars(first, last, value);
            if (text.empty() || ec != std::errc() || ptr != last)
                throw DataError(at_line(line_no) + "cannot parse " + field + " '" + text + "'");
            return value;
        }

        bool is_iso_date(const std::string& s)
        {
            if (s.size() != 10 || s[4] != '-' || s[7] != '-')
                return false;
            for (std::size_t k : {0, 1, 2, 3, 5, 6, 8, 9})
                if (!std::isdigit(static_cast<unsigned char>(s[k])))
                    return false;
            return true;
        }

        void expect_header(std::istream& in, const std::string& expected, const std::string& what)
        {
            std::string line;
            if (!next_line(in, line))
                throw DataError(what + ": empty file");
            if (trim(line) != expected)
                throw DataError(what + ": line 1: expected header '" + expected + "', got '" + line + "'");
        }

        std::ifstream open_input(const std::filesystem::path& path)
        {
            std::ifstream in(path, std::ios::binary);
            if (!in)
                throw DataError("cannot open " + path.string());
            return in;
        }

        std::ofstream open_output(const std::filesystem::path& path)
        {
            std::ofstream out(path, std::ios::binary | std::ios::trunc);
            if (!out)
                throw DataError("cannot write " + path.string());
            return out;
        }

        std::string format_optional(const std::optional<double>& v)
        {
            return v ? format_double(*v) : std::string("undefined");
        }

        std::optional<double> parse_optional(const std::string& text, const char* field, std::size_t line_no)
        {
            if (text == "undefined")
                return std::nullopt;
            return parse_double(text, field, line_no);
        }

        struct Fnv
        {
            std::uint64_t state = 1469598103934665603ULL;

            void bytes(const void* data, std::size_t n)
            {
                const auto* p = static_cast<const unsigned char*>(data);
                for (std::size_t k = 0; k < n; ++k)
                {
                    state ^= p[k];
                    state *= 1099511628211ULL;
                }
            }
            void text(const std::string& s)
            {
                bytes(s.data(), s.size());
                bytes("\0", 1);
            }
            void matrix(const Eigen::MatrixXd& m)
            {
                for (Index j = 0; j < m.cols(); ++j)
                    for (Index i = 0; i < m.rows(); ++i)
                    {
                        const double v = std::isnan(m(i, j)) ? kNaN : m(i, j);
                        bytes(&v, sizeof v);
                    }
            }
        };

    } // namespace

    std::string format_double(double value)
    {
        if (std::isnan(value))
            return "nan";
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", value);
        return buf;
    }

    LoadedPrices read_prices(std::istream& in, const PriceLoadOptions& options)
    {
        expect_header(in, "date,ticker,open,close,adj_open,adj_close,volume", "prices");

        struct Row
        {
            double open, close, adj_open, adj_close, volume;
        };
        std::map<std::string, std::map<std::string, Row>> by_ticker;
        std::set<std::string> all_dates;
        bool derived = false;

        std::string line;
        std::size_t line_no = 1;
        while (next_line(in, line))
        {
            ++line_no;
            if (trim(line).empty())
                continue;
            const auto f = split(line);
            if (f.size() != 7)
                throw DataError(at_line(line_no) + "expected 7 fields, got " + std::to_string(f.size()));
            const std::string date = trim(f[0]);
            const std::string ticker = trim(f[1]);
            if (!is_iso_date(date))
                throw DataError(at_line(line_no) + "date '" + date + "' is not YYYY-MM-DD");
            if (ticker.empty())
                throw DataError(at_line(line_no) + "empty ticker");

            Row row{};
            row.open = parse_double(trim(f[2]), "open", line_no);
            row.close = parse_double(trim(f[3]), "close", line_no);
            row.adj_close = parse_double(trim(f[5]), "adj_close", line_no);
            row.volume = parse_double(trim(f[6]), "volume", line_no);
            const std::string adj_open = trim(f[4]);
            if (adj_open.empty() && options.derive_adj_open)
            {
                row.adj_open = row.open * (row.adj_close / row.close);
                derived = true;
            }
            else
            {
                row.adj_open = parse_double(adj_open, "adj_open", line_no);
            }
            const std::pair<const char*, double> prices[] = {
                {"open", row.open}, {"close", row.close}, {"adj_open", row.adj_open}, {"adj_close", row.adj_close}};
            for (const auto& [name, v] : prices)
                if (!(v > 0.0) || !std::isfinite(v))
                    throw DataError(at_line(line_no) + name + " price " + format_double(v) + " must be positive");
            if (!(row.volume >= 0.0) || !std::isfinite(row.volume))
                throw DataError(at_line(line_no) + "volume must be >= 0");

            if (!by_ticker[ticker].emplace(date, row).second)
                throw DataError(at_line(line_no) + "duplicate row for " + ticker + " on " + date);
            all_dates.insert(date);
        }

        LoadedPrices out;
        out.adj_open_derived = derived;
        auto& p = out.panel;
        p.dates.assign(all_dates.rbegin(), all_dates.rend());
        std::unordered_map<std::string, Index> date_index;
        for (std::size_t s = 0; s < p.dates.size(); ++s)
            date_index[p.dates[s]] = static_cast<Index>(s);
        const auto n = static_cast<Index>(by_ticker.size());
        for (auto* m : {&p.open, &p.close, &p.adj_open, &p.adj_close, &p.volume})
            m->setConstant(n, p.n_dates(), kNaN);
        Index i = 0;
        for (const auto& [ticker, rows] : by_ticker)
        {
            p.tickers.push_back(ticker);
            for (const auto& [date, r] : rows)
            {
                const Index s = date_index[date];
                p.open(i, s) = r.open;
                p.close(i, s) = r.close;
                p.adj_open(i, s) = r.adj_open;
                p.adj_close(i, s) = r.adj_close;
                p.volume(i, s) = r.volume;
            }
            ++i;
        }
        return out;
    }

    LoadedPrices load_prices(const std::filesystem::path& path, const PriceLoadOptions& options)
    {
        auto in = open_input(path);
        return read_prices(in, options);
    }

    Classification read_classification(std::istream& in, std::span<const std::string> tickers)
    {
        expect_header(in, "ticker,sector,industry,sub_industry", "classification");

        struct Row
        {
            std::string ticker;
            std::array<std::string, 3> labels; // sub_industry, industry, sector
        };
        std::vector<Row> rows;
        std::unordered_map<std::string, std::size_t> row_of;
        std::array<std::unordered_map<std::string, std::string>, 2> parent; // sub->ind, ind->sec

        std::string line;
        std::size_t line_no = 1;
        while (next_line(in, line))
        {
            ++line_no;
            if (trim(line).empty())
                continue;
            const auto f = split(line);
            if (f.size() != 4)
                throw DataError(at_line(line_no) + "expected 4 fields, got " + std::to_string(f.size()));
            Row row{trim(f[0]), {trim(f[3]), trim(f[2]), trim(f[1])}};
            if (row.ticker.empty())
                throw DataError(at_line(line_no) + "empty ticker");
            for (std::size_t l = 0; l < 3; ++l)
                if (row.labels[l].empty())
                    throw DataError(at_line(line_no) + "empty " + kLevelNames[l] + " for " + row.ticker);
            if (!row_of.emplace(row.ticker, rows.size()).second)
                throw DataError(at_line(line_no) + "duplicate classification for " + row.ticker);
            for (std::size_t l = 0; l < 2; ++l)
            {
                const auto [it, inserted] = parent[l].emplace(row.labels[l], row.labels[l + 1]);
                if (!inserted && it->second != row.labels[l + 1])
                    throw TaxonomyError(at_line(line_no) + std::string(kLevelNames[l]) + " '" + row.labels[l] +
                                        "' belongs to both " + kLevelNames[l + 1] + " '" + it->second + "' and '" +
                                        row.labels[l + 1] + "'");
            }
            rows.push_back(std::move(row));
        }

        Classification out;
        std::vector<char> selected(rows.size(), 0);
        std::vector<std::size_t> order;
        if (tickers.empty())
        {
            for (std::size_t r = 0; r < rows.size(); ++r)
                order.push_back(r);
        }
        else
        {
            for (const auto& t : tickers)
            {
                const auto it = row_of.find(t);
                if (it == row_of.end())
                    out.excluded.push_back(t);
                else
                    order.push_back(it->second);
            }
        }
        if (order.empty())
            throw DataError("classification: no requested ticker is classified");
        for (std::size_t r : order)
            selected[r] = 1;

        std::array<std::unordered_map<std::string, int>, 3> ids;
        for (std::size_t r = 0; r < rows.size(); ++r)
        {
            if (!selected[r])
                continue;
            for (std::size_t l = 0; l < 3; ++l)
            {
                const auto& label = rows[r].labels[l];
                if (ids[l].emplace(label, static_cast<int>(out.labels[l].size())).second)
                    out.labels[l].push_back(label);
            }
        }

        std::vector<std::vector<int>> maps(3);
        for (std::size_t r : order)
        {
            out.tickers.push_back(rows[r].ticker);
            maps[0].push_back(ids[0].at(rows[r].labels[0]));
        }
        for (std::size_t l = 1; l < 3; ++l)
            for (const auto& child : out.labels[l - 1])
                maps[l].push_back(ids[l].at(parent[l - 1].at(child)));
        std::vector<int> counts;
        for (const auto& labels : out.labels)
            counts.push_back(static_cast<int>(labels.size()));
        out.tree = taxonomy::ClassificationTree(static_cast<Index>(order.size()), std::move(maps), std::move(counts));
        return out;
    }

    Classification load_classification(const std::filesystem::path& path, std::span<const std::string> tickers)
    {
        auto in = open_input(path);
        return read_classification(in, tickers);
    }

    std::uint64_t checksum(const backtest::PricePanel& panel, const taxonomy::ClassificationTree& tree)
    {
        Fnv h;
        for (const auto& t : panel.tickers)
            h.text(t);
        for (const auto& d : panel.dates)
            h.text(d);
        for (const auto* m : {&panel.open, &panel.close, &panel.adj_open, &panel.adj_close, &panel.volume})
            h.matrix(*m);
        for (std::size_t l = 0; l < tree.depth(); ++l)
            for (int g : tree.parent_map(l))
                h.bytes(&g, sizeof g);
        return h.state;
    }

    Dataset load_dataset(const std::filesystem::path& prices, const std::filesystem::path& classification,
                         const PriceLoadOptions& options)
    {
        auto loaded = load_prices(prices, options);
        Dataset ds;
        ds.classification = load_classification(classification, loaded.panel.tickers);

        std::unordered_map<std::string, Index> row;
        for (Index i = 0; i < loaded.panel.n_stocks(); ++i)
            row[loaded.panel.tickers[i]] = i;
        std::vector<Index> keep;
        for (const auto& t : ds.classification.tickers)
            keep.push_back(row.at(t));
        ds.panel = loaded.panel.select_stocks(keep);

        auto& m = ds.manifest;
        m.price_path = prices.string();
        m.classification_path = classification.string();
        if (!ds.panel.dates.empty())
        {
            m.first_date = ds.panel.dates.back();
            m.last_date = ds.panel.dates.front();
        }
        m.ticker_count = ds.panel.tickers.size();
        m.adj_open_derived = loaded.adj_open_derived;
        m.excluded = ds.classification.excluded;
        m.checksum = checksum(ds.panel, ds.classification.tree);
        return ds;
    }

    void write_report(const backtest::BacktestReport& report, const std::filesystem::path& dir)
    {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec)
            throw DataError("cannot create " + dir.string() + ": " + ec.message());

        auto metrics = open_output(dir / "metrics.csv");
        metrics << "strategy,roc,sr,cps\n";
        for (const auto& s : report.strategies)
            metrics << s.name << ',' << format_double(s.metrics.roc) << ',' << format_optional(s.metrics.sharpe) << ','
                    << format_optional(s.metrics.cps) << '\n';

        auto pnl = open_output(dir / "pnl_daily.csv");
        pnl << "date,strategy,pnl,shares,gross,net\n";
        const std::size_t n_days = report.strategies.empty() ? 0 : report.strategies.front().days.size();
        for (std::size_t d = 0; d < n_days; ++d)
            for (const auto& s : report.strategies)
            {
                const auto& r = s.days.at(d);
                pnl << r.date << ',' << s.name << ',' << format_double(r.pnl) << ',' << format_double(r.shares) << ','
                    << format_double(r.gross) << ',' << format_double(r.net) << '\n';
            }
        if (!metrics || !pnl)
            throw DataError("failed writing report to " + dir.string());
    }

    std::vector<MetricsRow> read_metrics(const std::filesystem::path& path)
    {
        auto in = open_input(path);
        expect_header(in, "strategy,roc,sr,cps", "metrics");
        std::vector<MetricsRow> out;
        std::string line;
        std::size_t line_no = 1;
        while (next_line(in, line))
        {
            ++line_no;
            if (line.empty())
                continue;
            const auto f = split(line);
            if (f.size() != 4)
                throw DataError(at_line(line_no) + "expected 4 fields");
            out.push_back({f[0], parse_double(f[1], "roc", line_no), parse_optional(f[2], "sr", line_no),
                           parse_optional(f[3], "cps", line_no)});
        }
        return out;
    }

    void write_prices(const backtest::PricePanel& panel, const std::filesystem::path& path)
    {
        auto out = open_output(path);
        out << "date,ticker,open,close,adj_open,adj_close,volume\n";
        for (Index s = panel.n_dates() - 1; s >= 0; --s)
            for (Index i = 0; i < panel.n_stocks(); ++i)
            {
                if (std::isnan(panel.open(i, s)))
                    continue;
                out << panel.dates[s] << ',' << panel.tickers[i] << ',' << format_double(panel.open(i, s)) << ','
                    << format_double(panel.close(i, s)) << ',' << format_double(panel.adj_open(i, s)) << ','
                    << format_double(panel.adj_close(i, s)) << ',' << format_double(panel.volume(i, s)) << '\n';
            }
        if (!out)
            throw DataError("failed writing " + path.string());
    }

    void write_classification(const Classification& c, const std::filesystem::path& path)
    {
        auto out = open_output(path);
        out << "ticker,sector,industry,sub_industry\n";
        for (Index i = 0; i < c.tree.n_stocks(); ++i)
            out << c.tickers[i] << ',' << c.labels[2][c.tree.stock_groups(2)[i]] << ','
                << c.labels[1][c.tree.stock_groups(1)[i]] << ',' << c.labels[0][c.tree.stock_groups(0)[i]] << '\n';
        if (!out)
            throw DataError("failed writing " + path.string());
    }

    void write_label_map(const Classification& c, const std::filesystem::path& path)
    {
        auto out = open_output(path);
        out << "level,index,label\n";
        for (std::size_t l = 0; l < 3; ++l)
            for (std::size_t g = 0; g < c.labels[l].size(); ++g)
                out << kLevelNames[l] << ',' << g << ',' << c.labels[l][g] << '\n';
    }

    void write_matrix_csv(const Eigen::MatrixXd& matrix, const std::filesystem::path& path)
    {
        auto out = open_output(path);
        for (Index i = 0; i < matrix.rows(); ++i)
        {
            for (Index j = 0; j < matrix.cols(); ++j)
                out << (j ? "," : "") << format_double(matrix(i, j));
            out << '\n';
        }
        if (!out)
            throw DataError("failed writing " + path.string());
    }

    Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path)
    {
        auto in = open_input(path);
        std::vector<std::vector<double>> rows;
        std::string line;
        std::size_t line_no = 0;
        while (next_line(in, line))
        {
            ++line_no;
            if (trim(line).empty())
                continue;
            std::vector<double> row;
            for (const auto& f : split(line))
                row.push_back(parse_double(trim(f), "matrix entry", line_no));
            if (!rows.empty() && row.size() != rows.front().size())
                throw DataError(path.string() + ": " + at_line(line_no) + "ragged matrix row");
            rows.push_back(std::move(row));
        }
        const auto n = static_cast<Index>(rows.size());
        const auto m = n ? static_cast<Index>(rows.front().size()) : 0;
        Eigen::MatrixXd out(n, m);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < m; ++j)
                out(i, j) = rows[i][j];
        return out;
    }

    ModelSpec read_model_spec(std::istream& in, const std::filesystem::path& base_dir)
    {
        ModelSpec spec;
        std::string line;
        std::size_t line_no = 0;
        while (next_line(in, line))
        {
            ++line_no;
            if (const auto hash = line.find('#'); hash != std::string::npos)
                line.resize(hash);
            if (trim(line).empty())
                continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw DataError("model spec: " + at_line(line_no) + "expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key == "weights")
            {
                spec.weights.clear();
                for (const auto& f : split(value))
                    spec.weights.push_back(parse_double(trim(f), "weight", line_no));
            }
            else if (key == "terminal")
            {
                if (value != "scalar-x" && value != "none" && value != "explicit-fcm")
                    throw DataError("model spec: " + at_line(line_no) + "unknown terminal '" + value + "'");
                spec.terminal = value;
            }
            else if (key == "fcm")
            {
                spec.fcm_path = base_dir / value;
            }
            else if (key == "style_loadings")
            {
                spec.style_loadings_path = base_dir / value;
            }
            else
            {
                throw DataError("model spec: " + at_line(line_no) + "unknown key '" + key + "'");
            }
        }
        return spec;
    }

    ModelSpec load_model_spec(const std::filesystem::path& path)
    {
        auto in = open_input(path);
        return read_model_spec(in, path.parent_path());
    }

    risk::NestedRiskModel build_model(const ModelSpec& spec, const taxonomy::ClassificationTree& tree)
    {
        if (spec.terminal == "explicit-fcm")
        {
            if (spec.weights.size() != 3)
                throw ValidationError("explicit-fcm model needs 3 weights (specific, sub-industry, industry)");
            if (spec.fcm_path.empty())
                throw ValidationError("explicit-fcm model needs an fcm path");
            const Eigen::MatrixXd fcm = read_matrix_csv(spec.fcm_path);
            const Eigen::MatrixXd styles = spec.style_loadings_path.empty()
                                               ? Eigen::MatrixXd(tree.n_stocks(), 0)
                                               : read_matrix_csv(spec.style_loadings_path);
            return risk::extend_with_style(
                tree, styles, fcm, Eigen::VectorXd::Constant(tree.n_stocks(), spec.weights[0]),
                Eigen::VectorXd::Constant(tree.sub_industry_count(), spec.weights[1]),
                Eigen::VectorXd::Constant(tree.industry_count(), spec.weights[2]));
        }
        const auto weights = risk::AnsatzWeights::from_vector(spec.weights);
        auto model = risk::heuristic_correlation_model(tree, weights);
        if (spec.terminal == "none")
        {
            if (weights.market != 0.0)
                throw ValidationError("terminal none requires a zero market weight");
            return risk::NestedRiskModel(model.levels(), risk::NoTerminal{});
        }
        return model;
    }

} // namespace rdoll::io
