/**
 * @file synthetic.cpp
 * @brief Synthetic market generator
 */

#include "rdoll/synthetic.hpp"

#include "rdoll/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

namespace rdoll::synthetic
{

    namespace
    {

        using Index = Eigen::Index;

        std::vector<std::string> business_days(Index count)
        {
            using namespace std::chrono;
            std::vector<std::string> out;
            sys_days day = year{2018} / January / 2;
            while (static_cast<Index>(out.size()) < count)
            {
                const weekday wd{day};
                if (wd != Saturday && wd != Sunday)
                {
                    const year_month_day ymd{day};
                    char buf[16];
                    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
                    out.emplace_back(buf);
                }
                day += days{1};
            }
            return out;
        }

        std::string label(const char* prefix, int k, int width = 2)
        {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, k);
            return buf;
        }

    } // namespace

    SyntheticMarket generate(const SyntheticConfig& config)
    {
        const Index n = config.n_stocks;
        const Index n_dates = config.n_dates;
        const int n_sec = config.sectors;
        const int n_ind = n_sec * config.industries_per_sector;
        const int n_sub = n_ind * config.sub_industries_per_industry;
        if (n < n_sub)
            throw ValidationError("synthetic market needs at least one stock per sub-industry");
        if (n_dates < 3)
            throw ValidationError("synthetic market needs at least 3 dates");
        const double idio_share = 1.0 - config.market_share - config.sector_share - config.industry_share -
                                  config.sub_industry_share;
        if (idio_share < 0.0)
            throw ValidationError("synthetic variance shares exceed 1");

        SyntheticMarket out;

        // Classification: stock i -> sub-industry i mod K; contiguous blocks upward.
        auto& cls = out.classification;
        std::vector<std::vector<int>> maps(3);
        for (Index i = 0; i < n; ++i)
        {
            cls.tickers.push_back(label("T", static_cast<int>(i), 4));
            maps[0].push_back(static_cast<int>(i % n_sub));
        }
        for (int b = 0; b < n_sub; ++b)
            maps[1].push_back(b / config.sub_industries_per_industry);
        for (int a = 0; a < n_ind; ++a)
            maps[2].push_back(a / config.industries_per_sector);
        for (int b = 0; b < n_sub; ++b)
            cls.labels[0].push_back(label("SUB", b));
        for (int a = 0; a < n_ind; ++a)
            cls.labels[1].push_back(label("IND", a));
        for (int s = 0; s < n_sec; ++s)
            cls.labels[2].push_back(label("SEC", s));
        cls.tree = taxonomy::ClassificationTree(n, std::move(maps), {n_sub, n_ind, n_sec});
        const auto& g_sub = cls.tree.stock_groups(0);
        const auto& g_ind = cls.tree.stock_groups(1);
        const auto& g_sec = cls.tree.stock_groups(2);

        std::mt19937_64 rng(config.seed);
        std::normal_distribution<double> normal(0.0, 1.0);

        Eigen::VectorXd vol_mult(n), dollar_volume(n), price(n);
        for (Index i = 0; i < n; ++i)
        {
            vol_mult(i) = std::exp(0.4 * normal(rng));
            dollar_volume(i) = std::exp(std::log(2e7) + 1.0 * normal(rng));
            price(i) = std::exp(std::log(40.0) + 0.7 * normal(rng));
        }

        const double a_m = std::sqrt(config.market_share);
        const double a_sec = std::sqrt(config.sector_share);
        const double a_ind = std::sqrt(config.industry_share);
        const double a_sub = std::sqrt(config.sub_industry_share);
        const double a_idio = std::sqrt(idio_share);

        auto& p = out.panel;
        p.tickers = cls.tickers;
        p.dates = business_days(n_dates);
        std::reverse(p.dates.begin(), p.dates.end());
        for (auto* m : {&p.open, &p.close, &p.adj_open, &p.adj_close, &p.volume})
            m->resize(n, n_dates);

        Eigen::VectorXd sec_shock(n_sec), ind_shock(n_ind), sub_shock(n_sub), idio(n);
        auto draw_structure = [&](Eigen::VectorXd& out_z) {
            const double market = normal(rng);
            for (auto* v : {&sec_shock, &ind_shock, &sub_shock})
                for (Index k = 0; k < v->size(); ++k)
                    (*v)(k) = normal(rng);
            for (Index i = 0; i < n; ++i)
                idio(i) = normal(rng);
            for (Index i = 0; i < n; ++i)
                out_z(i) = a_m * market + a_sec * sec_shock(g_sec[i]) + a_ind * ind_shock(g_ind[i]) +
                           a_sub * sub_shock(g_sub[i]) + a_idio * idio(i);
        };

        Eigen::VectorXd overnight(n), intraday(n);
        const Index split_t = n_dates / 2;
        for (Index t = 0; t < n_dates; ++t)
        {
            const Index s = n_dates - 1 - t;
            draw_structure(overnight);
            const Eigen::VectorXd overnight_idio = idio;
            draw_structure(intraday);
            for (Index i = 0; i < n; ++i)
            {
                const double on_vol = config.median_overnight_vol * vol_mult(i);
                const double id_vol = config.median_intraday_vol * vol_mult(i);
                const double open = price(i) * std::exp(on_vol * overnight(i));
                const double close =
                    open * std::exp(-config.reversion * on_vol * a_idio * overnight_idio(i) + id_vol * intraday(i));
                price(i) = close;

                const double split = (config.plant_split && i == 0 && t < split_t) ? 2.0 : 1.0;
                p.adj_open(i, s) = open;
                p.adj_close(i, s) = close;
                p.open(i, s) = open * split;
                p.close(i, s) = close * split;
                const double dollars = dollar_volume(i) * std::exp(0.3 * normal(rng));
                p.volume(i, s) = std::round(dollars / p.close(i, s));
            }
        }
        return out;
    }

} // namespace rdoll::synthetic
