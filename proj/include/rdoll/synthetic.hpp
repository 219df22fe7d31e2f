/**
 * @file synthetic.hpp
 * @brief Seeded synthetic market with a planted sector/industry/sub-industry structure
 *
 * Overnight log returns are
 *
 *     R_is = vol_i * (a_m m_s + a_sec u_{sec(i),s} + a_ind v_{ind(i),s} + a_sub w_{sub(i),s} + a_idio x_is)
 *
 * with independent standard normal shocks. The following open-to-close move
 * partially reverts the idiosyncratic overnight component only,
 *
 *     ln(P^C/P^O)_is = -reversion * vol_i * a_idio * x_is + intraday noise with the same factor structure,
 *
 * so alphas that strip group moves from the overnight return (and hedge group
 * risk) are rewarded. Volatilities and dollar volumes are log-normal across stocks.
 */

#pragma once

#include "rdoll/backtest.hpp"
#include "rdoll/data_io.hpp"

#include <cstdint>

namespace rdoll::synthetic
{

    struct SyntheticConfig
    {
        Eigen::Index n_stocks = 500;
        Eigen::Index n_dates = 560;
        int sectors = 6;
        int industries_per_sector = 3;
        int sub_industries_per_industry = 3;
        /// Variance shares of market, sector, industry, sub-industry, idiosyncratic (sum to 1).
        double market_share = 0.2;
        double sector_share = 0.2;
        double industry_share = 0.2;
        double sub_industry_share = 0.2;
        double reversion = 0.25;
        double median_overnight_vol = 0.012;
        double median_intraday_vol = 0.015;
        /// Stock 0 splits 2:1 in the middle of the sample (unadjusted columns only).
        bool plant_split = true;
        std::uint64_t seed = 20141214;
    };

    struct SyntheticMarket
    {
        backtest::PricePanel panel;
        io::Classification classification;
    };

    SyntheticMarket generate(const SyntheticConfig& config);

} // namespace rdoll::synthetic
