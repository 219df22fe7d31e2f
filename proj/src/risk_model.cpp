/**
 * @file risk_model.cpp
 * @brief Nested factor models, flattening and the binary closed form
 */

#include "rdoll/risk_model.hpp"

#include "rdoll/errors.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace rdoll::risk
{

    namespace
    {

        std::string shape(const Eigen::MatrixXd& m)
        {
            return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
        }

        double asymmetry(const Eigen::MatrixXd& m)
        {
            const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
            return (m - m.transpose()).cwiseAbs().maxCoeff() / scale;
        }

        void check_variances(const Eigen::VectorXd& v, const std::string& what)
        {
            for (Index i = 0; i < v.size(); ++i)
                if (!std::isfinite(v(i)) || v(i) < 0.0)
                    throw ValidationError(what + " " + std::to_string(i) + " is " + std::to_string(v(i)) +
                                          ", must be finite and >= 0");
        }

        Eigen::MatrixXd block_diagonal(const std::vector<Eigen::MatrixXd>& blocks)
        {
            Index n = 0;
            for (const auto& b : blocks)
                n += b.rows();
            Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
            Index at = 0;
            for (const auto& b : blocks)
            {
                out.block(at, at, b.rows(), b.cols()) = b;
                at += b.rows();
            }
            return out;
        }

    } // namespace

    NestedRiskModel::NestedRiskModel(std::vector<FactorModelLevel> levels, Terminal terminal)
        : levels_(std::move(levels)), terminal_(std::move(terminal))
    {
        if (levels_.empty())
            throw DimensionError("nested model needs at least one level");
        for (std::size_t l = 0; l < levels_.size(); ++l)
        {
            const auto& lv = levels_[l];
            const std::string name = "level " + std::to_string(l);
            if (lv.specific_variances.size() != lv.loadings.rows())
                throw DimensionError(name + ": " + std::to_string(lv.specific_variances.size()) +
                                     " specific variances for loadings " + shape(lv.loadings));
            if (l + 1 < levels_.size() && lv.loadings.cols() != levels_[l + 1].loadings.rows())
                throw DimensionError(name + ": loadings " + shape(lv.loadings) + " do not chain into level " +
                                     std::to_string(l + 1) + " loadings " + shape(levels_[l + 1].loadings));
            check_variances(lv.specific_variances, name + " specific variance");
        }
        const Index inner = levels_.back().loadings.cols();
        if (const auto* fcm = std::get_if<ExplicitFcm>(&terminal_))
        {
            if (fcm->matrix.rows() != inner || fcm->matrix.cols() != inner)
                throw DimensionError("terminal FCM is " + shape(fcm->matrix) + ", expected " +
                                     std::to_string(inner) + "x" + std::to_string(inner));
            const auto pd = check_positive_definite(fcm->matrix);
            if (!pd.positive_semidefinite)
                throw ValidationError("terminal FCM is not positive semidefinite (min eigenvalue " +
                                      std::to_string(pd.min_eigenvalue) + ")");
        }
        else if (const auto* sv = std::get_if<ScalarVariance>(&terminal_))
        {
            if (!std::isfinite(sv->x) || sv->x < 0.0)
                throw ValidationError("terminal variance X must be finite and >= 0");
        }
    }

    Eigen::MatrixXd NestedRiskModel::terminal_fcm() const
    {
        const Index inner = levels_.back().loadings.cols();
        if (const auto* fcm = std::get_if<ExplicitFcm>(&terminal_))
            return fcm->matrix;
        if (const auto* sv = std::get_if<ScalarVariance>(&terminal_))
            return Eigen::MatrixXd::Constant(inner, inner, sv->x);
        return Eigen::MatrixXd::Zero(inner, inner);
    }

    Eigen::MatrixXd NestedRiskModel::nested_expansion() const
    {
        Eigen::MatrixXd inner = terminal_fcm();
        for (auto it = levels_.rbegin(); it != levels_.rend(); ++it)
            inner = gamma(*it, inner);
        return inner;
    }

    Eigen::MatrixXd FlatFactorModel::covariance(Index cap) const
    {
        return gamma(*this, cap);
    }

    Eigen::VectorXd FlatFactorModel::apply(const Eigen::VectorXd& v) const
    {
        if (v.size() != n_stocks())
            throw DimensionError("apply: vector length " + std::to_string(v.size()) + " vs N=" +
                                 std::to_string(n_stocks()));
        Eigen::VectorXd out = specific_variances.cwiseProduct(v);
        out.noalias() += loadings * (fcm * (loadings.transpose() * v));
        return out;
    }

    FlatFactorModel FlatFactorModel::select_rows(std::span<const Index> rows) const
    {
        const auto n = static_cast<Index>(rows.size());
        Eigen::MatrixXd sub(n, n_factors());
        Eigen::VectorXd spec(n);
        for (Index r = 0; r < n; ++r)
        {
            if (rows[r] < 0 || rows[r] >= n_stocks())
                throw DimensionError("select_rows: row " + std::to_string(rows[r]) + " out of range");
            sub.row(r) = loadings.row(rows[r]);
            spec(r) = specific_variances(rows[r]);
        }
        std::vector<Index> keep;
        for (Index c = 0; c < sub.cols(); ++c)
            if (sub.col(c).cwiseAbs().maxCoeff() > 0.0)
                keep.push_back(c);
        FlatFactorModel out;
        out.loadings.resize(n, static_cast<Index>(keep.size()));
        out.fcm.resize(static_cast<Index>(keep.size()), static_cast<Index>(keep.size()));
        for (std::size_t a = 0; a < keep.size(); ++a)
        {
            out.loadings.col(a) = sub.col(keep[a]);
            for (std::size_t b = 0; b < keep.size(); ++b)
                out.fcm(a, b) = fcm(keep[a], keep[b]);
        }
        out.specific_variances = std::move(spec);
        return out;
    }

    Eigen::MatrixXd gamma(const FactorModelLevel& level, const Eigen::MatrixXd& fcm)
    {
        const auto& omega = level.loadings;
        if (fcm.rows() != omega.cols() || fcm.cols() != omega.cols())
            throw DimensionError("gamma: FCM " + shape(fcm) + " does not match loadings " + shape(omega));
        if (level.specific_variances.size() != omega.rows())
            throw DimensionError("gamma: specific variances do not match loadings " + shape(omega));
        Eigen::MatrixXd out = omega * fcm * omega.transpose();
        out.diagonal() += level.specific_variances;
        return out;
    }

    Eigen::MatrixXd gamma(const FlatFactorModel& model, Index cap)
    {
        if (model.n_stocks() > cap)
            throw ValidationError("dense covariance refused: N=" + std::to_string(model.n_stocks()) +
                                  " exceeds cap " + std::to_string(cap));
        return gamma(FactorModelLevel{model.loadings, model.specific_variances}, model.fcm);
    }

    FlatFactorModel flatten(const NestedRiskModel& model)
    {
        const auto& levels = model.levels();
        const bool has_terminal = !std::holds_alternative<NoTerminal>(model.terminal());

        std::vector<Eigen::MatrixXd> cumulative;
        cumulative.push_back(levels.front().loadings);
        for (std::size_t l = 1; l < levels.size(); ++l)
            cumulative.push_back(cumulative.back() * levels[l].loadings);

        std::vector<Eigen::MatrixXd> blocks;
        for (std::size_t l = 1; l < levels.size(); ++l)
            blocks.push_back(levels[l].specific_variances.asDiagonal());
        if (has_terminal)
            blocks.push_back(model.terminal_fcm());
        else
            cumulative.pop_back();

        Index m = 0;
        for (const auto& c : cumulative)
            m += c.cols();
        FlatFactorModel flat;
        flat.loadings.resize(model.n_stocks(), m);
        Index at = 0;
        for (const auto& c : cumulative)
        {
            flat.loadings.middleCols(at, c.cols()) = c;
            at += c.cols();
        }
        flat.fcm = block_diagonal(blocks);
        flat.specific_variances = levels.front().specific_variances;
        return flat;
    }

    double binary_gamma_entry(const taxonomy::ClassificationTree& tree, const BinaryVariances& variances,
                              Index i, Index j)
    {
        double value = variances.market;
        if (i == j)
            value += variances.specific(i);
        for (std::size_t l = 0; l < tree.depth(); ++l)
        {
            const auto& groups = tree.stock_groups(l);
            if (groups[i] == groups[j])
                value += variances.level_variances[l](groups[i]);
        }
        return value;
    }

    Eigen::MatrixXd binary_gamma(const taxonomy::ClassificationTree& tree, const BinaryVariances& variances)
    {
        const Index n = tree.n_stocks();
        if (variances.specific.size() != n || variances.level_variances.size() != tree.depth())
            throw DimensionError("binary_gamma: variances do not match the tree");
        Eigen::MatrixXd out(n, n);
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < n; ++i)
                out(i, j) = binary_gamma_entry(tree, variances, i, j);
        return out;
    }

    AnsatzWeights AnsatzWeights::equal_fifths()
    {
        return AnsatzWeights{0.2, {0.2, 0.2, 0.2}, 0.2};
    }

    AnsatzWeights AnsatzWeights::half_and_half()
    {
        return AnsatzWeights{0.5, {0.5, 0.0, 0.0}, 0.0};
    }

    std::vector<double> AnsatzWeights::to_vector() const
    {
        std::vector<double> out{specific};
        out.insert(out.end(), levels.begin(), levels.end());
        out.push_back(market);
        return out;
    }

    AnsatzWeights AnsatzWeights::from_vector(std::span<const double> values)
    {
        if (values.size() < 2)
            throw ValidationError("Ansatz weights need at least a specific and a market entry");
        return AnsatzWeights{values.front(), {values.begin() + 1, values.end() - 1}, values.back()};
    }

    void validate_weights(const AnsatzWeights& weights, std::size_t tree_depth)
    {
        if (weights.levels.size() != tree_depth)
            throw ValidationError("Ansatz has " + std::to_string(weights.levels.size()) +
                                  " level weights for a tree with " + std::to_string(tree_depth) + " levels");
        const auto all = weights.to_vector();
        for (double w : all)
            if (!std::isfinite(w) || w < 0.0)
                throw ValidationError("Ansatz weight " + std::to_string(w) + " is negative or not finite");
        const double total = std::accumulate(all.begin(), all.end(), 0.0);
        if (std::abs(total - 1.0) > 1e-12)
            throw ValidationError("Ansatz weights sum to " + std::to_string(total) + ", must sum to 1");
    }

    BinaryVariances ansatz_variances(const taxonomy::ClassificationTree& tree, const AnsatzWeights& weights)
    {
        validate_weights(weights, tree.depth());
        BinaryVariances out;
        out.specific = Eigen::VectorXd::Constant(tree.n_stocks(), weights.specific);
        for (std::size_t l = 0; l < tree.depth(); ++l)
            out.level_variances.push_back(Eigen::VectorXd::Constant(tree.group_count(l), weights.levels[l]));
        out.market = weights.market;
        return out;
    }

    NestedRiskModel heuristic_correlation_model(const taxonomy::ClassificationTree& tree,
                                                const AnsatzWeights& weights)
    {
        const auto vars = ansatz_variances(tree, weights);
        std::vector<FactorModelLevel> levels;
        levels.push_back({tree.level_loadings(0).dense(), vars.specific});
        for (std::size_t l = 1; l < tree.depth(); ++l)
            levels.push_back({tree.level_loadings(l).dense(), vars.level_variances[l - 1]});
        const int top = tree.group_count(tree.depth() - 1);
        levels.push_back({Eigen::MatrixXd::Ones(top, 1), vars.level_variances.back()});
        return NestedRiskModel(std::move(levels), ScalarVariance{vars.market});
    }

    Eigen::MatrixXd scale_correlation_to_covariance(const Eigen::MatrixXd& correlation,
                                                    const Eigen::VectorXd& variances)
    {
        if (correlation.rows() != variances.size() || correlation.cols() != variances.size())
            throw DimensionError("scale: correlation " + shape(correlation) + " vs " +
                                 std::to_string(variances.size()) + " variances");
        for (Index i = 0; i < variances.size(); ++i)
            if (!(variances(i) > 0.0) || !std::isfinite(variances(i)))
                throw ValidationError("scale: variance of stock " + std::to_string(i) + " is " +
                                      std::to_string(variances(i)) + ", must be > 0");
        const Eigen::VectorXd vol = variances.cwiseSqrt();
        return vol.asDiagonal() * correlation * vol.asDiagonal();
    }

    FlatFactorModel scale_correlation_to_covariance(const FlatFactorModel& correlation,
                                                    const Eigen::VectorXd& variances)
    {
        if (correlation.n_stocks() != variances.size())
            throw DimensionError("scale: model has " + std::to_string(correlation.n_stocks()) + " stocks, got " +
                                 std::to_string(variances.size()) + " variances");
        for (Index i = 0; i < variances.size(); ++i)
            if (!(variances(i) > 0.0) || !std::isfinite(variances(i)))
                throw ValidationError("scale: variance of stock " + std::to_string(i) + " is " +
                                      std::to_string(variances(i)) + ", must be > 0");
        const Eigen::VectorXd vol = variances.cwiseSqrt();
        FlatFactorModel out;
        out.loadings = vol.asDiagonal() * correlation.loadings;
        out.fcm = correlation.fcm;
        out.specific_variances = correlation.specific_variances.cwiseProduct(variances);
        return out;
    }

    NestedRiskModel extend_with_style(const taxonomy::ClassificationTree& tree,
                                      const Eigen::MatrixXd& style_loadings,
                                      const Eigen::MatrixXd& terminal_fcm,
                                      const Eigen::VectorXd& stock_specific,
                                      const Eigen::VectorXd& sub_industry_specific,
                                      const Eigen::VectorXd& industry_specific)
    {
        if (tree.depth() != 3)
            throw DimensionError("extend_with_style expects a three-level tree");
        const Index n = tree.n_stocks();
        const Index u = style_loadings.cols();
        if (style_loadings.rows() != n)
            throw DimensionError("style loadings " + shape(style_loadings) + " for " + std::to_string(n) +
                                 " stocks");
        const Index k = tree.sub_industry_count();
        const Index f = tree.industry_count();
        const Index l = tree.sector_count();
        if (terminal_fcm.rows() != l + u || terminal_fcm.cols() != l + u)
            throw DimensionError("style terminal FCM " + shape(terminal_fcm) + ", expected " +
                                 std::to_string(l + u) + "x" + std::to_string(l + u));
        if (sub_industry_specific.size() != k || industry_specific.size() != f)
            throw DimensionError("extend_with_style: specific variance lengths do not match the tree");

        auto with_identity = [u](const Eigen::MatrixXd& industry_block) {
            Eigen::MatrixXd m = Eigen::MatrixXd::Zero(industry_block.rows() + u, industry_block.cols() + u);
            m.topLeftCorner(industry_block.rows(), industry_block.cols()) = industry_block;
            m.bottomRightCorner(u, u).setIdentity();
            return m;
        };
        auto with_zeros = [u](const Eigen::VectorXd& v) {
            Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size() + u);
            out.head(v.size()) = v;
            return out;
        };

        Eigen::MatrixXd omega(n, k + u);
        omega << tree.level_loadings(0).dense(), style_loadings;
        std::vector<FactorModelLevel> levels;
        levels.push_back({std::move(omega), stock_specific});
        levels.push_back({with_identity(tree.level_loadings(1).dense()), with_zeros(sub_industry_specific)});
        levels.push_back({with_identity(tree.level_loadings(2).dense()), with_zeros(industry_specific)});
        return NestedRiskModel(std::move(levels), ExplicitFcm{terminal_fcm});
    }

    NestedRiskModel diagonal_fcm_correlation_model(const Eigen::MatrixXd& loadings,
                                                   const Eigen::VectorXd& factor_variances)
    {
        if (factor_variances.size() != loadings.cols())
            throw DimensionError("diagonal FCM: " + std::to_string(factor_variances.size()) +
                                 " factor variances for loadings " + shape(loadings));
        check_variances(factor_variances, "factor variance");
        const Eigen::VectorXd explained = loadings.cwiseAbs2() * factor_variances;
        Eigen::VectorXd specific = Eigen::VectorXd::Ones(loadings.rows()) - explained;
        for (Index i = 0; i < specific.size(); ++i)
        {
            if (specific(i) < 0.0)
            {
                if (specific(i) > -1e-14)
                    specific(i) = 0.0;
                else
                    throw ValidationError("diagonal FCM: stock " + std::to_string(i) +
                                          " would get negative specific variance " +
                                          std::to_string(specific(i)));
            }
        }
        Eigen::MatrixXd fcm = factor_variances.asDiagonal();
        return NestedRiskModel({{loadings, std::move(specific)}}, ExplicitFcm{std::move(fcm)});
    }

    PdReport check_positive_definite(const Eigen::MatrixXd& matrix, double relative_tolerance)
    {
        if (matrix.rows() != matrix.cols())
            throw DimensionError("PD check needs a square matrix, got " + shape(matrix));
        PdReport report;
        if (matrix.size() == 0)
            return report;
        if (asymmetry(matrix) > 1e-10)
            throw ValidationError("PD check: matrix is not symmetric (relative asymmetry " +
                                  std::to_string(asymmetry(matrix)) + ")");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(matrix, Eigen::EigenvaluesOnly);
        report.min_eigenvalue = eig.eigenvalues().minCoeff();
        report.max_eigenvalue = eig.eigenvalues().maxCoeff();
        const double scale = std::max(std::abs(report.max_eigenvalue), std::abs(report.min_eigenvalue));
        report.positive_definite = report.min_eigenvalue > relative_tolerance * scale;
        report.positive_semidefinite = report.min_eigenvalue > -relative_tolerance * scale;
        Eigen::LLT<Eigen::MatrixXd> llt(matrix);
        report.cholesky_ok = llt.info() == Eigen::Success;
        return report;
    }

    double market_variance(const Eigen::MatrixXd& returns)
    {
        if (returns.rows() < 2 || returns.cols() < 1)
            throw DimensionError("market_variance needs at least 2 dates and 1 stock");
        const Eigen::VectorXd market = returns.rowwise().mean();
        const double mean = market.mean();
        return (market.array() - mean).square().sum() / static_cast<double>(market.size() - 1);
    }

} // namespace rdoll::risk
