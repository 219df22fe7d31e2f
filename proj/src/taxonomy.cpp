/**
 * @file taxonomy.cpp
 * @brief Classification tree validation, compaction and loadings
 */

#include "rdoll/taxonomy.hpp"

#include "rdoll/errors.hpp"

#include <algorithm>
#include <string>

namespace rdoll::taxonomy
{

    namespace
    {

        std::string level_name(std::size_t level)
        {
            switch (level)
            {
            case 0:
                return "sub-industry";
            case 1:
                return "industry";
            case 2:
                return "sector";
            default:
                return "level " + std::to_string(level);
            }
        }

        std::string row_name(std::size_t level, std::size_t row)
        {
            return level == 0 ? "stock " + std::to_string(row)
                              : level_name(level - 1) + " " + std::to_string(row);
        }

        // Length and range checks; anything failing here is structural and throws.
        void check_structure(Index n_stocks, const std::vector<std::vector<int>>& maps,
                             const std::vector<int>& counts)
        {
            if (n_stocks < 1)
                throw TaxonomyError("classification has no stocks");
            if (maps.empty())
                throw TaxonomyError("classification has no levels");
            if (maps.size() != counts.size())
                throw TaxonomyError("classification: " + std::to_string(maps.size()) + " maps but " +
                                    std::to_string(counts.size()) + " group counts");
            for (std::size_t l = 0; l < maps.size(); ++l)
            {
                const auto expected = l == 0 ? static_cast<std::size_t>(n_stocks)
                                             : static_cast<std::size_t>(counts[l - 1]);
                if (maps[l].size() != expected)
                    throw TaxonomyError("classification: " + level_name(l) + " map has " +
                                        std::to_string(maps[l].size()) + " entries, expected " +
                                        std::to_string(expected));
                if (counts[l] < 1)
                    throw TaxonomyError("classification: " + level_name(l) + " has no groups");
                for (std::size_t r = 0; r < maps[l].size(); ++r)
                {
                    const int v = maps[l][r];
                    if (v < 0 || v >= counts[l])
                        throw TaxonomyError("classification: " + row_name(l, r) + " maps to " +
                                            level_name(l) + " " + std::to_string(v) +
                                            ", outside [0, " + std::to_string(counts[l]) + ")");
                }
            }
        }

        std::vector<std::vector<int>> compose_from_stocks(const std::vector<std::vector<int>>& maps)
        {
            std::vector<std::vector<int>> out(maps.size());
            out[0] = maps[0];
            for (std::size_t l = 1; l < maps.size(); ++l)
            {
                out[l].resize(out[0].size());
                for (std::size_t i = 0; i < out[0].size(); ++i)
                    out[l][i] = maps[l][out[l - 1][i]];
            }
            return out;
        }

    } // namespace

    Eigen::MatrixXd BinaryLoadings::dense() const
    {
        return dense_int().cast<double>();
    }

    Eigen::MatrixXi BinaryLoadings::dense_int() const
    {
        Eigen::MatrixXi m = Eigen::MatrixXi::Zero(rows, cols);
        for (Index r = 0; r < rows; ++r)
            m(r, assignment[r]) = 1;
        return m;
    }

    BinaryLoadings binary_loadings(std::span<const int> assignment, Index rows, Index cols)
    {
        if (static_cast<Index>(assignment.size()) != rows)
            throw TaxonomyError("binary loadings: assignment has " + std::to_string(assignment.size()) +
                                " entries for " + std::to_string(rows) + " rows");
        for (std::size_t r = 0; r < assignment.size(); ++r)
            if (assignment[r] < 0 || assignment[r] >= cols)
                throw TaxonomyError("binary loadings: row " + std::to_string(r) + " assigned to column " +
                                    std::to_string(assignment[r]) + ", outside [0, " +
                                    std::to_string(cols) + ")");
        return BinaryLoadings{rows, cols, {assignment.begin(), assignment.end()}};
    }

    ClassificationTree::ClassificationTree(Index n_stocks, std::vector<std::vector<int>> parent_maps,
                                           std::vector<int> group_counts)
        : n_stocks_(n_stocks), parent_maps_(std::move(parent_maps)), group_counts_(std::move(group_counts))
    {
        check_structure(n_stocks_, parent_maps_, group_counts_);
        stock_groups_ = compose_from_stocks(parent_maps_);
        for (std::size_t l = 0; l < stock_groups_.size(); ++l)
        {
            std::vector<char> hit(group_counts_[l], 0);
            for (int g : stock_groups_[l])
                hit[g] = 1;
            const auto empty = std::find(hit.begin(), hit.end(), 0);
            if (empty != hit.end())
                throw TaxonomyError("classification: " + level_name(l) + " " +
                                    std::to_string(empty - hit.begin()) + " contains no stocks");
        }
    }

    ClassificationTree ClassificationTree::three_level(std::vector<int> stock_to_sub_industry,
                                                       std::vector<int> sub_industry_to_industry,
                                                       std::vector<int> industry_to_sector)
    {
        auto count = [](const std::vector<int>& m) {
            return m.empty() ? 0 : *std::max_element(m.begin(), m.end()) + 1;
        };
        std::vector<int> counts{count(stock_to_sub_industry), count(sub_industry_to_industry),
                                count(industry_to_sector)};
        const auto n = static_cast<Index>(stock_to_sub_industry.size());
        return ClassificationTree(n,
                                  {std::move(stock_to_sub_industry), std::move(sub_industry_to_industry),
                                   std::move(industry_to_sector)},
                                  std::move(counts));
    }

    BinaryLoadings ClassificationTree::level_loadings(std::size_t level) const
    {
        const Index rows = level == 0 ? n_stocks_ : group_counts_.at(level - 1);
        return BinaryLoadings{rows, group_counts_.at(level), parent_maps_.at(level)};
    }

    BinaryLoadings ClassificationTree::stock_loadings(std::size_t level) const
    {
        return BinaryLoadings{n_stocks_, group_counts_.at(level), stock_groups_.at(level)};
    }

    ValidationReport validate_tree(const TaxonomySpec& spec)
    {
        check_structure(spec.n_stocks, spec.parent_maps, spec.declared_counts);
        const auto reach = compose_from_stocks(spec.parent_maps);
        const std::size_t depth = spec.parent_maps.size();

        ValidationReport report;
        report.relabel.resize(depth);
        for (std::size_t l = 0; l < depth; ++l)
        {
            std::vector<char> hit(spec.declared_counts[l], 0);
            for (int g : reach[l])
                hit[g] = 1;
            auto& relabel = report.relabel[l];
            relabel.assign(hit.size(), -1);
            int next = 0;
            for (std::size_t g = 0; g < hit.size(); ++g)
            {
                if (hit[g])
                    relabel[g] = next++;
                else
                    report.empty_groups.push_back({l, static_cast<int>(g)});
            }
            report.effective_counts.push_back(next);
        }

        std::vector<std::vector<int>> maps(depth);
        for (std::size_t l = 0; l < depth; ++l)
        {
            const auto& old_map = spec.parent_maps[l];
            if (l == 0)
            {
                for (int g : old_map)
                    maps[0].push_back(report.relabel[0][g]);
                continue;
            }
            maps[l].resize(report.effective_counts[l - 1]);
            for (std::size_t child = 0; child < old_map.size(); ++child)
            {
                const int new_child = report.relabel[l - 1][child];
                if (new_child >= 0)
                    maps[l][new_child] = report.relabel[l][old_map[child]];
            }
        }
        report.valid = report.empty_groups.empty();
        report.tree = ClassificationTree(spec.n_stocks, std::move(maps), report.effective_counts);
        return report;
    }

    ComposedMaps compose(const ClassificationTree& tree)
    {
        if (tree.depth() < 3)
            throw TaxonomyError("compose: tree has " + std::to_string(tree.depth()) + " levels, need 3");
        return ComposedMaps{tree.stock_groups(1), tree.stock_groups(2)};
    }

} // namespace rdoll::taxonomy
