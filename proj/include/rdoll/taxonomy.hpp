/**
 * @file taxonomy.hpp
 * @brief Hierarchical binary industry classifications
 *
 * A classification is a chain of total maps
 *
 *     stock -> sub-industry -> industry -> sector (-> ...)
 *
 * stored as one parent map per level. Level 0 maps stocks to the finest
 * groups; level l maps the groups of level l-1 to the groups of level l.
 * All labels are dense 0-based indices. Any number of levels is supported;
 * the three-level sector/industry/sub-industry naming is the default.
 *
 * Every map yields a binary loadings matrix (exactly one 1 per row), and
 * composing the maps from the stock level gives the stock -> group map at
 * each depth, whose loadings equal the product of the per-level loadings.
 */

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rdoll::taxonomy
{

    using Index = Eigen::Index;

    /// Named depths of a three-level tree.
    enum class Level : std::size_t
    {
        SubIndustry = 0,
        Industry = 1,
        Sector = 2
    };

    /**
     * @brief Binary loadings matrix stored as a row -> column assignment.
     *
     * As a matrix, entry (r, c) is 1 iff assignment[r] == c.
     */
    struct BinaryLoadings
    {
        Index rows = 0;
        Index cols = 0;
        std::vector<int> assignment;

        Eigen::MatrixXd dense() const;
        Eigen::MatrixXi dense_int() const;
    };

    /// @throws TaxonomyError if assignment.size() != rows or a value is outside [0, cols).
    BinaryLoadings binary_loadings(std::span<const int> assignment, Index rows, Index cols);

    /**
     * @class ClassificationTree
     * @brief Validated, immutable stock classification hierarchy
     *
     * Invariants (enforced at construction): every map is total with values
     * in range, and every group at every level contains at least one stock.
     *
     * Thread Safety: immutable; safe for concurrent reads.
     */
    class ClassificationTree
    {
    public:
        ClassificationTree() = default;

        /**
         * @param n_stocks number of stocks N
         * @param parent_maps parent_maps[0] has N entries (stock -> level-0 group),
         *        parent_maps[l] has group_counts[l-1] entries
         * @param group_counts number of groups at each level
         * @throws TaxonomyError on any structural problem or empty group
         */
        ClassificationTree(Index n_stocks, std::vector<std::vector<int>> parent_maps,
                           std::vector<int> group_counts);

        /// Builds a tree from G, S, T with counts inferred as max label + 1.
        static ClassificationTree three_level(std::vector<int> stock_to_sub_industry,
                                              std::vector<int> sub_industry_to_industry,
                                              std::vector<int> industry_to_sector);

        Index n_stocks() const { return n_stocks_; }
        std::size_t depth() const { return parent_maps_.size(); }
        int group_count(std::size_t level) const { return group_counts_.at(level); }
        const std::vector<int>& group_counts() const { return group_counts_; }

        int sub_industry_count() const { return group_count(0); }
        int industry_count() const { return group_count(1); }
        int sector_count() const { return group_count(2); }

        /// Map from level-(l-1) groups (stocks for l = 0) to level-l groups.
        const std::vector<int>& parent_map(std::size_t level) const { return parent_maps_.at(level); }

        /// Composed map from stocks to level-l groups.
        const std::vector<int>& stock_groups(std::size_t level) const { return stock_groups_.at(level); }
        const std::vector<int>& stock_groups(Level level) const
        {
            return stock_groups(static_cast<std::size_t>(level));
        }

        /// Per-level loadings: Omega (level 0), Lambda (level 1), Delta (level 2), ...
        BinaryLoadings level_loadings(std::size_t level) const;

        /// Stock-level loadings at depth l: Omega, Omega*Lambda, Omega*Lambda*Delta, ...
        BinaryLoadings stock_loadings(std::size_t level) const;

        bool operator==(const ClassificationTree&) const = default;

    private:
        Index n_stocks_ = 0;
        std::vector<std::vector<int>> parent_maps_;
        std::vector<int> group_counts_;
        std::vector<std::vector<int>> stock_groups_;
    };

    /// Raw, possibly sparse classification input prior to validation.
    struct TaxonomySpec
    {
        Index n_stocks = 0;
        std::vector<std::vector<int>> parent_maps;
        std::vector<int> declared_counts;
    };

    struct EmptyGroup
    {
        std::size_t level;
        int group;
    };

    struct ValidationReport
    {
        bool valid = false;                 ///< true iff no empty groups were found
        std::vector<EmptyGroup> empty_groups;
        std::vector<int> effective_counts;  ///< group counts after compaction
        ClassificationTree tree;            ///< compacted tree (identical to input when valid)
        std::vector<std::vector<int>> relabel; ///< old label -> new label per level, -1 if dropped
    };

    /**
     * @brief Checks a raw classification and compacts unused labels.
     * @throws TaxonomyError naming the offending stock/group for wrong map
     *         lengths or out-of-range values.
     */
    ValidationReport validate_tree(const TaxonomySpec& spec);

    /// Stock -> industry and stock -> sector maps of a three-level tree.
    struct ComposedMaps
    {
        std::vector<int> stock_to_industry;
        std::vector<int> stock_to_sector;
    };

    ComposedMaps compose(const ClassificationTree& tree);

} // namespace rdoll::taxonomy
