/**
 * @file errors.hpp
 * @brief Exception types shared by every rdoll module
 */

#pragma once

#include <stdexcept>
#include <string>

namespace rdoll
{

    /// Base class for all library errors.
    class Error : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    /// Malformed classification maps (out-of-range labels, non-functional parentage).
    class TaxonomyError : public Error
    {
    public:
        using Error::Error;
    };

    /// Inconsistent matrix / vector shapes.
    class DimensionError : public Error
    {
    public:
        using Error::Error;
    };

    /// Bad numeric input (negative variances, asymmetric matrices, weights off the simplex).
    class ValidationError : public Error
    {
    public:
        using Error::Error;
    };

    /// Rank-deficient regression loadings.
    class RegressionError : public Error
    {
    public:
        using Error::Error;
    };

    /// The portfolio direction vanishes, so no holdings can be formed.
    class NoTradeError : public Error
    {
    public:
        using Error::Error;
    };

    /// Input data problems (unparsable fields, nonpositive prices, duplicate keys).
    class DataError : public Error
    {
    public:
        using Error::Error;
    };

} // namespace rdoll
