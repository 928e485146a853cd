#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace msflow {

using index_t = std::ptrdiff_t;

using vector_t = Eigen::VectorXd;
using matrix_t = Eigen::MatrixXd;
using sparse_t = Eigen::SparseMatrix<double>;
using triplet_t = Eigen::Triplet<double>;

/// Bad input: malformed configuration, invalid arguments, inconsistent sizes.
class config_error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// A numerical stage failed (singular system, indefinite form, CFL breach).
class numerical_error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

template<typename Error = config_error>
inline void
require(bool condition, const std::string& message)
{
    if (!condition)
        throw Error(message);
}

} // namespace detail

} // namespace msflow
