#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace gpmu {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Eigen::Index;

/// Violated model/data invariant or operation precondition.
class invalid_model : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure (factorization breakdown, unstable integration, ...).
/// The message carries whatever diagnostics were available at the failure site.
class numerical_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Problem with an experiment configuration or an on-disk artifact.
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace gpmu
