#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sptlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Bad configuration, malformed data, or arguments outside their contract.
// The CLI maps this to exit code 2.
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// A computation that cannot continue (depleted wealth, insolvent overlay,
// singular design matrix). Distinct from a failed property check, which is
// reported through result structs rather than thrown.
struct ComputeError : std::runtime_error {
    explicit ComputeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Points closer than this to the boundary of the open simplex are rejected
// by weight-map evaluations.
inline constexpr double kSimplexBoundaryTol = 1e-12;

inline bool in_open_simplex(const Vec& x, double boundary_tol = kSimplexBoundaryTol) {
    if (x.size() < 2) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (!(x[i] > boundary_tol)) return false;
    }
    return std::abs(x.sum() - 1.0) <= 1e-9;
}

inline void require_open_simplex(const Vec& x, const char* where) {
    if (!in_open_simplex(x)) {
        throw InputError(std::string(where) +
                         ": weight vector is not interior to the simplex "
                         "(component within 1e-12 of the boundary, or sum far from 1)");
    }
}

}  // namespace sptlab
