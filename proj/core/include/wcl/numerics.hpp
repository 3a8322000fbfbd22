// wcl/numerics.hpp — shared numeric kernels: quadrature rules, matrix
// exponentials, operator norms, smooth bump windows.
#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace wcl {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;

// ------- quadrature -------

struct Quad1D {
  RVec nodes;
  RVec weights;
};

// n-point Gauss-Legendre rule on (a, b), Golub-Welsch via the Jacobi matrix.
Quad1D gauss_legendre(int n, double a, double b);

// n-point midpoint rule on (a, b).
Quad1D midpoint_rule(int n, double a, double b);

// ------- matrix functions -------

// exp(A) for a general square complex matrix; scaling-and-squaring with a
// diagonal Pade approximant (degree 13, classic Higham backward-error bounds).
Mat expm(const Mat& A);

// exp(-i t H) for Hermitian H through its eigendecomposition. Cache the
// decomposition when many times are needed for the same H.
struct HermitianPropagator {
  RVec evals;
  Mat evecs;

  HermitianPropagator() = default;
  explicit HermitianPropagator(const Mat& H);

  Mat at(double t) const;               // exp(-i t H)
  Vec apply(double t, const Vec& psi) const;
};

// Largest singular value (operator 2-norm).
double op_norm(const Mat& A);

// Hermiticity defect ||A - A^dag||_2.
double herm_defect(const Mat& A);

// ------- smooth windows -------

// C^2 polynomial step: 0 for u <= 0, 1 for u >= 1, quintic in between.
double smoothstep(double u);

// C^2 bump equal to 1 on [c-r_in, c+r_in], 0 outside (c-r_out, c+r_out).
double bump_window(double x, double c, double r_in, double r_out);

// ------- misc -------

// Relative gap used when clustering near-degenerate values.
bool cluster_close(double a, double b, double tol, double scale);

// printf-style %.17g formatting used by all CSV writers (deterministic).
std::string format_double(double v);

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 1469598103934665603ull);

}  // namespace wcl
