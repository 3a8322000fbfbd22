// wcl/numerics.cpp — implementation of the shared numeric kernels.
#include "wcl/numerics.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace wcl {

// ------- quadrature -------

Quad1D gauss_legendre(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: need n >= 1, got " + std::to_string(n));
  if (!(b > a)) throw std::invalid_argument("gauss_legendre: need b > a");
  // Jacobi matrix for Legendre polynomials; eigenvalues are the nodes on
  // (-1, 1), weights are 2 * (first eigenvector component)^2.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double beta = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = beta;
    J(k - 1, k) = beta;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Quad1D q;
  q.nodes.resize(n);
  q.weights.resize(n);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (int i = 0; i < n; ++i) {
    q.nodes[i] = mid + half * es.eigenvalues()[i];
    const double v0 = es.eigenvectors()(0, i);
    q.weights[i] = 2.0 * v0 * v0 * half;
  }
  return q;
}

Quad1D midpoint_rule(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("midpoint_rule: need n >= 1, got " + std::to_string(n));
  if (!(b > a)) throw std::invalid_argument("midpoint_rule: need b > a");
  Quad1D q;
  q.nodes.resize(n);
  q.weights.resize(n);
  const double h = (b - a) / n;
  for (int i = 0; i < n; ++i) {
    q.nodes[i] = a + (i + 0.5) * h;
    q.weights[i] = h;
  }
  return q;
}

// ------- matrix exponential -------

namespace {

// Pade degree-13 coefficients.
constexpr double kPade13[] = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
    129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
    1323241920.0,        40840800.0,          960960.0,           16380.0,
    182.0,               1.0};

}  // namespace

Mat expm(const Mat& A) {
  if (A.rows() != A.cols()) throw std::invalid_argument("expm: matrix must be square");
  const int n = static_cast<int>(A.rows());
  const double norm1 = A.cwiseAbs().colwise().sum().maxCoeff();
  // theta_13 from the standard backward-error analysis (tol ~ 1e-16 < 1e-12).
  const double theta13 = 5.371920351148152;
  int squarings = 0;
  Mat As = A;
  if (norm1 > theta13) {
    squarings = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
    As /= std::pow(2.0, squarings);
  }
  const Mat I = Mat::Identity(n, n);
  const Mat A2 = As * As;
  const Mat A4 = A2 * A2;
  const Mat A6 = A2 * A4;
  Mat U = As * (A6 * (kPade13[13] * A6 + kPade13[11] * A4 + kPade13[9] * A2) +
                kPade13[7] * A6 + kPade13[5] * A4 + kPade13[3] * A2 + kPade13[1] * I);
  Mat V = A6 * (kPade13[12] * A6 + kPade13[10] * A4 + kPade13[8] * A2) +
          kPade13[6] * A6 + kPade13[4] * A4 + kPade13[2] * A2 + kPade13[0] * I;
  Mat F = (V - U).partialPivLu().solve(V + U);
  for (int s = 0; s < squarings; ++s) F = F * F;
  return F;
}

HermitianPropagator::HermitianPropagator(const Mat& H) {
  const double defect = herm_defect(H);
  const double scale = std::max(1.0, op_norm(H));
  if (defect > 1e-10 * scale)
    throw std::invalid_argument("HermitianPropagator: matrix is not Hermitian, defect " +
                                format_double(defect));
  Eigen::SelfAdjointEigenSolver<Mat> es(H);
  evals = es.eigenvalues();
  evecs = es.eigenvectors();
}

Mat HermitianPropagator::at(double t) const {
  Vec phases(evals.size());
  for (Eigen::Index i = 0; i < evals.size(); ++i)
    phases[i] = std::exp(cplx(0.0, -t * evals[i]));
  return evecs * phases.asDiagonal() * evecs.adjoint();
}

Vec HermitianPropagator::apply(double t, const Vec& psi) const {
  Vec c = evecs.adjoint() * psi;
  for (Eigen::Index i = 0; i < evals.size(); ++i)
    c[i] *= std::exp(cplx(0.0, -t * evals[i]));
  return evecs * c;
}

double op_norm(const Mat& A) {
  if (A.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(A);
  return svd.singularValues()[0];
}

double herm_defect(const Mat& A) { return op_norm(Mat(A - A.adjoint())); }

// ------- smooth windows -------

double smoothstep(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

double bump_window(double x, double c, double r_in, double r_out) {
  if (!(r_out > r_in && r_in >= 0.0))
    throw std::invalid_argument("bump_window: need 0 <= r_in < r_out");
  const double d = std::abs(x - c);
  if (d <= r_in) return 1.0;
  if (d >= r_out) return 0.0;
  return smoothstep((r_out - d) / (r_out - r_in));
}

// ------- misc -------

bool cluster_close(double a, double b, double tol, double scale) {
  return std::abs(a - b) <= tol * std::max(scale, 1e-300);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace wcl
