#pragma once
#include <Eigen/Dense>
#include <iosfwd>
#include <span>
#include <vector>

namespace mpru {

// Cubic B-spline basis on a strictly increasing knot vector with clamped end
// knots and not-a-knot interpolation closure. n data knots carry n+2 basis
// functions; the two extra degrees of freedom are fixed by third-derivative
// continuity at the second and second-to-last knots.
class SplineBasis1D {
public:
    SplineBasis1D() = default;
    explicit SplineBasis1D(Eigen::VectorXd knots);

    int n() const { return static_cast<int>(knots_.size()); }
    int coeff_count() const { return n() + 2; }
    const Eigen::VectorXd& knots() const { return knots_; }
    double lo() const { return knots_[0]; }
    double hi() const { return knots_[n() - 1]; }

    // Four nonzero basis functions (or their deriv-th derivatives, deriv<=3)
    // at x, which must lie inside [lo,hi]. first receives the index of the
    // first nonzero coefficient.
    void basis(double x, int deriv, double out[4], int& first) const;

    // Basis derivatives of all orders 0..max_deriv at once: ders[k][j] is the
    // k-th derivative of basis function first+j.
    void basis_all(double x, int max_deriv, double ders[4][4], int& first) const;

    // Interpolation + not-a-knot closure matrix, (n+2) x (n+2). Rows 0..n-1
    // interpolate at the knots; rows n, n+1 are the closure rows (rhs 0).
    const Eigen::MatrixXd& fit_matrix() const { return fit_matrix_; }

    // Solve for coefficients given values at the knots (multiple columns ok).
    Eigen::MatrixXd fit(const Eigen::MatrixXd& values_cols) const;

private:
    int find_interval(double x) const;

    Eigen::VectorXd knots_;
    Eigen::VectorXd ext_;  // clamped extended knot vector, size n+6
    Eigen::MatrixXd fit_matrix_;
    Eigen::PartialPivLU<Eigen::MatrixXd> fit_lu_;
};

// A scalar function of 1-3 continuous states, replicated per discrete shock
// index. Immutable after fit; evaluation outside the knot hull returns the
// boundary value extended with constant slope and sets the extrapolation
// flag.
class SplineField {
public:
    SplineField() = default;

    // grid_values[slice] holds function values at the tensor-product knots,
    // flattened row-major with the last axis fastest.
    static SplineField fit(const std::vector<Eigen::VectorXd>& axes, int shock_slices,
                           const std::vector<Eigen::VectorXd>& grid_values);

    bool empty() const { return coeffs_.empty(); }
    int dims() const { return static_cast<int>(bases_.size()); }
    int slices() const { return static_cast<int>(coeffs_.size()); }
    const SplineBasis1D& basis(int dim) const { return bases_[dim]; }
    std::vector<Eigen::VectorXd> axes() const;
    Eigen::Index points_per_slice() const;
    const Eigen::VectorXd& coeffs(int slice) const { return coeffs_[slice]; }
    Eigen::VectorXd& coeffs(int slice) { return coeffs_[slice]; }

    double eval(int slice, std::span<const double> x, bool* extrapolated = nullptr) const;
    double eval_deriv(int slice, std::span<const double> x, int dim,
                      bool* extrapolated = nullptr) const;

    // Value, gradient and (optionally) Hessian in one pass. hess, if not
    // null, receives dims()*dims() entries row-major; outside the hull the
    // Hessian is the boundary Hessian of the clamped point.
    void eval_all(int slice, std::span<const double> x, double& v, double* grad, double* hess,
                  bool* extrapolated = nullptr) const;

    void save(std::ostream& out) const;
    static SplineField load(std::istream& in);
    bool bit_identical(const SplineField& other) const;

private:
    std::vector<SplineBasis1D> bases_;
    std::vector<Eigen::VectorXd> coeffs_;  // per slice, row-major over basis dims
};

}  // namespace mpru
