#include "mpru/spline.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "mpru/errors.hpp"

namespace mpru {

namespace {
constexpr int kDegree = 3;

// Derivatives of the four nonzero cubic B-splines at x in the span starting
// at extended-knot index `span` (NURBS-book A2.3 specialized to degree 3).
void ders_basis(const Eigen::VectorXd& ext, int span, double x, int nders, double ders[4][4]) {
    double ndu[4][4], a[2][4], left[4], right[4];
    ndu[0][0] = 1.0;
    for (int j = 1; j <= kDegree; ++j) {
        left[j] = x - ext[span + 1 - j];
        right[j] = ext[span + j] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            ndu[j][r] = right[r + 1] + left[j - r];
            const double temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    for (int j = 0; j <= kDegree; ++j) ders[0][j] = ndu[j][kDegree];
    for (int r = 0; r <= kDegree; ++r) {
        int s1 = 0, s2 = 1;
        a[0][0] = 1.0;
        for (int k = 1; k <= nders; ++k) {
            double d = 0.0;
            const int rk = r - k, pk = kDegree - k;
            if (r >= k) {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                d = a[s2][0] * ndu[rk][pk];
            }
            const int j1 = (rk >= -1) ? 1 : -rk;
            const int j2 = (r - 1 <= pk) ? k - 1 : kDegree - r;
            for (int j = j1; j <= j2; ++j) {
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
                d += a[s2][j] * ndu[rk + j][pk];
            }
            if (r <= pk) {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::swap(s1, s2);
        }
    }
    double factor = kDegree;
    for (int k = 1; k <= nders; ++k) {
        for (int j = 0; j <= kDegree; ++j) ders[k][j] *= factor;
        factor *= (kDegree - k);
    }
}
}  // namespace

SplineBasis1D::SplineBasis1D(Eigen::VectorXd knots) : knots_(std::move(knots)) {
    const int n = static_cast<int>(knots_.size());
    if (n < 4) throw ConfigError("spline: each knot vector needs at least 4 points");
    for (int i = 1; i < n; ++i)
        if (!(knots_[i] > knots_[i - 1]))
            throw ConfigError("spline: knot vector must be strictly increasing");

    ext_.resize(n + 6);
    for (int i = 0; i < 4; ++i) ext_[i] = knots_[0];
    for (int i = 1; i < n - 1; ++i) ext_[3 + i] = knots_[i];
    for (int i = 0; i < 4; ++i) ext_[n + 2 + i] = knots_[n - 1];

    const int m = n + 2;
    fit_matrix_ = Eigen::MatrixXd::Zero(m, m);
    double b[4];
    int first;
    for (int i = 0; i < n; ++i) {
        basis(knots_[i], 0, b, first);
        for (int j = 0; j < 4; ++j) fit_matrix_(i, first + j) += b[j];
    }
    // Not-a-knot closure: the third derivative is piecewise constant, so the
    // jump across an interior knot is the difference of interval values.
    auto add_jump_row = [&](int row, int left_iv) {
        double bl[4], br[4];
        int fl, fr;
        basis(0.5 * (knots_[left_iv] + knots_[left_iv + 1]), 3, bl, fl);
        basis(0.5 * (knots_[left_iv + 1] + knots_[left_iv + 2]), 3, br, fr);
        for (int j = 0; j < 4; ++j) {
            fit_matrix_(row, fl + j) += bl[j];
            fit_matrix_(row, fr + j) -= br[j];
        }
    };
    add_jump_row(n, 0);
    add_jump_row(n + 1, n - 3);
    fit_lu_.compute(fit_matrix_);
}

int SplineBasis1D::find_interval(double x) const {
    int lo = 0, hi = n() - 2;
    while (lo < hi) {
        const int mid = (lo + hi + 1) / 2;
        if (x >= knots_[mid])
            lo = mid;
        else
            hi = mid - 1;
    }
    return lo;
}

void SplineBasis1D::basis(double x, int deriv, double out[4], int& first) const {
    double ders[4][4];
    const int iv = find_interval(x);
    const int span = iv + 3;
    ders_basis(ext_, span, x, deriv, ders);
    for (int j = 0; j < 4; ++j) out[j] = ders[deriv][j];
    first = iv;
}

void SplineBasis1D::basis_all(double x, int max_deriv, double ders[4][4], int& first) const {
    const int iv = find_interval(x);
    ders_basis(ext_, iv + 3, x, max_deriv, ders);
    first = iv;
}

Eigen::MatrixXd SplineBasis1D::fit(const Eigen::MatrixXd& values_cols) const {
    const int m = coeff_count();
    if (values_cols.rows() != n())
        throw ConfigError("spline fit: value count does not match knot count");
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m, values_cols.cols());
    rhs.topRows(n()) = values_cols;
    return fit_lu_.solve(rhs);
}

SplineField SplineField::fit(const std::vector<Eigen::VectorXd>& axes, int shock_slices,
                             const std::vector<Eigen::VectorXd>& grid_values) {
    if (axes.empty() || axes.size() > 3)
        throw ConfigError("SplineField: 1 to 3 continuous dimensions supported");
    if (shock_slices < 1) throw ConfigError("SplineField: need at least one shock slice");
    if (static_cast<int>(grid_values.size()) != shock_slices)
        throw ConfigError("SplineField: value array count does not match shock slices");

    SplineField f;
    f.bases_.reserve(axes.size());
    Eigen::Index npoints = 1;
    for (const auto& ax : axes) {
        f.bases_.emplace_back(ax);
        npoints *= ax.size();
    }
    const int d = f.dims();

    f.coeffs_.resize(shock_slices);
    for (int s = 0; s < shock_slices; ++s) {
        if (grid_values[s].size() != npoints)
            throw ConfigError("SplineField: value array shape mismatch on slice " + std::to_string(s));
        // Separable tensor fit: sweep the axes from last (fastest) to first,
        // expanding each length n_k to n_k + 2 coefficients.
        std::vector<Eigen::Index> cur(d);
        for (int k = 0; k < d; ++k) cur[k] = axes[k].size();
        Eigen::VectorXd work = grid_values[s];
        for (int axis = d - 1; axis >= 0; --axis) {
            Eigen::Index pre = 1, post = 1;
            for (int k = 0; k < axis; ++k) pre *= cur[k];
            for (int k = axis + 1; k < d; ++k) post *= cur[k];
            const Eigen::Index nk = cur[axis];
            const Eigen::Index mk = nk + 2;
            Eigen::MatrixXd rhs(nk, pre * post);
            for (Eigen::Index a = 0; a < pre; ++a)
                for (Eigen::Index t = 0; t < nk; ++t)
                    for (Eigen::Index b = 0; b < post; ++b)
                        rhs(t, a * post + b) = work[(a * nk + t) * post + b];
            const Eigen::MatrixXd sol = f.bases_[axis].fit(rhs);
            Eigen::VectorXd next(pre * mk * post);
            for (Eigen::Index a = 0; a < pre; ++a)
                for (Eigen::Index t = 0; t < mk; ++t)
                    for (Eigen::Index b = 0; b < post; ++b)
                        next[(a * mk + t) * post + b] = sol(t, a * post + b);
            work.swap(next);
            cur[axis] = mk;
        }
        f.coeffs_[s] = std::move(work);
    }
    return f;
}

std::vector<Eigen::VectorXd> SplineField::axes() const {
    std::vector<Eigen::VectorXd> out;
    out.reserve(bases_.size());
    for (const auto& b : bases_) out.push_back(b.knots());
    return out;
}

Eigen::Index SplineField::points_per_slice() const {
    Eigen::Index n = 1;
    for (const auto& b : bases_) n *= b.n();
    return n;
}

void SplineField::eval_all(int slice, std::span<const double> x, double& v, double* grad,
                           double* hess, bool* extrapolated) const {
    const int d = dims();
    if (slice < 0 || slice >= slices())
        throw std::out_of_range("SplineField: shock index " + std::to_string(slice) + " out of range");
    if (static_cast<int>(x.size()) != d)
        throw ConfigError("SplineField: point dimension mismatch");

    double xc[3], dx[3];
    bool outside = false;
    for (int k = 0; k < d; ++k) {
        const double lo = bases_[k].lo(), hi = bases_[k].hi();
        xc[k] = std::min(std::max(x[k], lo), hi);
        dx[k] = x[k] - xc[k];
        if (dx[k] != 0.0) outside = true;
    }
    if (extrapolated) *extrapolated = outside;

    const int max_deriv = (grad || hess || outside) ? (hess ? 2 : (outside ? 2 : 1)) : 0;
    double ders[3][4][4];
    int first[3];
    Eigen::Index stride[3];
    Eigen::Index str = 1;
    for (int k = d - 1; k >= 0; --k) {
        bases_[k].basis_all(xc[k], max_deriv, ders[k], first[k]);
        stride[k] = str;
        str *= bases_[k].coeff_count();
    }

    // Accumulate value, gradient and Hessian at the clamped point in one
    // sweep over the 4^d active coefficients.
    double val = 0.0, g[3] = {0, 0, 0}, h[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
    const Eigen::VectorXd& c = coeffs_[slice];
    const bool want_g = grad || outside;
    const bool want_h = hess || outside;
    int idx[3] = {0, 0, 0};
    const int total = 1 << (2 * d);  // 4^d
    for (int t = 0; t < total; ++t) {
        int rem = t;
        Eigen::Index off = 0;
        double b0 = 1.0;
        for (int k = 0; k < d; ++k) {
            idx[k] = rem & 3;
            rem >>= 2;
            off += (first[k] + idx[k]) * stride[k];
            b0 *= ders[k][0][idx[k]];
        }
        const double cv = c[off];
        val += cv * b0;
        if (want_g || want_h) {
            for (int k = 0; k < d; ++k) {
                double bg = 1.0;
                for (int j = 0; j < d; ++j) bg *= ders[j][j == k ? 1 : 0][idx[j]];
                g[k] += cv * bg;
                if (want_h) {
                    for (int l = k; l < d; ++l) {
                        double bh = 1.0;
                        for (int j = 0; j < d; ++j) {
                            int o = (j == k ? 1 : 0) + (j == l ? 1 : 0);
                            bh *= ders[j][o][idx[j]];
                        }
                        h[k * d + l] += cv * bh;
                    }
                }
            }
        }
    }
    for (int k = 0; k < d; ++k)
        for (int l = 0; l < k; ++l) h[k * d + l] = h[l * d + k];

    if (outside) {
        // Constant-slope extension: f(x) = f(xc) + grad(xc) . dx, so the
        // gradient picks up Hessian cross terms in the clamped directions.
        for (int k = 0; k < d; ++k) val += g[k] * dx[k];
        if (grad) {
            for (int k = 0; k < d; ++k) {
                double gk = g[k];
                if (dx[k] == 0.0)
                    for (int l = 0; l < d; ++l) gk += h[k * d + l] * dx[l];
                grad[k] = gk;
            }
        }
        if (hess)
            for (int k = 0; k < 9; ++k) hess[k] = h[k];
    } else {
        if (grad)
            for (int k = 0; k < d; ++k) grad[k] = g[k];
        if (hess)
            for (int k = 0; k < d * d; ++k) hess[k] = h[k];
    }
    v = val;
}

double SplineField::eval(int slice, std::span<const double> x, bool* extrapolated) const {
    double v;
    eval_all(slice, x, v, nullptr, nullptr, extrapolated);
    return v;
}

double SplineField::eval_deriv(int slice, std::span<const double> x, int dim,
                               bool* extrapolated) const {
    if (dim < 0 || dim >= dims()) throw ConfigError("SplineField: derivative dimension out of range");
    double v, grad[3];
    eval_all(slice, x, v, grad, nullptr, extrapolated);
    return grad[dim];
}

namespace {
constexpr char kMagic[8] = {'M', 'P', 'R', 'U', 'S', 'P', 'L', 'N'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kEndianMark = 0x01020304u;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ConfigError("spline checkpoint: truncated stream");
    return v;
}
}  // namespace

void SplineField::save(std::ostream& out) const {
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, kVersion);
    write_pod(out, kEndianMark);
    write_pod(out, static_cast<std::uint32_t>(dims()));
    write_pod(out, static_cast<std::uint32_t>(slices()));
    write_pod(out, std::uint8_t{1});  // not-a-knot boundary
    for (const auto& b : bases_) {
        write_pod(out, static_cast<std::uint64_t>(b.n()));
        out.write(reinterpret_cast<const char*>(b.knots().data()),
                  static_cast<std::streamsize>(sizeof(double)) * b.n());
    }
    for (const auto& c : coeffs_) {
        write_pod(out, static_cast<std::uint64_t>(c.size()));
        out.write(reinterpret_cast<const char*>(c.data()),
                  static_cast<std::streamsize>(sizeof(double)) * c.size());
    }
}

SplineField SplineField::load(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ConfigError("spline checkpoint: bad magic");
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kVersion)
        throw ConfigError("spline checkpoint: unsupported format version " + std::to_string(version));
    const auto endian = read_pod<std::uint32_t>(in);
    if (endian != kEndianMark)
        throw ConfigError("spline checkpoint: endianness mismatch (file written on incompatible platform)");
    const auto d = read_pod<std::uint32_t>(in);
    const auto s = read_pod<std::uint32_t>(in);
    (void)read_pod<std::uint8_t>(in);
    if (d < 1 || d > 3 || s < 1) throw ConfigError("spline checkpoint: corrupt header");

    SplineField f;
    Eigen::Index expected = 1;
    for (std::uint32_t k = 0; k < d; ++k) {
        const auto nk = read_pod<std::uint64_t>(in);
        if (nk < 4 || nk > (1u << 20)) throw ConfigError("spline checkpoint: corrupt axis size");
        Eigen::VectorXd knots(static_cast<Eigen::Index>(nk));
        in.read(reinterpret_cast<char*>(knots.data()),
                static_cast<std::streamsize>(sizeof(double) * nk));
        if (!in) throw ConfigError("spline checkpoint: truncated axis data");
        f.bases_.emplace_back(std::move(knots));
        expected *= static_cast<Eigen::Index>(nk) + 2;
    }
    f.coeffs_.resize(s);
    for (std::uint32_t k = 0; k < s; ++k) {
        const auto nc = read_pod<std::uint64_t>(in);
        if (static_cast<Eigen::Index>(nc) != expected)
            throw ConfigError("spline checkpoint: coefficient block size mismatch");
        f.coeffs_[k].resize(static_cast<Eigen::Index>(nc));
        in.read(reinterpret_cast<char*>(f.coeffs_[k].data()),
                static_cast<std::streamsize>(sizeof(double) * nc));
        if (!in) throw ConfigError("spline checkpoint: truncated coefficient data");
    }
    return f;
}

bool SplineField::bit_identical(const SplineField& other) const {
    if (dims() != other.dims() || slices() != other.slices()) return false;
    for (int k = 0; k < dims(); ++k) {
        if (bases_[k].n() != other.bases_[k].n()) return false;
        if (std::memcmp(bases_[k].knots().data(), other.bases_[k].knots().data(),
                        sizeof(double) * bases_[k].n()) != 0)
            return false;
    }
    for (int s = 0; s < slices(); ++s) {
        if (coeffs_[s].size() != other.coeffs_[s].size()) return false;
        if (std::memcmp(coeffs_[s].data(), other.coeffs_[s].data(),
                        sizeof(double) * coeffs_[s].size()) != 0)
            return false;
    }
    return true;
}

}  // namespace mpru
