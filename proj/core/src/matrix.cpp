#include "koopveh/matrix.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace koopveh::numkit {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
    if (data_.size() != rows_ * cols_)
        throw std::invalid_argument("Matrix: entries length != rows*cols");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw std::invalid_argument("Matrix: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diag(const std::vector<double>& d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
}

Matrix Matrix::from_column(const std::vector<double>& v) {
    Matrix m(v.size(), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = v[i];
    return m;
}

std::vector<double> Matrix::column(std::size_t j) const {
    std::vector<double> v(rows_);
    for (std::size_t i = 0; i < rows_; ++i) v[i] = (*this)(i, j);
    return v;
}

std::vector<double> Matrix::row(std::size_t i) const {
    return {data_.begin() + static_cast<std::ptrdiff_t>(i * cols_),
            data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols_)};
}

void Matrix::set_column(std::size_t j, const std::vector<double>& v) {
    if (v.size() != rows_) throw std::invalid_argument("set_column: size mismatch");
    for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = v[i];
}

Matrix Matrix::block(std::size_t i0, std::size_t j0, std::size_t r, std::size_t c) const {
    if (i0 + r > rows_ || j0 + c > cols_) throw std::invalid_argument("block: out of range");
    Matrix b(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) b(i, j) = (*this)(i0 + i, j0 + j);
    return b;
}

void Matrix::set_block(std::size_t i0, std::size_t j0, const Matrix& b) {
    if (i0 + b.rows() > rows_ || j0 + b.cols() > cols_)
        throw std::invalid_argument("set_block: out of range");
    for (std::size_t i = 0; i < b.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) (*this)(i0 + i, j0 + j) = b(i, j);
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

double Matrix::frobenius_norm() const {
    double s = 0.0;
    for (double x : data_) s += x * x;
    return std::sqrt(s);
}

double Matrix::max_abs() const {
    double m = 0.0;
    for (double x : data_) m = std::max(m, std::abs(x));
    return m;
}

Matrix& Matrix::operator+=(const Matrix& o) {
    if (rows_ != o.rows_ || cols_ != o.cols_) throw std::invalid_argument("operator+=: shape");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
    if (rows_ != o.rows_ || cols_ != o.cols_) throw std::invalid_argument("operator-=: shape");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dims differ");
    Matrix c(a.rows(), b.cols());
    if (a.rows() == 0 || b.cols() == 0 || a.cols() == 0) return c;
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(a.rows()),
                static_cast<int>(b.cols()), static_cast<int>(a.cols()), 1.0, a.data(),
                static_cast<int>(a.cols()), b.data(), static_cast<int>(b.cols()), 0.0, c.data(),
                static_cast<int>(c.cols()));
    return c;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
    if (a.cols() != x.size()) throw std::invalid_argument("matvec: size mismatch");
    std::vector<double> y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        const double* row = a.data() + i * a.cols();
        for (std::size_t j = 0; j < a.cols(); ++j) s += row[j] * x[j];
        y[i] = s;
    }
    return y;
}

std::vector<double> matvec_t(const Matrix& a, const std::vector<double>& x) {
    if (a.rows() != x.size()) throw std::invalid_argument("matvec_t: size mismatch");
    std::vector<double> y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* row = a.data() + i * a.cols();
        for (std::size_t j = 0; j < a.cols(); ++j) y[j] += row[j] * x[i];
    }
    return y;
}

// One-sided Jacobi: orthogonalize column pairs of A, accumulating the
// rotations into V. On exit A's columns are sigma_i * u_i.
SvdResult svd(const Matrix& m) {
    if (!m.all_finite()) throw std::invalid_argument("svd: non-finite input");
    const bool transposed = m.rows() < m.cols();
    Matrix a = transposed ? transpose(m) : m;
    const std::size_t rows = a.rows(), cols = a.cols();
    Matrix v = Matrix::identity(cols);

    const double eps = std::numeric_limits<double>::epsilon();
    const int max_sweeps = 60;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < cols; ++p) {
            for (std::size_t q = p + 1; q < cols; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < rows; ++i) {
                    const double xp = a(i, p), xq = a(i, q);
                    app += xp * xp;
                    aqq += xq * xq;
                    apq += xp * xq;
                }
                if (std::abs(apq) <= eps * std::sqrt(app * aqq) || apq == 0.0) continue;
                rotated = true;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < rows; ++i) {
                    const double xp = a(i, p), xq = a(i, q);
                    a(i, p) = c * xp - s * xq;
                    a(i, q) = s * xp + c * xq;
                }
                for (std::size_t i = 0; i < cols; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sigma(cols);
    Matrix u(rows, cols);
    for (std::size_t j = 0; j < cols; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < rows; ++i) s += a(i, j) * a(i, j);
        sigma[j] = std::sqrt(s);
        if (sigma[j] > 0.0)
            for (std::size_t i = 0; i < rows; ++i) u(i, j) = a(i, j) / sigma[j];
    }

    // Sort singular values descending, permuting U and V columns with them.
    std::vector<std::size_t> order(cols);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });
    SvdResult out;
    out.sigma.resize(cols);
    out.u = Matrix(rows, cols);
    out.v = Matrix(cols, cols);
    for (std::size_t j = 0; j < cols; ++j) {
        out.sigma[j] = sigma[order[j]];
        for (std::size_t i = 0; i < rows; ++i) out.u(i, j) = u(i, order[j]);
        for (std::size_t i = 0; i < cols; ++i) out.v(i, j) = v(i, order[j]);
    }
    if (transposed) std::swap(out.u, out.v);
    return out;
}

Matrix pinv(const Matrix& m, double tol) {
    if (!m.all_finite()) throw std::invalid_argument("pinv: non-finite input");
    if (tol < 0.0) throw std::invalid_argument("pinv: negative tolerance");
    SvdResult s = svd(m);
    const double smax = s.sigma.empty() ? 0.0 : s.sigma.front();
    const double cut =
        tol > 0.0 ? tol
                  : static_cast<double>(std::max(m.rows(), m.cols())) * smax *
                        std::numeric_limits<double>::epsilon();
    // pinv = V * diag(1/sigma) * U^T with small sigma zeroed
    Matrix vs = s.v;
    for (std::size_t j = 0; j < s.sigma.size(); ++j) {
        const double inv = s.sigma[j] > cut ? 1.0 / s.sigma[j] : 0.0;
        for (std::size_t i = 0; i < vs.rows(); ++i) vs(i, j) *= inv;
    }
    return matmul(vs, transpose(s.u));
}

Matrix lstsq_right(const Matrix& v, const Matrix& w) {
    if (v.cols() != w.cols())
        throw std::invalid_argument("lstsq_right: snapshot counts differ");
    // M = V W^T (W W^T)^dagger, equivalently V * pinv(W) by the Penrose identities.
    return matmul(v, pinv(w));
}

namespace {

using cplx = std::complex<double>;

// Complex Givens rotation zeroing b in (a, b).
void givens(cplx a, cplx b, cplx& c, cplx& s) {
    const double na = std::abs(a), nb = std::abs(b);
    if (nb == 0.0) {
        c = 1.0;
        s = 0.0;
        return;
    }
    const double r = std::hypot(na, nb);
    if (na == 0.0) {
        c = 0.0;
        s = std::conj(b) / nb;
        return;
    }
    c = na / r;
    s = (a / na) * std::conj(b) / r;
}

}  // namespace

// Hessenberg reduction by Givens similarity, then explicit shifted QR with
// Wilkinson shifts on the active trailing block.
std::vector<std::complex<double>> eigvals(const Matrix& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("eigvals: non-square input");
    if (m.rows() > 64) throw std::invalid_argument("eigvals: dimension > 64");
    if (!m.all_finite()) throw std::invalid_argument("eigvals: non-finite input");
    const std::size_t n = m.rows();
    std::vector<cplx> h(n * n);
    auto H = [&](std::size_t i, std::size_t j) -> cplx& { return h[i * n + j]; };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) H(i, j) = m(i, j);

    auto rot_rows = [&](std::size_t i1, std::size_t i2, cplx c, cplx s, std::size_t j0) {
        for (std::size_t j = j0; j < n; ++j) {
            const cplx x = H(i1, j), y = H(i2, j);
            H(i1, j) = c * x + s * y;
            H(i2, j) = -std::conj(s) * x + c * y;
        }
    };
    auto rot_cols = [&](std::size_t j1, std::size_t j2, cplx c, cplx s, std::size_t imax) {
        for (std::size_t i = 0; i < imax; ++i) {
            const cplx x = H(i, j1), y = H(i, j2);
            H(i, j1) = c * x + std::conj(s) * y;
            H(i, j2) = -s * x + c * y;
        }
    };

    // Reduce to upper Hessenberg.
    for (std::size_t k = 0; k + 2 < n; ++k) {
        for (std::size_t i = n - 1; i >= k + 2; --i) {
            if (std::abs(H(i, k)) == 0.0) continue;
            cplx c, s;
            givens(H(i - 1, k), H(i, k), c, s);
            rot_rows(i - 1, i, c, s, k);
            rot_cols(i - 1, i, c, s, n);
        }
    }

    std::vector<cplx> eigs;
    eigs.reserve(n);
    const double eps = std::numeric_limits<double>::epsilon();
    std::size_t hi = n;  // active block is [0, hi)
    int stall = 0;
    const int max_total = 200 * static_cast<int>(n) + 200;
    int total = 0;
    while (hi > 0) {
        if (hi == 1) {
            eigs.push_back(H(0, 0));
            break;
        }
        // Deflate any negligible subdiagonal at the bottom of the block.
        const std::size_t k = hi - 1;
        const double sub = std::abs(H(k, k - 1));
        if (sub <= eps * (std::abs(H(k, k)) + std::abs(H(k - 1, k - 1))) + 1e-300) {
            eigs.push_back(H(k, k));
            --hi;
            stall = 0;
            continue;
        }
        if (++total > max_total)
            throw std::runtime_error("eigvals: QR iteration failed to converge");

        // Wilkinson shift from the trailing 2x2.
        const cplx a = H(k - 1, k - 1), b = H(k - 1, k), c2 = H(k, k - 1), d = H(k, k);
        const cplx tr = a + d;
        const cplx det = a * d - b * c2;
        const cplx disc = std::sqrt(tr * tr - 4.0 * det);
        const cplx l1 = 0.5 * (tr + disc), l2 = 0.5 * (tr - disc);
        cplx mu = std::abs(l1 - d) < std::abs(l2 - d) ? l1 : l2;
        if (++stall % 12 == 0) mu += std::abs(H(k, k - 1));  // exceptional shift

        // Explicit shifted QR step on the active block.
        for (std::size_t i = 0; i < hi; ++i) H(i, i) -= mu;
        std::vector<std::pair<cplx, cplx>> rots(hi - 1);
        for (std::size_t i = 0; i + 1 < hi; ++i) {
            cplx cc, ss;
            givens(H(i, i), H(i + 1, i), cc, ss);
            rot_rows(i, i + 1, cc, ss, i);
            rots[i] = {cc, ss};
        }
        for (std::size_t i = 0; i + 1 < hi; ++i)
            rot_cols(i, i + 1, rots[i].first, rots[i].second, std::min(i + 2, hi));
        for (std::size_t i = 0; i < hi; ++i) H(i, i) += mu;
    }
    return eigs;
}

std::vector<double> solve_linear(const Matrix& a, const std::vector<double>& b) {
    if (a.rows() != a.cols() || a.rows() != b.size())
        throw std::invalid_argument("solve_linear: shape mismatch");
    const std::size_t n = a.rows();
    Matrix lu = a;
    std::vector<double> x = b;
    std::vector<std::size_t> piv(n);
    std::iota(piv.begin(), piv.end(), 0);
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(lu(i, k)) > std::abs(lu(p, k))) p = i;
        if (lu(p, k) == 0.0) throw std::runtime_error("solve_linear: singular matrix");
        if (p != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(p, j));
            std::swap(x[k], x[p]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = lu(i, k) / lu(k, k);
            lu(i, k) = f;
            for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= f * lu(k, j);
            x[i] -= f * x[k];
        }
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = x[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= lu(i, j) * x[j];
        x[i] = s / lu(i, i);
    }
    return x;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

double norm_inf(const std::vector<double>& a) {
    double m = 0.0;
    for (double x : a) m = std::max(m, std::abs(x));
    return m;
}

std::uint64_t Rng::next_u64() {
    // splitmix64; one stream per seed, identical everywhere.
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::gauss() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

std::size_t Rng::index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

}  // namespace koopveh::numkit
