#pragma once

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <vector>

namespace koopveh::numkit {

/// Dense real matrix, row-major.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix diag(const std::vector<double>& d);
    static Matrix from_column(const std::vector<double>& v);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::vector<double> column(std::size_t j) const;
    std::vector<double> row(std::size_t i) const;
    void set_column(std::size_t j, const std::vector<double>& v);
    Matrix block(std::size_t i0, std::size_t j0, std::size_t r, std::size_t c) const;
    void set_block(std::size_t i0, std::size_t j0, const Matrix& b);

    bool all_finite() const;
    double frobenius_norm() const;
    double max_abs() const;

    Matrix& operator+=(const Matrix& o);
    Matrix& operator-=(const Matrix& o);
    Matrix& operator*=(double s);

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

/// C = A * B via BLAS dgemm.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
std::vector<double> matvec(const Matrix& a, const std::vector<double>& x);
std::vector<double> matvec_t(const Matrix& a, const std::vector<double>& x);

/// Thin SVD m = U * diag(sigma) * V^T, sigma descending.
struct SvdResult {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;
};
SvdResult svd(const Matrix& m);

/// Moore-Penrose pseudoinverse. tol = 0 selects the machine default
/// max(rows, cols) * sigma_max * eps.
Matrix pinv(const Matrix& m, double tol = 0.0);

/// Minimum-norm minimizer M of ||V - M W||_F, i.e. M = V W^T (W W^T)^dagger.
Matrix lstsq_right(const Matrix& v, const Matrix& w);

/// All eigenvalues of a square matrix (n <= 64), unordered.
std::vector<std::complex<double>> eigvals(const Matrix& m);

/// Solve A x = b by LU with partial pivoting. A square nonsingular.
std::vector<double> solve_linear(const Matrix& a, const std::vector<double>& b);

// Small vector helpers shared across modules.
double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a);
double norm_inf(const std::vector<double>& a);

/// Deterministic RNG: xoshiro-free, just mt19937_64 with explicit
/// transforms so streams are identical across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);
    /// Standard normal via Box-Muller.
    double gauss();
    double gauss(double mean, double stddev) { return mean + stddev * gauss(); }
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace koopveh::numkit
