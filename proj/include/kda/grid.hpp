#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace kda {

using cplx = std::complex<double>;

// Uniform periodic grid on the unit torus, d = 1 or 2, n points per axis.
// Row-major layout: index = iy * n + ix (ix fastest). Owns the FFT plans.
class Grid {
public:
    Grid(int dim, int resolution);
    ~Grid();
    Grid(const Grid&) = delete;
    Grid& operator=(const Grid&) = delete;

    int dim() const noexcept { return dim_; }
    int resolution() const noexcept { return n_; }
    std::size_t size() const noexcept { return size_; }
    double spacing() const noexcept { return 1.0 / n_; }
    double cell_volume() const noexcept { return 1.0 / static_cast<double>(size_); }

    // Axis index of a flat index (axis 0 = x).
    int axis_index(std::size_t idx, int axis) const noexcept {
        return axis == 0 ? static_cast<int>(idx % n_) : static_cast<int>(idx / n_);
    }
    double coordinate(std::size_t idx, int axis) const noexcept {
        return axis_index(idx, axis) * spacing();
    }
    // Signed wavenumber of a Fourier index along one axis; Nyquist reported as +n/2.
    int wavenumber(std::size_t idx, int axis) const noexcept {
        int i = axis_index(idx, axis);
        return i <= n_ / 2 ? i : i - n_;
    }
    bool is_nyquist(std::size_t idx, int axis) const noexcept {
        return axis_index(idx, axis) == n_ / 2;
    }

    // Unnormalized forward transform of real data; backward returns the real
    // part of the normalized inverse.
    void forward(const double* in, cplx* out) const;
    void backward(const cplx* in, double* out) const;
    std::vector<cplx> forward(std::span<const double> in) const;
    std::vector<double> backward(std::span<const cplx> in) const;

    bool same_as(const Grid& o) const noexcept { return dim_ == o.dim_ && n_ == o.n_; }

private:
    int dim_;
    int n_;
    std::size_t size_;
    struct Plans;
    std::unique_ptr<Plans> plans_;
};

using GridPtr = std::shared_ptr<const Grid>;

// Shared grid instance per (dim, resolution).
GridPtr make_grid(int dim, int resolution);

// Real scalar field on a grid. Value type; contents fixed at construction and
// always finite.
class GridField {
public:
    GridField() = default;
    explicit GridField(GridPtr grid);  // zeros
    GridField(GridPtr grid, std::vector<double> values);

    static GridField constant(GridPtr grid, double c);
    static GridField from_function(GridPtr grid, const std::function<double(double, double)>& fn);

    const GridPtr& grid() const noexcept { return grid_; }
    bool empty() const noexcept { return !grid_; }
    std::size_t size() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    const std::vector<double>& vec() const noexcept { return values_; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    double mean() const;
    double max_abs() const;
    double min() const;
    double max() const;

    GridField operator+(const GridField& o) const;
    GridField operator-(const GridField& o) const;
    GridField operator-() const;
    GridField operator*(double s) const;
    GridField operator*(const GridField& o) const;  // pointwise

private:
    GridPtr grid_;
    std::vector<double> values_;
};

inline GridField operator*(double s, const GridField& f) { return f * s; }

// d-component vector field.
class VectorField {
public:
    VectorField() = default;
    explicit VectorField(std::vector<GridField> comps);
    static VectorField zeros(GridPtr grid);

    int dim() const noexcept { return static_cast<int>(comps_.size()); }
    const GridField& operator[](int a) const { return comps_[a]; }
    const std::vector<GridField>& components() const noexcept { return comps_; }
    const GridPtr& grid() const { return comps_.front().grid(); }

    VectorField operator+(const VectorField& o) const;
    VectorField operator-(const VectorField& o) const;
    VectorField operator*(double s) const;
    VectorField operator*(const GridField& s) const;  // scale each component pointwise

private:
    std::vector<GridField> comps_;
};

// One trigonometric term: amplitude * cos(2 pi k.x) or sin(2 pi k.x).
struct FourierMode {
    enum class Kind { Const, Cos, Sin };
    Kind kind = Kind::Const;
    std::array<int, 2> k{0, 0};
    double amplitude = 0.0;
};

GridField field_from_modes(GridPtr grid, std::span<const FourierMode> modes);

// Spectral calculus on the torus. Odd-order derivatives drop the Nyquist mode.
GridField partial(const GridField& f, int axis, int order = 1);
GridField mixed_partial(const GridField& f, int ox, int oy);
VectorField gradient(const GridField& f);
GridField divergence(const VectorField& u);
std::vector<GridField> hessian(const GridField& f);  // d*d, row-major

// Translation f(x) -> f(x - s) by phase multiplication.
GridField spectral_shift(const GridField& f, std::span<const double> displacement);
void spectral_shift_inplace(const Grid& g, std::span<double> values, std::span<const double> displacement,
                            std::vector<cplx>& scratch);

double l2_inner(const GridField& u, const GridField& w);
double l2_inner(const VectorField& u, const VectorField& w);
double l2_norm(const GridField& u);

// max over the grid and over k <= 3 of the Frobenius norm of D^k f.
double c3_norm(const GridField& f);

// Largest Fourier coefficient magnitude with some |k_axis| > band, relative to
// the largest coefficient overall (0 for the zero field).
double band_excess(const GridField& f, int band);
int default_band(const Grid& g);  // resolution / 4

}  // namespace kda
