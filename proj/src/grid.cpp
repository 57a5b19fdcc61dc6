#include "kda/grid.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace kda {

namespace {

// The FFTW planner is not thread-safe; execution of an existing plan is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

void require_same_grid(const GridField& a, const GridField& b) {
    if (a.empty() || b.empty() || !a.grid()->same_as(*b.grid()))
        throw std::invalid_argument("grid mismatch between fields");
}

}  // namespace

struct Grid::Plans {
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
};

Grid::Grid(int dim, int resolution) : dim_(dim), n_(resolution) {
    if (dim != 1 && dim != 2) throw std::invalid_argument("grid dimension must be 1 or 2");
    if (resolution < 4 || !is_power_of_two(resolution))
        throw std::invalid_argument("grid resolution must be a power of two >= 4");
    size_ = dim == 1 ? static_cast<std::size_t>(n_) : static_cast<std::size_t>(n_) * n_;
    plans_ = std::make_unique<Plans>();
    std::lock_guard lock(planner_mutex());
    auto* a = fftw_alloc_complex(size_);
    auto* b = fftw_alloc_complex(size_);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    if (dim == 1) {
        plans_->fwd = fftw_plan_dft_1d(n_, a, b, FFTW_FORWARD, flags);
        plans_->bwd = fftw_plan_dft_1d(n_, a, b, FFTW_BACKWARD, flags);
    } else {
        plans_->fwd = fftw_plan_dft_2d(n_, n_, a, b, FFTW_FORWARD, flags);
        plans_->bwd = fftw_plan_dft_2d(n_, n_, a, b, FFTW_BACKWARD, flags);
    }
    fftw_free(a);
    fftw_free(b);
    if (!plans_->fwd || !plans_->bwd) throw std::runtime_error("FFT plan creation failed");
}

Grid::~Grid() {
    std::lock_guard lock(planner_mutex());
    if (plans_) {
        fftw_destroy_plan(plans_->fwd);
        fftw_destroy_plan(plans_->bwd);
    }
}

void Grid::forward(const double* in, cplx* out) const {
    std::vector<cplx> buf(in, in + size_);
    fftw_execute_dft(plans_->fwd, reinterpret_cast<fftw_complex*>(buf.data()),
                     reinterpret_cast<fftw_complex*>(out));
}

void Grid::backward(const cplx* in, double* out) const {
    std::vector<cplx> src(in, in + size_);
    std::vector<cplx> dst(size_);
    fftw_execute_dft(plans_->bwd, reinterpret_cast<fftw_complex*>(src.data()),
                     reinterpret_cast<fftw_complex*>(dst.data()));
    const double inv = 1.0 / static_cast<double>(size_);
    for (std::size_t i = 0; i < size_; ++i) out[i] = dst[i].real() * inv;
}

std::vector<cplx> Grid::forward(std::span<const double> in) const {
    if (in.size() != size_) throw std::invalid_argument("FFT input size mismatch");
    std::vector<cplx> out(size_);
    forward(in.data(), out.data());
    return out;
}

std::vector<double> Grid::backward(std::span<const cplx> in) const {
    if (in.size() != size_) throw std::invalid_argument("FFT input size mismatch");
    std::vector<double> out(size_);
    backward(in.data(), out.data());
    return out;
}

GridPtr make_grid(int dim, int resolution) {
    static std::mutex m;
    static std::map<std::pair<int, int>, std::weak_ptr<const Grid>> cache;
    std::lock_guard lock(m);
    auto& slot = cache[{dim, resolution}];
    if (auto g = slot.lock()) return g;
    auto g = std::make_shared<const Grid>(dim, resolution);
    slot = g;
    return g;
}

// ---------------------------------------------------------------- GridField

GridField::GridField(GridPtr grid) : grid_(std::move(grid)) {
    if (!grid_) throw std::invalid_argument("null grid");
    values_.assign(grid_->size(), 0.0);
}

GridField::GridField(GridPtr grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
    if (!grid_) throw std::invalid_argument("null grid");
    if (values_.size() != grid_->size())
        throw std::invalid_argument("field has " + std::to_string(values_.size()) + " values, grid expects " +
                                    std::to_string(grid_->size()));
    for (std::size_t i = 0; i < values_.size(); ++i)
        if (!std::isfinite(values_[i]))
            throw std::invalid_argument("non-finite field value at index " + std::to_string(i));
}

GridField GridField::constant(GridPtr grid, double c) {
    const std::size_t n = grid->size();
    return GridField(std::move(grid), std::vector<double>(n, c));
}

GridField GridField::from_function(GridPtr grid, const std::function<double(double, double)>& fn) {
    std::vector<double> v(grid->size());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = fn(grid->coordinate(i, 0), grid->dim() == 2 ? grid->coordinate(i, 1) : 0.0);
    return GridField(std::move(grid), std::move(v));
}

double GridField::mean() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s / static_cast<double>(values_.size());
}

double GridField::max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
}

double GridField::min() const { return *std::min_element(values_.begin(), values_.end()); }
double GridField::max() const { return *std::max_element(values_.begin(), values_.end()); }

GridField GridField::operator+(const GridField& o) const {
    require_same_grid(*this, o);
    std::vector<double> v(values_);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.values_[i];
    return GridField(grid_, std::move(v));
}

GridField GridField::operator-(const GridField& o) const {
    require_same_grid(*this, o);
    std::vector<double> v(values_);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= o.values_[i];
    return GridField(grid_, std::move(v));
}

GridField GridField::operator-() const { return *this * -1.0; }

GridField GridField::operator*(double s) const {
    std::vector<double> v(values_);
    for (double& x : v) x *= s;
    return GridField(grid_, std::move(v));
}

GridField GridField::operator*(const GridField& o) const {
    require_same_grid(*this, o);
    std::vector<double> v(values_);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= o.values_[i];
    return GridField(grid_, std::move(v));
}

// -------------------------------------------------------------- VectorField

VectorField::VectorField(std::vector<GridField> comps) : comps_(std::move(comps)) {
    if (comps_.empty()) throw std::invalid_argument("vector field needs at least one component");
    if (static_cast<int>(comps_.size()) != comps_.front().grid()->dim())
        throw std::invalid_argument("vector field component count must equal grid dimension");
    for (const auto& c : comps_) require_same_grid(c, comps_.front());
}

VectorField VectorField::zeros(GridPtr grid) {
    std::vector<GridField> c(grid->dim(), GridField(grid));
    return VectorField(std::move(c));
}

VectorField VectorField::operator+(const VectorField& o) const {
    std::vector<GridField> c;
    for (int a = 0; a < dim(); ++a) c.push_back(comps_[a] + o.comps_[a]);
    return VectorField(std::move(c));
}

VectorField VectorField::operator-(const VectorField& o) const {
    std::vector<GridField> c;
    for (int a = 0; a < dim(); ++a) c.push_back(comps_[a] - o.comps_[a]);
    return VectorField(std::move(c));
}

VectorField VectorField::operator*(double s) const {
    std::vector<GridField> c;
    for (const auto& x : comps_) c.push_back(x * s);
    return VectorField(std::move(c));
}

VectorField VectorField::operator*(const GridField& s) const {
    std::vector<GridField> c;
    for (const auto& x : comps_) c.push_back(x * s);
    return VectorField(std::move(c));
}

// ------------------------------------------------------------------ calculus

GridField field_from_modes(GridPtr grid, std::span<const FourierMode> modes) {
    const double tau = 2.0 * std::numbers::pi;
    std::vector<double> v(grid->size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = grid->coordinate(i, 0);
        const double y = grid->dim() == 2 ? grid->coordinate(i, 1) : 0.0;
        for (const auto& m : modes) {
            const double phase = tau * (m.k[0] * x + m.k[1] * y);
            switch (m.kind) {
                case FourierMode::Kind::Const: v[i] += m.amplitude; break;
                case FourierMode::Kind::Cos: v[i] += m.amplitude * std::cos(phase); break;
                case FourierMode::Kind::Sin: v[i] += m.amplitude * std::sin(phase); break;
            }
        }
    }
    return GridField(std::move(grid), std::move(v));
}

GridField mixed_partial(const GridField& f, int ox, int oy) {
    const Grid& g = *f.grid();
    if (ox < 0 || oy < 0 || (g.dim() == 1 && oy != 0)) throw std::invalid_argument("bad derivative order");
    if (ox == 0 && oy == 0) return f;
    auto c = g.forward(f.values());
    const double tau = 2.0 * std::numbers::pi;
    const std::array<int, 2> ord{ox, oy};
    for (std::size_t i = 0; i < c.size(); ++i) {
        cplx factor{1.0, 0.0};
        for (int a = 0; a < g.dim(); ++a) {
            if (ord[a] == 0) continue;
            if (ord[a] % 2 == 1 && g.is_nyquist(i, a)) {
                factor = 0.0;
                break;
            }
            const cplx ik{0.0, tau * g.wavenumber(i, a)};
            factor *= std::pow(ik, ord[a]);
        }
        c[i] *= factor;
    }
    return GridField(f.grid(), g.backward(c));
}

GridField partial(const GridField& f, int axis, int order) {
    return axis == 0 ? mixed_partial(f, order, 0) : mixed_partial(f, 0, order);
}

VectorField gradient(const GridField& f) {
    std::vector<GridField> c;
    for (int a = 0; a < f.grid()->dim(); ++a) c.push_back(partial(f, a));
    return VectorField(std::move(c));
}

GridField divergence(const VectorField& u) {
    GridField out = partial(u[0], 0);
    for (int a = 1; a < u.dim(); ++a) out = out + partial(u[a], a);
    return out;
}

std::vector<GridField> hessian(const GridField& f) {
    const int d = f.grid()->dim();
    std::vector<GridField> h;
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            std::array<int, 2> o{0, 0};
            ++o[a];
            ++o[b];
            h.push_back(mixed_partial(f, o[0], o[1]));
        }
    return h;
}

void spectral_shift_inplace(const Grid& g, std::span<double> values, std::span<const double> s,
                            std::vector<cplx>& scratch) {
    bool zero = true;
    for (int a = 0; a < g.dim(); ++a) zero = zero && s[a] == 0.0;
    if (zero) return;
    scratch.resize(g.size());
    g.forward(values.data(), scratch.data());
    const double tau = 2.0 * std::numbers::pi;
    const int n = g.resolution();
    // Per-axis phase tables: e^{-2 pi i k s}, Nyquist gets the real cos factor.
    std::array<std::vector<cplx>, 2> phase;
    for (int a = 0; a < g.dim(); ++a) {
        phase[a].resize(n);
        for (int i = 0; i < n; ++i) {
            const int k = i <= n / 2 ? i : i - n;
            phase[a][i] = (i == n / 2) ? cplx(std::cos(tau * k * s[a]), 0.0) : std::polar(1.0, -tau * k * s[a]);
        }
    }
    for (std::size_t i = 0; i < scratch.size(); ++i) {
        cplx f = phase[0][g.axis_index(i, 0)];
        if (g.dim() == 2) f *= phase[1][g.axis_index(i, 1)];
        scratch[i] *= f;
    }
    g.backward(scratch.data(), values.data());
}

GridField spectral_shift(const GridField& f, std::span<const double> displacement) {
    if (static_cast<int>(displacement.size()) != f.grid()->dim())
        throw std::invalid_argument("displacement dimension mismatch");
    for (double s : displacement)
        if (!std::isfinite(s)) throw std::invalid_argument("non-finite displacement");
    std::vector<double> v = f.vec();
    std::vector<cplx> scratch;
    spectral_shift_inplace(*f.grid(), v, displacement, scratch);
    return GridField(f.grid(), std::move(v));
}

double l2_inner(const GridField& u, const GridField& w) {
    require_same_grid(u, w);
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * w[i];
    return s * u.grid()->cell_volume();
}

double l2_inner(const VectorField& u, const VectorField& w) {
    if (u.dim() != w.dim()) throw std::invalid_argument("vector field dimension mismatch");
    double s = 0.0;
    for (int a = 0; a < u.dim(); ++a) s += l2_inner(u[a], w[a]);
    return s;
}

double l2_norm(const GridField& u) { return std::sqrt(l2_inner(u, u)); }

double c3_norm(const GridField& f) {
    const Grid& g = *f.grid();
    double best = 0.0;
    for (int k = 0; k <= 3; ++k) {
        std::vector<double> frob2(g.size(), 0.0);
        for (int ox = 0; ox <= k; ++ox) {
            const int oy = k - ox;
            if (g.dim() == 1 && oy != 0) continue;
            // Number of ordered index tuples with this (ox, oy) split.
            double mult = 1.0;
            if (g.dim() == 2) mult = std::tgamma(k + 1.0) / (std::tgamma(ox + 1.0) * std::tgamma(oy + 1.0));
            const GridField dk = mixed_partial(f, ox, oy);
            for (std::size_t i = 0; i < g.size(); ++i) frob2[i] += mult * dk[i] * dk[i];
        }
        for (double v : frob2) best = std::max(best, std::sqrt(v));
    }
    return best;
}

double band_excess(const GridField& f, int band) {
    const Grid& g = *f.grid();
    auto c = g.forward(f.values());
    double all = 0.0, above = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double m = std::abs(c[i]);
        all = std::max(all, m);
        bool out = false;
        for (int a = 0; a < g.dim(); ++a) out = out || std::abs(g.wavenumber(i, a)) > band;
        if (out) above = std::max(above, m);
    }
    return all > 0.0 ? above / all : 0.0;
}

int default_band(const Grid& g) { return g.resolution() / 4; }

}  // namespace kda
