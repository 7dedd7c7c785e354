#include <dcma/torus.hpp>

#include <cmath>
#include <complex>
#include <mutex>

#include <fftw3.h>

#include <dcma/rng.hpp>

namespace dcma
{

namespace
{

// the FFTW planner is not reentrant
std::mutex planner_mutex;

void check_grid(const torus_grid &grid, std::size_t n_g, std::size_t n_s)
{
    if (grid.nx < 2 || grid.ny < 2) {
        throw std::invalid_argument("torus grid needs at least 2 x 2 points");
    }
    if (n_g != grid.size() || n_s != grid.size()) {
        throw std::invalid_argument("torus samples do not match the grid");
    }
}

// forward r2c and backward c2r with the 1/N normalization folded into backward
class spectral_2d
{
public:
    explicit spectral_2d(const torus_grid &grid) : m_grid(grid), m_nyc(grid.ny / 2 + 1)
    {
        m_real = fftw_alloc_real(grid.size());
        m_spec = fftw_alloc_complex(std::size_t(grid.nx) * m_nyc);
        std::lock_guard<std::mutex> lock(planner_mutex);
        m_fwd = fftw_plan_dft_r2c_2d(grid.nx, grid.ny, m_real, m_spec, FFTW_ESTIMATE);
        m_bwd = fftw_plan_dft_c2r_2d(grid.nx, grid.ny, m_spec, m_real, FFTW_ESTIMATE);
    }
    ~spectral_2d()
    {
        {
            std::lock_guard<std::mutex> lock(planner_mutex);
            fftw_destroy_plan(m_fwd);
            fftw_destroy_plan(m_bwd);
        }
        fftw_free(m_real);
        fftw_free(m_spec);
    }
    spectral_2d(const spectral_2d &) = delete;
    spectral_2d &operator=(const spectral_2d &) = delete;

    std::vector<std::complex<double>> forward(const std::vector<double> &f)
    {
        std::copy(f.begin(), f.end(), m_real);
        fftw_execute(m_fwd);
        std::vector<std::complex<double>> out(std::size_t(m_grid.nx) * m_nyc);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = {m_spec[i][0], m_spec[i][1]};
        }
        return out;
    }
    std::vector<double> backward(const std::vector<std::complex<double>> &c)
    {
        for (std::size_t i = 0; i < c.size(); ++i) {
            m_spec[i][0] = c[i].real();
            m_spec[i][1] = c[i].imag();
        }
        fftw_execute(m_bwd);
        const double scale = 1.0 / double(m_grid.size());
        std::vector<double> out(m_grid.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = m_real[i] * scale;
        }
        return out;
    }
    // |k|^2 of half-spectrum entry (i, j)
    double k2(int i, int j) const
    {
        const int kx = i <= m_grid.nx / 2 ? i : i - m_grid.nx;
        return double(kx) * kx + double(j) * j;
    }
    int nyc() const
    {
        return m_nyc;
    }

private:
    torus_grid m_grid;
    int m_nyc;
    double *m_real = nullptr;
    fftw_complex *m_spec = nullptr;
    fftw_plan m_fwd = nullptr, m_bwd = nullptr;
};

double grid_mean(const std::vector<double> &f)
{
    double s = 0.0;
    for (double v : f) {
        s += v;
    }
    return s / double(f.size());
}

} // namespace

std::vector<double> torus_rhs(const std::vector<double> &G, const std::vector<double> &S, const torus_grid &grid)
{
    check_grid(grid, G.size(), S.size());
    std::vector<double> f(grid.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!std::isfinite(G[i]) || !std::isfinite(S[i])) {
            throw std::invalid_argument("torus samples must be finite");
        }
        f[i] = S[i] * S[i] * std::exp(G[i]) - 1.0;
    }
    return f;
}

std::vector<double> torus_linear_solve(const std::vector<double> &G, const std::vector<double> &S, const torus_grid &grid)
{
    const auto f = torus_rhs(G, S, grid);
    const double mean = grid_mean(f);
    if (std::abs(mean) > 1e-12) {
        throw solvability_error(mean);
    }
    spectral_2d fft(grid);
    auto c = fft.forward(f);
    const double fac = -1.0 / (M_PI * M_PI); // 4 / (-4 pi^2)
    for (int i = 0; i < grid.nx; ++i) {
        for (int j = 0; j < fft.nyc(); ++j) {
            auto &v = c[std::size_t(i) * fft.nyc() + j];
            const double k2 = fft.k2(i, j);
            v = k2 == 0.0 ? 0.0 : v * (fac / k2);
        }
    }
    return fft.backward(c);
}

double torus_residual(const std::vector<double> &phi, const std::vector<double> &G, const std::vector<double> &S,
                      const torus_grid &grid)
{
    const auto f = torus_rhs(G, S, grid);
    if (phi.size() != grid.size()) {
        throw std::invalid_argument("phi does not match the grid");
    }
    spectral_2d fft(grid);
    auto c = fft.forward(phi);
    const auto fh = fft.forward(f);
    for (int i = 0; i < grid.nx; ++i) {
        for (int j = 0; j < fft.nyc(); ++j) {
            const std::size_t at = std::size_t(i) * fft.nyc() + j;
            c[at] = -4.0 * M_PI * M_PI * fft.k2(i, j) * c[at] - 4.0 * fh[at];
        }
    }
    const auto r = fft.backward(c);
    double s = 0.0;
    for (double v : r) {
        s += v * v;
    }
    return std::sqrt(s / double(r.size()));
}

torus_problem torus_single_mode(const torus_grid &grid)
{
    torus_problem p{"single_mode", grid, std::vector<double>(grid.size(), 0.0), std::vector<double>(grid.size()),
                    std::vector<double>(grid.size())};
    for (int i = 0; i < grid.nx; ++i) {
        for (int j = 0; j < grid.ny; ++j) {
            const std::size_t at = std::size_t(i) * grid.ny + j;
            p.S[at] = std::sqrt(2.0) * std::cos(M_PI * grid.x(i));
            p.exact[at] = -std::cos(2 * M_PI * grid.x(i)) / (M_PI * M_PI);
        }
    }
    return p;
}

torus_problem torus_random(const torus_grid &grid, std::uint64_t seed, int index)
{
    counter_rng rng(seed, "torus_random/" + std::to_string(index));
    struct mode {
        int kx, ky;
        double a, b;
    };
    std::vector<mode> modes;
    for (int t = 0; t < 6; ++t) {
        const int kx = static_cast<int>(rng.uniform() * 5) - 2;
        const int ky = static_cast<int>(rng.uniform() * 5) - 2;
        modes.push_back({kx, ky, rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15)});
    }
    torus_problem p = torus_single_mode(grid);
    p.name = "random_" + std::to_string(index);
    p.exact.clear();
    double s = 0.0;
    for (int i = 0; i < grid.nx; ++i) {
        for (int j = 0; j < grid.ny; ++j) {
            const std::size_t at = std::size_t(i) * grid.ny + j;
            double g = 0.0;
            for (const auto &m : modes) {
                const double arg = 2 * M_PI * (m.kx * grid.x(i) + m.ky * grid.y(j));
                g += m.a * std::cos(arg) + m.b * std::sin(arg);
            }
            p.G[at] = g;
            s += p.S[at] * p.S[at] * std::exp(g);
        }
    }
    const double shift = std::log(s / double(grid.size()));
    for (auto &g : p.G) {
        g -= shift;
    }
    return p;
}

} // namespace dcma
