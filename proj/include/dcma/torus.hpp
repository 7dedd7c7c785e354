#ifndef DCMA_TORUS_HPP
#define DCMA_TORUS_HPP

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcma
{

// Unit torus [0,1)^2 sampled at x_i = i / nx, y_j = j / ny; storage is x-major.
struct torus_grid {
    int nx = 64, ny = 64;

    std::size_t size() const
    {
        return std::size_t(nx) * ny;
    }
    double x(int i) const
    {
        return double(i) / nx;
    }
    double y(int j) const
    {
        return double(j) / ny;
    }
};

struct solvability_error : std::invalid_argument {
    double mean;
    explicit solvability_error(double m)
        : std::invalid_argument("torus right-hand side is not admissible: mean of |S|^2 e^G - 1 is " + std::to_string(m)), mean(m)
    {
    }
};

// |S|^2 e^G - 1 on the grid
std::vector<double> torus_rhs(const std::vector<double> &G, const std::vector<double> &S, const torus_grid &grid);

// Zero-mean phi with Delta phi = 4 (|S|^2 e^G - 1), Delta = d_xx + d_yy.
// Throws solvability_error if the grid mean of the right side exceeds 1e-12.
std::vector<double> torus_linear_solve(const std::vector<double> &G, const std::vector<double> &S, const torus_grid &grid);

// RMS (= l2 of the Fourier coefficients) of Delta phi - 4 (|S|^2 e^G - 1), with
// Delta applied spectrally
double torus_residual(const std::vector<double> &phi, const std::vector<double> &G, const std::vector<double> &S,
                      const torus_grid &grid);

struct torus_problem {
    std::string name;
    torus_grid grid;
    std::vector<double> G, S;
    std::vector<double> exact; // empty when unknown
};

// G = 0, S = sqrt(2) cos(pi x): |S|^2 - 1 = cos(2 pi x), phi = -cos(2 pi x) / pi^2.
// The divisor is the circle x = 1/2.
torus_problem torus_single_mode(const torus_grid &grid);
// same S, G a random trigonometric polynomial shifted so that the grid mean of
// |S|^2 e^G is exactly 1 up to rounding
torus_problem torus_random(const torus_grid &grid, std::uint64_t seed, int index);

} // namespace dcma

#endif
