#include "edge/fft.hpp"

#include <cmath>
#include <stdexcept>

namespace ecdm::edge {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Iterative radix-2 Cooley-Tukey; n must be a power of two.
void fft_pow2(std::vector<cplx>& a, bool inverse) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 1.0 : -1.0) * kTwoPi / static_cast<double>(len);
        const cplx wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const cplx u = a[i + k];
                const cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

// Bluestein chirp-z transform for arbitrary n, built on a padded power-of-2
// convolution.
void fft_bluestein(std::vector<cplx>& a, bool inverse) {
    const size_t n = a.size();
    const size_t m = next_pow2(2 * n - 1);
    const double sign = inverse ? 1.0 : -1.0;

    std::vector<cplx> chirp(n);
    for (size_t k = 0; k < n; ++k) {
        // angle = sign * pi * k^2 / n, with k^2 reduced mod 2n to keep the
        // argument small for large k
        const unsigned long long k2 = (static_cast<unsigned long long>(k) * k) % (2 * n);
        const double ang = sign * kTwoPi / 2.0 * static_cast<double>(k2) / static_cast<double>(n);
        chirp[k] = cplx(std::cos(ang), std::sin(ang));
    }

    std::vector<cplx> x(m, cplx(0, 0)), y(m, cplx(0, 0));
    for (size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
    y[0] = std::conj(chirp[0]);
    for (size_t k = 1; k < n; ++k) y[k] = y[m - k] = std::conj(chirp[k]);

    fft_pow2(x, false);
    fft_pow2(y, false);
    for (size_t i = 0; i < m; ++i) x[i] *= y[i];
    fft_pow2(x, true);
    const double scale = 1.0 / static_cast<double>(m);
    for (size_t k = 0; k < n; ++k) a[k] = x[k] * scale * chirp[k];
}

void fft_any(std::vector<cplx>& a, bool inverse) {
    if (a.size() <= 1) return;
    if (is_pow2(a.size()))
        fft_pow2(a, inverse);
    else
        fft_bluestein(a, inverse);
}

} // namespace

void fft(std::vector<cplx>& a) { fft_any(a, false); }

void ifft(std::vector<cplx>& a) {
    fft_any(a, true);
    const double scale = 1.0 / static_cast<double>(a.size());
    for (auto& v : a) v *= scale;
}

void fft2(std::vector<cplx>& grid, int height, int width) {
    if (static_cast<size_t>(height) * width != grid.size())
        throw std::invalid_argument("fft2: grid size does not match dimensions");
    std::vector<cplx> row(width), col(height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) row[x] = grid[static_cast<size_t>(y) * width + x];
        fft_any(row, false);
        for (int x = 0; x < width; ++x) grid[static_cast<size_t>(y) * width + x] = row[x];
    }
    for (int x = 0; x < width; ++x) {
        for (int y = 0; y < height; ++y) col[y] = grid[static_cast<size_t>(y) * width + x];
        fft_any(col, false);
        for (int y = 0; y < height; ++y) grid[static_cast<size_t>(y) * width + x] = col[y];
    }
}

void ifft2(std::vector<cplx>& grid, int height, int width) {
    if (static_cast<size_t>(height) * width != grid.size())
        throw std::invalid_argument("ifft2: grid size does not match dimensions");
    std::vector<cplx> row(width), col(height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) row[x] = grid[static_cast<size_t>(y) * width + x];
        fft_any(row, true);
        for (int x = 0; x < width; ++x) grid[static_cast<size_t>(y) * width + x] = row[x];
    }
    const double scale = 1.0 / (static_cast<double>(height) * width);
    for (int x = 0; x < width; ++x) {
        for (int y = 0; y < height; ++y) col[y] = grid[static_cast<size_t>(y) * width + x];
        fft_any(col, true);
        for (int y = 0; y < height; ++y)
            grid[static_cast<size_t>(y) * width + x] = col[y] * scale;
    }
}

} // namespace ecdm::edge
