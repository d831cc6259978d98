#pragma once

#include <complex>
#include <vector>

namespace ecdm::edge {

using cplx = std::complex<double>;

// In-place forward DFT of arbitrary length (radix-2 Cooley-Tukey for powers
// of two, Bluestein chirp-z otherwise). No normalization.
void fft(std::vector<cplx>& a);

// In-place inverse DFT, normalized by 1/N.
void ifft(std::vector<cplx>& a);

// 2D transforms on row-major height x width grids.
void fft2(std::vector<cplx>& grid, int height, int width);
void ifft2(std::vector<cplx>& grid, int height, int width);

} // namespace ecdm::edge
