/// \file fft.hpp
/// \brief FFT-backed linear convolution.
///
/// Thin wrapper around FFTW (double precision).  Plans are created with
/// FFTW_ESTIMATE so results are bit-reproducible across runs and machines
/// with the same FFTW build, and cached per transform size behind a mutex;
/// execution uses the new-array interface, so concurrent calls from worker
/// threads are safe.
#pragma once

#include <vector>

namespace fpcov {

/// Full linear convolution of a and b: output size |a| + |b| - 1.
/// Inputs are zero-padded to a 5-smooth length for the transforms.
std::vector<double> fft_convolve(const std::vector<double>& a,
                                 const std::vector<double>& b);

/// Smallest integer >= n whose prime factors are all in {2, 3, 5}.
std::size_t next_smooth_size(std::size_t n);

}  // namespace fpcov
