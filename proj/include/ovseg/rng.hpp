/*
 * Copyright 2026 The ovseg Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef OVSEG_RNG_HPP_
#define OVSEG_RNG_HPP_

#include <cstdint>
#include <initializer_list>
#include <random>

#include "ovseg/types.hpp"

namespace ovseg {

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Derives an independent stream seed from a base seed and a key path, so
// that e.g. (seed, proposal, layer) draws never share a stream.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  return Rng(derive_seed(seed, keys));
}

Mat gaussian_matrix(int rows, int cols, Rng& rng, double stddev = 1.0);

// rows x cols matrix with orthonormal columns (rows >= cols) or orthonormal
// rows (rows < cols), from the QR factorization of a Gaussian matrix.
Mat orthogonal_matrix(int rows, int cols, Rng& rng);

}  // namespace ovseg

#endif  // OVSEG_RNG_HPP_
