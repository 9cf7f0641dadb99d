/*
 * Copyright 2026 The fedbea Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FEDBEA_RNG_HPP_
#define FEDBEA_RNG_HPP_

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace fedbea {

// SplitMix64 finalizer. Used to derive independent stream seeds from a
// master seed and a tuple of integer tags, so no stream depends on how many
// draws another stream consumed.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Stream tags. Distinct domains never collide for equal numeric tags.
enum class Stream : std::uint64_t {
  kBatchOrder = 1,
  kParticipants = 2,
  kPartition = 3,
  kDataset = 4,
  kTasks = 5,
  kMonteCarlo = 6,
  kInit = 7,
  kPowerIteration = 8,
  kShardBatches = 9,
  kCentralOrder = 10,
};

std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                          std::initializer_list<std::uint64_t> tags) noexcept;

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t master, Stream stream,
                          std::initializer_list<std::uint64_t> tags) {
  return Engine(derive_seed(master, stream, tags));
}

// Uniform integer in [0, bound) via rejection; independent of the standard
// library's distribution implementation.
std::uint64_t uniform_below(Engine& eng, std::uint64_t bound);

// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> random_permutation(Engine& eng, std::size_t n);

}  // namespace fedbea

#endif  // FEDBEA_RNG_HPP_
