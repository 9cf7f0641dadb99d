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

#include "fedbea/rng.hpp"

#include <numeric>

namespace fedbea {

std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                          std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t h = mix64(master ^ mix64(static_cast<std::uint64_t>(stream)));
  for (std::uint64_t t : tags) h = mix64(h ^ mix64(t + 0x632BE59BD9B4E019ULL));
  return h;
}

std::uint64_t uniform_below(Engine& eng, std::uint64_t bound) {
  if (bound <= 1) return 0;
  const std::uint64_t limit = Engine::max() - (Engine::max() % bound);
  std::uint64_t x;
  do {
    x = eng();
  } while (x >= limit);
  return x % bound;
}

std::vector<std::size_t> random_permutation(Engine& eng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(eng, i));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

}  // namespace fedbea
