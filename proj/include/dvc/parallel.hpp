#pragma once

#include <cstdint>
#include <span>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dvc {

// Worker pool size for node/voxel parallel sections. 0 means "hardware default".
// Changing the count must never change any output byte: parallel loops write
// disjoint slots and reductions use fixed-order combination (see chunked_sum).
void set_worker_count(int n);
int worker_count();

template <class Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) fn(i);
#else
  for (std::int64_t i = 0; i < n; ++i) fn(i);
#endif
}

// Fixed-order pairwise summation; result independent of worker count.
double pairwise_sum(std::span<const double> xs);

// Deterministic parallel reduction of f(0) + ... + f(n-1): fixed-size chunks
// summed sequentially, chunk sums combined pairwise in index order.
template <class Fn>
double chunked_sum(std::int64_t n, Fn&& f) {
  constexpr std::int64_t kChunk = 4096;
  const std::int64_t nchunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(std::size_t(nchunks), 0.0);
  parallel_for(nchunks, [&](std::int64_t c) {
    const std::int64_t lo = c * kChunk;
    const std::int64_t hi = std::min(n, lo + kChunk);
    double s = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) s += f(i);
    partial[std::size_t(c)] = s;
  });
  return pairwise_sum(partial);
}

}  // namespace dvc
