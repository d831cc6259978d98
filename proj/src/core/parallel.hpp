#pragma once

#include <cstdint>
#include <functional>

namespace ecdm {

// Number of worker threads. Defaults to hardware concurrency clamped to 8;
// the ECDM_WORKERS environment variable overrides. Fixed for the lifetime of
// the process so chunk boundaries (and therefore floating-point results) are
// reproducible between runs on the same machine.
int worker_count();

// Runs fn(begin, end) over [0, n) split into one contiguous chunk per worker.
// Chunks are disjoint, so writes to per-index outputs race-free and results
// do not depend on scheduling order.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

// Variant passing the chunk index, for callers keeping per-chunk partial
// accumulators that are reduced serially afterwards in chunk order.
int parallel_chunk_count(int64_t n);
void parallel_for_indexed(int64_t n,
                          const std::function<void(int, int64_t, int64_t)>& fn);

} // namespace ecdm
