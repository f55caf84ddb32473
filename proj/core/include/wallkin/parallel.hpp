#pragma once

#include <cstddef>
#include <functional>

namespace wallkin {

/// Number of worker threads taken from WALLKIN_THREADS (default 1).
int thread_count();
void set_thread_count(int n);

/// Runs body(chunk_begin, chunk_end, chunk_index) over [0, n) split into
/// `chunks` contiguous ranges. The split depends only on n and chunks, never on
/// the thread count, so callers that keep per-chunk partials and merge them
/// in chunk order get results independent of scheduling.
void parallel_chunks(std::size_t n, std::size_t chunks,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

}  // namespace wallkin
