#pragma once

#include <cstddef>
#include <functional>

namespace lhmc {

/// Worker count from an explicit request, else LATENT_HMC_JOBS, else the
/// hardware concurrency. Always at least 1.
std::size_t resolve_jobs(std::size_t requested);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Rethrows the first
/// exception after all workers stop.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

}  // namespace lhmc
