#ifndef ABYSSLIGHT_THREADING_HPP
#define ABYSSLIGHT_THREADING_HPP

#include <cstddef>
#include <functional>

namespace abysslight {

// Process-wide worker cap for data-parallel pixel kernels.
// 0 means "use all hardware threads". Outputs are required to be
// bit-identical for any setting, so this only affects speed.
void set_max_threads(int n);
int max_threads();

// Runs fn(begin, end) over disjoint chunks of [0, count). Chunks are
// contiguous and every index is visited exactly once; fn must write only
// to locations derived from its own index range.
void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace abysslight

#endif
