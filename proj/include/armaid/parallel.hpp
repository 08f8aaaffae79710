#pragma once

#include <cstddef>
#include <functional>

namespace armaid {

/// Process-wide worker count used by parallel_for (default 1).
void set_num_threads(int n);
int num_threads();

/// Runs body(i) for i in [begin, end), indices handed out dynamically. Each index
/// is visited by exactly one worker, so results are independent of the thread
/// count as long as body(i) only writes state owned by i. Calls made from inside
/// a running parallel_for execute serially.
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& body);

}  // namespace armaid
