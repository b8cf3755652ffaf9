#pragma once

#include <cstdint>

namespace gg {

struct RunMetrics {
  double accuracy = 0.0;
  std::int64_t questions = 0;
  std::int64_t abstentions = 0;
  std::int64_t total_generated_tokens = 0;
  std::int64_t backend_calls = 0;
  // Peak of concurrently resident generated tokens across live paths, on a
  // lock-step round model. Stand-in for KV-cache pressure.
  std::int64_t peak_concurrent_context_tokens = 0;
  double wall_time_seconds = 0.0;
};

}  // namespace gg
