#include "wavecomm/parallel.hpp"

#include <cstdlib>
#include <string>

namespace wavecomm {

std::size_t worker_count() {
  std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("WAVECOMM_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap >= 1) hw = std::min<std::size_t>(hw, static_cast<std::size_t>(cap));
    } catch (...) {
      // Unparseable values leave the default in place.
    }
  }
  return hw;
}

}  // namespace wavecomm
