#include "freecg/common.hpp"

#include <cstdlib>
#include <thread>

namespace freecg {

int effective_threads() {
    if (const char* env = std::getenv("FREECG_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace freecg
