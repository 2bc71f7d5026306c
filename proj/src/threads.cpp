#include "difficalib/threads.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

#include "difficalib/error.hpp"

namespace difficalib {

int apply_thread_cap_from_env() {
  if (const char* raw = std::getenv(kThreadsEnv); raw != nullptr && *raw != '\0') {
    int value = 0;
    try {
      value = std::stoi(raw);
    } catch (const std::exception&) {
      throw ConfigError(std::string(kThreadsEnv) + " must be a positive integer, got '" + raw + "'");
    }
    if (value < 1) {
      throw ConfigError(std::string(kThreadsEnv) + " must be a positive integer, got '" + raw + "'");
    }
    set_thread_cap(value);
  }
  return max_threads();
}

void set_thread_cap(int threads) { omp_set_num_threads(threads); }

int max_threads() { return omp_get_max_threads(); }

}  // namespace difficalib
