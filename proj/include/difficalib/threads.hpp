#pragma once

namespace difficalib {

/// Environment variable that caps the OpenMP worker count.
inline constexpr const char* kThreadsEnv = "DIFFICALIB_THREADS";

/// Applies DIFFICALIB_THREADS if set to a positive integer. Returns the
/// resulting maximum thread count.
int apply_thread_cap_from_env();

void set_thread_cap(int threads);
int max_threads();

}  // namespace difficalib
