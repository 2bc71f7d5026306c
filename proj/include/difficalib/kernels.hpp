#pragma once

#include <cstddef>
#include <functional>
#include <span>

// Data-parallel loop kernels. Every kernel exists twice: a plain serial
// reference used by tests and benchmarks, and an OpenMP version used by the
// library. The OpenMP reductions are blocked with a fixed block size and
// combined by a fixed pairwise tree, so their results do not depend on the
// thread count or schedule.
namespace difficalib::kernels {

/// Rows per block in the OpenMP reductions. Part of the numeric contract:
/// changing it changes the floating-point summation order.
inline constexpr std::size_t kReduceBlock = 64;

/// Adds row i's vector contribution into `acc` and returns its scalar part.
using RowAccumulator = std::function<double(std::size_t row, std::span<double> acc)>;
using RowMap = std::function<double(std::size_t row)>;

namespace serial {

/// out = sum_i contribution(i); returns sum_i scalar(i). `out` is zeroed first.
double reduce_rows(std::size_t n, std::span<double> out, const RowAccumulator& fn);
/// out[i] = fn(i).
void map_rows(std::size_t n, std::span<double> out, const RowMap& fn);

}  // namespace serial

namespace omp {

double reduce_rows(std::size_t n, std::span<double> out, const RowAccumulator& fn);
void map_rows(std::size_t n, std::span<double> out, const RowMap& fn);

}  // namespace omp

}  // namespace difficalib::kernels
