#include <algorithm>
#include <vector>

#include "difficalib/kernels.hpp"

namespace difficalib::kernels::omp {

double reduce_rows(std::size_t n, std::span<double> out, const RowAccumulator& fn) {
  const std::size_t width = out.size();
  const std::size_t blocks = (n + kReduceBlock - 1) / kReduceBlock;
  std::fill(out.begin(), out.end(), 0.0);
  if (blocks == 0) return 0.0;

  // One partial vector per block, scalar stored in the trailing slot.
  const std::size_t stride = width + 1;
  std::vector<double> partial(blocks * stride, 0.0);

  const auto nblocks = static_cast<std::ptrdiff_t>(blocks);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < nblocks; ++b) {
    std::span<double> acc(partial.data() + b * stride, width);
    double scalar = 0.0;
    const std::size_t begin = static_cast<std::size_t>(b) * kReduceBlock;
    const std::size_t end = std::min(n, begin + kReduceBlock);
    for (std::size_t i = begin; i < end; ++i) scalar += fn(i, acc);
    partial[b * stride + width] = scalar;
  }

  // Pairwise tree: at each level, block b absorbs block b + step.
  for (std::size_t step = 1; step < blocks; step *= 2) {
    const auto pairs = static_cast<std::ptrdiff_t>(blocks);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < pairs; b += static_cast<std::ptrdiff_t>(2 * step)) {
      const std::size_t other = static_cast<std::size_t>(b) + step;
      if (other >= blocks) continue;
      double* dst = partial.data() + b * stride;
      const double* src = partial.data() + other * stride;
      for (std::size_t j = 0; j < stride; ++j) dst[j] += src[j];
    }
  }
  std::copy_n(partial.begin(), width, out.begin());
  return partial[width];
}

void map_rows(std::size_t n, std::span<double> out, const RowMap& fn) {
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) out[i] = fn(static_cast<std::size_t>(i));
}

}  // namespace difficalib::kernels::omp
