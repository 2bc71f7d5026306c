#include <algorithm>

#include "difficalib/kernels.hpp"

namespace difficalib::kernels::serial {

double reduce_rows(std::size_t n, std::span<double> out, const RowAccumulator& fn) {
  std::fill(out.begin(), out.end(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += fn(i, out);
  return total;
}

void map_rows(std::size_t n, std::span<double> out, const RowMap& fn) {
  for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
}

}  // namespace difficalib::kernels::serial
