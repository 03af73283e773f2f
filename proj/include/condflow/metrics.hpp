#pragma once
// Evaluation metrics and the tab-separated training log format.

#include <cstdint>
#include <string>
#include <vector>

#include "condflow/tensor.hpp"

namespace condflow {

// negative log-likelihood in nats -> bits per dimension
double bits_per_dim(double nll_nats, std::int64_t dims);

// Offset (in bits per dimension) to add when scoring 8-bit-quantized images
// whose continuous likelihood was computed on dequantized [0,1] values:
// log2(256) = 8.  Reported alongside, never folded into logged BPD columns.
inline constexpr double kDequantOffsetBits = 8.0;

// Windowed SSIM over 8x8 uniform windows (stride 1, fully contained; images
// smaller than 8 use one full-image window).  Multi-channel inputs are
// scored per channel and averaged.  range = dynamic range R of the data.
double ssim(const Tensor& a, const Tensor& b, double range = 1.0);

struct MetricsRow {
  std::int64_t step = 0;
  double bpd_a = 0.0;
  double bpd_b = 0.0;
  double cycle = 0.0;
  double seconds = 0.0;
};

std::string metrics_header();  // "step\tbpd_a\tbpd_b\tcycle\tseconds"
std::string metrics_line(const MetricsRow& r);
MetricsRow parse_metrics_line(const std::string& line);
// whole log: validates the header, parses every row
std::vector<MetricsRow> read_metrics_log(const std::string& path);

}  // namespace condflow
