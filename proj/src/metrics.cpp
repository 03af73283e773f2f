#include "condflow/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace condflow {

double bits_per_dim(double nll_nats, std::int64_t dims) {
  if (dims <= 0) throw std::invalid_argument("bits_per_dim: dims must be positive");
  return nll_nats / (static_cast<double>(dims) * std::numbers::ln2);
}

namespace {

// population statistics over one window of one channel
struct WindowStats {
  double mu_a, mu_b, var_a, var_b, cov;
};

WindowStats window_stats(const std::vector<double>& a, const std::vector<double>& b,
                         std::int64_t W, std::int64_t C, std::int64_t c, std::int64_t i0,
                         std::int64_t j0, std::int64_t wh, std::int64_t ww) {
  WindowStats s{0, 0, 0, 0, 0};
  const double n = static_cast<double>(wh * ww);
  for (std::int64_t i = 0; i < wh; ++i)
    for (std::int64_t j = 0; j < ww; ++j) {
      const std::size_t off = ((i0 + i) * W + (j0 + j)) * C + c;
      s.mu_a += a[off];
      s.mu_b += b[off];
    }
  s.mu_a /= n;
  s.mu_b /= n;
  for (std::int64_t i = 0; i < wh; ++i)
    for (std::int64_t j = 0; j < ww; ++j) {
      const std::size_t off = ((i0 + i) * W + (j0 + j)) * C + c;
      const double da = a[off] - s.mu_a, db = b[off] - s.mu_b;
      s.var_a += da * da;
      s.var_b += db * db;
      s.cov += da * db;
    }
  s.var_a /= n;
  s.var_b /= n;
  s.cov /= n;
  return s;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b, double range) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("ssim: shapes differ: " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  if (a.rank() != 2 && a.rank() != 3)
    throw std::invalid_argument("ssim: expected [H,W] or [H,W,C], got " + shape_str(a.shape()));
  const std::int64_t H = a.dim(0), W = a.dim(1);
  const std::int64_t C = a.rank() == 3 ? a.dim(2) : 1;
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);
  const std::int64_t wh = std::min<std::int64_t>(8, H), ww = std::min<std::int64_t>(8, W);

  double total = 0.0;
  std::int64_t count = 0;
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t i0 = 0; i0 + wh <= H; ++i0)
      for (std::int64_t j0 = 0; j0 + ww <= W; ++j0) {
        const auto s = window_stats(a.values(), b.values(), W, C, c, i0, j0, wh, ww);
        const double num = (2.0 * s.mu_a * s.mu_b + c1) * (2.0 * s.cov + c2);
        const double den =
            (s.mu_a * s.mu_a + s.mu_b * s.mu_b + c1) * (s.var_a + s.var_b + c2);
        total += num / den;
        ++count;
      }
  return total / static_cast<double>(count);
}

// ----------------------------------------------------------------- tsv log

std::string metrics_header() { return "step\tbpd_a\tbpd_b\tcycle\tseconds"; }

namespace {
std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

std::string metrics_line(const MetricsRow& r) {
  std::ostringstream os;
  os << r.step << '\t' << fmt(r.bpd_a) << '\t' << fmt(r.bpd_b) << '\t' << fmt(r.cycle) << '\t'
     << fmt(r.seconds);
  return os.str();
}

MetricsRow parse_metrics_line(const std::string& line) {
  std::istringstream is(line);
  MetricsRow r;
  std::string f[5];
  for (int i = 0; i < 5; ++i)
    if (!std::getline(is, f[i], '\t'))
      throw std::runtime_error("metrics: malformed row (expected 5 tab-separated fields): '" +
                               line + "'");
  char* end = nullptr;
  r.step = std::strtoll(f[0].c_str(), &end, 10);
  if (end == f[0].c_str() || *end) throw std::runtime_error("metrics: bad step field: " + f[0]);
  auto num = [](const std::string& s, const char* what) {
    char* e = nullptr;
    const double v = std::strtod(s.c_str(), &e);
    if (e == s.c_str() || *e) throw std::runtime_error(std::string("metrics: bad ") + what +
                                                       " field: " + s);
    return v;
  };
  r.bpd_a = num(f[1], "bpd_a");
  r.bpd_b = num(f[2], "bpd_b");
  r.cycle = num(f[3], "cycle");
  r.seconds = num(f[4], "seconds");
  return r;
}

std::vector<MetricsRow> read_metrics_log(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open metrics log: " + path);
  std::string line;
  if (!std::getline(is, line) || line != metrics_header())
    throw std::runtime_error("metrics log " + path + ": missing or wrong header");
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    rows.push_back(parse_metrics_line(line));
  }
  return rows;
}

}  // namespace condflow
