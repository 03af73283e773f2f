#include "condflow/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace condflow {

// ------------------------------------------------------------------------ io

std::vector<Point3> read_pointcloud(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::vector<Point3> pts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    Point3 p;
    if (!(ls >> p[0])) continue;  // blank / comment-only line
    if (!(ls >> p[1] >> p[2]))
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected three coordinates");
    double extra;
    if (ls >> extra)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": trailing values");
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2]))
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": non-finite coordinate");
    pts.push_back(p);
  }
  return pts;
}

void write_pointcloud(const std::string& path, const std::vector<Point3>& pts) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os.precision(17);
  for (const auto& p : pts) os << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<Point3> normalize_unit_cube(const std::vector<Point3>& pts) {
  if (pts.empty()) return {};
  Point3 lo = pts[0], hi = pts[0];
  for (const auto& p : pts)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  double ext = 0.0;
  for (int a = 0; a < 3; ++a) ext = std::max(ext, hi[a] - lo[a]);
  if (ext <= 0.0) ext = 1.0;
  std::vector<Point3> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int a = 0; a < 3; ++a) out[i][a] = (pts[i][a] - lo[a]) / ext;
  return out;
}

Tensor resample_reshape(const std::vector<Point3>& pts, std::int64_t H, std::int64_t W,
                        int hilbert_order, Rng& rng) {
  if (pts.empty()) throw std::invalid_argument("resample_reshape: empty point cloud");
  const std::size_t n = static_cast<std::size_t>(H) * static_cast<std::size_t>(W);
  std::vector<Point3> chosen;
  chosen.reserve(n);
  if (pts.size() >= n) {
    // partial Fisher-Yates: first n entries of a seeded shuffle
    std::vector<std::size_t> ids(pts.size());
    std::iota(ids.begin(), ids.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.below(ids.size() - i));
      std::swap(ids[i], ids[j]);
      chosen.push_back(pts[ids[i]]);
    }
  } else {
    chosen = pts;
    while (chosen.size() < n) chosen.push_back(pts[rng.below(pts.size())]);
  }
  auto sorted = hilbert_sorted(chosen, hilbert_order);
  std::vector<double> data;
  data.reserve(n * 3);
  for (const auto& p : sorted) {
    data.push_back(p[0]);
    data.push_back(p[1]);
    data.push_back(p[2]);
  }
  return Tensor::from_vector({H, W, 3}, std::move(data));
}

std::vector<Point3> tensor_to_points(const Tensor& t) {
  if (t.shape().back() != 3 || (t.rank() != 2 && t.rank() != 3))
    throw std::invalid_argument("tensor_to_points: expected [H,W,3] or [N,3], got " +
                                shape_str(t.shape()));
  const std::size_t n = static_cast<std::size_t>(t.numel() / 3);
  std::vector<Point3> pts(n);
  const auto& v = t.values();
  for (std::size_t i = 0; i < n; ++i) pts[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
  return pts;
}

Tensor points_to_tensor(const std::vector<Point3>& pts) {
  if (pts.empty()) throw std::invalid_argument("points_to_tensor: empty point cloud");
  std::vector<double> data;
  data.reserve(pts.size() * 3);
  for (const auto& p : pts) {
    data.push_back(p[0]);
    data.push_back(p[1]);
    data.push_back(p[2]);
  }
  return Tensor::from_vector({static_cast<std::int64_t>(pts.size()), 3}, std::move(data));
}

// ------------------------------------------------------------------- kd-tree

KdTree3::KdTree3(const std::vector<Point3>& pts) {
  if (pts.empty()) throw std::invalid_argument("KdTree3: empty point set");
  nodes_.reserve(pts.size());
  std::vector<std::size_t> ids(pts.size());
  std::iota(ids.begin(), ids.end(), 0);
  root_ = build(ids, 0, static_cast<std::int64_t>(pts.size()), 0, pts);
}

std::int64_t KdTree3::build(std::vector<std::size_t>& ids, std::int64_t lo, std::int64_t hi,
                            int depth, const std::vector<Point3>& pts) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const std::int64_t mid = lo + (hi - lo) / 2;
  std::nth_element(ids.begin() + lo, ids.begin() + mid, ids.begin() + hi,
                   [&](std::size_t a, std::size_t b) {
                     if (pts[a][axis] != pts[b][axis]) return pts[a][axis] < pts[b][axis];
                     return a < b;  // deterministic ordering on ties
                   });
  Node nd;
  nd.p = pts[ids[mid]];
  nd.idx = ids[mid];
  nd.axis = axis;
  const std::int64_t self = static_cast<std::int64_t>(nodes_.size());
  nodes_.push_back(nd);
  nodes_[self].left = build(ids, lo, mid, depth + 1, pts);
  nodes_[self].right = build(ids, mid + 1, hi, depth + 1, pts);
  return self;
}

void KdTree3::search(std::int64_t ni, const Point3& q, double& best_d2,
                     std::size_t& best_idx) const {
  if (ni < 0) return;
  const Node& nd = nodes_[ni];
  const double dx = q[0] - nd.p[0], dy = q[1] - nd.p[1], dz = q[2] - nd.p[2];
  const double d2 = dx * dx + dy * dy + dz * dz;
  if (d2 < best_d2 || (d2 == best_d2 && nd.idx < best_idx)) {
    best_d2 = d2;
    best_idx = nd.idx;
  }
  const double delta = q[nd.axis] - nd.p[nd.axis];
  const std::int64_t near = delta < 0.0 ? nd.left : nd.right;
  const std::int64_t far = delta < 0.0 ? nd.right : nd.left;
  search(near, q, best_d2, best_idx);
  // <= so equidistant candidates across the plane can win on index
  if (delta * delta <= best_d2) search(far, q, best_d2, best_idx);
}

std::pair<double, std::size_t> KdTree3::nearest(const Point3& q) const {
  double best_d2 = std::numeric_limits<double>::infinity();
  std::size_t best_idx = static_cast<std::size_t>(-1);
  search(root_, q, best_d2, best_idx);
  return {best_d2, best_idx};
}

// ------------------------------------------------------------------- chamfer

Tensor chamfer(const Tensor& a, const Tensor& b) {
  if (grad_enabled() && b.requires_grad())
    throw std::invalid_argument("chamfer: gradient w.r.t. the second argument is unsupported");
  auto pa = tensor_to_points(a);
  auto pb = tensor_to_points(b);
  const std::size_t na = pa.size(), nb = pb.size();

  KdTree3 ta(pa), tb(pb);
  auto nn_ab = std::make_shared<std::vector<std::size_t>>(na);  // a_i -> nearest b
  auto nn_ba = std::make_shared<std::vector<std::size_t>>(nb);  // b_q -> nearest a
  auto d_ab = std::make_shared<std::vector<double>>(na);
  auto d_ba = std::make_shared<std::vector<double>>(nb);
  double sum_ab = 0.0;
  for (std::size_t i = 0; i < na; ++i) {
    auto [d2, j] = tb.nearest(pa[i]);
    (*nn_ab)[i] = j;
    (*d_ab)[i] = std::sqrt(d2);
    sum_ab += (*d_ab)[i];
  }
  double sum_ba = 0.0;
  for (std::size_t q = 0; q < nb; ++q) {
    auto [d2, i] = ta.nearest(pb[q]);
    (*nn_ba)[q] = i;
    (*d_ba)[q] = std::sqrt(d2);
    sum_ba += (*d_ba)[q];
  }

  auto out = std::make_shared<detail::Node>();
  out->shape = {1};
  out->value = {0.5 * (sum_ab / static_cast<double>(na) + sum_ba / static_cast<double>(nb))};

  if (grad_enabled() && a.requires_grad()) {
    out->requires_grad = true;
    out->parents = {a.handle()};
    auto bvals = std::make_shared<std::vector<double>>(b.values());
    out->backward_fn = [an = a.handle(), bvals, nn_ab, nn_ba, d_ab, d_ba, na,
                        nb](detail::Node& o) {
      an->ensure_grad();
      const double g = o.grad[0];
      const auto& av = an->value;
      const double wa = g * 0.5 / static_cast<double>(na);
      for (std::size_t i = 0; i < na; ++i) {
        const double d = (*d_ab)[i];
        if (d <= 0.0) continue;  // coincident points: zero subgradient
        const std::size_t j = (*nn_ab)[i];
        for (int c = 0; c < 3; ++c)
          an->grad[3 * i + c] += wa * (av[3 * i + c] - (*bvals)[3 * j + c]) / d;
      }
      const double wb = g * 0.5 / static_cast<double>(nb);
      for (std::size_t q = 0; q < nb; ++q) {
        const double d = (*d_ba)[q];
        if (d <= 0.0) continue;
        const std::size_t i = (*nn_ba)[q];
        for (int c = 0; c < 3; ++c)
          an->grad[3 * i + c] += wb * (av[3 * i + c] - (*bvals)[3 * q + c]) / d;
      }
    };
  }
  return Tensor::wrap(out);
}

}  // namespace condflow
