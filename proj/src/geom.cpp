#include "ctf3d/geom.hpp"

#include <algorithm>
#include <array>
#include <numbers>
#include <numeric>

#include "ctf3d/error.hpp"

namespace ctf3d {
namespace {

// Sign of the turn a -> b -> c.
int orientation(Point2 a, Point2 b, Point2 c) {
  const double v = cross(b - a, c - a);
  return (v > 0.0) - (v < 0.0);
}

bool on_segment(Point2 a, Point2 b, Point2 p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

// True when segments [a,b] and [c,d] share any point other than a common
// endpoint vertex.
bool segments_conflict(Point2 a, Point2 b, Point2 c, Point2 d) {
  const int o1 = orientation(a, b, c);
  const int o2 = orientation(a, b, d);
  const int o3 = orientation(c, d, a);
  const int o4 = orientation(c, d, b);
  if (o1 * o2 < 0 && o3 * o4 < 0) return true;
  if (o1 == 0 && o2 == 0) {
    // Collinear: conflict if the overlap is more than a single shared vertex.
    const Point2 dir = b - a;
    auto proj = [&](Point2 p) { return dot(p - a, dir); };
    const double lo = std::max(std::min(proj(a), proj(b)), std::min(proj(c), proj(d)));
    const double hi = std::min(std::max(proj(a), proj(b)), std::max(proj(c), proj(d)));
    if (hi > lo) return true;
    if (hi < lo) return false;
  }
  auto touches = [](Point2 p, Point2 q0, Point2 q1, int o) {
    return o == 0 && on_segment(q0, q1, p);
  };
  const bool t_c = touches(c, a, b, o1);
  const bool t_d = touches(d, a, b, o2);
  const bool t_a = touches(a, c, d, o3);
  const bool t_b = touches(b, c, d, o4);
  if (!(t_a || t_b || t_c || t_d)) return false;
  // Touching is tolerated only vertex-to-vertex.
  auto shared = [&](Point2 p) { return p == a || p == b; };
  if (t_c && !shared(c)) return true;
  if (t_d && !shared(d)) return true;
  auto shared2 = [&](Point2 p) { return p == c || p == d; };
  if (t_a && !shared2(a)) return true;
  if (t_b && !shared2(b)) return true;
  return false;
}

Ring clean_ring(Ring ring) {
  Ring out;
  out.reserve(ring.size());
  for (const Point2& p : ring) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw Error(ErrorKind::invalid_argument, "polygon vertex is not finite");
    }
    if (out.empty() || !(out.back() == p)) out.push_back(p);
  }
  while (out.size() > 1 && out.front() == out.back()) out.pop_back();
  return out;
}

std::size_t count_distinct(const Ring& ring) {
  std::vector<std::pair<double, double>> v;
  v.reserve(ring.size());
  for (const Point2& p : ring) v.emplace_back(p.x, p.y);
  std::sort(v.begin(), v.end());
  return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

// Crossing-number test; boundary points are reported separately.
enum class RingSide { outside, inside, boundary };

RingSide ring_side(const Ring& ring, Point2 q) {
  bool inside = false;
  const std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2 a = ring[j];
    const Point2 b = ring[i];
    if (orientation(a, b, q) == 0 && on_segment(a, b, q)) return RingSide::boundary;
    if ((b.y > q.y) != (a.y > q.y)) {
      const double x = a.x + (q.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (q.x < x) inside = !inside;
    }
  }
  return inside ? RingSide::inside : RingSide::outside;
}

}  // namespace

double point_segment_distance(Point2 p, Point2 a, Point2 b) {
  const Point2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) return norm(p - a);
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return norm(p - (a + t * ab));
}

Point2 Segment::direction() const {
  const Point2 d = b - a;
  const double l = norm(d);
  if (l == 0.0) throw Error(ErrorKind::invalid_argument, "zero-length segment");
  return {d.x / l, d.y / l};
}

double ring_signed_area(std::span<const Point2> ring) {
  if (ring.size() < 3) return 0.0;
  // Shift to the first vertex to keep projected coordinates well conditioned.
  const Point2 o = ring[0];
  double twice = 0.0;
  for (std::size_t i = 1; i + 1 < ring.size(); ++i) {
    twice += cross(ring[i] - o, ring[i + 1] - o);
  }
  return 0.5 * twice;
}

bool ring_is_simple(std::span<const Point2> ring) {
  const std::size_t n = ring.size();
  if (n < 3) return false;
  struct Edge {
    double xmin, xmax;
    std::size_t i;
  };
  std::vector<Edge> edges(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a = ring[i];
    const Point2 b = ring[(i + 1) % n];
    edges[i] = {std::min(a.x, b.x), std::max(a.x, b.x), i};
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& l, const Edge& r) {
    return l.xmin < r.xmin || (l.xmin == r.xmin && l.i < r.i);
  });
  for (std::size_t k = 0; k < n; ++k) {
    const Edge& ek = edges[k];
    for (std::size_t m = k + 1; m < n && edges[m].xmin <= ek.xmax; ++m) {
      std::size_t i = ek.i;
      std::size_t j = edges[m].i;
      if (i > j) std::swap(i, j);
      const Point2 a = ring[i], b = ring[(i + 1) % n];
      const Point2 c = ring[j], d = ring[(j + 1) % n];
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      if (adjacent) {
        // Adjacent edges share exactly one vertex; folding back is a conflict.
        const Point2 shared = (j == i + 1) ? b : a;
        const Point2 p = (j == i + 1) ? a : b;
        const Point2 q = (j == i + 1) ? d : c;
        if (orientation(p, shared, q) == 0 && dot(p - shared, q - shared) > 0.0) return false;
        continue;
      }
      if (std::max(std::min(a.y, b.y), std::min(c.y, d.y)) >
          std::min(std::max(a.y, b.y), std::max(c.y, d.y))) {
        continue;
      }
      if (segments_conflict(a, b, c, d)) return false;
    }
  }
  return true;
}

Polygon Polygon::make(Ring exterior, std::vector<Ring> holes) {
  Polygon p;
  p.exterior_ = clean_ring(std::move(exterior));
  if (count_distinct(p.exterior_) < 3) {
    throw Error(ErrorKind::invalid_argument, "polygon exterior needs at least 3 distinct vertices");
  }
  if (!ring_is_simple(p.exterior_)) {
    throw Error(ErrorKind::invalid_argument, "polygon exterior is self-intersecting");
  }
  if (ring_signed_area(p.exterior_) < 0.0) std::reverse(p.exterior_.begin(), p.exterior_.end());
  for (Ring& h : holes) {
    Ring ring = clean_ring(std::move(h));
    if (count_distinct(ring) < 3) {
      throw Error(ErrorKind::invalid_argument, "polygon hole needs at least 3 distinct vertices");
    }
    if (ring_signed_area(ring) > 0.0) std::reverse(ring.begin(), ring.end());
    p.holes_.push_back(std::move(ring));
  }
  if (!(polygon_area(p) > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "polygon area is not positive");
  }
  return p;
}

Polygon Polygon::rectangle(double x0, double y0, double x1, double y1) {
  return make({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

std::vector<Segment> Polygon::exterior_edges() const {
  std::vector<Segment> out;
  out.reserve(exterior_.size());
  for (std::size_t i = 0; i < exterior_.size(); ++i) {
    out.push_back({exterior_[i], exterior_[(i + 1) % exterior_.size()]});
  }
  return out;
}

std::vector<Segment> Polygon::hole_edges() const {
  std::vector<Segment> out;
  for (const Ring& h : holes_) {
    for (std::size_t i = 0; i < h.size(); ++i) out.push_back({h[i], h[(i + 1) % h.size()]});
  }
  return out;
}

Polygon Polygon::translated(Point2 offset) const {
  Polygon p = *this;
  for (Point2& v : p.exterior_) v = v + offset;
  for (Ring& h : p.holes_) {
    for (Point2& v : h) v = v + offset;
  }
  return p;
}

double polygon_area(const Polygon& p) {
  double a = ring_signed_area(p.exterior());
  for (const Ring& h : p.holes()) a += ring_signed_area(h);
  return a;
}

Point2 polygon_centroid(const Polygon& p) {
  const Point2 o = p.exterior().front();
  double area2 = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  auto accumulate = [&](const Ring& ring) {
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2 a = ring[i] - o;
      const Point2 b = ring[(i + 1) % n] - o;
      const double c = cross(a, b);
      area2 += c;
      cx += (a.x + b.x) * c;
      cy += (a.y + b.y) * c;
    }
  };
  accumulate(p.exterior());
  for (const Ring& h : p.holes()) accumulate(h);
  double span = 0.0;
  for (const Point2& v : p.exterior()) span = std::max(span, norm(v - o));
  if (std::abs(area2) <= 1e-12 * std::max(span * span, 1e-300)) {
    throw Error(ErrorKind::invalid_argument, "centroid of a degenerate polygon");
  }
  return {o.x + cx / (3.0 * area2), o.y + cy / (3.0 * area2)};
}

bool polygon_contains(const Polygon& p, Point2 q) {
  const RingSide ext = ring_side(p.exterior(), q);
  if (ext == RingSide::outside) return false;
  if (ext == RingSide::boundary) return true;
  for (const Ring& h : p.holes()) {
    const RingSide s = ring_side(h, q);
    if (s == RingSide::inside) return false;
  }
  return true;
}

Ring simplify_dp(std::span<const Point2> ring, double epsilon) {
  const std::size_t n = ring.size();
  if (epsilon < 0.0) throw Error(ErrorKind::invalid_argument, "simplify_dp: epsilon < 0");
  if (n <= 3) return Ring(ring.begin(), ring.end());

  // Split the closed ring at vertex 0 and the vertex farthest from it.
  std::size_t far = 1;
  double far_d = -1.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double d = norm(ring[i] - ring[0]);
    if (d > far_d) {
      far_d = d;
      far = i;
    }
  }

  std::vector<char> keep(n, 0);
  keep[0] = keep[far] = 1;
  // Chains are expressed as (first, last) indices on the unrolled ring, so
  // index n stands for vertex 0 again.
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, far}, {far, n}};
  while (!stack.empty()) {
    const auto [first, last] = stack.back();
    stack.pop_back();
    if (last <= first + 1) continue;
    const Point2 a = ring[first % n];
    const Point2 b = ring[last % n];
    double dmax = -1.0;
    std::size_t imax = first;
    for (std::size_t i = first + 1; i < last; ++i) {
      const double d = point_segment_distance(ring[i % n], a, b);
      if (d > dmax) {
        dmax = d;
        imax = i;
      }
    }
    if (dmax >= epsilon) {
      keep[imax % n] = 1;
      stack.emplace_back(first, imax);
      stack.emplace_back(imax, last);
    }
  }

  Ring out;
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) out.push_back(ring[i]);
  }
  if (out.size() >= 3) return out;

  // Collapsed: fall back to the widest triangle through vertices 0 and far.
  std::size_t third = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0 || i == far) continue;
    const double d = point_segment_distance(ring[i], ring[0], ring[far]);
    if (d > best) {
      best = d;
      third = i;
    }
  }
  std::array<std::size_t, 3> idx{0, far, third};
  std::sort(idx.begin(), idx.end());
  return {ring[idx[0]], ring[idx[1]], ring[idx[2]]};
}

double segment_angle_deg(const Segment& e1, const Segment& e2) {
  const Point2 u = e1.b - e1.a;
  const Point2 v = e2.b - e2.a;
  return std::atan2(std::abs(cross(u, v)), std::abs(dot(u, v))) * 180.0 / std::numbers::pi;
}

bool segments_approx_parallel(const Segment& e1, const Segment& e2, double angle_tol_deg) {
  return segment_angle_deg(e1, e2) <= angle_tol_deg;
}

std::vector<Point2> OrientedRect::corners() const {
  const Point2 u = half_length * axis;
  const Point2 v = half_width * across();
  return {center - u - v, center + u - v, center + u + v, center - u + v};
}

Point2 OrientedRect::to_local(Point2 p) const {
  const Point2 d = p - center;
  return {dot(d, axis), dot(d, across())};
}

bool OrientedRect::contains(Point2 p, double tol) const {
  const Point2 l = to_local(p);
  return std::abs(l.x) <= half_length + tol && std::abs(l.y) <= half_width + tol;
}

std::optional<EdgePairRect> rect_between_edges(const Segment& e1, const Segment& e2,
                                               double min_overlap) {
  const Point2 u1 = e1.direction();
  Point2 u2 = e2.direction();
  if (dot(u1, u2) < 0.0) u2 = -1.0 * u2;
  const Point2 sum = u1 + u2;
  const double sum_len = norm(sum);
  if (sum_len == 0.0) return std::nullopt;
  const Point2 axis{sum.x / sum_len, sum.y / sum_len};
  const Point2 n = perp(axis);
  const Point2 o = 0.25 * (e1.a + e1.b + e2.a + e2.b);

  struct Line {
    double s0, t0, slope;
    double lo, hi;
    double at(double s) const { return t0 + (s - s0) * slope; }
  };
  auto line_of = [&](const Segment& e) -> std::optional<Line> {
    const double sa = dot(e.a - o, axis), sb = dot(e.b - o, axis);
    const double ta = dot(e.a - o, n), tb = dot(e.b - o, n);
    if (std::abs(sb - sa) <= 1e-12 * (std::abs(sa) + std::abs(sb) + 1.0)) return std::nullopt;
    return Line{sa, ta, (tb - ta) / (sb - sa), std::min(sa, sb), std::max(sa, sb)};
  };
  const auto l1 = line_of(e1);
  const auto l2 = line_of(e2);
  if (!l1 || !l2) return std::nullopt;

  const double lo = std::max(l1->lo, l2->lo);
  const double hi = std::min(l1->hi, l2->hi);
  const double overlap = hi - lo;
  if (!(overlap > 0.0) || overlap < min_overlap) return std::nullopt;

  const double sep_lo = l2->at(lo) - l1->at(lo);
  const double sep_hi = l2->at(hi) - l1->at(hi);
  if (sep_lo * sep_hi <= 0.0) return std::nullopt;
  const double d = 0.5 * (std::abs(sep_lo) + std::abs(sep_hi));

  const double s_mid = 0.5 * (lo + hi);
  const double t_mid = 0.5 * (l1->at(s_mid) + l2->at(s_mid));
  EdgePairRect out;
  out.center.center = o + s_mid * axis + t_mid * n;
  out.center.axis = axis;
  out.center.half_length = 0.5 * overlap;
  out.center.half_width = 0.5 * d;
  out.separation = d;
  out.overlap = overlap;

  const bool first_low = sep_lo > 0.0;
  const Line& low = first_low ? *l1 : *l2;
  const Line& high = first_low ? *l2 : *l1;
  const double band_lo = std::max(low.at(lo), low.at(hi));
  const double band_hi = std::min(high.at(lo), high.at(hi));
  out.inscribed.axis = axis;
  out.inscribed.half_length = 0.5 * overlap;
  out.inscribed.half_width = std::max(0.0, 0.5 * (band_hi - band_lo));
  out.inscribed.center = o + s_mid * axis + (0.5 * (band_lo + band_hi)) * n;
  out.first_on_negative_side = first_low;
  return out;
}

bool rect_intersects_segment(const OrientedRect& r, const Segment& e) {
  const double tol = 1e-9 * (1.0 + r.half_length + r.half_width);
  const Point2 p = r.to_local(e.a);
  const Point2 q = r.to_local(e.b);
  const Point2 dpq = q - p;
  // Liang-Barsky clip of p + u*(q-p), u in [0,1], against the closed box.
  double u0 = 0.0, u1 = 1.0;
  const double hl = r.half_length + tol;
  const double hw = r.half_width + tol;
  const std::array<double, 4> pk{-dpq.x, dpq.x, -dpq.y, dpq.y};
  const std::array<double, 4> qk{p.x + hl, hl - p.x, p.y + hw, hw - p.y};
  for (int k = 0; k < 4; ++k) {
    if (pk[k] == 0.0) {
      if (qk[k] < 0.0) return false;
      continue;
    }
    const double t = qk[k] / pk[k];
    if (pk[k] < 0.0) {
      u0 = std::max(u0, t);
    } else {
      u1 = std::min(u1, t);
    }
    if (u0 > u1) return false;
  }
  return true;
}

bool rect_intersects_segments(const OrientedRect& r, std::span<const Segment> edges) {
  return std::any_of(edges.begin(), edges.end(),
                     [&](const Segment& e) { return rect_intersects_segment(r, e); });
}

}  // namespace ctf3d
