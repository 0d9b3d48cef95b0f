#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace ctf3d {

/// Planar point in a projected CRS (meters).
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
  friend Point2 operator*(Point2 p, double s) { return {s * p.x, s * p.y}; }
  friend bool operator==(Point2 a, Point2 b) = default;
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline Point2 perp(Point2 a) { return {-a.y, a.x}; }

/// Distance from p to the closed segment [a, b].
double point_segment_distance(Point2 p, Point2 a, Point2 b);

struct Segment {
  Point2 a;
  Point2 b;

  double length() const { return norm(b - a); }
  /// Unit direction a -> b. Requires length() > 0.
  Point2 direction() const;
};

/// Implicitly closed ring: the first vertex is not repeated at the end.
using Ring = std::vector<Point2>;

/// Signed shoelace area of a ring, positive when counterclockwise.
double ring_signed_area(std::span<const Point2> ring);

/// True when no two non-adjacent edges cross or overlap. Rings that touch
/// themselves at a single vertex (pixel-boundary pinches) are accepted.
bool ring_is_simple(std::span<const Point2> ring);

/// Polygon with a counterclockwise exterior and clockwise holes.
class Polygon {
 public:
  Polygon() = default;

  /// Validates and orients the rings. Throws Error(invalid_argument) when a
  /// ring has fewer than 3 distinct vertices, the exterior self-intersects,
  /// or the resulting area is not positive.
  static Polygon make(Ring exterior, std::vector<Ring> holes = {});

  /// Axis-aligned rectangle [x0,x1] x [y0,y1].
  static Polygon rectangle(double x0, double y0, double x1, double y1);

  const Ring& exterior() const { return exterior_; }
  const std::vector<Ring>& holes() const { return holes_; }

  /// Exterior edges in ring order; edge i runs from vertex i to i+1.
  std::vector<Segment> exterior_edges() const;
  /// All hole edges, hole by hole.
  std::vector<Segment> hole_edges() const;

  Polygon translated(Point2 offset) const;

 private:
  Ring exterior_;
  std::vector<Ring> holes_;
};

double polygon_area(const Polygon& p);

/// Area-weighted centroid including holes. Throws on near-zero area.
Point2 polygon_centroid(const Polygon& p);

/// Closed-boundary point-in-polygon test respecting holes.
bool polygon_contains(const Polygon& p, Point2 q);

/// Douglas-Peucker simplification of a closed ring. The result is a
/// subsequence of the input; vertices closer than epsilon to the retained
/// chain are dropped. Never returns fewer than 3 vertices.
Ring simplify_dp(std::span<const Point2> ring, double epsilon);

/// Acute angle between the directions of two segments, in degrees [0, 90].
double segment_angle_deg(const Segment& e1, const Segment& e2);

bool segments_approx_parallel(const Segment& e1, const Segment& e2, double angle_tol_deg);

/// Rectangle with arbitrary orientation. `axis` is a unit vector along the
/// length; the width runs along perp(axis).
struct OrientedRect {
  Point2 center;
  Point2 axis{1.0, 0.0};
  double half_length = 0.0;
  double half_width = 0.0;

  Point2 across() const { return perp(axis); }
  /// Corners counterclockwise when axis/across form a right-handed frame.
  std::vector<Point2> corners() const;
  /// Local (along, across) coordinates of p.
  Point2 to_local(Point2 p) const;
  bool contains(Point2 p, double tol = 0.0) const;
};

struct EdgePairRect {
  OrientedRect center;
  double separation = 0.0;  // mean across-axis distance between the support lines
  double overlap = 0.0;     // length of the shared projection onto the axis
  /// Largest rectangle over the overlap lying strictly between both edges.
  /// half_width is 0 when tilted edges leave no common band.
  OrientedRect inscribed;
  /// True when e1 sits on the -across() side of the center rectangle.
  bool first_on_negative_side = true;
};

/// Builds the rectangle spanning the gap between two approximately parallel
/// edges over their shared extent. Returns nullopt when the projected overlap
/// is shorter than `min_overlap` or the edges cross inside the overlap.
std::optional<EdgePairRect> rect_between_edges(const Segment& e1, const Segment& e2,
                                               double min_overlap);

/// Closed-boundary test: true when any segment touches or enters the rectangle.
bool rect_intersects_segments(const OrientedRect& r, std::span<const Segment> edges);
bool rect_intersects_segment(const OrientedRect& r, const Segment& e);

}  // namespace ctf3d
