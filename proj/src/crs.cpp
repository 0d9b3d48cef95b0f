#include "ctf3d/crs.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>

#include "ctf3d/error.hpp"

namespace ctf3d {
namespace {

constexpr double kA = 6378137.0;
constexpr double kF = 1.0 / 298.257223563;
constexpr double kK0 = 0.9996;
constexpr double kFalseEasting = 500000.0;
constexpr double kFalseNorthingSouth = 10000000.0;
constexpr double kDeg = std::numbers::pi / 180.0;

struct TmSeries {
  double e;
  double rect_a;  // rectifying radius
  std::array<double, 6> alpha;
  std::array<double, 6> beta;
};

const TmSeries& series() {
  static const TmSeries s = [] {
    const double n = kF / (2.0 - kF);
    const double n2 = n * n, n3 = n2 * n, n4 = n3 * n, n5 = n4 * n, n6 = n5 * n;
    TmSeries t{};
    t.e = std::sqrt(kF * (2.0 - kF));
    t.rect_a = kA / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);
    t.alpha = {
        n / 2 - 2 * n2 / 3 + 5 * n3 / 16 + 41 * n4 / 180 - 127 * n5 / 288 + 7891 * n6 / 37800,
        13 * n2 / 48 - 3 * n3 / 5 + 557 * n4 / 1440 + 281 * n5 / 630 - 1983433 * n6 / 1935360,
        61 * n3 / 240 - 103 * n4 / 140 + 15061 * n5 / 26880 + 167603 * n6 / 181440,
        49561 * n4 / 161280 - 179 * n5 / 168 + 6601661 * n6 / 7257600,
        34729 * n5 / 80640 - 3418889 * n6 / 1995840,
        212378941 * n6 / 319334400,
    };
    t.beta = {
        n / 2 - 2 * n2 / 3 + 37 * n3 / 96 - n4 / 360 - 81 * n5 / 512 + 96199 * n6 / 604800,
        n2 / 48 + n3 / 15 - 437 * n4 / 1440 + 46 * n5 / 105 - 1118711 * n6 / 3870720,
        17 * n3 / 480 - 37 * n4 / 840 - 209 * n5 / 4480 + 5569 * n6 / 90720,
        4397 * n4 / 161280 - 11 * n5 / 504 - 830251 * n6 / 7257600,
        4583 * n5 / 161280 - 108847 * n6 / 3991680,
        20648693 * n6 / 638668800,
    };
    return t;
  }();
  return s;
}

double central_meridian_deg(int zone) { return zone * 6.0 - 183.0; }

// Conformal latitude tangent from geodetic latitude tangent.
double tau_prime(double tau, double e) {
  const double sigma = std::sinh(e * std::atanh(e * tau / std::sqrt(1.0 + tau * tau)));
  return tau * std::sqrt(1.0 + sigma * sigma) - sigma * std::sqrt(1.0 + tau * tau);
}

}  // namespace

Crs Crs::parse(const std::string& text) {
  std::string t;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) t.push_back(c);
  }
  std::string upper;
  for (char c : t) upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  std::string digits;
  if (upper.rfind("EPSG:", 0) == 0) {
    digits = upper.substr(5);
  } else if (!upper.empty() && std::all_of(upper.begin(), upper.end(), ::isdigit)) {
    digits = upper;
  }
  if (!digits.empty()) {
    int code = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), code);
    if (ec == std::errc() && ptr == digits.data() + digits.size()) return epsg(code);
  }
  Crs c;
  c.id_ = t;
  return c;
}

Crs Crs::epsg(int code) {
  Crs c;
  c.epsg_ = code;
  c.id_ = "EPSG:" + std::to_string(code);
  return c;
}

int Crs::utm_zone() const {
  if (epsg_ >= 32601 && epsg_ <= 32660) return epsg_ - 32600;
  if (epsg_ >= 32701 && epsg_ <= 32760) return epsg_ - 32700;
  return 0;
}

Point2 utm_forward(LonLat ll, int zone, bool south) {
  const TmSeries& s = series();
  const double lambda = (ll.lon - central_meridian_deg(zone)) * kDeg;
  const double phi = ll.lat * kDeg;
  const double tp = tau_prime(std::tan(phi), s.e);
  const double xi_p = std::atan2(tp, std::cos(lambda));
  const double eta_p = std::asinh(std::sin(lambda) / std::hypot(tp, std::cos(lambda)));
  double xi = xi_p;
  double eta = eta_p;
  for (int j = 1; j <= 6; ++j) {
    const double a = s.alpha[j - 1];
    xi += a * std::sin(2 * j * xi_p) * std::cosh(2 * j * eta_p);
    eta += a * std::cos(2 * j * xi_p) * std::sinh(2 * j * eta_p);
  }
  Point2 out{kK0 * s.rect_a * eta + kFalseEasting, kK0 * s.rect_a * xi};
  if (south) out.y += kFalseNorthingSouth;
  return out;
}

LonLat utm_inverse(Point2 en, int zone, bool south) {
  const TmSeries& s = series();
  const double northing = south ? en.y - kFalseNorthingSouth : en.y;
  const double xi = northing / (kK0 * s.rect_a);
  const double eta = (en.x - kFalseEasting) / (kK0 * s.rect_a);
  double xi_p = xi;
  double eta_p = eta;
  for (int j = 1; j <= 6; ++j) {
    const double b = s.beta[j - 1];
    xi_p -= b * std::sin(2 * j * xi) * std::cosh(2 * j * eta);
    eta_p -= b * std::cos(2 * j * xi) * std::sinh(2 * j * eta);
  }
  const double sinh_eta = std::sinh(eta_p);
  const double tp = std::sin(xi_p) / std::hypot(sinh_eta, std::cos(xi_p));
  const double lambda = std::atan2(sinh_eta, std::cos(xi_p));

  // Newton iteration for the geodetic latitude tangent.
  const double e2 = s.e * s.e;
  double tau = tp;
  for (int it = 0; it < 8; ++it) {
    const double tpi = tau_prime(tau, s.e);
    const double dtau = (tp - tpi) / std::sqrt(1.0 + tpi * tpi) * (1.0 + (1.0 - e2) * tau * tau) /
                        ((1.0 - e2) * std::sqrt(1.0 + tau * tau));
    tau += dtau;
    if (std::abs(dtau) < 1e-14) break;
  }
  return {lambda / kDeg + central_meridian_deg(zone), std::atan(tau) / kDeg};
}

Point2 convert_point(Point2 p, const Crs& from, const Crs& to) {
  if (from == to) return p;
  if (!from.convertible() || !to.convertible()) {
    throw Error(ErrorKind::invalid_argument,
                "cannot convert between coordinate systems '" + from.id() + "' and '" + to.id() +
                    "' (supported: EPSG:4326 and WGS84 UTM)");
  }
  LonLat ll;
  if (from.is_geographic()) {
    ll = {p.x, p.y};
  } else {
    ll = utm_inverse(p, from.utm_zone(), from.utm_south());
  }
  if (to.is_geographic()) return {ll.lon, ll.lat};
  return utm_forward(ll, to.utm_zone(), to.utm_south());
}

}  // namespace ctf3d
