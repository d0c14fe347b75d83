#include "doctest.h"

#include "safedensity/density.hpp"
#include "safedensity/errors.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace safedensity;

namespace {

// Oracle kernel: direct evaluation with the minimum image done by hand.
double kernel_at(const Vec2 &r, const Vec2 &x, double sigma, const Vec2 &period) {
  Vec2 d = r - x;
  for (int a = 0; a < 2; ++a)
    d[a] -= period[a] * std::round(d[a] / period[a]);
  return std::exp(-0.5 * d.squaredNorm() / (sigma * sigma));
}

} // namespace

TEST_CASE("kernel equals one at its own cell centre") {
  const Grid g(32, 32, 0.125);
  const auto loc = LocalizationModel::isotropic(0.15);
  const Vec2 x = g.center(5, 9);
  const Vector k = evaluate_kernel(g, x, loc);
  CHECK(k(g.flatten(5, 9)) == 1.0);
  CHECK(k.maxCoeff() == 1.0);
}

TEST_CASE("kernel one sigma away is exp(-1/2)") {
  const auto loc = LocalizationModel::isotropic(0.15);
  CHECK(loc.kernel(Vec2(0.15, 0.0)) == doctest::Approx(std::exp(-0.5)).epsilon(1e-9));
  // Same value read off a grid whose cells are 0.05 m apart.
  const Grid g(40, 40, 0.05);
  const Vector k = evaluate_kernel(g, g.center(10, 10), loc);
  CHECK(std::abs(k(g.flatten(13, 10)) - 0.6065306597) <= 1e-9);
}

TEST_CASE("team density superposes the robot kernels") {
  const Grid g(32, 32, 0.125);
  const auto loc = LocalizationModel::isotropic(0.3);
  const std::vector<Vec2> same{Vec2(1.3, 2.1), Vec2(1.3, 2.1)};
  const auto f = evaluate_kernels(g, same, loc);
  CHECK((f.team - 2.0 * f.per_robot[0]).cwiseAbs().maxCoeff() == 0.0);

  const std::vector<Vec2> three{Vec2(0.2, 0.3), Vec2(3.9, 3.8), Vec2(2.0, 1.0)};
  const auto h = evaluate_kernels(g, three, loc);
  CHECK((h.team - (h.per_robot[0] + h.per_robot[1] + h.per_robot[2])).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(h.team.minCoeff() >= 0.0);
  for (int k = 0; k < g.size(); ++k)
    CHECK(h.per_robot[1](k) == doctest::Approx(kernel_at(g.center(k), three[1], 0.3, g.extent())));
}

TEST_CASE("periodic team mass is N single-kernel masses") {
  const Grid g(48, 48, 4.0 / 48);
  const auto loc = LocalizationModel::isotropic(0.2);
  const std::vector<Vec2> pos{Vec2(0.1, 0.1), Vec2(2.2, 3.1), Vec2(3.95, 1.0)};
  const auto f = evaluate_kernels(g, pos, loc);
  const double single = single_kernel_mass(g, loc);
  CHECK(integrate(g, f.team) == doctest::Approx(3.0 * single).epsilon(1e-10));
}

TEST_CASE("shifting every robot by one cell permutes the density cyclically") {
  const Grid g(16, 12, 0.25);
  const auto loc = LocalizationModel::isotropic(0.3);
  const std::vector<Vec2> pos{Vec2(0.4, 0.6), Vec2(3.1, 2.2)};
  std::vector<Vec2> moved;
  for (const auto &p : pos)
    moved.push_back(g.fold(p + Vec2(g.spacing(), 0.0)));
  const auto a = evaluate_kernels(g, pos, loc);
  const auto b = evaluate_kernels(g, moved, loc);
  for (int iy = 0; iy < g.ny(); ++iy)
    for (int ix = 0; ix < g.nx(); ++ix)
      CHECK(b.team(g.flatten((ix + 1) % g.nx(), iy)) ==
            doctest::Approx(a.team(g.flatten(ix, iy))).epsilon(1e-12));
}

TEST_CASE("isotropic kernel decays monotonically with distance") {
  const Grid g(40, 40, 0.1);
  const auto loc = LocalizationModel::isotropic(0.25);
  const Vec2 x(2.03, 1.97);
  const Vector k = evaluate_kernel(g, x, loc);
  for (int i = 0; i < g.size(); ++i)
    for (int j = 0; j < g.size(); j += 7) {
      const double di = g.displacement(x, g.center(i)).norm();
      const double dj = g.displacement(x, g.center(j)).norm();
      if (di < dj)
        CHECK(k(i) >= k(j));
    }
}

TEST_CASE("localisation model rejects non-SPD precision") {
  Eigen::Matrix2d p;
  p << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(LocalizationModel{p}, ModelError);
  p << 1.0, 0.5, 0.4, 1.0;
  CHECK_THROWS_AS(LocalizationModel{p}, ModelError);
  p << 2.0, 0.5, 0.5, 1.0;
  CHECK_NOTHROW(LocalizationModel{p});
}

TEST_CASE("target construction") {
  const Grid g(64, 64, 0.0625);
  const Vec2 mid = g.center(32, 32);

  TargetSpec zero{{GaussianComponent{mid, 0.0, Eigen::Matrix2d::Identity()}}, std::nullopt};
  CHECK(build_target(g, zero).cwiseAbs().maxCoeff() == 0.0);

  TargetSpec one{{GaussianComponent{mid, 1.0, Eigen::Matrix2d::Identity() / 0.25}}, std::nullopt};
  Eigen::Index arg;
  const Vector t = build_target(g, one);
  t.maxCoeff(&arg);
  CHECK(arg == g.flatten(32, 32));
  CHECK(t.minCoeff() >= 0.0);

  const auto loc = LocalizationModel::isotropic(kDefaultKernelSigma);
  const double want = 4.0 * single_kernel_mass(g, loc);
  one.total_mass = want;
  CHECK(integrate(g, build_target(g, one)) / want == doctest::Approx(1.0).epsilon(1e-6));

  TargetSpec outside{{GaussianComponent{Vec2(5.0, 1.0), 1.0, Eigen::Matrix2d::Identity()}}, std::nullopt};
  CHECK_THROWS_AS(build_target(g, outside), ConfigError);
  TargetSpec negative{{GaussianComponent{mid, -1.0, Eigen::Matrix2d::Identity()}}, std::nullopt};
  CHECK_THROWS_AS(build_target(g, negative), ConfigError);
}

TEST_CASE("PGM snapshots carry a metadata sidecar") {
  const Grid g(3, 3, 0.5, Vec2(1.0, 2.0));
  Vector v(9);
  v << 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0;
  const auto dir = std::filesystem::temp_directory_path() / "safedensity_pgm_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "frame.pgm";
  write_pgm(path, g, v, 0.0);

  std::ifstream in(path, std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  CHECK(magic == "P5");
  CHECK(w == 3);
  CHECK(h == 3);
  CHECK(maxval == 65535);
  unsigned char px[18];
  in.read(reinterpret_cast<char *>(px), 18);
  CHECK(in.gcount() == 18);
  // Top row first: the top-right cell holds the maximum.
  CHECK(px[4] == 0xff);
  CHECK(px[5] == 0xff);
  // Bottom-left cell is zero.
  CHECK(px[12] == 0);
  CHECK(px[13] == 0);

  std::ifstream meta(path.string() + ".meta");
  const std::string text((std::istreambuf_iterator<char>(meta)), std::istreambuf_iterator<char>());
  CHECK(text.find("scale_max = 8") != std::string::npos);
  CHECK(text.find("row_order = top_down") != std::string::npos);
  std::filesystem::remove_all(dir);
}
