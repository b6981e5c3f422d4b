#include <cmath>
#include <filesystem>
#include <sstream>

#include "creep/dataset.hpp"
#include "creep/error.hpp"
#include "creep/material.hpp"
#include "creep/text.hpp"
#include "doctest.h"

using namespace creep;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected creep::Error");
  return ErrorKind::InvalidArgument;
}

const MaterialLibrary& lib() {
  static const auto l = MaterialLibrary::inconel625();
  return l;
}

}  // namespace

TEST_CASE("lookup returns the tabulated constants") {
  const auto& c700 = lookup_constants(lib(), 700);
  CHECK(c700.c1 == 4.6e-50);
  CHECK(c700.c2 == 4.9);
  CHECK(c700.c3 == 0.0);
  const auto& c1000 = lookup_constants(lib(), 1000);
  CHECK(c1000.c1 == 4.6e-47);
  CHECK(c1000.c2 == 4.6);
  CHECK(c1000.c3 == 0.0);
  CHECK(kind_of([] { lookup_constants(lib(), 750); }) == ErrorKind::NoSuchTemperature);
  CHECK(lib().min_temperature() == 700.0);
  CHECK(lib().max_temperature() == 1000.0);
  CHECK(lib().properties().size() == 4);
}

TEST_CASE("norton rate") {
  const auto& c = lookup_constants(lib(), 700);
  // 4.6e-50 * (1e8)^4.9, evaluated at 30 digits
  CHECK(norton_rate(c, 100.0, 700) == doctest::Approx(7.29050868532112203e-11).epsilon(1e-12));
  CHECK(norton_rate(c, 0.0, 700) == 0.0);
  CHECK(norton_rate(c, 100.0, 700, UnitConvention::MpaHours) == doctest::Approx(4.6e-50 * std::pow(100.0, 4.9)));
  CHECK(norton_rate(c, 100.0, 700, UnitConvention::PaSeconds) ==
        doctest::Approx(3600 * 7.29050868532112203e-11).epsilon(1e-12));
  // c3 != 0 brings in the Boltzmann-like factor
  NortonConstants hot = c;
  hot.c3 = 1000.0;
  CHECK(norton_rate(hot, 100.0, 700) / norton_rate(c, 100.0, 700) ==
        doctest::Approx(std::exp(-1000.0 / (700 + kKelvinOffset))).epsilon(1e-14));
  CHECK(convert_stress(100.0, UnitConvention::PaHours) == 1e8);
  CHECK(convert_stress(100.0, UnitConvention::MpaHours) == 100.0);
}

TEST_CASE("arrhenius rate") {
  const double kelvin_one = 1.0 - kKelvinOffset;
  const ArrheniusParams p{1.0, 1.0, 8.314, 8.314};
  CHECK(arrhenius_rate(p, 1.0, kelvin_one, UnitConvention::MpaHours) ==
        doctest::Approx(0.367879441171442322).epsilon(1e-12));
  const ArrheniusParams no_q{2.5, 3.0, 0.0};
  CHECK(arrhenius_rate(no_q, 2.0, 800, UnitConvention::MpaHours) == doctest::Approx(20.0));
  const ArrheniusParams q{1e-20, 4.0, 3e5};
  const double ratio = arrhenius_rate(q, 80.0, 900) / arrhenius_rate(q, 80.0, 800);
  CHECK(ratio == doctest::Approx(std::exp(-q.q / q.r * (1 / (900 + kKelvinOffset) - 1 / (800 + kKelvinOffset)))));
}

TEST_CASE("closed form strain") {
  const auto& c = lookup_constants(lib(), 700);
  CHECK(closed_form_strain(c, {700, 100}, 10'000) == doctest::Approx(7.29050868532112203e-7).epsilon(1e-12));
  CHECK(closed_form_strain(c, {700, 100}, 0) == 0.0);
  CHECK(kind_of([&] { closed_form_strain(c, {700, 100}, -1); }) == ErrorKind::NegativeTime);
}

TEST_CASE("integrate curve") {
  const auto& c = lookup_constants(lib(), 800);
  const auto two = integrate_curve(c, {800, 100}, 2, 10'000);
  REQUIRE(two.times_h.size() == 2);
  CHECK(two.times_h[0] == 0.0);
  CHECK(two.times_h[1] == 10'000.0);
  CHECK(two.strains[0] == 0.0);
  CHECK(two.strains[1] == doctest::Approx(1.15546775849440307e-6).epsilon(1e-12));

  const auto exact = integrate_curve(c, {800, 75}, 50, 5000, IntegrationMethod::ClosedForm);
  const auto euler = integrate_curve(c, {800, 75}, 50, 5000, IntegrationMethod::ExplicitEuler);
  for (std::size_t i = 0; i < 50; ++i) CHECK(euler.strains[i] == doctest::Approx(exact.strains[i]).epsilon(1e-12));

  CHECK(kind_of([&] { integrate_curve(c, {800, 75}, 1, 5000); }) == ErrorKind::InvalidGrid);
  CHECK(kind_of([&] { integrate_curve(c, {800, 75}, 10, 0); }) == ErrorKind::InvalidGrid);
}

TEST_CASE("grid generation") {
  const auto grid = generate_grid(lib(), default_stresses_mpa(), default_temperatures_c(), 500, 10'000);
  CHECK(grid.size() == 20);
  CHECK(default_stresses_mpa() == std::vector<double>{50, 75, 100, 125, 150});
  CHECK(default_temperatures_c() == std::vector<double>{700, 800, 900, 1000});

  const auto single = generate_grid(lib(), {90}, {900}, 17, 3000);
  const auto direct = integrate_curve(lookup_constants(lib(), 900), {900, 90}, 17, 3000);
  REQUIRE(single.size() == 1);
  CHECK(single[0].strains == direct.strains);
  CHECK(single[0].times_h == direct.times_h);

  const auto six = generate_grid(lib(), {120, 60}, {1000, 700, 800}, 9, 1000);
  REQUIRE(six.size() == 6);
  const std::vector<LoadCase> order = {{700, 60}, {700, 120}, {800, 60}, {800, 120}, {1000, 60}, {1000, 120}};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(six[i].load == order[i]);
    CHECK(six[i].strains ==
          integrate_curve(lookup_constants(lib(), order[i].temperature_c), order[i], 9, 1000).strains);
  }
  CHECK(kind_of([] { generate_grid(lib(), {50}, {750}, 5, 10); }) == ErrorKind::NoSuchTemperature);
}

TEST_CASE("temperature ordering under the default constants") {
  // With pa_hours the exponent drop from 4.8 to 4.6 outweighs the tenfold
  // c1 step, so 900 C creeps slower than 800 C at every grid stress.
  const auto grid = generate_grid(lib(), default_stresses_mpa(), default_temperatures_c(), 3, 10'000);
  for (std::size_t s = 0; s < 5; ++s) {
    const double e700 = grid[s].strains[2];
    const double e800 = grid[5 + s].strains[2];
    const double e900 = grid[10 + s].strains[2];
    const double e1000 = grid[15 + s].strains[2];
    CHECK(e800 > e700);
    CHECK(e1000 > e900);
    CHECK(e900 < e800);
  }
  const auto mpa = generate_grid(lib(), default_stresses_mpa(), default_temperatures_c(), 3, 10'000,
                                 UnitConvention::MpaHours);
  for (std::size_t s = 0; s < 5; ++s) {
    for (std::size_t t = 1; t < 4; ++t) CHECK(mpa[5 * t + s].strains[2] > mpa[5 * (t - 1) + s].strains[2]);
  }
}

TEST_CASE("noise is seeded and floored") {
  const auto grid = generate_grid(lib(), {50, 150}, {700, 1000}, 20, 10'000);
  const auto a = add_gaussian_noise(grid, 1e-6, 9);
  const auto b = add_gaussian_noise(grid, 1e-6, 9);
  const auto c = add_gaussian_noise(grid, 1e-6, 10);
  CHECK(a[0].strains == b[0].strains);
  CHECK(a[0].strains != c[0].strains);
  for (const auto& curve : a) {
    CHECK(curve.strains[0] == 0.0);
    for (double s : curve.strains) CHECK(s >= 0.0);
  }
}

TEST_CASE("csv export") {
  const auto grid = generate_grid(lib(), default_stresses_mpa(), default_temperatures_c(), 500, 10'000);
  std::ostringstream out;
  CHECK(write_curves_csv(grid, out) == 10'000);
  const auto text = out.str();
  CHECK(text.substr(0, text.find('\n')) == "timestamp,temperature,stress,avg_creep_strain");
  CHECK(std::count(text.begin(), text.end(), '\n') == 10'001);

  std::istringstream in(text);
  const auto records = read_records_csv(in);
  REQUIRE(records.size() == 10'000);
  std::size_t row = 0;
  for (const auto& curve : grid) {
    for (std::size_t i = 0; i < curve.strains.size(); ++i, ++row) {
      CHECK(records[row].strain == curve.strains[i]);
      CHECK(records[row].timestamp_h == curve.times_h[i]);
    }
  }

  const auto dir = std::filesystem::temp_directory_path() / "creep_material_test";
  std::filesystem::create_directories(dir);
  CHECK(export_curves_csv(grid, dir / "d.csv") == 10'000);
  CHECK(kind_of([&] { export_curves_csv(grid, dir / "missing" / "d.csv"); }) == ErrorKind::IoFailure);
}

TEST_CASE("full-precision text roundtrip") {
  for (double v : {7.29050868532112203e-11, 1.0 / 3.0, 0.1, 1e-300, 12345.678901234567}) {
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(kind_of([] { parse_double("1.5x"); }) == ErrorKind::FormatError);
}

TEST_CASE("dataset metadata roundtrip") {
  DatasetMetadata meta;
  meta.units = UnitConvention::MpaHours;
  meta.stresses_mpa = default_stresses_mpa();
  meta.temperatures_c = default_temperatures_c();
  meta.n_steps = 500;
  meta.t_end_hours = 10'000;
  meta.material = lib().name();
  meta.constants = lib().constants();
  meta.noise_stddev = 0.5;
  meta.noise_seed = 4;
  const auto path = std::filesystem::temp_directory_path() / "creep_meta_test.json";
  write_dataset_metadata(meta, path);
  const auto back = read_dataset_metadata(path);
  CHECK(back.units == meta.units);
  CHECK(back.stresses_mpa == meta.stresses_mpa);
  CHECK(back.n_steps == 500);
  CHECK(back.constants.size() == 4);
  CHECK(back.constants[0].c1 == 4.6e-50);
  CHECK(back.noise_seed == std::optional<std::uint64_t>(4));
}
