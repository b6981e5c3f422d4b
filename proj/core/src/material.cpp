#include "creep/material.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "creep/error.hpp"
#include "creep/rng.hpp"
#include "creep/text.hpp"

namespace creep {

using nlohmann::json;

std::string_view to_string(UnitConvention units) noexcept {
  switch (units) {
    case UnitConvention::PaHours: return "pa_hours";
    case UnitConvention::MpaHours: return "mpa_hours";
    case UnitConvention::PaSeconds: return "pa_seconds";
  }
  return "pa_hours";
}

UnitConvention parse_unit_convention(std::string_view text) {
  if (text == "pa_hours") return UnitConvention::PaHours;
  if (text == "mpa_hours") return UnitConvention::MpaHours;
  if (text == "pa_seconds") return UnitConvention::PaSeconds;
  throw Error(ErrorKind::InvalidArgument, "unknown unit convention '" + std::string(text) +
                                              "' (expected pa_hours, mpa_hours or pa_seconds)");
}

MaterialLibrary::MaterialLibrary(std::string name, std::vector<MaterialProperties> properties,
                                 std::vector<NortonConstants> constants)
    : name_(std::move(name)), properties_(std::move(properties)), constants_(std::move(constants)) {
  if (constants_.empty()) throw Error(ErrorKind::EmptyInput, "material library has no constants");
  for (std::size_t i = 0; i < constants_.size(); ++i) {
    const auto& c = constants_[i];
    if (!(c.c1 > 0.0) || !(c.c2 > 0.0) || !(c.c3 >= 0.0)) {
      throw Error(ErrorKind::InvalidArgument,
                  "Norton constants at " + format_double(c.temperature_c) +
                      " degC violate c1 > 0, c2 > 0, c3 >= 0");
    }
    if (i > 0 && !(c.temperature_c > constants_[i - 1].temperature_c)) {
      throw Error(ErrorKind::InvalidArgument, "constant temperatures must be strictly increasing");
    }
    const bool has_props =
        std::any_of(properties_.begin(), properties_.end(),
                    [&](const MaterialProperties& p) { return p.temperature_c == c.temperature_c; });
    if (!has_props) {
      throw Error(ErrorKind::InvalidArgument,
                  "no material properties for " + format_double(c.temperature_c) + " degC");
    }
  }
  for (const auto& p : properties_) {
    if (!(p.poisson > 0.0 && p.poisson < 0.5) || !(p.elastic_modulus > 0.0) || !(p.density > 0.0)) {
      throw Error(ErrorKind::InvalidArgument,
                  "material properties at " + format_double(p.temperature_c) + " degC out of range");
    }
  }
}

MaterialLibrary MaterialLibrary::inconel625() {
  std::vector<MaterialProperties> props{
      {700.0, 0.29, 13.0, 150.0, 8370.0},
      {800.0, 0.29, 13.5, 140.0, 8340.0},
      {900.0, 0.30, 14.0, 130.0, 8310.0},
      {1000.0, 0.30, 14.5, 120.0, 8280.0},
  };
  std::vector<NortonConstants> constants{
      {700.0, 4.6e-50, 4.9, 0.0},
      {800.0, 4.6e-49, 4.8, 0.0},
      {900.0, 4.6e-48, 4.6, 0.0},
      {1000.0, 4.6e-47, 4.6, 0.0},
  };
  return MaterialLibrary("inconel625", std::move(props), std::move(constants));
}

double MaterialLibrary::min_temperature() const { return constants_.front().temperature_c; }
double MaterialLibrary::max_temperature() const { return constants_.back().temperature_c; }

const NortonConstants& lookup_constants(const MaterialLibrary& lib, double temperature_c) {
  for (const auto& c : lib.constants()) {
    if (c.temperature_c == temperature_c) return c;
  }
  throw Error(ErrorKind::NoSuchTemperature,
              format_double(temperature_c) + " degC is not tabulated in library '" + lib.name() + "'");
}

double convert_stress(double stress_mpa, UnitConvention units) noexcept {
  switch (units) {
    case UnitConvention::PaHours:
    case UnitConvention::PaSeconds:
      return stress_mpa * 1e6;
    case UnitConvention::MpaHours:
      return stress_mpa;
  }
  return stress_mpa;
}

namespace {

// Rates evaluated under pa_seconds are per second; the interface is per hour.
double per_hour(double rate, UnitConvention units) {
  return units == UnitConvention::PaSeconds ? rate * 3600.0 : rate;
}

void check_finite(double value, const char* what) {
  if (!std::isfinite(value)) throw Error(ErrorKind::DomainError, std::string(what) + " is not finite");
}

}  // namespace

double norton_rate(const NortonConstants& constants, double stress_mpa, double temperature_c,
                   UnitConvention units) {
  if (stress_mpa <= 0.0) {
    if (stress_mpa == 0.0) return 0.0;
    throw Error(ErrorKind::DomainError, "stress must be positive");
  }
  const double sigma = convert_stress(stress_mpa, units);
  const double kelvin = temperature_c + kKelvinOffset;
  const double rate = constants.c1 * std::pow(sigma, constants.c2) * std::exp(-constants.c3 / kelvin);
  check_finite(rate, "Norton rate");
  return per_hour(rate, units);
}

double arrhenius_rate(const ArrheniusParams& params, double stress_mpa, double temperature_c,
                      UnitConvention units) {
  if (!(temperature_c > -kKelvinOffset)) {
    throw Error(ErrorKind::DomainError, "temperature below absolute zero");
  }
  if (stress_mpa <= 0.0) {
    if (stress_mpa == 0.0) return 0.0;
    throw Error(ErrorKind::DomainError, "stress must be positive");
  }
  const double sigma = convert_stress(stress_mpa, units);
  const double kelvin = temperature_c + kKelvinOffset;
  const double rate =
      params.a * std::pow(sigma, params.n) * std::exp(-params.q / (params.r * kelvin));
  check_finite(rate, "Arrhenius rate");
  return per_hour(rate, units);
}

double closed_form_strain(const NortonConstants& constants, const LoadCase& load, double t_hours,
                          UnitConvention units) {
  if (t_hours < 0.0) throw Error(ErrorKind::NegativeTime, "t = " + format_double(t_hours) + " h");
  return norton_rate(constants, load.stress_mpa, load.temperature_c, units) * t_hours;
}

CreepCurve integrate_curve(const NortonConstants& constants, const LoadCase& load,
                           std::size_t n_steps, double t_end_hours, IntegrationMethod method,
                           UnitConvention units) {
  if (n_steps < 2) throw Error(ErrorKind::InvalidGrid, "n_steps must be at least 2");
  if (!(t_end_hours > 0.0)) throw Error(ErrorKind::InvalidGrid, "t_end must be positive");
  if (!(load.stress_mpa > 0.0)) throw Error(ErrorKind::DomainError, "stress must be positive");

  CreepCurve curve;
  curve.load = load;
  curve.times_h.resize(n_steps);
  curve.strains.resize(n_steps);
  const double last = static_cast<double>(n_steps - 1);
  for (std::size_t k = 0; k < n_steps; ++k) {
    curve.times_h[k] = t_end_hours * static_cast<double>(k) / last;
  }
  curve.times_h.back() = t_end_hours;

  const double rate = norton_rate(constants, load.stress_mpa, load.temperature_c, units);
  curve.strains[0] = 0.0;
  for (std::size_t k = 1; k < n_steps; ++k) {
    if (method == IntegrationMethod::ClosedForm) {
      curve.strains[k] = rate * curve.times_h[k];
    } else {
      curve.strains[k] = curve.strains[k - 1] + rate * (curve.times_h[k] - curve.times_h[k - 1]);
    }
  }
  return curve;
}

std::vector<CreepCurve> generate_grid(const MaterialLibrary& lib, std::vector<double> stresses_mpa,
                                      std::vector<double> temperatures_c, std::size_t n_steps,
                                      double t_end_hours, UnitConvention units,
                                      IntegrationMethod method) {
  std::sort(stresses_mpa.begin(), stresses_mpa.end());
  std::sort(temperatures_c.begin(), temperatures_c.end());
  std::vector<CreepCurve> curves;
  curves.reserve(stresses_mpa.size() * temperatures_c.size());
  for (const double temperature : temperatures_c) {
    const auto& constants = lookup_constants(lib, temperature);
    for (const double stress : stresses_mpa) {
      curves.push_back(
          integrate_curve(constants, LoadCase{temperature, stress}, n_steps, t_end_hours, method, units));
    }
  }
  return curves;
}

std::vector<CreepCurve> add_gaussian_noise(std::vector<CreepCurve> curves, double stddev,
                                           std::uint64_t seed) {
  if (stddev <= 0.0) return curves;
  SeededRng rng(seed);
  for (auto& curve : curves) {
    for (std::size_t k = 1; k < curve.strains.size(); ++k) {
      curve.strains[k] = std::max(0.0, curve.strains[k] + stddev * rng.standard_normal());
    }
  }
  return curves;
}

std::vector<double> default_stresses_mpa() { return {50.0, 75.0, 100.0, 125.0, 150.0}; }
std::vector<double> default_temperatures_c() { return {700.0, 800.0, 900.0, 1000.0}; }

std::size_t write_curves_csv(const std::vector<CreepCurve>& curves, std::ostream& out) {
  if (curves.empty()) throw Error(ErrorKind::EmptyInput, "no curves to export");
  out << "timestamp,temperature,stress,avg_creep_strain\n";
  std::size_t rows = 0;
  for (const auto& curve : curves) {
    const std::string temperature = format_double(curve.load.temperature_c);
    const std::string stress = format_double(curve.load.stress_mpa);
    for (std::size_t k = 0; k < curve.times_h.size(); ++k) {
      out << format_double(curve.times_h[k]) << ',' << temperature << ',' << stress << ','
          << format_double(curve.strains[k]) << '\n';
      ++rows;
    }
  }
  return rows;
}

std::size_t export_curves_csv(const std::vector<CreepCurve>& curves,
                              const std::filesystem::path& destination) {
  std::ofstream out(destination, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + destination.string() + " for writing");
  const std::size_t rows = write_curves_csv(curves, out);
  out.flush();
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + destination.string());
  return rows;
}

void write_dataset_metadata(const DatasetMetadata& meta, const std::filesystem::path& destination) {
  json constants = json::array();
  for (const auto& c : meta.constants) {
    constants.push_back({{"temperature_c", c.temperature_c}, {"c1", c.c1}, {"c2", c.c2}, {"c3", c.c3}});
  }
  json doc = {
      {"generator_version", kGeneratorVersion},
      {"unit_convention", to_string(meta.units)},
      {"material", meta.material},
      {"grid", {{"stresses_mpa", meta.stresses_mpa}, {"temperatures_c", meta.temperatures_c}}},
      {"n_steps", meta.n_steps},
      {"t_end_hours", meta.t_end_hours},
      {"constants", constants},
      {"noise", {{"stddev", meta.noise_stddev},
                 {"seed", meta.noise_seed ? json(*meta.noise_seed) : json(nullptr)}}},
  };
  std::ofstream out(destination, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + destination.string() + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + destination.string());
}

DatasetMetadata read_dataset_metadata(const std::filesystem::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + source.string());
  try {
    const json doc = json::parse(in);
    DatasetMetadata meta;
    meta.units = parse_unit_convention(doc.at("unit_convention").get<std::string>());
    meta.material = doc.value("material", std::string{});
    meta.stresses_mpa = doc.at("grid").at("stresses_mpa").get<std::vector<double>>();
    meta.temperatures_c = doc.at("grid").at("temperatures_c").get<std::vector<double>>();
    meta.n_steps = doc.at("n_steps").get<std::size_t>();
    meta.t_end_hours = doc.at("t_end_hours").get<double>();
    for (const auto& c : doc.at("constants")) {
      meta.constants.push_back({c.at("temperature_c").get<double>(), c.at("c1").get<double>(),
                                c.at("c2").get<double>(), c.at("c3").get<double>()});
    }
    if (doc.contains("noise")) {
      meta.noise_stddev = doc["noise"].value("stddev", 0.0);
      if (doc["noise"].contains("seed") && !doc["noise"]["seed"].is_null()) {
        meta.noise_seed = doc["noise"]["seed"].get<std::uint64_t>();
      }
    }
    return meta;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, source.string() + ": " + e.what());
  }
}

}  // namespace creep
