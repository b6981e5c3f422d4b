#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace creep {

/// Unit system the tabulated Norton constants are assumed to be expressed in.
/// The public interface always takes stress in MPa and time in hours; the
/// convention decides how those are converted before the power law is applied.
enum class UnitConvention { PaHours, MpaHours, PaSeconds };

std::string_view to_string(UnitConvention units) noexcept;
UnitConvention parse_unit_convention(std::string_view text);

/// Norton constants for one tabulated temperature: rate = c1 * s^c2 * exp(-c3 / T).
struct NortonConstants {
  double temperature_c = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;  // Kelvin
};

/// Classical form: rate = a * s^n * exp(-q / (r T)).
struct ArrheniusParams {
  double a = 0.0;
  double n = 0.0;
  double q = 0.0;  // J/mol
  double r = 8.314462618;  // J/(mol K)
};

/// Thermo-mechanical properties kept as library metadata; the creep rate
/// does not depend on them.
struct MaterialProperties {
  double temperature_c = 0.0;
  double poisson = 0.0;
  double thermal_expansion = 0.0;  // 1e-6 / degC
  double elastic_modulus = 0.0;    // GPa
  double density = 0.0;            // kg/m^3
};

class MaterialLibrary {
 public:
  MaterialLibrary(std::string name, std::vector<MaterialProperties> properties,
                  std::vector<NortonConstants> constants);

  /// Inconel 625 tables: four temperatures 700..1000 degC, c3 = 0.
  static MaterialLibrary inconel625();

  const std::string& name() const noexcept { return name_; }
  const std::vector<MaterialProperties>& properties() const noexcept { return properties_; }
  const std::vector<NortonConstants>& constants() const noexcept { return constants_; }

  double min_temperature() const;
  double max_temperature() const;

 private:
  std::string name_;
  std::vector<MaterialProperties> properties_;
  std::vector<NortonConstants> constants_;
};

struct LoadCase {
  double temperature_c = 0.0;
  double stress_mpa = 0.0;

  friend bool operator==(const LoadCase&, const LoadCase&) = default;
};

struct CreepCurve {
  LoadCase load;
  std::vector<double> times_h;
  std::vector<double> strains;
};

enum class IntegrationMethod { ClosedForm, ExplicitEuler };

inline constexpr double kKelvinOffset = 273.15;

/// Exact match only; throws NoSuchTemperature otherwise.
const NortonConstants& lookup_constants(const MaterialLibrary& lib, double temperature_c);

/// Stress in MPa converted to the unit system of the convention.
double convert_stress(double stress_mpa, UnitConvention units) noexcept;

/// Strain rate per hour.
double norton_rate(const NortonConstants& constants, double stress_mpa, double temperature_c,
                   UnitConvention units = UnitConvention::PaHours);

double arrhenius_rate(const ArrheniusParams& params, double stress_mpa, double temperature_c,
                      UnitConvention units = UnitConvention::PaHours);

/// Constant stress means constant rate, so strain = rate * t.
double closed_form_strain(const NortonConstants& constants, const LoadCase& load, double t_hours,
                          UnitConvention units = UnitConvention::PaHours);

CreepCurve integrate_curve(const NortonConstants& constants, const LoadCase& load,
                           std::size_t n_steps, double t_end_hours,
                           IntegrationMethod method = IntegrationMethod::ClosedForm,
                           UnitConvention units = UnitConvention::PaHours);

/// Curves ordered by temperature ascending, then stress ascending.
std::vector<CreepCurve> generate_grid(const MaterialLibrary& lib, std::vector<double> stresses_mpa,
                                      std::vector<double> temperatures_c, std::size_t n_steps,
                                      double t_end_hours,
                                      UnitConvention units = UnitConvention::PaHours,
                                      IntegrationMethod method = IntegrationMethod::ClosedForm);

/// Adds seeded N(0, stddev) noise to every strain except the initial one and
/// floors the result at zero. Curves are no longer guaranteed monotone.
std::vector<CreepCurve> add_gaussian_noise(std::vector<CreepCurve> curves, double stddev,
                                           std::uint64_t seed);

/// Default load grid.
std::vector<double> default_stresses_mpa();
std::vector<double> default_temperatures_c();
inline constexpr std::size_t kDefaultSteps = 500;
inline constexpr double kDefaultHorizonHours = 10'000.0;

/// Header plus one row per (curve, step); returns data rows written.
std::size_t write_curves_csv(const std::vector<CreepCurve>& curves, std::ostream& out);
std::size_t export_curves_csv(const std::vector<CreepCurve>& curves,
                              const std::filesystem::path& destination);

struct DatasetMetadata {
  UnitConvention units = UnitConvention::PaHours;
  std::vector<double> stresses_mpa;
  std::vector<double> temperatures_c;
  std::size_t n_steps = 0;
  double t_end_hours = 0.0;
  std::string material;
  std::vector<NortonConstants> constants;
  double noise_stddev = 0.0;
  std::optional<std::uint64_t> noise_seed;
};

inline constexpr std::string_view kGeneratorVersion = "creep-surrogate-datagen/1";

void write_dataset_metadata(const DatasetMetadata& meta, const std::filesystem::path& destination);
DatasetMetadata read_dataset_metadata(const std::filesystem::path& source);

}  // namespace creep
