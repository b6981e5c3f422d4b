#include "creep/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <string>

#include <nlohmann/json.hpp>

#include "creep/error.hpp"
#include "creep/text.hpp"

namespace creep {

using nlohmann::json;

double MinMaxScaler::transform(double x) const noexcept {
  if (degenerate()) return 0.0;
  return (x - min_val) / (max_val - min_val);
}

double MinMaxScaler::inverse(double scaled) const noexcept {
  if (degenerate()) return min_val;
  return scaled * (max_val - min_val) + min_val;
}

SplitSpec SplitSpec::default_holdout() {
  return SplitSpec{{{700.0, 75.0}, {800.0, 100.0}, {900.0, 125.0}, {1000.0, 50.0}}};
}

double log_transform(double strain) {
  if (!(strain > -1.0)) {
    throw Error(ErrorKind::DomainError, "log transform needs strain > -1, got " + format_double(strain));
  }
  return std::log1p(strain);
}

double inverse_log_transform(double log_strain) { return std::expm1(log_strain); }

std::vector<RawRecord> records_from_curves(const std::vector<CreepCurve>& curves) {
  std::vector<RawRecord> records;
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.times_h.size(); ++i) {
      records.push_back({c.times_h[i], c.load.temperature_c, c.load.stress_mpa, c.strains[i]});
    }
  }
  return records;
}

std::vector<RawRecord> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::EmptyInput, "dataset has no header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  const std::vector<std::string_view> expected{"timestamp", "temperature", "stress", "avg_creep_strain"};
  if (header != expected) {
    throw Error(ErrorKind::FormatError, "unexpected dataset header '" + line + "'");
  }
  std::vector<RawRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 4) {
      throw Error(ErrorKind::FormatError, "line " + std::to_string(line_no) + ": expected 4 fields");
    }
    RawRecord r{parse_double(fields[0]), parse_double(fields[1]), parse_double(fields[2]),
                parse_double(fields[3])};
    if (r.timestamp_h < 0.0 || r.strain < 0.0) {
      throw Error(ErrorKind::FormatError,
                  "line " + std::to_string(line_no) + ": negative timestamp or strain");
    }
    records.push_back(r);
  }
  return records;
}

std::vector<RawRecord> read_records_csv(const std::filesystem::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open dataset " + source.string());
  return read_records_csv(in);
}

SequenceSet group_sequences(const std::vector<RawRecord>& records) {
  if (records.empty()) throw Error(ErrorKind::EmptyInput, "no records to group");

  // Groups in order of first appearance.
  std::vector<SequenceKey> keys;
  std::vector<std::vector<const RawRecord*>> groups;
  for (const auto& r : records) {
    const SequenceKey key{r.temperature_c, r.stress_mpa};
    auto it = std::find(keys.begin(), keys.end(), key);
    if (it == keys.end()) {
      keys.push_back(key);
      groups.emplace_back();
      it = keys.end() - 1;
    }
    groups[static_cast<std::size_t>(it - keys.begin())].push_back(&r);
  }

  const std::size_t length = groups.front().size();
  const auto& reference = groups.front();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& group = groups[g];
    if (group.size() != length) {
      throw Error(ErrorKind::RaggedGroups, "sequence " + std::to_string(g) + " has " +
                                               std::to_string(group.size()) + " steps, expected " +
                                               std::to_string(length));
    }
    for (std::size_t k = 0; k < length; ++k) {
      if (group[k]->timestamp_h != reference[k]->timestamp_h) {
        throw Error(ErrorKind::RaggedGroups,
                    "sequence " + std::to_string(g) + " time grid differs at step " + std::to_string(k));
      }
      if (k > 0 && !(group[k]->timestamp_h > group[k - 1]->timestamp_h)) {
        throw Error(ErrorKind::RaggedGroups,
                    "sequence " + std::to_string(g) + " time grid is not strictly increasing");
      }
    }
  }

  SequenceSet set;
  set.keys = keys;
  set.length = length;
  set.features.reserve(keys.size() * length * kFeatureCount);
  set.targets.reserve(keys.size() * length);
  for (const auto& group : groups) {
    for (const auto* r : group) {
      set.features.push_back(r->temperature_c);
      set.features.push_back(r->stress_mpa);
      set.features.push_back(r->timestamp_h);
      set.targets.push_back(log_transform(r->strain));
    }
  }
  return set;
}

std::vector<std::size_t> subsample_indices(std::size_t length, std::size_t target) {
  if (target < 2 || target > length) {
    throw Error(ErrorKind::InvalidGrid, "cannot subsample " + std::to_string(length) + " steps to " +
                                            std::to_string(target));
  }
  std::vector<std::size_t> indices(target);
  const double stride = static_cast<double>(length - 1) / static_cast<double>(target - 1);
  for (std::size_t i = 0; i < target; ++i) {
    indices[i] = static_cast<std::size_t>(std::llround(stride * static_cast<double>(i)));
  }
  indices.back() = length - 1;
  return indices;
}

SequenceSet subsample(const SequenceSet& set, std::size_t target) {
  if (target == set.length) return set;
  const auto indices = subsample_indices(set.length, target);
  SequenceSet out;
  out.keys = set.keys;
  out.length = target;
  out.features.reserve(set.size() * target * kFeatureCount);
  out.targets.reserve(set.size() * target);
  for (std::size_t s = 0; s < set.size(); ++s) {
    for (const std::size_t k : indices) {
      for (std::size_t f = 0; f < kFeatureCount; ++f) out.features.push_back(set.feature(s, k, f));
      out.targets.push_back(set.target(s, k));
    }
  }
  return out;
}

namespace {

void append_sequence(SequenceSet& dst, const SequenceSet& src, std::size_t s) {
  dst.keys.push_back(src.keys[s]);
  const auto fbegin = src.features.begin() + static_cast<std::ptrdiff_t>(s * src.length * kFeatureCount);
  dst.features.insert(dst.features.end(), fbegin,
                      fbegin + static_cast<std::ptrdiff_t>(src.length * kFeatureCount));
  const auto tbegin = src.targets.begin() + static_cast<std::ptrdiff_t>(s * src.length);
  dst.targets.insert(dst.targets.end(), tbegin, tbegin + static_cast<std::ptrdiff_t>(src.length));
}

}  // namespace

SplitResult fixed_split(const SequenceSet& set, const SplitSpec& spec) {
  if (spec.validation_keys.empty()) throw Error(ErrorKind::InvalidArgument, "empty validation split");
  for (std::size_t i = 0; i < spec.validation_keys.size(); ++i) {
    const auto& key = spec.validation_keys[i];
    if (std::find(set.keys.begin(), set.keys.end(), key) == set.keys.end()) {
      throw Error(ErrorKind::UnknownValidationKey, "(" + format_double(key.temperature_c) + " degC, " +
                                                       format_double(key.stress_mpa) + " MPa)");
    }
    if (std::find(spec.validation_keys.begin(), spec.validation_keys.begin() + static_cast<std::ptrdiff_t>(i),
                  key) != spec.validation_keys.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw Error(ErrorKind::InvalidArgument, "duplicate validation key");
    }
  }
  SplitResult result;
  result.train.length = set.length;
  result.val.length = set.length;
  for (std::size_t s = 0; s < set.size(); ++s) {
    const bool is_val = std::find(spec.validation_keys.begin(), spec.validation_keys.end(),
                                  set.keys[s]) != spec.validation_keys.end();
    append_sequence(is_val ? result.val : result.train, set, s);
  }
  return result;
}

MinMaxScaler fit_scaler(const std::vector<double>& values) {
  if (values.empty()) throw Error(ErrorKind::EmptyInput, "cannot fit a scaler on no values");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return MinMaxScaler{*lo, *hi};
}

std::vector<double> feature_column(const SequenceSet& set, std::size_t feature) {
  std::vector<double> column;
  column.reserve(set.size() * set.length);
  for (std::size_t i = feature; i < set.features.size(); i += kFeatureCount) column.push_back(set.features[i]);
  return column;
}

SequenceSet scale_set(const SequenceSet& set, const std::array<MinMaxScaler, kFeatureCount>& features,
                      const MinMaxScaler& target) {
  SequenceSet out = set;
  for (std::size_t i = 0; i < out.features.size(); ++i) {
    out.features[i] = features[i % kFeatureCount].transform(out.features[i]);
  }
  for (auto& t : out.targets) t = target.transform(t);
  return out;
}

PreparedData prepare(const std::vector<RawRecord>& records, const SplitSpec& spec,
                     std::optional<std::size_t> subsample_to, UnitConvention units) {
  SequenceSet grouped = group_sequences(records);
  if (subsample_to) grouped = subsample(grouped, *subsample_to);
  auto [train, val] = fixed_split(grouped, spec);

  PreparedData data;
  data.units = units;
  data.split = spec;
  data.subsample_to = subsample_to;
  if (train.size() == 0) {
    throw Error(ErrorKind::EmptyInput, "every sequence is in the validation split; nothing to fit scalers on");
  }
  for (std::size_t f = 0; f < kFeatureCount; ++f) data.feature_scalers[f] = fit_scaler(feature_column(train, f));
  data.target_scaler = fit_scaler(train.targets);
  data.train = scale_set(train, data.feature_scalers, data.target_scaler);
  data.val = scale_set(val, data.feature_scalers, data.target_scaler);
  return data;
}

namespace {

constexpr const char* kPreparedHeader =
    "sequence,step,temperature_c,stress_mpa,temperature,stress,time,log_strain";

void write_set(const SequenceSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + path.string() + " for writing");
  out << kPreparedHeader << '\n';
  for (std::size_t s = 0; s < set.size(); ++s) {
    const std::string t = format_double(set.keys[s].temperature_c);
    const std::string sigma = format_double(set.keys[s].stress_mpa);
    for (std::size_t k = 0; k < set.length; ++k) {
      out << s << ',' << k << ',' << t << ',' << sigma;
      for (std::size_t f = 0; f < kFeatureCount; ++f) out << ',' << format_double(set.feature(s, k, f));
      out << ',' << format_double(set.target(s, k)) << '\n';
    }
  }
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

SequenceSet read_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kPreparedHeader) {
    throw Error(ErrorKind::FormatError, path.string() + ": unexpected header");
  }
  SequenceSet set;
  std::size_t current = 0;
  std::size_t steps_in_current = 0;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 8) throw Error(ErrorKind::FormatError, path.string() + ": expected 8 fields");
    const auto seq = static_cast<std::size_t>(parse_double(fields[0]));
    const auto step = static_cast<std::size_t>(parse_double(fields[1]));
    if (first || seq != current) {
      if (!first) {
        if (seq != current + 1) throw Error(ErrorKind::FormatError, path.string() + ": sequence out of order");
        if (set.length == 0) set.length = steps_in_current;
        if (steps_in_current != set.length) throw Error(ErrorKind::RaggedGroups, path.string());
      }
      current = seq;
      steps_in_current = 0;
      first = false;
      set.keys.push_back({parse_double(fields[2]), parse_double(fields[3])});
    }
    if (step != steps_in_current) throw Error(ErrorKind::FormatError, path.string() + ": step out of order");
    ++steps_in_current;
    for (std::size_t f = 0; f < kFeatureCount; ++f) set.features.push_back(parse_double(fields[4 + f]));
    set.targets.push_back(parse_double(fields[7]));
  }
  if (!first) {
    if (set.length == 0) set.length = steps_in_current;
    if (steps_in_current != set.length) throw Error(ErrorKind::RaggedGroups, path.string());
  }
  return set;
}

json scaler_json(const MinMaxScaler& s) { return {{"min", s.min_val}, {"max", s.max_val}}; }
MinMaxScaler scaler_from(const json& j) { return {j.at("min").get<double>(), j.at("max").get<double>()}; }

}  // namespace

void write_prepared(const PreparedData& data, const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + directory.string() + ": " + ec.message());
  write_set(data.train, directory / "train.csv");
  write_set(data.val, directory / "val.csv");

  json keys = json::array();
  for (const auto& k : data.split.validation_keys) keys.push_back({k.temperature_c, k.stress_mpa});
  json doc = {
      {"format_version", 1},
      {"unit_convention", to_string(data.units)},
      {"features",
       {{"temperature", scaler_json(data.feature_scalers[kTemperature])},
        {"stress", scaler_json(data.feature_scalers[kStress])},
        {"time", scaler_json(data.feature_scalers[kTime])}}},
      {"target", scaler_json(data.target_scaler)},
      {"target_transform", "log1p"},
      {"validation_keys", keys},
      {"subsample_to", data.subsample_to ? json(*data.subsample_to) : json(nullptr)},
      {"sequence_length", data.train.length},
      {"train_sequences", data.train.size()},
      {"val_sequences", data.val.size()},
  };
  const auto path = directory / "scalers.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

PreparedData read_prepared(const std::filesystem::path& directory) {
  const auto path = directory / "scalers.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  PreparedData data;
  try {
    const json doc = json::parse(in);
    data.units = parse_unit_convention(doc.at("unit_convention").get<std::string>());
    data.feature_scalers[kTemperature] = scaler_from(doc.at("features").at("temperature"));
    data.feature_scalers[kStress] = scaler_from(doc.at("features").at("stress"));
    data.feature_scalers[kTime] = scaler_from(doc.at("features").at("time"));
    data.target_scaler = scaler_from(doc.at("target"));
    for (const auto& k : doc.at("validation_keys")) {
      data.split.validation_keys.push_back({k.at(0).get<double>(), k.at(1).get<double>()});
    }
    if (!doc.at("subsample_to").is_null()) data.subsample_to = doc["subsample_to"].get<std::size_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, path.string() + ": " + e.what());
  }
  data.train = read_set(directory / "train.csv");
  data.val = read_set(directory / "val.csv");
  if (data.val.size() > 0 && data.train.size() > 0 && data.val.length != data.train.length) {
    throw Error(ErrorKind::RaggedGroups, "train and validation sequence lengths differ");
  }
  return data;
}

}  // namespace creep
