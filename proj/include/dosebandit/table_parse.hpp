#pragma once

#include <algorithm>
#include <cctype>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dosebandit/cohort.hpp"
#include "dosebandit/errors.hpp"
#include "dosebandit/patient.hpp"

namespace dosebandit {

// Maps PatientRecord fields to source column names. Fields left unmapped are
// treated as entirely missing (except the therapeutic dose, which is
// required — rewards are undefined without it).
struct SchemaConfig {
  std::map<std::string, std::string> columns;

  static const std::vector<std::string>& known_fields() {
    static const std::vector<std::string> fields = {
        "id",        "gender",    "race",     "age",      "height_cm",
        "weight_kg", "amiodarone", "carbamazepine", "phenytoin", "rifampin",
        "cyp2c9",    "vkorc1",    "therapeutic_dose_mg_week"};
    return fields;
  }

  static SchemaConfig from_json(const nlohmann::json& j) {
    SchemaConfig cfg;
    if (!j.contains("columns") || !j["columns"].is_object()) {
      throw ConfigError("schema config: missing \"columns\" object");
    }
    for (const auto& [field, col] : j["columns"].items()) {
      const auto& known = known_fields();
      if (std::find(known.begin(), known.end(), field) == known.end()) {
        throw ConfigError("schema config: unknown field \"" + field + "\"");
      }
      cfg.columns[field] = col.get<std::string>();
    }
    if (!cfg.columns.count("therapeutic_dose_mg_week")) {
      throw ConfigError("schema config: \"therapeutic_dose_mg_week\" mapping is required");
    }
    return cfg;
  }
};

struct ParseDiagnostics {
  std::size_t rows_total = 0;
  std::size_t rows_retained = 0;
  std::size_t dropped_missing_dose = 0;
  std::map<std::string, std::size_t> missingness;  // per field, among retained rows
  std::vector<std::string> unmapped_fields;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["rows_total"] = rows_total;
    j["rows_retained"] = rows_retained;
    j["dropped_count"] = dropped_missing_dose;
    j["missingness"] = missingness;
    j["unmapped_fields"] = unmapped_fields;
    return j;
  }
};

struct ParsedCohort {
  CohortDataset data;
  ParseDiagnostics diagnostics;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Quote-aware split ("" escapes a quote inside a quoted cell).
inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == delim) {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

inline std::optional<double> parse_double(const std::string& cell) {
  const std::string t = trim(cell);
  if (t.empty()) return std::nullopt;
  try {
    std::size_t pos = 0;
    const double v = std::stod(t, &pos);
    while (pos < t.size() && std::isspace(static_cast<unsigned char>(t[pos]))) ++pos;
    if (pos != t.size()) return std::nullopt;
    if (!std::isfinite(v)) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

// Age cells come as decade bins ("50 - 59", "90+") or plain numbers.
inline std::optional<int> parse_age_decades(const std::string& cell) {
  const std::string t = trim(cell);
  if (t.empty()) return std::nullopt;
  std::size_t pos = 0;
  while (pos < t.size() && !std::isdigit(static_cast<unsigned char>(t[pos]))) ++pos;
  if (pos == t.size()) return std::nullopt;
  long v = 0;
  while (pos < t.size() && std::isdigit(static_cast<unsigned char>(t[pos]))) {
    v = v * 10 + (t[pos] - '0');
    ++pos;
  }
  const long decade = v <= 9 ? v : v / 10;
  if (decade < 1 || decade > 9) return std::nullopt;
  return static_cast<int>(decade);
}

inline Gender parse_gender(const std::string& cell) {
  const std::string t = lower(trim(cell));
  if (t == "male" || t == "m") return Gender::male;
  if (t == "female" || t == "f") return Gender::female;
  return Gender::missing;
}

inline Race parse_race(const std::string& cell) {
  const std::string t = lower(trim(cell));
  if (t.find("white") != std::string::npos) return Race::white;
  if (t.find("asian") != std::string::npos) return Race::asian;
  if (t.find("black") != std::string::npos) return Race::black_or_african_american;
  return Race::mixed_or_missing;
}

inline Flag parse_flag(const std::string& cell) {
  const std::string t = lower(trim(cell));
  if (t == "1" || t == "yes" || t == "true" || t == "y") return Flag::yes;
  if (t == "0" || t == "no" || t == "false" || t == "n") return Flag::no;
  return Flag::missing;
}

inline Cyp2c9 parse_cyp2c9(const std::string& cell) {
  const std::string t = lower(trim(cell));
  if (t == "*1/*1") return Cyp2c9::star_1_1;
  if (t == "*1/*2") return Cyp2c9::star_1_2;
  if (t == "*1/*3") return Cyp2c9::star_1_3;
  if (t == "*2/*2") return Cyp2c9::star_2_2;
  if (t == "*2/*3") return Cyp2c9::star_2_3;
  if (t == "*3/*3") return Cyp2c9::star_3_3;
  return Cyp2c9::unknown;
}

inline Vkorc1 parse_vkorc1(const std::string& cell) {
  const std::string t = lower(trim(cell));
  if (t == "g/g") return Vkorc1::gg;
  if (t == "a/g" || t == "g/a") return Vkorc1::ag;
  if (t == "a/a") return Vkorc1::aa;
  return Vkorc1::unknown;
}

}  // namespace detail

// Parse a delimited cohort table (comma or tab, autodetected from the header
// line). Rows lacking a usable therapeutic dose are dropped and counted;
// unparseable or out-of-range numeric cells become missing values, never
// errors. A mapped column absent from the header is a SchemaError.
inline ParsedCohort parse_dataset(std::istream& in, const SchemaConfig& schema) {
  std::string header;
  if (!std::getline(in, header)) throw SchemaError("input table is empty");
  const std::size_t commas = static_cast<std::size_t>(std::count(header.begin(), header.end(), ','));
  const std::size_t tabs = static_cast<std::size_t>(std::count(header.begin(), header.end(), '\t'));
  const char delim = tabs > commas ? '\t' : ',';

  const auto head_cells = detail::split_line(header, delim);
  std::map<std::string, std::size_t> col_index;  // field -> column position
  for (const auto& [field, col_name] : schema.columns) {
    const auto it = std::find_if(head_cells.begin(), head_cells.end(),
                                 [&](const std::string& h) { return detail::trim(h) == col_name; });
    if (it == head_cells.end()) {
      throw SchemaError("mapped column \"" + col_name + "\" (field " + field +
                        ") not found in table header");
    }
    col_index[field] = static_cast<std::size_t>(it - head_cells.begin());
  }

  ParsedCohort out;
  out.data.provenance = Provenance::real;
  for (const auto& field : SchemaConfig::known_fields()) {
    if (!schema.columns.count(field) && field != "id") {
      out.diagnostics.unmapped_fields.push_back(field);
    }
  }

  const auto cell = [&](const std::vector<std::string>& cells,
                        const std::string& field) -> std::string {
    const auto it = col_index.find(field);
    if (it == col_index.end() || it->second >= cells.size()) return "";
    return cells[it->second];
  };

  std::string line;
  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row_number;
    ++out.diagnostics.rows_total;
    const auto cells = detail::split_line(line, delim);

    const auto dose = detail::parse_double(cell(cells, "therapeutic_dose_mg_week"));
    if (!dose || *dose <= 0.0) {
      ++out.diagnostics.dropped_missing_dose;
      continue;
    }

    PatientRecord rec;
    rec.id = detail::trim(cell(cells, "id"));
    if (rec.id.empty()) rec.id = "row" + std::to_string(row_number);
    rec.therapeutic_dose_mg_week = *dose;
    rec.gender = detail::parse_gender(cell(cells, "gender"));
    rec.race = detail::parse_race(cell(cells, "race"));
    rec.age_decades = detail::parse_age_decades(cell(cells, "age"));

    rec.height_cm = detail::parse_double(cell(cells, "height_cm"));
    if (rec.height_cm && !(*rec.height_cm > 100.0 && *rec.height_cm < 250.0)) {
      rec.height_cm.reset();
    }
    rec.weight_kg = detail::parse_double(cell(cells, "weight_kg"));
    if (rec.weight_kg && !(*rec.weight_kg > 20.0 && *rec.weight_kg < 300.0)) {
      rec.weight_kg.reset();
    }

    rec.amiodarone = detail::parse_flag(cell(cells, "amiodarone"));
    const Flag inducers[3] = {detail::parse_flag(cell(cells, "carbamazepine")),
                              detail::parse_flag(cell(cells, "phenytoin")),
                              detail::parse_flag(cell(cells, "rifampin"))};
    bool any_yes = false, any_missing = false;
    for (const Flag f : inducers) {
      any_yes = any_yes || f == Flag::yes;
      any_missing = any_missing || f == Flag::missing;
    }
    rec.enzyme_inducer = any_yes ? Flag::yes : (any_missing ? Flag::missing : Flag::no);

    rec.cyp2c9 = detail::parse_cyp2c9(cell(cells, "cyp2c9"));
    rec.vkorc1 = detail::parse_vkorc1(cell(cells, "vkorc1"));

    auto& miss = out.diagnostics.missingness;
    if (!rec.age_decades) ++miss["age_decades"];
    if (!rec.height_cm) ++miss["height_cm"];
    if (!rec.weight_kg) ++miss["weight_kg"];
    if (rec.gender == Gender::missing) ++miss["gender"];
    if (rec.race == Race::mixed_or_missing) ++miss["race"];
    if (rec.amiodarone == Flag::missing) ++miss["amiodarone"];
    if (rec.enzyme_inducer == Flag::missing) ++miss["enzyme_inducer"];
    if (rec.cyp2c9 == Cyp2c9::unknown) ++miss["cyp2c9"];
    if (rec.vkorc1 == Vkorc1::unknown) ++miss["vkorc1"];

    out.data.records.push_back(std::move(rec));
    ++out.diagnostics.rows_retained;
  }
  return out;
}

}  // namespace dosebandit
