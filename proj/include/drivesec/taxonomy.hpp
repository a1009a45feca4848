#pragma once

#include <map>
#include <string>
#include <vector>

#include "drivesec/common.hpp"
#include "drivesec/data.hpp"

namespace drivesec {

// Safety class of a signal: can an attacker overwrite it without endangering
// the drive? Only Modifiable signals may be injected under enforcement.
enum class SafetyClass { Modifiable, Borderline, NonModifiable };

inline std::string safety_class_name(SafetyClass c) {
  switch (c) {
    case SafetyClass::Modifiable: return "modifiable";
    case SafetyClass::Borderline: return "borderline";
    case SafetyClass::NonModifiable: return "non_modifiable";
  }
  return "?";
}

inline SafetyClass parse_safety_class(const std::string& s) {
  if (s == "modifiable") return SafetyClass::Modifiable;
  if (s == "borderline") return SafetyClass::Borderline;
  if (s == "non_modifiable") return SafetyClass::NonModifiable;
  fail("unknown safety class: '" + s + "'");
}

struct SafetyTaxonomy {
  std::map<std::string, SafetyClass> class_of;

  SafetyClass at(const std::string& feature) const {
    auto it = class_of.find(feature);
    if (it == class_of.end()) fail("feature not in taxonomy: " + feature);
    return it->second;
  }

  bool contains(const std::string& feature) const {
    return class_of.count(feature) > 0;
  }

  int count(SafetyClass c) const {
    int n = 0;
    for (const auto& [k, v] : class_of)
      if (v == c) ++n;
    return n;
  }

  // Every dataset feature must be covered exactly once.
  void validate_covers(const std::vector<std::string>& features) const {
    for (const std::string& f : features)
      if (!class_of.count(f)) fail("taxonomy missing feature: " + f);
    if (class_of.size() != features.size()) {
      for (const auto& [name, c] : class_of) {
        bool found = false;
        for (const std::string& f : features)
          if (f == name) found = true;
        if (!found) fail("taxonomy names unknown feature: " + name);
      }
    }
  }
};

// Line-oriented `feature_name,class` file; '#' starts a comment.
inline SafetyTaxonomy load_taxonomy(const std::string& path) {
  SafetyTaxonomy tax;
  size_t lineno = 0;
  for (const std::string& raw : read_lines(path)) {
    ++lineno;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    size_t comma = line.rfind(',');
    if (comma == std::string::npos)
      fail("taxonomy line " + std::to_string(lineno) + ": expected 'feature,class'");
    std::string name = trim(line.substr(0, comma));
    SafetyClass c = parse_safety_class(trim(line.substr(comma + 1)));
    if (tax.class_of.count(name))
      fail("taxonomy duplicates feature: " + name);
    tax.class_of[name] = c;
  }
  require(!tax.class_of.empty(), "empty taxonomy file: " + path);
  return tax;
}

// Load and immediately check coverage of a feature list.
inline SafetyTaxonomy load_taxonomy(const std::string& path,
                                    const std::vector<std::string>& features) {
  SafetyTaxonomy tax = load_taxonomy(path);
  tax.validate_covers(features);
  return tax;
}

// Index-space view of a taxonomy over one dataset's feature order.
struct SafetyMask {
  std::vector<SafetyClass> by_index;
  std::vector<int> modifiable;  // indices with class Modifiable, ascending

  bool is_modifiable(int f) const {
    return by_index[static_cast<size_t>(f)] == SafetyClass::Modifiable;
  }
};

inline SafetyMask make_mask(const SafetyTaxonomy& tax,
                            const std::vector<std::string>& feature_names) {
  tax.validate_covers(feature_names);
  SafetyMask m;
  m.by_index.reserve(feature_names.size());
  for (size_t i = 0; i < feature_names.size(); ++i) {
    SafetyClass c = tax.at(feature_names[i]);
    m.by_index.push_back(c);
    if (c == SafetyClass::Modifiable) m.modifiable.push_back(static_cast<int>(i));
  }
  return m;
}

}  // namespace drivesec
