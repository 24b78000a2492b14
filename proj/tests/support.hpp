#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

// Reference formulas for the default synthetic model, written directly from
// the model definition and independent of the library's tables.
namespace ref {

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double p_c1(int s) { return sig(0.1 * s); }                 // P(C = 1 | s)
inline double p_c(int c, int s) { return c == 1 ? p_c1(s) : 1.0 - p_c1(s); }

inline double p_a(int a, int s, int c) {
  const double e = sig(1.0 * s + 2.0 * c);
  return a == 0 ? 1.0 - e : 0.5 * e;
}

inline double p_b(int a, int s) { return p_c(1, s) * p_a(a, s, 1) + p_c(-1, s) * p_a(a, s, -1); }

inline double p_m(int m, int s, int a) {
  const double m0 = sig(0.1 * s + 1.0 * a);
  return m == 0 ? m0 : 1.0 - m0;
}

inline double p_r1(int s, int c, int m) { return sig(2.0 * c + 0.1 * s + 2.0 * m); }
inline double mean_r(int s, int c, int m) { return 2.0 * p_r1(s, c, m) - 1.0; }
inline double p_s1(int s, int c, int m) { return sig(2.0 * c + 0.1 * s + 2.0 * m); }
inline double p_s(int sn, int s, int c, int m) { return sn == 1 ? p_s1(s, c, m) : 1.0 - p_s1(s, c, m); }

inline const std::vector<int> S{0, 1};
inline const std::vector<int> A{-1, 0, 1};
inline const std::vector<int> M{0, 1};
inline const std::vector<int> C{-1, 1};

/// Interventional mean reward by brute-force enumeration.
inline double r_bar(int s, int a) {
  double v = 0.0;
  for (int c : C)
    for (int m : M) v += p_c(c, s) * p_m(m, s, a) * mean_r(s, c, m);
  return v;
}

inline double P(int sn, int s, int a) {
  double v = 0.0;
  for (int c : C)
    for (int m : M) v += p_c(c, s) * p_m(m, s, a) * p_s(sn, s, c, m);
  return v;
}

/// Policy value by fixed-point iteration (not a linear solve); pi maps state -> action label.
inline double policy_value(const std::vector<int>& pi, double gamma) {
  double v0 = 0.0, v1 = 0.0;
  for (int it = 0; it < 20000; ++it) {
    const double n0 = r_bar(0, pi[0]) + gamma * (P(0, 0, pi[0]) * v0 + P(1, 0, pi[0]) * v1);
    const double n1 = r_bar(1, pi[1]) + gamma * (P(0, 1, pi[1]) * v0 + P(1, 1, pi[1]) * v1);
    v0 = n0;
    v1 = n1;
  }
  return 0.5 * v0 + 0.5 * v1;
}

/// Observational p(c | s, a) under the confounded behavior.
inline double post_c(int c, int s, int a) {
  const double num = p_c(c, s) * p_a(a, s, c);
  return num / (p_c(1, s) * p_a(a, s, 1) + p_c(-1, s) * p_a(a, s, -1));
}

}  // namespace ref

// Minimal JSON-schema subset checker: type, required, properties,
// additionalProperties (bool), items, minItems, enum, minimum.
namespace schema {

inline bool type_matches(const nlohmann::json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "number") return v.is_number();
  if (t == "integer") return v.is_number_integer();
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  return false;
}

inline void check(const nlohmann::json& v, const nlohmann::json& s, const std::string& path,
                  std::vector<std::string>& errors) {
  if (s.contains("type")) {
    bool ok = false;
    if (s["type"].is_array()) {
      for (const auto& t : s["type"]) ok = ok || type_matches(v, t.get<std::string>());
    } else {
      ok = type_matches(v, s["type"].get<std::string>());
    }
    if (!ok) {
      errors.push_back(path + ": wrong type");
      return;
    }
  }
  if (s.contains("enum") && std::find(s["enum"].begin(), s["enum"].end(), v) == s["enum"].end())
    errors.push_back(path + ": not in enum");
  if (s.contains("minimum") && v.is_number() && v.get<double>() < s["minimum"].get<double>())
    errors.push_back(path + ": below minimum");
  if (v.is_object()) {
    if (s.contains("required"))
      for (const auto& r : s["required"])
        if (!v.contains(r.get<std::string>())) errors.push_back(path + ": missing " + r.get<std::string>());
    for (const auto& [k, sub] : v.items()) {
      if (s.contains("properties") && s["properties"].contains(k))
        check(sub, s["properties"][k], path + "." + k, errors);
      else if (s.contains("additionalProperties") && s["additionalProperties"].is_boolean() &&
               !s["additionalProperties"].get<bool>())
        errors.push_back(path + ": unexpected key " + k);
      else if (s.contains("additionalProperties") && s["additionalProperties"].is_object())
        check(sub, s["additionalProperties"], path + "." + k, errors);
    }
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
      errors.push_back(path + ": too few items");
    if (s.contains("items"))
      for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s["items"], path + "[" + std::to_string(i) + "]", errors);
  }
}

inline std::vector<std::string> validate(const nlohmann::json& v, const nlohmann::json& s) {
  std::vector<std::string> errors;
  check(v, s, "$", errors);
  return errors;
}

}  // namespace schema
