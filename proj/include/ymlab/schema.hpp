#pragma once

/// Validation of JSON instances against the subset of JSON Schema used by
/// the shipped run-config schema: type, properties, required,
/// additionalProperties (boolean or schema), items, minItems, maxItems, enum,
/// minimum, maximum, exclusiveMinimum, exclusiveMaximum and local $ref
/// pointers of the form "#/definitions/name".

#include <json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

namespace ymlab::schema {

struct Issue {
  std::string path;  ///< JSON pointer of the offending value ("" is the root)
  std::string message;
};

struct SchemaViolation : std::runtime_error {
  std::vector<Issue> issues;
  explicit SchemaViolation(std::vector<Issue> list)
      : std::runtime_error(describe(list)), issues(std::move(list)) {}

  static std::string describe(const std::vector<Issue>& list) {
    std::string s = "config does not match the schema:";
    for (const auto& i : list) s += "\n  " + (i.path.empty() ? std::string("/") : i.path) + ": " + i.message;
    return s;
  }
};

namespace detail {

inline bool has_type(const nlohmann::json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  if (t == "integer") return v.is_number_integer() || (v.is_number_float() && v.get<double>() == std::floor(v.get<double>()));
  if (t == "number") return v.is_number();
  throw std::invalid_argument("unsupported schema type " + t);
}

inline std::string escape(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

class Validator {
 public:
  explicit Validator(const nlohmann::json& root) : root_(root) {}

  void run(const nlohmann::json& s, const nlohmann::json& v, const std::string& path, std::vector<Issue>& out) const {
    if (s.is_boolean()) {
      if (!s.get<bool>()) out.push_back({path, "no value is allowed here"});
      return;
    }
    if (s.contains("$ref")) {
      run(resolve(s["$ref"].get<std::string>()), v, path, out);
      return;
    }
    if (s.contains("type")) {
      const auto& t = s["type"];
      bool ok = false;
      std::string names;
      if (t.is_array()) {
        for (const auto& x : t) {
          ok = ok || has_type(v, x.get<std::string>());
          names += (names.empty() ? "" : " or ") + x.get<std::string>();
        }
      } else {
        ok = has_type(v, t.get<std::string>());
        names = t.get<std::string>();
      }
      if (!ok) {
        out.push_back({path, "expected " + names + ", got " + std::string(v.type_name())});
        return;
      }
    }
    if (s.contains("enum")) {
      bool found = false;
      for (const auto& e : s["enum"]) found = found || e == v;
      if (!found) out.push_back({path, "value " + v.dump() + " is not one of " + s["enum"].dump()});
    }
    if (v.is_number()) {
      const double x = v.get<double>();
      if (s.contains("minimum") && x < s["minimum"].get<double>())
        out.push_back({path, "must be >= " + s["minimum"].dump()});
      if (s.contains("maximum") && x > s["maximum"].get<double>())
        out.push_back({path, "must be <= " + s["maximum"].dump()});
      if (s.contains("exclusiveMinimum") && x <= s["exclusiveMinimum"].get<double>())
        out.push_back({path, "must be > " + s["exclusiveMinimum"].dump()});
      if (s.contains("exclusiveMaximum") && x >= s["exclusiveMaximum"].get<double>())
        out.push_back({path, "must be < " + s["exclusiveMaximum"].dump()});
    }
    if (v.is_array()) {
      if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
        out.push_back({path, "needs at least " + s["minItems"].dump() + " items"});
      if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>())
        out.push_back({path, "allows at most " + s["maxItems"].dump() + " items"});
      if (s.contains("items"))
        for (std::size_t i = 0; i < v.size(); ++i) run(s["items"], v[i], path + "/" + std::to_string(i), out);
    }
    if (v.is_object()) {
      if (s.contains("required"))
        for (const auto& r : s["required"])
          if (!v.contains(r.get<std::string>()))
            out.push_back({path + "/" + escape(r.get<std::string>()), "required property is missing"});
      const nlohmann::json empty = nlohmann::json::object();
      const auto& props = s.contains("properties") ? s["properties"] : empty;
      for (auto it = v.begin(); it != v.end(); ++it) {
        const std::string p = path + "/" + escape(it.key());
        if (props.contains(it.key())) {
          run(props[it.key()], it.value(), p, out);
        } else if (s.contains("additionalProperties")) {
          const auto& ap = s["additionalProperties"];
          if (ap.is_boolean() && !ap.get<bool>()) out.push_back({p, "unknown property"});
          else if (ap.is_object()) run(ap, it.value(), p, out);
        }
      }
    }
  }

 private:
  const nlohmann::json& resolve(const std::string& ref) const {
    const std::string prefix = "#/definitions/";
    if (ref.rfind(prefix, 0) != 0) throw std::invalid_argument("unsupported $ref " + ref);
    const std::string name = ref.substr(prefix.size());
    if (!root_.contains("definitions") || !root_["definitions"].contains(name))
      throw std::invalid_argument("unresolved $ref " + ref);
    return root_["definitions"][name];
  }

  const nlohmann::json& root_;
};

}  // namespace detail

/// All violations of the instance, in document order of the schema walk.
inline std::vector<Issue> validate(const nlohmann::json& schema, const nlohmann::json& instance) {
  std::vector<Issue> out;
  detail::Validator(schema).run(schema, instance, "", out);
  return out;
}

/// Throws SchemaViolation listing every issue.
inline void require_valid(const nlohmann::json& schema, const nlohmann::json& instance) {
  auto issues = validate(schema, instance);
  if (!issues.empty()) throw SchemaViolation(std::move(issues));
}

}  // namespace ymlab::schema
