#include <cstdlib>
#include <fstream>
#include <sstream>

#include "curie/cpl/parser.hpp"
#include "curie/harness/harness.hpp"

namespace curie::harness {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw ConfigError(path + ": " + message);
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string index(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(join(path, key), "missing required field");
  return *it;
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

std::uint64_t get_count(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) {
    fail(path, "expected a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected true or false");
  return j.get<bool>();
}

std::vector<double> get_numbers(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_number(j[i], index(path, i)));
  return out;
}

std::vector<std::string> get_strings(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_string(j[i], index(path, i)));
  return out;
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) fail(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      fail(join(path, key), "unknown field");
    }
  }
}

std::filesystem::path resolve_file(const json& j, const std::string& path,
                                   const std::filesystem::path& base) {
  std::filesystem::path p = get_string(j, path);
  if (p.is_relative()) p = base / p;
  if (!std::filesystem::is_regular_file(p)) fail(path, "file not found: " + p.string());
  return p;
}

data::ColumnType parse_type(const std::string& text, const std::string& path) {
  if (text == "integer") return data::ColumnType::kInteger;
  if (text == "real") return data::ColumnType::kReal;
  if (text == "categorical") return data::ColumnType::kCategorical;
  if (text == "boolean") return data::ColumnType::kBoolean;
  fail(path, "unknown column type '" + text + "'");
}

data::Schema parse_schema(const json& j, const std::string& path) {
  if (j.is_string()) {
    if (j.get<std::string>() == "warfarin") return data::warfarin_schema();
    fail(path, "unknown built-in schema '" + j.get<std::string>() + "'");
  }
  check_keys(j, path, {"target", "columns"});
  const json& cols = require(j, "columns", path);
  const std::string cols_path = join(path, "columns");
  if (!cols.is_array() || cols.empty()) fail(cols_path, "expected a nonempty array");
  std::vector<data::ColumnSpec> specs;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const std::string cp = index(cols_path, i);
    check_keys(cols[i], cp, {"name", "type", "levels", "range"});
    data::ColumnSpec spec;
    spec.name = get_string(require(cols[i], "name", cp), join(cp, "name"));
    spec.type = parse_type(get_string(require(cols[i], "type", cp), join(cp, "type")),
                           join(cp, "type"));
    if (cols[i].contains("levels")) {
      spec.levels = get_strings(cols[i]["levels"], join(cp, "levels"));
    }
    if (cols[i].contains("range")) {
      const auto r = get_numbers(cols[i]["range"], join(cp, "range"));
      if (r.size() != 2 || !(r[0] < r[1])) fail(join(cp, "range"), "expected [min, max] with min < max");
      spec.range = std::make_pair(r[0], r[1]);
    }
    specs.push_back(std::move(spec));
  }
  const std::string target = get_string(require(j, "target", path), join(path, "target"));
  try {
    data::Schema schema(std::move(specs), target);
    data::NormalizationMap::from_schema(schema);
    return schema;
  } catch (const Error& e) {
    fail(path, e.what());
  }
}

data::MemberProfile parse_profile(const json& j, const std::string& path, const std::string& id) {
  check_keys(j, path,
             {"rows", "race_mix", "vkorc1_mix", "cyp2c9_mix", "age", "coefficients",
              "noise_sigma", "inducer_rate", "amiodarone_rate"});
  data::MemberProfile p;
  p.member_id = id;
  p.rows = get_count(require(j, "rows", path), join(path, "rows"));
  p.race_mix = get_numbers(require(j, "race_mix", path), join(path, "race_mix"));
  p.vkorc1_mix = j.contains("vkorc1_mix")
                     ? get_numbers(j["vkorc1_mix"], join(path, "vkorc1_mix"))
                     : std::vector<double>{0.35, 0.45, 0.20};
  if (j.contains("cyp2c9_mix")) p.cyp2c9_mix = get_numbers(j["cyp2c9_mix"], join(path, "cyp2c9_mix"));
  if (j.contains("age")) {
    const auto age = get_numbers(j["age"], join(path, "age"));
    if (age.size() != 2) fail(join(path, "age"), "expected [min, max]");
    p.age_min = age[0];
    p.age_max = age[1];
  }
  p.coefficients = data::default_dose_coefficients();
  if (j.contains("coefficients")) {
    const json& c = j["coefficients"];
    const std::string cp = join(path, "coefficients");
    if (c.is_string()) {
      const std::string name = c.get<std::string>();
      if (name == "race_dependent") {
        p.race_coefficients = data::race_dependent_coefficients();
      } else if (name != "default") {
        fail(cp, "expected \"default\", \"race_dependent\" or an array");
      }
    } else {
      p.coefficients = get_numbers(c, cp);
    }
  }
  if (j.contains("noise_sigma")) p.noise_sigma = get_number(j["noise_sigma"], join(path, "noise_sigma"));
  if (j.contains("inducer_rate")) p.inducer_rate = get_number(j["inducer_rate"], join(path, "inducer_rate"));
  if (j.contains("amiodarone_rate")) {
    p.amiodarone_rate = get_number(j["amiodarone_rate"], join(path, "amiodarone_rate"));
  }
  // Surface profile problems now rather than at generation time.
  try {
    data::MemberProfile probe = p;
    probe.rows = 0;
    data::synth_members(0, {probe});
  } catch (const Error& e) {
    fail(path, e.what());
  }
  return p;
}

DataSource parse_source(const json& obj, const std::string& path, const std::string& id,
                        const data::Schema& schema, const std::filesystem::path& base) {
  DataSource src;
  const bool has_csv = obj.contains("dataset");
  const bool has_synth = obj.contains("synth");
  if (has_csv == has_synth) fail(path, "exactly one of \"dataset\" or \"synth\" is required");
  if (has_csv) {
    src.dataset = resolve_file(obj["dataset"], join(path, "dataset"), base);
  } else {
    if (schema.columns() != data::warfarin_schema().columns()) {
      fail(join(path, "synth"), "synthetic profiles need the built-in warfarin schema");
    }
    src.synth = parse_profile(obj["synth"], join(path, "synth"), id);
  }
  return src;
}

}  // namespace

ConsortiumConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  check_keys(doc, "",
             {"version", "name", "schema", "members", "ring", "initiators", "he", "dp",
              "validation", "seed"});
  ConsortiumConfig cfg;
  cfg.base_dir = base_dir;
  const auto version = get_count(require(doc, "version", ""), "version");
  if (version != kConfigVersion) {
    fail("version", "unsupported config version " + std::to_string(version));
  }
  cfg.name = get_string(require(doc, "name", ""), "name");
  cfg.schema = parse_schema(require(doc, "schema", ""), "schema");
  if (doc.contains("seed")) cfg.seed = get_count(doc["seed"], "seed");

  const json& members = require(doc, "members", "");
  if (!members.is_array()) fail("members", "expected an array");
  if (members.size() < 2) fail("members", "a consortium needs at least 2 members");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const std::string mp = index("members", i);
    const json& m = members[i];
    check_keys(m, mp, {"id", "policy", "dataset", "synth", "attributes", "alliances"});
    MemberConfig mc;
    mc.id = get_string(require(m, "id", mp), join(mp, "id"));
    if (mc.id.empty()) fail(join(mp, "id"), "member id is empty");
    if (!ids.insert(mc.id).second) fail(join(mp, "id"), "duplicate member id '" + mc.id + "'");
    mc.policy = resolve_file(require(m, "policy", mp), join(mp, "policy"), base_dir);
    mc.data = parse_source(m, mp, mc.id, cfg.schema, base_dir);
    if (m.contains("attributes")) {
      const std::string ap = join(mp, "attributes");
      if (!m["attributes"].is_object()) fail(ap, "expected an object");
      for (const auto& [key, value] : m["attributes"].items()) {
        if (value.is_string()) {
          mc.attributes[key] = value.get<std::string>();
        } else if (value.is_number()) {
          mc.attributes[key] = value.dump();
        } else {
          fail(join(ap, key), "expected a string or number");
        }
      }
    }
    if (m.contains("alliances")) {
      for (const std::string& a : get_strings(m["alliances"], join(mp, "alliances"))) {
        mc.alliances.insert(a);
      }
    }
    cfg.members.push_back(std::move(mc));
  }

  if (doc.contains("ring")) {
    cfg.ring = get_strings(doc["ring"], "ring");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < cfg.ring.size(); ++i) {
      if (!ids.count(cfg.ring[i])) fail(index("ring", i), "unknown member '" + cfg.ring[i] + "'");
      if (!seen.insert(cfg.ring[i]).second) {
        fail(index("ring", i), "member '" + cfg.ring[i] + "' appears twice");
      }
    }
    for (const MemberConfig& m : cfg.members) {
      if (!seen.count(m.id)) fail("ring", "missing member '" + m.id + "'");
    }
  } else {
    for (const MemberConfig& m : cfg.members) cfg.ring.push_back(m.id);
  }

  if (doc.contains("initiators")) {
    cfg.initiators = get_strings(doc["initiators"], "initiators");
    for (std::size_t i = 0; i < cfg.initiators.size(); ++i) {
      if (!ids.count(cfg.initiators[i])) {
        fail(index("initiators", i), "unknown member '" + cfg.initiators[i] + "'");
      }
    }
  } else {
    cfg.initiators = cfg.ring;
  }

  if (doc.contains("he")) {
    const json& he = doc["he"];
    check_keys(he, "he", {"key_bits", "scale_bits"});
    if (he.contains("key_bits")) cfg.he.key_bits = static_cast<unsigned>(get_count(he["key_bits"], "he.key_bits"));
    if (he.contains("scale_bits")) {
      cfg.he.scale_bits = static_cast<unsigned>(get_count(he["scale_bits"], "he.scale_bits"));
    }
    if (cfg.he.key_bits < 128 || cfg.he.key_bits % 2 != 0) {
      fail("he.key_bits", "expected an even size of at least 128 bits");
    }
    if (cfg.he.scale_bits == 0 || cfg.he.scale_bits > 40) {
      fail("he.scale_bits", "expected a value in [1, 40]");
    }
  }

  if (doc.contains("dp")) {
    const json& dp = doc["dp"];
    check_keys(dp, "dp", {"enabled", "epsilons", "repetitions", "initiator"});
    if (dp.contains("enabled")) cfg.dp.enabled = get_bool(dp["enabled"], "dp.enabled");
    if (dp.contains("epsilons")) {
      cfg.dp.epsilons = get_numbers(dp["epsilons"], "dp.epsilons");
      for (std::size_t i = 0; i < cfg.dp.epsilons.size(); ++i) {
        if (!(cfg.dp.epsilons[i] > 0.0)) fail(index("dp.epsilons", i), "epsilon must be positive");
      }
    }
    if (dp.contains("repetitions")) {
      cfg.dp.repetitions = get_count(dp["repetitions"], "dp.repetitions");
      if (cfg.dp.repetitions == 0) fail("dp.repetitions", "expected at least 1");
    }
    if (dp.contains("initiator")) {
      cfg.dp.initiator = get_string(dp["initiator"], "dp.initiator");
      if (!ids.count(*cfg.dp.initiator)) fail("dp.initiator", "unknown member '" + *cfg.dp.initiator + "'");
    }
  }

  if (doc.contains("validation")) {
    const json& v = doc["validation"];
    check_keys(v, "validation", {"dataset", "synth"});
    cfg.validation = parse_source(v, "validation", "validation", cfg.schema, base_dir);
  }
  return cfg;
}

ConsortiumConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  ConsortiumConfig cfg = parse_config(doc, path.parent_path());
  if (const char* env = std::getenv("CURIE_SEED"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == nullptr || *end != '\0' || *env == '-') {
      throw ConfigError(std::string("CURIE_SEED: not an unsigned integer: ") + env);
    }
    cfg.seed = v;
  }
  return cfg;
}

std::vector<policy::MemberContext> build_contexts(const ConsortiumConfig& cfg) {
  std::map<std::string, const MemberConfig*> by_id;
  for (const MemberConfig& m : cfg.members) by_id[m.id] = &m;
  std::vector<policy::MemberContext> out;
  for (const std::string& id : cfg.ring) {
    const MemberConfig& m = *by_id.at(id);
    policy::MemberContext ctx;
    ctx.member_id = m.id;
    ctx.attributes = m.attributes;
    ctx.alliances = m.alliances;
    std::ifstream in(m.policy);
    if (!in) throw ConfigError(m.policy.string() + ": cannot read policy");
    std::stringstream text;
    text << in.rdbuf();
    ctx.policy = cpl::parse_policy(text.str());
    if (m.data.dataset) {
      std::ifstream csv(*m.data.dataset);
      if (!csv) throw ConfigError(m.data.dataset->string() + ": cannot read dataset");
      ctx.dataset = std::make_shared<data::Dataset>(data::load_dataset(csv, cfg.schema, m.id));
    } else {
      // Each member's stream depends only on the master seed and its id.
      std::uint64_t h = 0xcbf29ce484222325ULL ^ cfg.seed;
      for (unsigned char c : m.id) h = (h ^ c) * 0x100000001b3ULL;
      auto ds = data::synth_members(h, {*m.data.synth});
      ctx.dataset = std::make_shared<data::Dataset>(std::move(ds.front()));
    }
    out.push_back(std::move(ctx));
  }
  return out;
}

data::Dataset validation_cohort(const ConsortiumConfig& cfg) {
  if (cfg.validation && cfg.validation->dataset) {
    std::ifstream csv(*cfg.validation->dataset);
    if (!csv) throw ConfigError("validation.dataset: cannot read " + cfg.validation->dataset->string());
    return data::load_dataset(csv, cfg.schema, "validation");
  }
  data::MemberProfile p;
  if (cfg.validation && cfg.validation->synth) {
    p = *cfg.validation->synth;
  } else {
    if (cfg.schema.columns() != data::warfarin_schema().columns()) {
      throw ConfigError("validation: required when the schema is not the built-in warfarin schema");
    }
    p.member_id = "validation";
    p.rows = 2000;
    p.race_mix = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    p.vkorc1_mix = {0.40, 0.35, 0.25};
    p.coefficients = data::default_dose_coefficients();
    p.race_coefficients = data::race_dependent_coefficients();
  }
  return std::move(data::synth_members(cfg.seed ^ 0x5eed0f7a11dULL, {p}).front());
}

}  // namespace curie::harness
