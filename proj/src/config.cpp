#include "crimematch/config.hpp"

#include <map>
#include <set>

#include "crimematch/csv.hpp"
#include "crimematch/error.hpp"
#include "crimematch/parallel.hpp"
#include "crimematch/rng.hpp"

namespace crimematch::config {

namespace {

using json = nlohmann::ordered_json;
constexpr const char* kModule = "config";

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorKind::config, kModule, msg); }

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

enum class Element { string, number, structure, period };

const std::map<std::string, Element>& array_elements() {
  static const std::map<std::string, Element> m = {
      {"structures", Element::structure},      {"schema.covariates", Element::string},
      {"schema.attribute_columns", Element::string}, {"crime_categories", Element::string},
      {"periods", Element::period},            {"treatment.drop_band", Element::number},
      {"density.radii", Element::number},
  };
  return m;
}

void check_object_keys(const json& value, const std::string& path, std::initializer_list<const char*> required,
                       std::initializer_list<const char*> optional) {
  if (!value.is_object()) fail("'" + path + "' must be an object");
  for (const auto& [key, v] : value.items()) {
    bool known = false;
    for (const char* k : required) known = known || key == k;
    for (const char* k : optional) known = known || key == k;
    if (!known) fail("unknown key '" + join(path, key) + "'");
    if (!v.is_string()) fail("'" + join(path, key) + "' must be a string");
  }
  for (const char* k : required) {
    if (!value.contains(k)) fail("missing key '" + join(path, k) + "'");
  }
}

void check(const json& user, const json& defaults, const std::string& path) {
  if (defaults.is_object()) {
    if (!user.is_object()) fail("'" + path + "' must be an object");
    for (const auto& [key, value] : user.items()) {
      if (!defaults.contains(key)) fail("unknown key '" + join(path, key) + "'");
      check(value, defaults.at(key), join(path, key));
    }
    return;
  }
  if (defaults.is_array()) {
    if (!user.is_array()) fail("'" + path + "' must be an array");
    const auto it = array_elements().find(path);
    if (it == array_elements().end()) fail("unexpected array at '" + path + "'");
    for (std::size_t i = 0; i < user.size(); ++i) {
      const std::string item = path + "[" + std::to_string(i) + "]";
      const json& v = user[i];
      switch (it->second) {
        case Element::string:
          if (!v.is_string()) fail("'" + item + "' must be a string");
          break;
        case Element::number:
          if (!v.is_number()) fail("'" + item + "' must be a number");
          break;
        case Element::structure:
          check_object_keys(v, item, {"name", "file"}, {"kind"});
          break;
        case Element::period:
          check_object_keys(v, item, {"name", "start", "end"}, {});
          break;
      }
    }
    return;
  }
  if (defaults.is_boolean() && !user.is_boolean()) fail("'" + path + "' must be a boolean");
  if (defaults.is_string() && !user.is_string()) fail("'" + path + "' must be a string");
  if (defaults.is_number_unsigned()) {
    if (!user.is_number_integer() || (user.is_number_integer() && !user.is_number_unsigned() && user.get<long long>() < 0)) {
      fail("'" + path + "' must be a nonnegative integer");
    }
  } else if (defaults.is_number() && !user.is_number()) {
    fail("'" + path + "' must be a number");
  }
}

ingest::Date date_or_fail(const std::string& text, const std::string& path) {
  auto d = ingest::parse_date(text);
  if (!d) fail("'" + path + "' is not a YYYY-MM-DD date");
  return *d;
}

}  // namespace

std::filesystem::path RunConfig::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

std::size_t RunConfig::thread_count() const { return threads == 0 ? default_thread_count() : threads; }

std::uint64_t RunConfig::metric_seed() const { return derive_seed(seed, "metric"); }
std::uint64_t RunConfig::folds_seed() const { return derive_seed(seed, "folds"); }
std::uint64_t RunConfig::sampling_seed() const { return derive_seed(seed, "sampling"); }
std::uint64_t RunConfig::gbqr_seed() const { return derive_seed(seed, "gbqr"); }

json default_json() {
  json periods = json::array();
  for (const auto& p : ingest::default_periods()) {
    periods.push_back({{"name", p.name}, {"start", ingest::format_date(p.start)}, {"end", ingest::format_date(p.end)}});
  }
  json categories = json::array();
  for (const auto& c : ingest::default_violent_categories()) categories.push_back(c);
  json d;
  d["inputs"] = {{"tracts", "tracts.csv"}, {"boundaries", "boundaries.geojson"}, {"crimes", "crimes.csv"},
                 {"delimiter", ","}};
  d["structures"] = json::array();
  d["schema"] = {{"covariates", ingest::default_covariates()},
                 {"population_column", std::string(ingest::kPopulationColumn)},
                 {"attribute_columns", json::array()}};
  d["crime_categories"] = categories;
  d["periods"] = periods;
  d["outcome"] = {{"period", "S1"}, {"attribute", ""}};
  d["treatment"] = {{"period", ""}, {"drop_band", {0.30, 0.50}}};
  d["metric"] = {{"k", 10u}, {"lambda", 0.01}, {"budget", 200u}, {"tolerance", 1e-6}, {"max_weight", 10.0}};
  d["matching"] = {{"repeats", 3u}, {"folds", 5u}, {"k", 10u}, {"min_co_matches", 2u}, {"prune_percentile", 95.0}};
  d["estimation"] = {{"q_lo", 0.25},
                     {"q_hi", 0.75},
                     {"heterogeneity_threshold", 0.5},
                     {"gbqr", {{"rounds", 100u}, {"depth", 2u}, {"rate", 0.1}, {"min_leaf", 5u}, {"subsample", 1.0}}}};
  d["density"] = {{"enabled", true},
                  {"radii", density::RadiusGrid().radii()},
                  {"n_samples", 20u},
                  {"sample_radius_m", 750.0},
                  {"region", "disc"},
                  {"inside_tract_only", false}};
  d["seed"] = 0u;
  d["threads"] = 0u;
  d["output_dir"] = "out";
  d["charts"] = true;
  return d;
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) fail("override '" + std::string(assignment) + "' is not key=value");
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) fail("override key '" + key + "' has an empty component");
    if (!node->is_object()) fail("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

RunConfig from_json(const json& doc, const std::filesystem::path& base_dir) {
  const json defaults = default_json();
  check(doc, defaults, "");
  json m = defaults;
  m.merge_patch(doc);

  RunConfig c;
  c.base_dir = base_dir;
  c.tracts = m["inputs"]["tracts"].get<std::string>();
  c.boundaries = m["inputs"]["boundaries"].get<std::string>();
  c.crimes = m["inputs"]["crimes"].get<std::string>();
  const auto delim = m["inputs"]["delimiter"].get<std::string>();
  if (delim.size() != 1) fail("'inputs.delimiter' must be a single character");
  c.delimiter = delim[0];
  c.schema.delimiter = c.delimiter;

  std::set<std::string> names;
  for (const auto& s : m["structures"]) {
    StructureInput in;
    in.name = s["name"].get<std::string>();
    in.file = s["file"].get<std::string>();
    if (s.contains("kind")) {
      try {
        in.kind = treatment::parse_structure_kind(s["kind"].get<std::string>());
      } catch (const Error& e) {
        fail(std::string("structure '") + in.name + "': " + e.what());
      }
    }
    if (in.name.empty()) fail("structure name must be nonempty");
    if (!names.insert(in.name).second) fail("duplicate structure name '" + in.name + "'");
    c.structures.push_back(std::move(in));
  }

  c.schema.covariates = m["schema"]["covariates"].get<std::vector<std::string>>();
  c.schema.population_column = m["schema"]["population_column"].get<std::string>();
  c.schema.attribute_columns = m["schema"]["attribute_columns"].get<std::vector<std::string>>();
  if (c.schema.covariates.empty()) fail("'schema.covariates' must be nonempty");
  c.crime_categories = m["crime_categories"].get<std::vector<std::string>>();
  if (c.crime_categories.empty()) fail("'crime_categories' must be nonempty");

  for (std::size_t i = 0; i < m["periods"].size(); ++i) {
    const auto& p = m["periods"][i];
    const std::string path = "periods[" + std::to_string(i) + "]";
    ingest::Period period{p["name"].get<std::string>(), date_or_fail(p["start"].get<std::string>(), path + ".start"),
                          date_or_fail(p["end"].get<std::string>(), path + ".end")};
    if (period.end < period.start) fail("'" + path + "' ends before it starts");
    c.periods.push_back(std::move(period));
  }
  c.outcome_period = m["outcome"]["period"].get<std::string>();
  c.outcome_attribute = m["outcome"]["attribute"].get<std::string>();
  c.treatment_period = m["treatment"]["period"].get<std::string>();
  auto has_period = [&](const std::string& name) {
    for (const auto& p : c.periods) {
      if (p.name == name) return true;
    }
    return false;
  };
  if (!has_period(c.outcome_period)) fail("'outcome.period' names unknown period '" + c.outcome_period + "'");
  if (!has_period(c.counts_period())) fail("'treatment.period' names unknown period '" + c.counts_period() + "'");
  if (!c.outcome_attribute.empty()) c.schema.attribute_columns.push_back(c.outcome_attribute);

  const auto band = m["treatment"]["drop_band"].get<std::vector<double>>();
  if (band.size() != 2 || !(band[0] >= 0.0 && band[0] <= band[1] && band[1] <= 1.0)) {
    fail("'treatment.drop_band' must be [lower, upper] with 0 <= lower <= upper <= 1");
  }
  c.drop_band = {band[0], band[1]};

  const auto& mt = m["metric"];
  c.metric_k = mt["k"].get<std::size_t>();
  c.metric_lambda = mt["lambda"].get<double>();
  c.metric_budget = mt["budget"].get<std::size_t>();
  c.metric_tolerance = mt["tolerance"].get<double>();
  c.metric_max_weight = mt["max_weight"].get<double>();
  if (c.metric_k == 0) fail("'metric.k' must be positive");
  if (c.metric_lambda < 0) fail("'metric.lambda' must be nonnegative");
  if (!(c.metric_max_weight > 0)) fail("'metric.max_weight' must be positive");

  const auto& mm = m["matching"];
  c.repeats = mm["repeats"].get<std::size_t>();
  c.folds = mm["folds"].get<std::size_t>();
  c.k_match = mm["k"].get<std::size_t>();
  c.min_co_matches = mm["min_co_matches"].get<int>();
  c.prune_percentile = mm["prune_percentile"].get<double>();
  if (c.repeats == 0) fail("'matching.repeats' must be positive");
  if (c.folds < 2) fail("'matching.folds' must be at least 2");
  if (c.k_match == 0) fail("'matching.k' must be positive");
  if (c.min_co_matches < 2) fail("'matching.min_co_matches' must be at least 2");
  if (!(c.prune_percentile > 0 && c.prune_percentile <= 100)) fail("'matching.prune_percentile' must lie in (0, 100]");

  const auto& me = m["estimation"];
  c.q_lo = me["q_lo"].get<double>();
  c.q_hi = me["q_hi"].get<double>();
  c.heterogeneity_threshold = me["heterogeneity_threshold"].get<double>();
  if (!(c.q_lo > 0 && c.q_lo < c.q_hi && c.q_hi < 1)) fail("'estimation' quantiles must satisfy 0 < q_lo < q_hi < 1");
  c.gbqr_rounds = me["gbqr"]["rounds"].get<std::size_t>();
  c.gbqr_depth = me["gbqr"]["depth"].get<std::size_t>();
  c.gbqr_rate = me["gbqr"]["rate"].get<double>();
  c.gbqr_min_leaf = me["gbqr"]["min_leaf"].get<std::size_t>();
  c.gbqr_subsample = me["gbqr"]["subsample"].get<double>();
  if (!(c.gbqr_rate > 0)) fail("'estimation.gbqr.rate' must be positive");
  if (!(c.gbqr_subsample > 0 && c.gbqr_subsample <= 1)) fail("'estimation.gbqr.subsample' must lie in (0, 1]");

  const auto& md = m["density"];
  c.density_enabled = md["enabled"].get<bool>();
  c.radii = md["radii"].get<std::vector<double>>();
  try {
    density::RadiusGrid check_grid(c.radii);
  } catch (const Error& e) {
    fail(std::string("'density.radii': ") + e.what());
  }
  c.n_samples = md["n_samples"].get<std::size_t>();
  c.sample_radius_m = md["sample_radius_m"].get<double>();
  const auto region = md["region"].get<std::string>();
  if (region == "disc") {
    c.region = density::Region::disc;
  } else if (region == "annulus") {
    c.region = density::Region::annulus;
  } else {
    fail("'density.region' must be 'disc' or 'annulus'");
  }
  c.inside_tract_only = md["inside_tract_only"].get<bool>();
  if (c.n_samples == 0) fail("'density.n_samples' must be positive");
  if (!(c.sample_radius_m > 0)) fail("'density.sample_radius_m' must be positive");

  c.seed = m["seed"].get<std::uint64_t>();
  c.threads = m["threads"].get<std::size_t>();
  c.output_dir = m["output_dir"].get<std::string>();
  c.charts = m["charts"].get<bool>();
  return c;
}

RunConfig load(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  json doc;
  if (!file.empty()) {
    std::string text;
    try {
      text = csv::read_file(file);
    } catch (const Error& e) {
      fail(e.what());
    }
    doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) fail("config " + file.string() + " is not valid JSON");
  } else {
    doc = json::object();
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return from_json(doc, file.empty() ? std::filesystem::current_path() : file.parent_path());
}

json parameters_json(const RunConfig& c) {
  json structures = json::array();
  for (const auto& s : c.structures) {
    structures.push_back({{"name", s.name}, {"file", s.file.generic_string()}, {"kind", treatment::to_string(s.kind)}});
  }
  json periods = json::array();
  for (const auto& p : c.periods) {
    periods.push_back({{"name", p.name}, {"start", ingest::format_date(p.start)}, {"end", ingest::format_date(p.end)}});
  }
  json j;
  j["inputs"] = {{"tracts", c.tracts.generic_string()},
                 {"boundaries", c.boundaries.generic_string()},
                 {"crimes", c.crimes.generic_string()},
                 {"delimiter", std::string(1, c.delimiter)}};
  j["structures"] = structures;
  j["schema"] = {{"covariates", c.schema.covariates},
                 {"population_column", c.schema.population_column},
                 {"attribute_columns", c.schema.attribute_columns}};
  j["crime_categories"] = c.crime_categories;
  j["periods"] = periods;
  j["outcome"] = {{"period", c.outcome_period}, {"attribute", c.outcome_attribute}};
  j["treatment"] = {{"period", c.counts_period()}, {"drop_band", {c.drop_band.lower, c.drop_band.upper}}};
  j["metric"] = {{"k", c.metric_k},
                 {"lambda", c.metric_lambda},
                 {"budget", c.metric_budget},
                 {"tolerance", c.metric_tolerance},
                 {"max_weight", c.metric_max_weight}};
  j["matching"] = {{"repeats", c.repeats},
                   {"folds", c.folds},
                   {"k", c.k_match},
                   {"min_co_matches", c.min_co_matches},
                   {"prune_percentile", c.prune_percentile}};
  j["estimation"] = {{"q_lo", c.q_lo},
                     {"q_hi", c.q_hi},
                     {"heterogeneity_threshold", c.heterogeneity_threshold},
                     {"gbqr",
                      {{"rounds", c.gbqr_rounds},
                       {"depth", c.gbqr_depth},
                       {"rate", c.gbqr_rate},
                       {"min_leaf", c.gbqr_min_leaf},
                       {"subsample", c.gbqr_subsample}}}};
  j["density"] = {{"enabled", c.density_enabled},
                  {"radii", c.radii},
                  {"n_samples", c.n_samples},
                  {"sample_radius_m", c.sample_radius_m},
                  {"region", c.region == density::Region::disc ? "disc" : "annulus"},
                  {"inside_tract_only", c.inside_tract_only}};
  j["seed"] = c.seed;
  j["seeds"] = {{"metric", c.metric_seed()},
                {"folds", c.folds_seed()},
                {"sampling", c.sampling_seed()},
                {"gbqr", c.gbqr_seed()}};
  return j;
}

}  // namespace crimematch::config
