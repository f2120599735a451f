#include "gidea/context.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json_fields.hpp"

namespace gidea {

namespace {

bool on_tipi_grid(double v) {
  if (!(v >= kTipiMin && v <= kTipiMax)) return false;
  const double k = (v - kTipiMin) / kTipiStep;
  return std::fabs(k - std::round(k)) < 1e-9;
}

std::string attribute_label(const std::string& key) {
  std::string out = key;
  for (auto& c : out) {
    if (c == '_') c = ' ';
  }
  if (!out.empty() && out[0] >= 'a' && out[0] <= 'z') out[0] = static_cast<char>(out[0] - 'a' + 'A');
  return out;
}

std::string label_from_json(const nlohmann::json& v, const std::string& path) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) return format_score(v.get<double>());
  throw SchemaError(path, "expected a string or a number");
}

std::size_t grid_size(const Sampler& s) {
  return static_cast<std::size_t>(std::floor((s.hi - s.lo) / s.step + 1e-9)) + 1;
}

}  // namespace

bool TipiScores::valid() const {
  for (double v : values) {
    if (!on_tipi_grid(v)) return false;
  }
  return true;
}

std::string TipiScores::describe() const {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += std::string(kTraitLabels[i]) + ": " + format_score(values[i]);
  }
  return out;
}

std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string describe_profile(const AvatarProfile& p) {
  std::string out;
  if (!p.narrative.empty()) out += p.narrative + "\n";
  out += "Subject ID: " + p.subject_id + "\n";
  out += "Age: " + std::to_string(p.age) + "\n";
  out += "Gender: " + p.gender + "\n";
  out += "Household type: " + p.household_type + "\n";
  for (const auto& [k, v] : p.attributes) out += attribute_label(k) + ": " + v + "\n";
  out += "TIPI Scores: " + p.tipi.describe() + "\n";
  return out;
}

nlohmann::json profile_to_json(const AvatarProfile& p) {
  nlohmann::json tipi = nlohmann::json::object();
  for (std::size_t i = 0; i < kTraitNames.size(); ++i) tipi[std::string(kTraitNames[i])] = p.tipi[i];
  return {{"subject_id", p.subject_id},
          {"age", p.age},
          {"gender", p.gender},
          {"household_type", p.household_type},
          {"attributes", p.attributes},
          {"tipi", tipi},
          {"narrative", p.narrative}};
}

AvatarProfile profile_from_json(const nlohmann::json& j) {
  detail::FieldReader r(j, "profile");
  AvatarProfile p;
  p.subject_id = r.string("subject_id");
  p.age = static_cast<int>(r.integer("age"));
  if (p.age <= 0) throw SchemaError(r.child("age"), "must be positive");
  p.gender = r.string("gender");
  p.household_type = r.string("household_type");
  if (const auto* a = r.optional("attributes")) {
    detail::FieldReader ar(*a, r.child("attributes"));
    for (auto it = a->begin(); it != a->end(); ++it) p.attributes[it.key()] = ar.string(it.key());
  }
  detail::FieldReader tr(r.required("tipi"), r.child("tipi"));
  for (std::size_t i = 0; i < kTraitNames.size(); ++i) {
    const std::string name(kTraitNames[i]);
    p.tipi[i] = detail::FieldReader::as_number(tr.required(name), tr.child(name));
    if (!on_tipi_grid(p.tipi[i])) throw SchemaError(tr.child(name), "must be on the 1..7 half-point grid");
  }
  tr.finish();
  p.narrative = r.string_or("narrative", "");
  r.finish();
  return p;
}

nlohmann::json profiles_to_json(const std::vector<AvatarProfile>& ps) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : ps) out.push_back(profile_to_json(p));
  return out;
}

std::vector<AvatarProfile> profiles_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw SchemaError("profiles", "expected an array");
  std::vector<AvatarProfile> out;
  for (const auto& e : j) out.push_back(profile_from_json(e));
  return out;
}

Sampler Sampler::point(std::string label) {
  Sampler s;
  s.choices = {{std::move(label), 1.0}};
  return s;
}

Sampler Sampler::uniform_range(double lo, double hi, double step) {
  Sampler s;
  s.kind = Kind::range;
  s.lo = lo;
  s.hi = hi;
  s.step = step;
  return s;
}

Sampler Sampler::from_json(const nlohmann::json& j, const std::string& path, double default_step) {
  if (!j.is_object()) return point(label_from_json(j, path));
  detail::FieldReader r(j, path);
  Sampler s;
  if (r.has("categorical")) {
    const auto& list = r.required("categorical");
    if (!list.is_array()) throw SchemaError(r.child("categorical"), "expected an array of [label, weight]");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string p = r.child("categorical") + "[" + std::to_string(i) + "]";
      if (!list[i].is_array() || list[i].size() != 2) throw SchemaError(p, "expected [label, weight]");
      s.choices.emplace_back(label_from_json(list[i][0], p), detail::FieldReader::as_number(list[i][1], p));
    }
  } else if (r.has("range")) {
    const auto& range = r.required("range");
    if (!range.is_array() || range.size() != 2) throw SchemaError(r.child("range"), "expected [lo, hi]");
    s = uniform_range(detail::FieldReader::as_number(range[0], r.child("range")),
                      detail::FieldReader::as_number(range[1], r.child("range")), default_step);
    if (const auto* st = r.optional("step")) s.step = detail::FieldReader::as_number(*st, r.child("step"));
  } else {
    throw SchemaError(path, "expected \"categorical\" or \"range\"");
  }
  r.finish();
  return s;
}

nlohmann::json Sampler::to_json() const {
  if (kind == Kind::range) return {{"range", {lo, hi}}, {"step", step}};
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [label, w] : choices) list.push_back({label, w});
  return {{"categorical", list}};
}

std::string Sampler::draw_label(SplitMix64& rng) const {
  if (kind == Kind::range) return format_score(lo + static_cast<double>(rng.below(grid_size(*this))) * step);
  if (choices.size() == 1) return choices.front().first;
  const double u = rng.uniform();
  double acc = 0;
  for (const auto& [label, w] : choices) {
    acc += w;
    if (u < acc) return label;
  }
  return choices.back().first;
}

double Sampler::draw_number(SplitMix64& rng) const {
  if (kind == Kind::range) return lo + static_cast<double>(rng.below(grid_size(*this))) * step;
  const std::string label = draw_label(rng);
  return std::stod(label);
}

std::vector<std::string> Sampler::support() const {
  std::vector<std::string> out;
  if (kind == Kind::range) {
    if (!(step > 0) || !(lo <= hi)) return out;
    for (std::size_t i = 0, n = grid_size(*this); i < n; ++i) out.push_back(format_score(lo + static_cast<double>(i) * step));
  } else {
    for (const auto& c : choices) out.push_back(c.first);
  }
  return out;
}

std::vector<std::string> Sampler::violations(const std::string& path) const {
  std::vector<std::string> out;
  if (kind == Kind::range) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo <= hi)) out.push_back(path + ": range is empty");
    if (!(step > 0) || !std::isfinite(step)) out.push_back(path + ": step must be positive");
    return out;
  }
  if (choices.empty()) out.push_back(path + ": categorical sampler has no labels");
  double sum = 0;
  for (const auto& [label, w] : choices) {
    if (!(w > 0)) out.push_back(path + ": weight of '" + label + "' must be positive");
    sum += w;
  }
  if (!choices.empty() && std::fabs(sum - 1.0) > 1e-9) out.push_back(path + ": weights sum to " + format_score(sum) + ", not 1");
  return out;
}

ProfileDistribution ProfileDistribution::from_json(const nlohmann::json& j) {
  detail::FieldReader r(j, "distribution");
  ProfileDistribution d;
  if (const auto* v = r.optional("age")) d.age = Sampler::from_json(*v, r.child("age"), 1);
  if (const auto* v = r.optional("gender")) d.gender = Sampler::from_json(*v, r.child("gender"), 1);
  if (const auto* v = r.optional("household_type")) d.household_type = Sampler::from_json(*v, r.child("household_type"), 1);
  if (const auto* a = r.optional("attributes")) {
    if (!a->is_object()) throw SchemaError(r.child("attributes"), "expected an object");
    for (auto it = a->begin(); it != a->end(); ++it) {
      d.attributes[it.key()] = Sampler::from_json(it.value(), r.child("attributes") + "." + it.key(), 1);
    }
  }
  if (const auto* t = r.optional("tipi")) {
    detail::FieldReader tr(*t, r.child("tipi"));
    for (std::size_t i = 0; i < kTraitNames.size(); ++i) {
      const std::string name(kTraitNames[i]);
      if (const auto* v = tr.optional(name)) d.tipi[i] = Sampler::from_json(*v, tr.child(name), kTipiStep);
    }
    tr.finish();
  }
  r.finish();
  return d;
}

ProfileDistribution ProfileDistribution::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read distribution " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return from_json(nlohmann::json::parse(ss.str()));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed distribution " + path.string() + ": " + e.what());
  }
}

nlohmann::json ProfileDistribution::to_json() const {
  nlohmann::json attrs = nlohmann::json::object();
  for (const auto& [k, s] : attributes) attrs[k] = s.to_json();
  nlohmann::json tipi_j = nlohmann::json::object();
  for (std::size_t i = 0; i < kTraitNames.size(); ++i) tipi_j[std::string(kTraitNames[i])] = tipi[i].to_json();
  return {{"age", age.to_json()},
          {"gender", gender.to_json()},
          {"household_type", household_type.to_json()},
          {"attributes", attrs},
          {"tipi", tipi_j}};
}

std::vector<std::string> ProfileDistribution::violations() const {
  std::vector<std::string> out;
  auto add = [&out](std::vector<std::string> v) { out.insert(out.end(), v.begin(), v.end()); };
  add(age.violations("age"));
  for (const auto& v : age.support()) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0' || x <= 0 || x != std::floor(x)) {
      out.push_back("age: value '" + v + "' is not a positive integer");
    }
  }
  add(gender.violations("gender"));
  add(household_type.violations("household_type"));
  for (const auto& [k, s] : attributes) add(s.violations("attributes." + k));
  for (std::size_t i = 0; i < kTraitNames.size(); ++i) {
    const std::string path = "tipi." + std::string(kTraitNames[i]);
    add(tipi[i].violations(path));
    for (const auto& v : tipi[i].support()) {
      char* end = nullptr;
      const double x = std::strtod(v.c_str(), &end);
      if (end == v.c_str() || *end != '\0' || !on_tipi_grid(x)) {
        out.push_back(path + ": value '" + v + "' is not on the 1..7 half-point grid");
      }
    }
  }
  return out;
}

std::vector<AvatarProfile> sample_profiles(const ProfileDistribution& dist, int n, std::uint64_t seed) {
  if (n < 1) throw PreconditionError("sample_profiles needs n >= 1");
  const auto bad = dist.violations();
  if (!bad.empty()) throw DistributionError(bad.front());
  SplitMix64 rng(seed);
  std::vector<AvatarProfile> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) {
    AvatarProfile p;
    p.subject_id = "S" + std::to_string(i);
    p.age = static_cast<int>(dist.age.draw_number(rng));
    p.gender = dist.gender.draw_label(rng);
    p.household_type = dist.household_type.draw_label(rng);
    for (const auto& [k, s] : dist.attributes) p.attributes[k] = s.draw_label(rng);
    for (std::size_t t = 0; t < kTraitNames.size(); ++t) p.tipi[t] = dist.tipi[t].draw_number(rng);
    out.push_back(std::move(p));
  }
  return out;
}

ChatRequest narrative_request(const AvatarProfile& profile) {
  AvatarProfile bare = profile;
  bare.narrative.clear();
  ChatRequest req;
  req.temperature = kSimulationTemperature;
  req.request_tag = "narrative/" + profile.subject_id;
  req.messages.push_back(
      {ChatRole::system, "You write background narratives for simulated participants in human-computer interaction studies."});
  req.messages.push_back(
      {ChatRole::user,
       "Write a background narrative for the person described by the following profile.\n\n" + describe_profile(bare) +
           "\nGive the person a first name. In one paragraph, describe their lifestyle routines, communication style, "
           "likes and dislikes so that they reflect the personality scores, without naming the scores. Output only the "
           "narrative."});
  return req;
}

std::string generate_narrative(const AvatarProfile& profile, const ModelHandle& model) {
  ChatResponse r = model.call(narrative_request(profile));
  if (r.finish_reason == FinishReason::refusal) {
    throw ProviderError(ProviderErrorKind::refusal, "model refused to write a narrative for " + profile.subject_id);
  }
  return r.text;
}

}  // namespace gidea
