#include "grounding/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "grounding/error.hpp"

namespace grounding {

using nlohmann::json;

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw InvalidInput("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw InvalidInput("cannot move " + tmp.string() + " to " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string format_number(double value) {
  if (!std::isfinite(value)) throw InvalidInput("cannot write a non-finite number");
  if (value == 0.0) return "0";  // also folds -0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string quote(std::string_view text) { return json(std::string(text)).dump(); }

namespace {

// Minimal builders so every number goes through format_number.
template <typename T, typename Format>
std::string array_of(const std::vector<T>& items, Format format) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ',';
    out += format(items[i]);
  }
  return out + ']';
}

std::string strings(const std::vector<std::string>& items) {
  return array_of(items, [](const std::string& s) { return quote(s); });
}

std::string integers(const std::vector<std::uint64_t>& items) {
  return array_of(items, [](std::uint64_t n) { return std::to_string(n); });
}

std::string box_array(const BoundingBox& box) {
  return "[" + std::to_string(box.x1) + "," + std::to_string(box.y1) + "," +
         std::to_string(box.x2) + "," + std::to_string(box.y2) + "]";
}

// Field access with "<source>: <message>" diagnostics.
class Fields {
 public:
  Fields(const json& object, std::string context) : object_(object), context_(std::move(context)) {
    if (!object_.is_object()) fail("expected a JSON object");
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw InvalidInput(context_ + ": " + message);
  }

  [[nodiscard]] bool has(const char* key) const {
    return object_.contains(key) && !object_.at(key).is_null();
  }

  [[nodiscard]] const json& get(const char* key) const {
    if (!object_.contains(key)) fail(std::string("missing field '") + key + "'");
    return object_.at(key);
  }

  [[nodiscard]] std::string string(const char* key) const {
    const json& v = get(key);
    if (!v.is_string()) fail(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
  }

  [[nodiscard]] double number(const char* key) const {
    const json& v = get(key);
    if (!v.is_number()) fail(std::string("field '") + key + "' must be a number");
    return v.get<double>();
  }

  [[nodiscard]] std::int64_t integer(const char* key) const {
    const json& v = get(key);
    if (!v.is_number_integer()) fail(std::string("field '") + key + "' must be an integer");
    return v.get<std::int64_t>();
  }

  [[nodiscard]] std::uint64_t count(const char* key) const {
    const json& v = get(key);
    if (!v.is_number_unsigned()) fail(std::string("field '") + key + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  [[nodiscard]] BoundingBox box(const char* key) const { return to_box(get(key), key); }

  [[nodiscard]] BoundingBox to_box(const json& v, const std::string& what) const {
    if (!v.is_array() || v.size() != 4) fail(what + " must be an array [x1,y1,x2,y2]");
    int c[4];
    for (std::size_t i = 0; i < 4; ++i) {
      if (!v[i].is_number_integer()) fail(what + " coordinates must be integers");
      const auto n = v[i].get<std::int64_t>();
      if (n < 0 || n > std::numeric_limits<int>::max()) fail(what + " coordinate out of range");
      c[i] = static_cast<int>(n);
    }
    const BoundingBox b{c[0], c[1], c[2], c[3]};
    if (!b.is_valid()) fail(what + " must satisfy x1 <= x2 and y1 <= y2");
    return b;
  }

  void only(std::initializer_list<const char*> keys) const {
    for (const auto& item : object_.items()) {
      bool known = false;
      for (const char* k : keys) known = known || item.key() == k;
      if (!known) fail("unknown field '" + item.key() + "'");
    }
  }

  [[nodiscard]] const std::string& context() const { return context_; }

 private:
  const json& object_;
  std::string context_;
};

json parse_document(std::string_view text, std::string_view source) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string(source) + ": " + e.what());
  }
}

// Calls `visit(fields)` for every non-blank line of a JSON Lines file.
template <typename Visit>
void for_each_record(const std::filesystem::path& path, Visit visit) {
  const std::string text = read_file(path);
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    ++line_no;
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string context = path.string() + ":" + std::to_string(line_no);
    json value;
    try {
      value = json::parse(line.begin(), line.end());
    } catch (const json::parse_error& e) {
      throw InvalidInput(context + ": malformed JSON: " + e.what());
    }
    visit(Fields(value, context), line_no);
  }
}

void check_unique_ids(const std::vector<std::string>& ids, const std::filesystem::path& path) {
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw InvalidInput(path.string() + ": duplicate id '" + id + "'");
  }
}

}  // namespace

// ---- model ------------------------------------------------------------------

std::string encode_model(const Model& model) {
  const RelevanceMatrix& m = model.matrix;
  const std::size_t nc = m.concepts.size();
  std::string out = "{\n";
  out += "  \"format\": " + quote(kModelFormat) + ",\n";
  out += "  \"version\": " + std::to_string(kModelVersion) + ",\n";
  out += "  \"statistic\": " + quote(to_string(m.statistic)) + ",\n";
  out += "  \"activation\": {\"confidence\": " + format_number(model.thresholds.confidence) +
         ", \"area_fraction\": " + format_number(model.thresholds.area_fraction) + "},\n";
  out += "  \"tokens\": " + strings(m.tokens) + ",\n";
  out += "  \"concepts\": " + strings(m.concepts) + ",\n";
  out += "  \"values\": [";
  for (std::size_t s = 0; s < m.tokens.size(); ++s) {
    out += s == 0 ? "\n    [" : ",\n    [";
    for (std::size_t c = 0; c < nc; ++c) {
      if (c > 0) out += ',';
      out += format_number(m.at(s, c));
    }
    out += ']';
  }
  out += "\n  ],\n";
  out += "  \"counts\": {\n";
  out += "    \"examples\": " + std::to_string(m.stats.examples()) + ",\n";
  out += "    \"token\": " + integers(m.stats.token_counts()) + ",\n";
  out += "    \"concept\": " + integers(m.stats.concept_counts()) + ",\n";
  out += "    \"pair\": [";
  for (std::size_t s = 0; s < m.tokens.size(); ++s) {
    out += s == 0 ? "\n      " : ",\n      ";
    const auto row = std::vector<std::uint64_t>(
        m.stats.pair_counts().begin() + static_cast<std::ptrdiff_t>(s * nc),
        m.stats.pair_counts().begin() + static_cast<std::ptrdiff_t>((s + 1) * nc));
    out += integers(row);
  }
  out += "\n    ]\n  }\n}\n";
  return out;
}

Model decode_model(std::string_view text, std::string_view source) {
  const json doc = parse_document(text, source);
  const Fields f(doc, std::string(source));
  f.only({"format", "version", "statistic", "activation", "tokens", "concepts", "values", "counts"});
  if (f.string("format") != kModelFormat) f.fail("not a model file");
  if (f.integer("version") != kModelVersion) {
    f.fail("unsupported model version " + std::to_string(f.integer("version")));
  }

  auto string_list = [&](const char* key) {
    const json& v = f.get(key);
    if (!v.is_array()) f.fail(std::string("field '") + key + "' must be an array");
    std::vector<std::string> out;
    for (const auto& item : v) {
      if (!item.is_string()) f.fail(std::string("field '") + key + "' must hold strings");
      out.push_back(item.get<std::string>());
    }
    return out;
  };

  Model model;
  try {
    model.matrix.statistic = statistic_from_string(f.string("statistic"));
  } catch (const InvalidInput& e) {
    f.fail(e.what());
  }
  const Fields activation(f.get("activation"), f.context() + ": activation");
  model.thresholds.confidence = activation.number("confidence");
  model.thresholds.area_fraction = activation.number("area_fraction");

  model.matrix.tokens = string_list("tokens");
  model.matrix.concepts = string_list("concepts");
  try {
    model.vocabulary = Vocabulary::from_tokens(model.matrix.tokens);
  } catch (const InvalidInput& e) {
    f.fail(std::string("bad vocabulary: ") + e.what());
  }
  const std::size_t nt = model.matrix.tokens.size();
  const std::size_t nc = model.matrix.concepts.size();

  // Rows of `width` entries each, flattened.
  auto table = [&](const json& v, const std::string& what, auto read) {
    if (!v.is_array() || v.size() != nt) f.fail(what + " must have one row per token");
    for (const auto& row : v) {
      if (!row.is_array() || row.size() != nc) f.fail(what + " rows must have one entry per concept");
      for (const auto& item : row) read(item);
    }
  };
  model.matrix.values.reserve(nt * nc);
  table(f.get("values"), "values", [&](const json& item) {
    if (!item.is_number()) f.fail("values must be numbers");
    model.matrix.values.push_back(item.get<double>());
  });

  const Fields counts(f.get("counts"), f.context() + ": counts");
  auto count_list = [&](const char* key, std::size_t expected) {
    const json& v = counts.get(key);
    if (!v.is_array() || v.size() != expected) {
      counts.fail(std::string("'") + key + "' must have " + std::to_string(expected) + " entries");
    }
    std::vector<std::uint64_t> out;
    for (const auto& item : v) {
      if (!item.is_number_unsigned()) counts.fail("counts must be non-negative integers");
      out.push_back(item.get<std::uint64_t>());
    }
    return out;
  };
  std::vector<std::uint64_t> pairs;
  pairs.reserve(nt * nc);
  table(counts.get("pair"), "counts.pair", [&](const json& item) {
    if (!item.is_number_unsigned()) counts.fail("counts must be non-negative integers");
    pairs.push_back(item.get<std::uint64_t>());
  });
  try {
    model.matrix.stats = CooccurrenceStats::from_counts(
        counts.count("examples"), count_list("token", nt), count_list("concept", nc), std::move(pairs));
  } catch (const InvalidInput& e) {
    counts.fail(e.what());
  }
  return model;
}

void write_model(const std::filesystem::path& path, const Model& model) {
  write_file_atomic(path, encode_model(model));
}

Model read_model(const std::filesystem::path& path) {
  return decode_model(read_file(path), path.string());
}

// ---- corpus manifest --------------------------------------------------------

std::filesystem::path Manifest::resolve(const std::string& map_path) const {
  const std::filesystem::path p(map_path);
  if (p.is_absolute()) return p;
  return path.parent_path() / p;
}

std::vector<std::string> Manifest::concepts() const {
  std::set<std::string> all;
  for (const auto& record : records) {
    for (const auto& [concept_id, file] : record.maps) all.insert(concept_id);
  }
  return {all.begin(), all.end()};
}

std::string encode_manifest_record(const ManifestRecord& record) {
  std::string out = "{\"id\":" + quote(record.id) + ",\"query\":" + quote(record.query) +
                    ",\"width\":" + std::to_string(record.width) +
                    ",\"height\":" + std::to_string(record.height) + ",\"maps\":{";
  for (std::size_t i = 0; i < record.maps.size(); ++i) {
    if (i > 0) out += ',';
    out += quote(record.maps[i].first) + ":" + quote(record.maps[i].second);
  }
  out += '}';
  if (record.truth) out += ",\"gt\":" + box_array(*record.truth);
  if (!record.category.empty()) out += ",\"category\":" + quote(record.category);
  return out + "}\n";
}

Manifest read_manifest(const std::filesystem::path& path) {
  Manifest manifest;
  manifest.path = path;
  std::vector<std::string> ids;
  for_each_record(path, [&](const Fields& f, std::size_t line) {
    f.only({"id", "query", "width", "height", "maps", "gt", "category"});
    ManifestRecord r;
    r.line = line;
    r.id = f.string("id");
    r.query = f.string("query");
    const auto w = f.integer("width");
    const auto h = f.integer("height");
    if (w < 1 || h < 1 || w > std::numeric_limits<int>::max() || h > std::numeric_limits<int>::max()) {
      f.fail("width and height must be positive");
    }
    r.width = static_cast<int>(w);
    r.height = static_cast<int>(h);
    const json& maps = f.get("maps");
    if (!maps.is_object()) f.fail("field 'maps' must be an object of concept -> path");
    for (const auto& item : maps.items()) {
      if (!item.value().is_string()) f.fail("map path for concept '" + item.key() + "' must be a string");
      r.maps.emplace_back(item.key(), item.value().get<std::string>());
    }
    if (f.has("gt")) {
      r.truth = f.box("gt");
      if (!r.truth->fits(r.width, r.height)) f.fail("gt box lies outside the image");
    }
    if (f.has("category")) r.category = f.string("category");
    ids.push_back(r.id);
    manifest.records.push_back(std::move(r));
  });
  check_unique_ids(ids, path);
  return manifest;
}

// ---- predictions, ground truth, proposals ------------------------------------

std::string encode_prediction(const Prediction& p) {
  std::string out = "{\"id\":" + quote(p.id) + ",\"box\":" + box_array(p.box) + ",\"concept\":" +
                    quote(p.concept_id ? *p.concept_id : std::string(kFallbackLabel));
  out += ",\"token\":" + (p.token ? quote(*p.token) : std::string("null"));
  out += ",\"E\":" + (p.value ? format_number(*p.value) : std::string("null"));
  return out + "}\n";
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::vector<Prediction> out;
  std::vector<std::string> ids;
  for_each_record(path, [&](const Fields& f, std::size_t) {
    Prediction p;
    p.id = f.string("id");
    p.box = f.box("box");
    if (f.has("concept")) {
      const auto c = f.string("concept");
      if (c != kFallbackLabel) p.concept_id = c;
    }
    if (f.has("token")) p.token = f.string("token");
    if (f.has("E")) p.value = f.number("E");
    ids.push_back(p.id);
    out.push_back(std::move(p));
  });
  check_unique_ids(ids, path);
  return out;
}

std::vector<TruthRecord> read_ground_truth(const std::filesystem::path& path) {
  std::vector<TruthRecord> out;
  std::vector<std::string> ids;
  for_each_record(path, [&](const Fields& f, std::size_t) {
    TruthRecord t;
    t.id = f.string("id");
    if (f.has("gt")) {
      t.box = f.box("gt");
    } else if (f.has("box")) {
      t.box = f.box("box");
    } else {
      f.fail("record has no ground-truth box ('gt' or 'box')");
    }
    if (f.has("category")) t.category = f.string("category");
    ids.push_back(t.id);
    out.push_back(std::move(t));
  });
  check_unique_ids(ids, path);
  return out;
}

std::string encode_proposals(const ProposalRecord& record) {
  return "{\"id\":" + quote(record.id) + ",\"boxes\":" +
         array_of(record.boxes, [](const BoundingBox& b) { return box_array(b); }) + "}\n";
}

std::vector<ProposalRecord> read_proposals(const std::filesystem::path& path) {
  std::vector<ProposalRecord> out;
  std::vector<std::string> ids;
  for_each_record(path, [&](const Fields& f, std::size_t) {
    ProposalRecord r;
    r.id = f.string("id");
    const json& boxes = f.get("boxes");
    if (!boxes.is_array()) f.fail("field 'boxes' must be an array");
    for (const auto& b : boxes) r.boxes.push_back(f.to_box(b, "proposal"));
    ids.push_back(r.id);
    out.push_back(std::move(r));
  });
  check_unique_ids(ids, path);
  return out;
}

// ---- reports ----------------------------------------------------------------

std::string encode_report(const AccuracyReport& report) {
  std::string out = "{\n  \"iou_threshold\": " + format_number(report.threshold) +
                    ",\n  \"examples\": " + std::to_string(report.examples) +
                    ",\n  \"correct\": " + std::to_string(report.correct) +
                    ",\n  \"accuracy\": " + format_number(report.accuracy) + ",\n  \"categories\": [";
  for (std::size_t i = 0; i < report.categories.size(); ++i) {
    const auto& c = report.categories[i];
    out += i == 0 ? "\n    " : ",\n    ";
    out += "{\"category\": " + quote(c.category) + ", \"examples\": " + std::to_string(c.examples) +
           ", \"correct\": " + std::to_string(c.correct) +
           ", \"accuracy\": " + format_number(c.accuracy) + "}";
  }
  out += report.categories.empty() ? "]\n}\n" : "\n  ]\n}\n";
  return out;
}

// ---- synth config -----------------------------------------------------------

SynthConfig decode_synth_config(std::string_view text, std::string_view source) {
  const json doc = parse_document(text, source);
  const Fields f(doc, std::string(source));
  f.only({"seed", "num_concepts", "num_words", "num_examples", "width", "height", "planted",
          "concept_probability", "distractor_probability", "max_distractors",
          "filler_probability", "noise", "min_box_fraction", "max_box_fraction",
          "proposals_per_image"});
  SynthConfig config;
  auto small_int = [&](const char* key, int& into) {
    if (!f.has(key)) return;
    const auto v = f.integer(key);
    if (v < 0 || v > std::numeric_limits<int>::max()) f.fail(std::string("field '") + key + "' is out of range");
    into = static_cast<int>(v);
  };
  auto real = [&](const char* key, double& into) {
    if (f.has(key)) into = f.number(key);
  };
  if (f.has("seed")) config.seed = f.count("seed");
  small_int("num_concepts", config.num_concepts);
  small_int("num_words", config.num_words);
  small_int("num_examples", config.num_examples);
  small_int("width", config.width);
  small_int("height", config.height);
  small_int("max_distractors", config.max_distractors);
  small_int("proposals_per_image", config.proposals_per_image);
  real("concept_probability", config.concept_probability);
  real("distractor_probability", config.distractor_probability);
  real("filler_probability", config.filler_probability);
  real("noise", config.noise);
  real("min_box_fraction", config.min_box_fraction);
  real("max_box_fraction", config.max_box_fraction);
  if (f.has("planted")) {
    const json& v = f.get("planted");
    if (!v.is_array()) f.fail("field 'planted' must be an array of concept indices");
    for (const auto& item : v) {
      if (!item.is_number_integer()) f.fail("field 'planted' must hold integers");
      const auto c = item.get<std::int64_t>();
      if (c < -1 || c > std::numeric_limits<int>::max()) f.fail("planted concept index out of range");
      config.planted.push_back(static_cast<int>(c));
    }
  }
  try {
    config.validate();
  } catch (const InvalidInput& e) {
    f.fail(e.what());
  }
  return config;
}

std::string encode_synth_config(const SynthConfig& c) {
  std::string out = "{\n";
  out += "  \"seed\": " + std::to_string(c.seed) + ",\n";
  out += "  \"num_concepts\": " + std::to_string(c.num_concepts) + ",\n";
  out += "  \"num_words\": " + std::to_string(c.num_words) + ",\n";
  out += "  \"num_examples\": " + std::to_string(c.num_examples) + ",\n";
  out += "  \"width\": " + std::to_string(c.width) + ",\n";
  out += "  \"height\": " + std::to_string(c.height) + ",\n";
  out += "  \"planted\": " +
         array_of(c.planted_map(), [](int v) { return std::to_string(v); }) + ",\n";
  out += "  \"concept_probability\": " + format_number(c.concept_probability) + ",\n";
  out += "  \"distractor_probability\": " + format_number(c.distractor_probability) + ",\n";
  out += "  \"max_distractors\": " + std::to_string(c.max_distractors) + ",\n";
  out += "  \"filler_probability\": " + format_number(c.filler_probability) + ",\n";
  out += "  \"noise\": " + format_number(c.noise) + ",\n";
  out += "  \"min_box_fraction\": " + format_number(c.min_box_fraction) + ",\n";
  out += "  \"max_box_fraction\": " + format_number(c.max_box_fraction) + ",\n";
  out += "  \"proposals_per_image\": " + std::to_string(c.proposals_per_image) + "\n";
  return out + "}\n";
}

}  // namespace grounding
