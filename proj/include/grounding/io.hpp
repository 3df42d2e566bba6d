#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "grounding/box.hpp"
#include "grounding/ess.hpp"
#include "grounding/eval.hpp"
#include "grounding/linker.hpp"
#include "grounding/synth.hpp"
#include "grounding/vocab.hpp"

namespace grounding {

// Writes to a sibling temporary file and renames it over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

// "%.17g" in the C locale: 17 significant digits with trailing zeros elided,
// so every double reads back bit-identical. Throws InvalidInput on NaN or
// infinity.
std::string format_number(double value);

// JSON string literal with escapes.
std::string quote(std::string_view text);

// Trained model: the vocabulary, the score matrix with its raw counts and the
// activation thresholds used while counting.
struct Model {
  Vocabulary vocabulary{std::vector<std::string>{}};
  RelevanceMatrix matrix;
  ActivationThresholds thresholds;
};

inline constexpr std::string_view kModelFormat = "grounding-model";
inline constexpr int kModelVersion = 1;

std::string encode_model(const Model& model);
// `source` names the document in error messages.
Model decode_model(std::string_view text, std::string_view source = "model");
void write_model(const std::filesystem::path& path, const Model& model);
Model read_model(const std::filesystem::path& path);

// One line of a corpus manifest (JSON Lines):
//   {"id":..., "query":..., "width":W, "height":H,
//    "maps":{"<concept>":"<smap path>", ...}, "gt":[x1,y1,x2,y2], "category":...}
// Map paths are relative to the manifest's directory unless absolute. "gt"
// and "category" are optional.
struct ManifestRecord {
  std::string id;
  std::string query;
  int width = 0;
  int height = 0;
  std::vector<std::pair<std::string, std::string>> maps;  // concept -> path as written
  std::optional<BoundingBox> truth;
  std::string category;
  std::size_t line = 0;  // 1-based line in the manifest
};

struct Manifest {
  std::filesystem::path path;
  std::vector<ManifestRecord> records;

  [[nodiscard]] std::filesystem::path resolve(const std::string& map_path) const;
  // Sorted union of all concepts the records reference.
  [[nodiscard]] std::vector<std::string> concepts() const;
};

std::string encode_manifest_record(const ManifestRecord& record);
Manifest read_manifest(const std::filesystem::path& path);

struct Prediction {
  std::string id;
  BoundingBox box;
  std::optional<std::string> concept_id;  // empty: FALLBACK
  std::optional<std::string> token;
  std::optional<double> value;
};

inline constexpr std::string_view kFallbackLabel = "FALLBACK";

// {"id":..., "box":[...], "concept":...|"FALLBACK", "token":...|null, "E":...|null}
std::string encode_prediction(const Prediction& prediction);
// Only "id" and "box" are required, so externally produced files load too.
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

struct TruthRecord {
  std::string id;
  BoundingBox box;
  std::string category;
};

// Records carrying "gt" (a corpus manifest works) or "box".
std::vector<TruthRecord> read_ground_truth(const std::filesystem::path& path);

struct ProposalRecord {
  std::string id;
  std::vector<BoundingBox> boxes;
};

std::string encode_proposals(const ProposalRecord& record);
std::vector<ProposalRecord> read_proposals(const std::filesystem::path& path);

std::string encode_report(const AccuracyReport& report);

// Every SynthConfig field by name; missing keys keep their defaults, unknown
// keys are rejected.
SynthConfig decode_synth_config(std::string_view text, std::string_view source = "config");
std::string encode_synth_config(const SynthConfig& config);

}  // namespace grounding
