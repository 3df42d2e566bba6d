#include "grounding/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>
#include <unordered_map>

#include <CLI11.hpp>

#include "grounding/error.hpp"
#include "grounding/eval.hpp"
#include "grounding/inference.hpp"
#include "grounding/io.hpp"
#include "grounding/synth.hpp"

namespace grounding::cli {

namespace fs = std::filesystem;

std::size_t worker_count() {
  if (const char* env = std::getenv("GROUND_THREADS"); env != nullptr && *env != '\0') {
    std::size_t n = 0;
    const std::string_view text(env);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
    if (ec != std::errc() || ptr != text.data() + text.size() || n == 0) {
      throw InvalidInput("GROUND_THREADS must be a positive integer, got '" + std::string(text) + "'");
    }
    return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body) {
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mutex;
  std::size_t failed_index = n;
  std::exception_ptr failure;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        const std::lock_guard lock(mutex);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) threads.emplace_back(work);
  work();
  for (auto& thread : threads) thread.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

// Activation of every distinct map file a corpus references, computed once.
class ActivationTable {
 public:
  ActivationTable(const Manifest& manifest, const ActivationThresholds& thresholds,
                  std::size_t workers) {
    std::vector<const ManifestRecord*> first_use;
    for (const auto& record : manifest.records) {
      for (const auto& [concept_id, file] : record.maps) {
        const std::string key = manifest.resolve(file).lexically_normal().string();
        if (index_.emplace(key, paths_.size()).second) {
          paths_.push_back(key);
          first_use.push_back(&record);
        }
      }
    }
    entries_.resize(paths_.size());
    parallel_for(paths_.size(), workers, [&](std::size_t i) {
      try {
        const ScoreMap map = read_smap(fs::path(paths_[i]));
        entries_[i] = {map.width(), map.height(), detect_activation(map, thresholds)};
      } catch (const std::exception& e) {
        throw InvalidInput(manifest.path.string() + ":" + std::to_string(first_use[i]->line) +
                           ": " + e.what());
      }
    });
    for (const auto& record : manifest.records) {
      for (const auto& [concept_id, file] : record.maps) {
        const Entry& entry = lookup(manifest, file);
        if (entry.width != record.width || entry.height != record.height) {
          throw InvalidInput(manifest.path.string() + ":" + std::to_string(record.line) + ": map " +
                             file + " is " + std::to_string(entry.width) + "x" +
                             std::to_string(entry.height) + " but the record says " +
                             std::to_string(record.width) + "x" + std::to_string(record.height));
        }
      }
    }
  }

  [[nodiscard]] std::vector<ConceptActivation> for_record(const Manifest& manifest,
                                                          const ManifestRecord& record) const {
    std::vector<ConceptActivation> out;
    out.reserve(record.maps.size());
    for (const auto& [concept_id, file] : record.maps) {
      ConceptActivation activation = lookup(manifest, file).activation;
      activation.concept_id = concept_id;
      out.push_back(std::move(activation));
    }
    return out;
  }

  [[nodiscard]] std::size_t size() const { return paths_.size(); }

 private:
  struct Entry {
    int width = 0;
    int height = 0;
    ConceptActivation activation;
  };

  [[nodiscard]] const Entry& lookup(const Manifest& manifest, const std::string& file) const {
    return entries_[index_.at(manifest.resolve(file).lexically_normal().string())];
  }

  std::vector<std::string> paths_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Entry> entries_;
};

Manifest load_corpus(const std::string& path) {
  Manifest manifest = read_manifest(path);
  if (manifest.records.empty()) throw InvalidInput(path + ": corpus has no examples");
  return manifest;
}

void check_threshold(double value, const char* name) {
  if (!std::isfinite(value)) throw InvalidInput(std::string(name) + " must be a finite number");
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string corpus;
  std::size_t vocab_size = 0;
  std::string out;
  double activation_conf = ActivationThresholds{}.confidence;
  double activation_area = ActivationThresholds{}.area_fraction;
  std::string statistic = std::string(to_string(Statistic::hypothesis_test));
};

int train(const TrainArgs& args, std::ostream& err) {
  if (args.vocab_size < 1) throw InvalidInput("--vocab-size must be at least 1");
  check_threshold(args.activation_conf, "--activation-conf");
  check_threshold(args.activation_area, "--activation-area");
  const Statistic statistic = statistic_from_string(args.statistic);
  const Manifest manifest = load_corpus(args.corpus);

  Model model;
  model.thresholds = {args.activation_conf, args.activation_area};
  std::vector<std::string> queries;
  queries.reserve(manifest.records.size());
  for (const auto& record : manifest.records) queries.push_back(record.query);
  model.vocabulary = build_vocab(queries, args.vocab_size);

  const ActivationTable table(manifest, model.thresholds, worker_count());
  const std::vector<std::string> concepts = manifest.concepts();
  std::map<std::string, std::size_t, std::less<>> concept_index;
  for (std::size_t c = 0; c < concepts.size(); ++c) concept_index.emplace(concepts[c], c);

  CooccurrenceStats stats(model.vocabulary.size(), concepts.size());
  std::vector<std::uint8_t> active(concepts.size());
  for (const auto& record : manifest.records) {
    std::fill(active.begin(), active.end(), 0);
    for (const auto& activation : table.for_record(manifest, record)) {
      if (activation.active) active[concept_index.at(activation.concept_id)] = 1;
    }
    stats.add(model.vocabulary.tokenize(record.query), active);
  }
  model.matrix = statistic == Statistic::mutual_information
                     ? build_mutual_information_matrix(stats, model.vocabulary.tokens(), concepts)
                     : build_relevance_matrix(stats, model.vocabulary.tokens(), concepts);

  write_model(args.out, model);
  write_file_atomic(args.out + ".vocab", model.vocabulary.to_text());
  err << "ground train: " << manifest.records.size() << " examples, " << model.vocabulary.size()
      << " tokens, " << concepts.size() << " concepts, " << table.size() << " distinct maps -> "
      << args.out << "\n";
  return kExitOk;
}

// ---- infer ------------------------------------------------------------------

struct InferArgs {
  std::string corpus;
  std::string model;
  double tau = kDefaultSignificance;
  std::string out;
};

Model load_model(const std::string& path) {
  Model model = read_model(path);
  // The vocabulary sidecar written by train must agree with the model.
  const fs::path sidecar = path + ".vocab";
  if (fs::exists(sidecar)) {
    const Vocabulary vocab = Vocabulary::from_text(read_file(sidecar));
    if (vocab.tokens() != model.matrix.tokens) {
      throw InvalidInput(sidecar.string() + ": vocabulary does not match the model's token list");
    }
  }
  return model;
}

int infer(const InferArgs& args, std::ostream& err) {
  if (std::isnan(args.tau)) throw InvalidInput("--tau must be a number");
  const Model model = load_model(args.model);
  const Manifest manifest = load_corpus(args.corpus);
  const ActivationTable table(manifest, model.thresholds, worker_count());

  GroundingOptions options;
  options.tau = args.tau;
  options.thresholds = model.thresholds;
  std::string out;
  std::size_t fallbacks = 0;
  for (const auto& record : manifest.records) {
    const GroundingResult result =
        decide(model.matrix, model.vocabulary.tokenize(record.query),
               table.for_record(manifest, record), record.width, record.height, options);
    fallbacks += result.fallback() ? 1 : 0;
    out += encode_prediction({record.id, result.box, result.concept_id, result.token, result.value});
  }
  write_file_atomic(args.out, out);
  err << "ground infer: " << manifest.records.size() << " predictions (" << fallbacks
      << " fallback) -> " << args.out << "\n";
  return kExitOk;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string pred;
  std::string gt;
  double iou = kDefaultIouThreshold;
  bool by_category = false;
};

std::string id_list(const std::vector<std::string>& ids) {
  constexpr std::size_t kShown = 20;
  std::string out;
  for (std::size_t i = 0; i < std::min(ids.size(), kShown); ++i) {
    if (i > 0) out += ", ";
    out += ids[i];
  }
  if (ids.size() > kShown) out += ", ... (" + std::to_string(ids.size() - kShown) + " more)";
  return out;
}

int evaluate(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  if (!(args.iou >= 0.0 && args.iou <= 1.0)) throw InvalidInput("--iou must lie in [0,1]");
  const auto predictions = read_predictions(args.pred);
  const auto truths = read_ground_truth(args.gt);

  std::unordered_map<std::string, const Prediction*> by_id;
  for (const auto& p : predictions) by_id.emplace(p.id, &p);
  std::vector<std::string> missing;
  std::set<std::string> truth_ids;
  std::vector<EvalRecord> records;
  for (const auto& t : truths) {
    truth_ids.insert(t.id);
    const auto it = by_id.find(t.id);
    if (it == by_id.end()) {
      missing.push_back(t.id);
      continue;
    }
    records.push_back({t.id, it->second->box, t.box, t.category});
  }
  std::vector<std::string> unexpected;
  for (const auto& p : predictions) {
    if (truth_ids.count(p.id) == 0) unexpected.push_back(p.id);
  }
  if (!missing.empty() || !unexpected.empty()) {
    std::string message = "prediction and ground-truth ids differ";
    if (!missing.empty()) message += "; no prediction for: " + id_list(missing);
    if (!unexpected.empty()) message += "; no ground truth for: " + id_list(unexpected);
    throw InvalidInput(message);
  }

  const AccuracyReport report = accuracy(records, args.iou);
  const std::string json_path = args.pred + ".eval.json";
  write_file_atomic(json_path, encode_report(report));
  out << format_report(report, args.by_category);
  err << "ground eval: " << report.examples << " examples, report -> " << json_path << "\n";
  return kExitOk;
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string config;
  std::string out;
};

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const unsigned char b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

constexpr const char* kSynthMarker = "planted.json";

std::string planted_document(const SynthCorpus& corpus) {
  std::string out = "{\n  \"config\": ";
  std::string config = encode_synth_config(corpus.config);
  config.pop_back();  // trailing newline
  for (std::size_t pos = 0; (pos = config.find('\n', pos)) != std::string::npos; pos += 3) {
    config.replace(pos, 1, "\n  ");
  }
  out += config + ",\n  \"links\": {";
  bool first = true;
  for (std::size_t w = 0; w < corpus.words.size(); ++w) {
    if (corpus.planted[w] < 0) continue;
    out += first ? "\n    " : ",\n    ";
    first = false;
    out += quote(corpus.words[w]) + ": " +
           quote(corpus.concepts[static_cast<std::size_t>(corpus.planted[w])]);
  }
  return out + "\n  }\n}\n";
}

int synth(const SynthArgs& args, std::ostream& err) {
  const SynthConfig config = decode_synth_config(read_file(args.config), args.config);
  const fs::path out_dir(args.out);
  if (fs::exists(out_dir)) {
    if (!fs::is_directory(out_dir)) throw InvalidInput(args.out + " exists and is not a directory");
    if (!fs::is_empty(out_dir) && !fs::exists(out_dir / kSynthMarker)) {
      throw InvalidInput("refusing to overwrite " + args.out + ": not a synthetic corpus directory");
    }
  }

  const SynthCorpus corpus = generate(config);
  fs::path staging = out_dir;
  staging += ".staging";
  fs::remove_all(staging);
  fs::create_directories(staging / "maps");

  std::set<std::string> written;
  std::string manifest;
  std::string proposals;
  for (const auto& example : corpus.examples) {
    ManifestRecord record;
    record.id = example.id;
    record.query = example.query;
    record.width = config.width;
    record.height = config.height;
    record.truth = example.truth;
    record.category = corpus.concepts[static_cast<std::size_t>(example.designated_concept)];
    for (std::size_t c = 0; c < corpus.concepts.size(); ++c) {
      const std::string bytes = encode_smap(corpus.render(example, c));
      char name[32];
      std::snprintf(name, sizeof name, "maps/%016llx.smap",
                    static_cast<unsigned long long>(fnv1a64(bytes)));
      if (written.insert(name).second) write_file_atomic(staging / name, bytes);
      record.maps.emplace_back(corpus.concepts[c], name);
    }
    manifest += encode_manifest_record(record);
    proposals += encode_proposals({example.id, example.proposals});
  }
  write_file_atomic(staging / "manifest.jsonl", manifest);
  write_file_atomic(staging / "proposals.jsonl", proposals);
  write_file_atomic(staging / kSynthMarker, planted_document(corpus));

  fs::remove_all(out_dir);
  fs::rename(staging, out_dir);
  err << "ground synth: " << corpus.examples.size() << " examples, " << written.size()
      << " distinct maps -> " << args.out << "\n";
  return kExitOk;
}

// ---- inspect ----------------------------------------------------------------

struct InspectArgs {
  std::string model;
  std::string word;
  std::size_t top_k = 5;
  std::vector<std::string> embed_dist;
};

// Looks a word up the way queries are tokenized.
std::string token_for(const std::string& word) {
  const auto words = normalize_words(word);
  if (words.size() != 1) throw InvalidInput("'" + word + "' is not a single word");
  return words.front();
}

std::string format_row(const std::string& rank, int width, const std::string& concept_id,
                       const std::string& score) {
  char line[256];
  std::snprintf(line, sizeof line, "%4s  %-*s  %s\n", rank.c_str(), width, concept_id.c_str(),
                score.c_str());
  return line;
}

int inspect(const InspectArgs& args, std::ostream& out) {
  const Model model = load_model(args.model);
  if (!args.embed_dist.empty()) {
    const double d = word_embedding_distance(model.matrix, token_for(args.embed_dist.at(0)),
                                             token_for(args.embed_dist.at(1)));
    out << format_number(d) << "\n";
    return kExitOk;
  }
  if (args.word.empty()) throw InvalidInput("inspect needs --word or --embed-dist");
  const auto ranked = top_relevant_concepts(model.matrix, token_for(args.word), args.top_k);
  std::size_t width = std::string_view("concept").size();
  for (const auto& r : ranked) width = std::max(width, r.concept_id.size());
  const int w = static_cast<int>(width);
  out << format_row("rank", w, "concept", "score");
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    out << format_row(std::to_string(i + 1), w, ranked[i].concept_id, format_number(ranked[i].value));
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unsupervised textual grounding: learn word-concept links from image-query pairs "
               "and ground queries by subwindow search.",
               "ground"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Learn the relevance matrix from a corpus");
  train_cmd->add_option("--corpus", train_args.corpus, "Corpus manifest (JSON Lines)")->required();
  train_cmd->add_option("--vocab-size", train_args.vocab_size, "Vocabulary size K")->required();
  train_cmd->add_option("--out", train_args.out, "Model file to write")->required();
  train_cmd->add_option("--activation-conf", train_args.activation_conf,
                        "Concept active if mean probability exceeds this")
      ->capture_default_str();
  train_cmd->add_option("--activation-area", train_args.activation_area,
                        "... and its box covers at least this image fraction")
      ->capture_default_str();
  train_cmd->add_option("--statistic", train_args.statistic,
                        "hypothesis_test or mutual_information")
      ->capture_default_str();

  InferArgs infer_args;
  auto* infer_cmd = app.add_subcommand("infer", "Ground every query of a corpus");
  infer_cmd->add_option("--corpus", infer_args.corpus, "Corpus manifest (JSON Lines)")->required();
  infer_cmd->add_option("--model", infer_args.model, "Model file from train")->required();
  infer_cmd->add_option("--tau", infer_args.tau, "Fall back unless the best score is below this")
      ->capture_default_str();
  infer_cmd->add_option("--out", infer_args.out, "Predictions file to write")->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground truth");
  eval_cmd->add_option("--pred", eval_args.pred, "Predictions (JSON Lines)")->required();
  eval_cmd->add_option("--gt", eval_args.gt, "Ground truth or corpus manifest")->required();
  eval_cmd->add_option("--iou", eval_args.iou, "Correct if IoU is strictly above this")
      ->capture_default_str();
  eval_cmd->add_flag("--by-category", eval_args.by_category, "Add per-category rows");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus directory");
  synth_cmd->add_option("--config", synth_args.config, "Synthetic world config (JSON)")->required();
  synth_cmd->add_option("--out", synth_args.out, "Output directory")->required();

  InspectArgs inspect_args;
  auto* inspect_cmd = app.add_subcommand("inspect", "Show what a model learned about words");
  inspect_cmd->add_option("--model", inspect_args.model, "Model file from train")->required();
  auto* word_opt = inspect_cmd->add_option("--word", inspect_args.word, "List a word's concepts");
  inspect_cmd->add_option("--top-k", inspect_args.top_k, "Concepts to list")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  auto* dist_opt = inspect_cmd->add_option("--embed-dist", inspect_args.embed_dist,
                                           "Distance between two words' score rows")
                       ->expected(2);
  word_opt->excludes(dist_opt);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalidInput;
  }

  try {
    if (*train_cmd) return train(train_args, err);
    if (*infer_cmd) return infer(infer_args, err);
    if (*eval_cmd) return evaluate(eval_args, out, err);
    if (*synth_cmd) return synth(synth_args, err);
    if (*inspect_cmd) return inspect(inspect_args, out);
  } catch (const InvalidInput& e) {
    err << "ground: error: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const GuardExceeded& e) {
    err << "ground: error: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const fs::filesystem_error& e) {
    err << "ground: error: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const std::exception& e) {
    err << "ground: internal error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace grounding::cli
