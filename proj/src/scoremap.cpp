#include "grounding/scoremap.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "grounding/error.hpp"
#include "grounding/io.hpp"

namespace grounding {

std::string to_string(const BoundingBox& box) {
  std::ostringstream os;
  os << '(' << box.x1 << ',' << box.y1 << ',' << box.x2 << ',' << box.y2 << ')';
  return os.str();
}

IntegralImage::IntegralImage(std::span<const double> grid, int width, int height)
    : width_(width), height_(height) {
  const auto stride = static_cast<std::size_t>(width) + 1;
  table_.assign(stride * (static_cast<std::size_t>(height) + 1), 0.0);
  for (int y = 0; y < height; ++y) {
    double row = 0.0;
    const auto src = static_cast<std::size_t>(y) * static_cast<std::size_t>(width);
    const auto above = static_cast<std::size_t>(y) * stride;
    const auto here = above + stride;
    for (int x = 0; x < width; ++x) {
      row += grid[src + static_cast<std::size_t>(x)];
      table_[here + static_cast<std::size_t>(x) + 1] =
          table_[above + static_cast<std::size_t>(x) + 1] + row;
    }
  }
}

namespace {

double to_probability(double score) { return std::clamp((score + 1.0) / 2.0, 0.0, 1.0); }

}  // namespace

ScoreMap::ScoreMap(int width, int height, std::vector<double> scores, std::string concept_id)
    : width_(width), height_(height), concept_id_(std::move(concept_id)), scores_(std::move(scores)) {
  if (width < 1 || height < 1) {
    throw InvalidInput("score map must be at least 1x1, got " + std::to_string(width) + "x" +
                       std::to_string(height));
  }
  if (scores_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw InvalidInput("score map has " + std::to_string(scores_.size()) + " values, expected " +
                       std::to_string(static_cast<std::size_t>(width) * height));
  }
  std::vector<double> positive(scores_.size());
  std::vector<double> negative(scores_.size());
  std::vector<double> probability(scores_.size());
  for (std::size_t i = 0; i < scores_.size(); ++i) {
    const double s = scores_[i];
    if (!std::isfinite(s)) {
      throw InvalidInput("score map contains a non-finite value at index " + std::to_string(i));
    }
    positive[i] = std::max(s, 0.0);
    negative[i] = std::min(s, 0.0);
    probability[i] = to_probability(s);
  }
  full_ = IntegralImage(scores_, width, height);
  positive_ = IntegralImage(positive, width, height);
  negative_ = IntegralImage(negative, width, height);
  probability_ = IntegralImage(probability, width, height);
}

double ScoreMap::probability_at(int x, int y) const { return to_probability(at(x, y)); }

void ScoreMap::require_inside(const BoundingBox& box) const {
  if (!contains(box)) {
    throw InvalidInput("box " + to_string(box) + " is outside the " + std::to_string(width_) +
                       "x" + std::to_string(height_) + " map");
  }
}

double ScoreMap::box_sum(const BoundingBox& box) const {
  require_inside(box);
  return full_.box_sum(box);
}

double ScoreMap::box_sum_positive(const BoundingBox& box) const {
  require_inside(box);
  return positive_.box_sum(box);
}

double ScoreMap::box_sum_negative(const BoundingBox& box) const {
  require_inside(box);
  return negative_.box_sum(box);
}

double ScoreMap::box_mean_prob(const BoundingBox& box) const {
  require_inside(box);
  const double mean = probability_.box_sum(box) / static_cast<double>(box.area());
  return std::clamp(mean, 0.0, 1.0);
}

ScoreMap from_segmentation(std::span<const double> probabilities, int width, int height,
                           std::string concept_id) {
  if (probabilities.empty()) throw InvalidInput("segmentation grid is empty");
  if (width < 1 || height < 1 ||
      probabilities.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw InvalidInput("segmentation grid size does not match " + std::to_string(width) + "x" +
                       std::to_string(height));
  }
  std::vector<double> scores(probabilities.size());
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double p = probabilities[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw InvalidInput("segmentation probability out of [0,1] at index " + std::to_string(i));
    }
    scores[i] = p > 0.5 ? 1.0 : -1.0;
  }
  return ScoreMap(width, height, std::move(scores), std::move(concept_id));
}

ScoreMap from_detections(std::span<const Detection> detections, int width, int height,
                         std::string concept_id) {
  if (width < 1 || height < 1) throw InvalidInput("detection map must be at least 1x1");
  std::vector<double> scores(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
                             -1.0);
  for (const auto& det : detections) {
    if (!det.box.fits(width, height)) {
      throw InvalidInput("detection box " + to_string(det.box) + " is outside the " +
                         std::to_string(width) + "x" + std::to_string(height) + " image");
    }
    if (!(det.confidence >= 0.0 && det.confidence <= 1.0)) {
      throw InvalidInput("detection confidence out of [0,1]");
    }
    if (det.confidence < 0.5) continue;
    for (int y = det.box.y1; y <= det.box.y2; ++y) {
      auto row = scores.begin() + static_cast<std::ptrdiff_t>(y) * width;
      std::fill(row + det.box.x1, row + det.box.x2 + 1, 1.0);
    }
  }
  return ScoreMap(width, height, std::move(scores), std::move(concept_id));
}

// --- SMAP -------------------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "SMAP";

void append_le32(std::string& out, float value) {
  auto bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>(bits & 0xFFu));
    bits >>= 8;
  }
}

float read_le32(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::string encode_smap(const ScoreMap& map) {
  std::string out = "SMAP 1 " + std::to_string(map.width()) + " " + std::to_string(map.height()) +
                    "\n";
  out.reserve(out.size() + map.scores().size() * 4);
  for (double v : map.scores()) append_le32(out, static_cast<float>(v));
  return out;
}

void write_smap(std::ostream& out, const ScoreMap& map) {
  const auto bytes = encode_smap(map);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_smap(const std::filesystem::path& path, const ScoreMap& map) {
  write_file_atomic(path, encode_smap(map));
}

ScoreMap read_smap(std::istream& in, std::string concept_id) {
  std::string header;
  if (!std::getline(in, header)) throw InvalidInput("SMAP: missing header line");

  // Exactly "SMAP <version> <width> <height>" with single spaces.
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto space = header.find(' ', start);
    fields.push_back(header.substr(start, space - start));
    if (space == std::string::npos) break;
    start = space + 1;
  }
  if (fields.size() != 4 || fields[0] != kMagic) {
    throw InvalidInput("SMAP: malformed header '" + header + "'");
  }
  auto parse_uint = [&](const std::string& s, const char* what) {
    if (s.empty() || s.size() > 9 ||
        !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      throw InvalidInput(std::string("SMAP: bad ") + what + " '" + s + "'");
    }
    return std::stoi(s);
  };
  const int version = parse_uint(fields[1], "version");
  if (version != 1) throw InvalidInput("SMAP: unsupported version " + fields[1]);
  const int width = parse_uint(fields[2], "width");
  const int height = parse_uint(fields[3], "height");
  if (width < 1 || height < 1) throw InvalidInput("SMAP: dimensions must be positive");

  const auto count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<unsigned char> raw(count * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw InvalidInput("SMAP: truncated payload, expected " + std::to_string(raw.size()) +
                       " bytes");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw InvalidInput("SMAP: trailing bytes after payload");
  }
  std::vector<double> scores(count);
  for (std::size_t i = 0; i < count; ++i) scores[i] = read_le32(raw.data() + 4 * i);
  return ScoreMap(width, height, std::move(scores), std::move(concept_id));
}

ScoreMap read_smap(const std::filesystem::path& path, std::string concept_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open SMAP file " + path.string());
  try {
    return read_smap(in, std::move(concept_id));
  } catch (const InvalidInput& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

}  // namespace grounding
