#include "fairmargin/data.hpp"

#include <cmath>
#include <set>
#include <string>

#include "fairmargin/error.hpp"
#include "fairmargin/textio.hpp"

namespace fairmargin {

namespace {

constexpr int kMaxPlacementAttempts = 10000;
constexpr std::uint64_t kPrototypeStream = 1;
constexpr std::uint64_t kNoiseStreamBase = 1000;

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::kParseError, "line " + std::to_string(line) + ": " + what);
}

// Shared layout of the two sample CSVs: id, class, attributes, vector.
struct Row {
  std::string id;
  ClassId class_id = 0;
  Attributes attributes;
  Vector values;
  std::size_t line = 0;
};

std::string rows_to_text(const std::vector<Row>& rows, char vector_prefix) {
  std::set<std::string, std::less<>> names;
  for (const auto& r : rows) {
    for (const auto& [name, _] : r.attributes) names.insert(name);
  }
  const std::size_t dim = rows.empty() ? 0 : rows.front().values.size();

  std::string out = "id,class";
  for (const auto& name : names) out += ",attr:" + name;
  for (std::size_t k = 0; k < dim; ++k) out += ',' + std::string(1, vector_prefix) + std::to_string(k);
  out += '\n';
  for (const auto& r : rows) {
    if (r.values.size() != dim) {
      throw Error(ErrorCode::kSchemaMismatch, "rows differ in vector length");
    }
    out += r.id + ',' + std::to_string(r.class_id);
    for (const auto& name : names) {
      out += ',';
      if (const auto it = r.attributes.find(name); it != r.attributes.end()) {
        out += textio::format_double(it->second);
      }
    }
    for (double v : r.values) out += ',' + textio::format_double(v);
    out += '\n';
  }
  return out;
}

std::vector<Row> rows_from_text(std::string_view text, char vector_prefix) {
  textio::LineReader reader(text);
  std::string_view line;
  if (!reader.next(line)) parse_fail(1, "missing header");
  const auto header = textio::split(line, ',');
  if (header.size() < 2 || header[0] != "id" || header[1] != "class") {
    throw Error(ErrorCode::kSchemaMismatch, "header must start with id,class");
  }
  std::vector<std::string> attr_names;
  std::size_t col = 2;
  for (; col < header.size() && header[col].starts_with("attr:"); ++col) {
    attr_names.emplace_back(header[col].substr(5));
  }
  const std::size_t first_value = col;
  for (; col < header.size(); ++col) {
    const std::string expected = std::string(1, vector_prefix) + std::to_string(col - first_value);
    if (header[col] != expected) {
      throw Error(ErrorCode::kSchemaMismatch,
                  "unexpected column '" + std::string(header[col]) + "', expected '" +
                      expected + "'");
    }
  }
  const std::size_t dim = header.size() - first_value;
  if (dim == 0) throw Error(ErrorCode::kSchemaMismatch, "no vector columns");

  std::vector<Row> rows;
  std::set<std::string, std::less<>> seen;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto fields = textio::split(line, ',');
    const std::size_t ln = reader.line_number();
    if (fields.size() != header.size()) {
      parse_fail(ln, "expected " + std::to_string(header.size()) + " fields, got " +
                         std::to_string(fields.size()));
    }
    Row r;
    r.id = std::string(fields[0]);
    if (r.id.empty()) parse_fail(ln, "empty id");
    if (!seen.insert(r.id).second) parse_fail(ln, "duplicate id '" + r.id + "'");
    r.line = ln;
    try {
      const auto cls = textio::parse_int(fields[1], "class");
      if (cls < 0) throw Error(ErrorCode::kParseError, "negative class id");
      r.class_id = static_cast<ClassId>(cls);
      for (std::size_t a = 0; a < attr_names.size(); ++a) {
        const auto cell = fields[2 + a];
        if (!cell.empty()) r.attributes[attr_names[a]] = textio::parse_double(cell, attr_names[a]);
      }
      r.values.resize(dim);
      for (std::size_t k = 0; k < dim; ++k) {
        r.values[k] = textio::parse_double(fields[first_value + k], "vector entry");
      }
    } catch (const Error& e) {
      parse_fail(ln, e.what());
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace

std::string group_attribute(std::string_view group_name) {
  return "group:" + std::string(group_name);
}

void validate(const SyntheticSpec& spec) {
  if (spec.groups.empty()) throw Error(ErrorCode::kSpecInvalid, "need at least one group");
  if (spec.input_dim == 0) throw Error(ErrorCode::kSpecInvalid, "input_dim must be >= 1");
  if (!(spec.prototype_separation >= 0.0) || spec.prototype_separation > 3.14159) {
    throw Error(ErrorCode::kSpecInvalid, "prototype_separation must lie in [0, pi)");
  }
  std::set<std::string, std::less<>> names;
  for (const auto& g : spec.groups) {
    if (g.name.empty() || g.name.find_first_of(",\n\r") != std::string::npos) {
      throw Error(ErrorCode::kSpecInvalid, "group names must be non-empty without commas");
    }
    if (!names.insert(g.name).second) {
      throw Error(ErrorCode::kSpecInvalid, "duplicate group '" + g.name + "'");
    }
    if (g.class_count == 0 || g.samples_per_class == 0) {
      throw Error(ErrorCode::kSpecInvalid, "group '" + g.name + "' is empty");
    }
    if (!(g.noise_sigma > 0.0) || !std::isfinite(g.noise_sigma)) {
      throw Error(ErrorCode::kSpecInvalid, "group '" + g.name + "' needs sigma > 0");
    }
  }
}

std::vector<LabeledSample> generate(const SyntheticSpec& spec) {
  validate(spec);
  const Rng root(spec.seed);

  std::size_t total_classes = 0;
  for (const auto& g : spec.groups) total_classes += g.class_count;

  Rng proto_rng = root.split(kPrototypeStream);
  const double min_cos = std::cos(spec.prototype_separation);
  std::vector<Vector> prototypes;
  prototypes.reserve(total_classes);
  for (std::size_t c = 0; c < total_classes; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxPlacementAttempts && !placed; ++attempt) {
      Vector p(spec.input_dim);
      for (double& v : p) v = proto_rng.normal();
      if (l2_norm(p) < kZeroNormThreshold) continue;
      l2_normalize_inplace(p);
      placed = true;
      for (const auto& q : prototypes) {
        if (dot(p, q) > min_cos) {
          placed = false;
          break;
        }
      }
      if (placed) prototypes.push_back(std::move(p));
    }
    if (!placed) {
      throw Error(ErrorCode::kPrototypePlacementFailed,
                  "could not place prototype " + std::to_string(c) + " after " +
                      std::to_string(kMaxPlacementAttempts) + " attempts");
    }
  }

  std::vector<LabeledSample> samples;
  std::size_t class_id = 0;
  for (const auto& group : spec.groups) {
    Attributes attrs;
    for (const auto& other : spec.groups) {
      attrs[group_attribute(other.name)] = other.name == group.name ? 1.0 : -1.0;
    }
    for (std::size_t c = 0; c < group.class_count; ++c, ++class_id) {
      Rng noise = root.split(kNoiseStreamBase + class_id);
      for (std::size_t k = 0; k < group.samples_per_class; ++k) {
        LabeledSample s;
        s.id = "c" + std::to_string(class_id) + "_" + std::to_string(k);
        s.class_id = static_cast<ClassId>(class_id);
        s.attributes = attrs;
        s.input = prototypes[class_id];
        for (double& v : s.input) v += group.noise_sigma * noise.normal();
        samples.push_back(std::move(s));
      }
    }
  }
  return samples;
}

std::size_t class_count(const std::vector<LabeledSample>& samples) {
  ClassId top = -1;
  for (const auto& s : samples) top = std::max(top, s.class_id);
  return static_cast<std::size_t>(top + 1);
}

DatasetSplit split(const std::vector<LabeledSample>& samples, double ratio,
                   std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error(ErrorCode::kConfigInvalid, "split ratio must lie in (0, 1)");
  }
  const std::size_t classes = class_count(samples);
  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    members[static_cast<std::size_t>(samples[i].class_id)].push_back(i);
  }

  Rng rng(seed);
  std::vector<char> to_train(samples.size(), 0);
  for (std::size_t c = 0; c < classes; ++c) {
    const auto& idx = members[c];
    if (idx.size() < 2) {
      throw Error(ErrorCode::kClassTooSmall,
                  "class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                      " sample(s); need 2");
    }
    const auto n = static_cast<double>(idx.size());
    auto n_train = static_cast<std::size_t>(std::llround(ratio * n));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    const auto order = rng.permutation(idx.size());
    for (std::size_t k = 0; k < n_train; ++k) to_train[idx[order[k]]] = 1;
  }

  DatasetSplit out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (to_train[i] ? out.train : out.val).push_back(samples[i]);
  }
  return out;
}

std::string dataset_to_text(const std::vector<LabeledSample>& samples) {
  std::vector<Row> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) rows.push_back({s.id, s.class_id, s.attributes, s.input, 0});
  return rows_to_text(rows, 'x');
}

std::vector<LabeledSample> dataset_from_text(std::string_view text) {
  std::vector<LabeledSample> out;
  for (auto& r : rows_from_text(text, 'x')) {
    out.push_back({std::move(r.id), r.class_id, std::move(r.attributes), std::move(r.values)});
  }
  return out;
}

void save_dataset(const std::vector<LabeledSample>& samples, const std::string& path) {
  textio::write_file(path, dataset_to_text(samples));
}

std::vector<LabeledSample> load_dataset(const std::string& path) {
  return dataset_from_text(textio::read_file(path));
}

std::string embeddings_to_text(const std::vector<EmbeddingRecord>& records) {
  std::vector<Row> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back({r.id, r.class_id, r.attributes, r.embedding, 0});
  return rows_to_text(rows, 'e');
}

std::vector<EmbeddingRecord> embeddings_from_text(std::string_view text) {
  std::vector<EmbeddingRecord> out;
  for (auto& r : rows_from_text(text, 'e')) {
    const double norm = l2_norm(r.values);
    if (norm < kZeroNormThreshold) {
      throw Error(ErrorCode::kParseError,
                  "line " + std::to_string(r.line) + ": ZeroVector embedding for '" + r.id + "'");
    }
    if (std::abs(norm - 1.0) > 1e-12) l2_normalize_inplace(r.values);
    out.push_back({std::move(r.id), r.class_id, std::move(r.attributes), std::move(r.values)});
  }
  return out;
}

void save_embeddings(const std::vector<EmbeddingRecord>& records, const std::string& path) {
  textio::write_file(path, embeddings_to_text(records));
}

std::vector<EmbeddingRecord> load_embeddings(const std::string& path) {
  return embeddings_from_text(textio::read_file(path));
}

}  // namespace fairmargin
