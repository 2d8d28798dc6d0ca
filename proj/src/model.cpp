#include "fairmargin/model.hpp"

#include <string>

#include "fairmargin/error.hpp"
#include "fairmargin/textio.hpp"

namespace fairmargin {

namespace {

constexpr std::string_view kCheckpointHeader = "fairmargin-checkpoint v1";
constexpr std::string_view kHeadHeader = "fairmargin-head v1";

[[noreturn]] void parse_fail(const std::string& what) {
  throw Error(ErrorCode::kParseError, what);
}

// Returns the text between "[name]\n" and the next section marker.
std::string_view section(std::string_view text, std::string_view name) {
  const std::string marker = "\n[" + std::string(name) + "]\n";
  const auto start = text.find(marker);
  if (start == std::string_view::npos) parse_fail("checkpoint missing section [" + std::string(name) + "]");
  const auto body = start + marker.size();
  const auto end = text.find("\n[", body);
  return text.substr(body, end == std::string_view::npos ? std::string_view::npos : end + 1 - body);
}

}  // namespace

ModelGrads zeros_like(const Model& model) {
  ModelGrads g;
  for (const auto& layer : model.encoder.layers) {
    g.encoder.push_back({Matrix(layer.weights.rows(), layer.weights.cols()),
                         Vector(layer.bias.size(), 0.0)});
  }
  g.head = Matrix(model.head.class_count(), model.head.dim());
  return g;
}

std::string head_to_text(const ClassifierHead& head) {
  std::string out;
  out += kHeadHeader;
  out += "\nshape," + std::to_string(head.class_count()) + ',' + std::to_string(head.dim()) + '\n';
  for (std::size_t c = 0; c < head.class_count(); ++c) {
    out += "row," + std::to_string(c);
    for (double v : head.column(c)) out += ',' + textio::format_double(v);
    out += '\n';
  }
  return out;
}

ClassifierHead head_from_text(std::string_view text) {
  textio::LineReader reader(text);
  std::string_view line;
  if (!reader.next(line) || line != kHeadHeader) parse_fail("unexpected head header");
  if (!reader.next(line)) parse_fail("missing head shape");
  auto fields = textio::split(line, ',');
  if (fields.size() != 3 || fields[0] != "shape") parse_fail("malformed head shape");
  const auto classes = textio::parse_int(fields[1], "classes");
  const auto dim = textio::parse_int(fields[2], "dim");
  if (classes <= 0 || dim <= 0) parse_fail("head shape must be positive");

  ClassifierHead head;
  Matrix& w = head.mutable_weights();
  w = Matrix(static_cast<std::size_t>(classes), static_cast<std::size_t>(dim));
  for (std::size_t c = 0; c < w.rows(); ++c) {
    if (!reader.next(line)) parse_fail("missing head row " + std::to_string(c));
    fields = textio::split(line, ',');
    if (fields.size() != 2 + w.cols() || fields[0] != "row" ||
        textio::parse_int(fields[1], "row") != static_cast<long long>(c)) {
      parse_fail("malformed head row " + std::to_string(c));
    }
    auto row = w.row(c);
    for (std::size_t k = 0; k < w.cols(); ++k) row[k] = textio::parse_double(fields[k + 2], "head weight");
  }
  return head;
}

std::string checkpoint_to_text(const Checkpoint& ckpt) {
  std::string out;
  out += kCheckpointHeader;
  out += "\n[encoder]\n";
  out += encoder_to_text(ckpt.model.encoder);
  out += "[head]\n";
  out += head_to_text(ckpt.model.head);
  out += "[favoritism]\n";
  out += favoritism_to_text(ckpt.favoritism);
  return out;
}

Checkpoint checkpoint_from_text(std::string_view text) {
  if (!text.starts_with(kCheckpointHeader)) parse_fail("unexpected checkpoint header");
  Checkpoint ckpt;
  ckpt.model.encoder = encoder_from_text(section(text, "encoder"));
  ckpt.model.head = head_from_text(section(text, "head"));
  ckpt.favoritism = favoritism_from_text(section(text, "favoritism"));
  if (ckpt.model.head.dim() != ckpt.model.encoder.spec.embedding_dim() ||
      ckpt.favoritism.class_count() != ckpt.model.head.class_count()) {
    throw Error(ErrorCode::kSchemaMismatch, "checkpoint sections disagree on shape");
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  textio::write_file(path, checkpoint_to_text(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  return checkpoint_from_text(textio::read_file(path));
}

}  // namespace fairmargin
