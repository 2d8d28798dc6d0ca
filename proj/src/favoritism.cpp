#include "fairmargin/favoritism.hpp"

#include <cmath>

#include "fairmargin/error.hpp"
#include "fairmargin/textio.hpp"

namespace fairmargin {

namespace {

constexpr std::string_view kStateHeader = "fairmargin-favoritism v1";
constexpr std::string_view kHistoryHeader = "fairmargin-favoritism-history v1";
constexpr std::string_view kStateColumns = "class,mean_conf,favoritism,margin_coeff";
constexpr std::string_view kHistoryColumns =
    "epoch,class,mean_conf,grand_mean,favoritism,margin_coeff";

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::kParseError, "line " + std::to_string(line) + ": " + what);
}

}  // namespace

void validate(const FairnessParams& params) {
  if (!(params.gamma >= 0.0) || !std::isfinite(params.gamma)) {
    throw Error(ErrorCode::kConfigInvalid, "gamma must be finite and >= 0");
  }
  if (!(params.harmony >= 0.0 && params.harmony <= 1.0)) {
    throw Error(ErrorCode::kConfigInvalid, "harmony must lie in [0, 1]");
  }
}

void ConfidenceAccumulator::add(ClassId label, std::span<const double> probs) {
  if (label < 0 || static_cast<std::size_t>(label) >= class_count()) {
    throw Error(ErrorCode::kLabelOutOfRange,
                "label " + std::to_string(label) + " with " +
                    std::to_string(class_count()) + " classes");
  }
  if (probs.size() != class_count()) {
    throw Error(ErrorCode::kDimensionMismatch, "probability vector length mismatch");
  }
  const auto c = static_cast<std::size_t>(label);
  sum_conf[c] += probs[c];
  count[c] += 1;
}

void ConfidenceAccumulator::merge(const ConfidenceAccumulator& other) {
  if (other.class_count() != class_count()) {
    throw Error(ErrorCode::kShapeMismatch, "accumulators differ in class count");
  }
  for (std::size_t c = 0; c < class_count(); ++c) {
    sum_conf[c] += other.sum_conf[c];
    count[c] += other.count[c];
  }
}

ConfidenceAccumulator accumulate(ConfidenceAccumulator acc, ClassId label,
                                 std::span<const double> probs) {
  acc.add(label, probs);
  return acc;
}

FavoritismState FavoritismState::initial(std::size_t class_count) {
  FavoritismState s;
  s.mean_conf.assign(class_count, 0.0);
  s.favoritism.assign(class_count, 0.0);
  s.margin_coeff.assign(class_count, 1.0);
  return s;
}

FavoritismState finalize_favoritism(const ConfidenceAccumulator& acc) {
  const std::size_t classes = acc.class_count();
  FavoritismState s;
  s.mean_conf.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    if (acc.count[c] == 0) {
      throw Error(ErrorCode::kEmptyClass,
                  "class " + std::to_string(c) + " has no samples");
    }
    s.mean_conf[c] = acc.sum_conf[c] / static_cast<double>(acc.count[c]);
  }
  // Mean taken about the first entry, so equal confidences give f = 0 exactly.
  double shift = 0.0;
  for (double p : s.mean_conf) shift += p - s.mean_conf.front();
  s.grand_mean = classes ? s.mean_conf.front() + shift / static_cast<double>(classes) : 0.0;
  s.favoritism.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    s.favoritism[c] = s.mean_conf[c] - s.grand_mean;
  }
  return s;
}

double margin_coefficient(double favoritism, const FairnessParams& params) {
  const double slope =
      favoritism < 0.0 ? params.gamma : params.gamma * params.harmony;
  return 2.0 / (1.0 + std::exp(slope * favoritism));
}

FavoritismState update_state(const FavoritismState& state,
                             const ConfidenceAccumulator& acc,
                             const FairnessParams& params) {
  validate(params);
  FavoritismState next = finalize_favoritism(acc);
  next.margin_coeff.resize(next.favoritism.size());
  for (std::size_t c = 0; c < next.favoritism.size(); ++c) {
    next.margin_coeff[c] = margin_coefficient(next.favoritism[c], params);
  }
  next.epoch = state.epoch + 1;
  return next;
}

std::string favoritism_to_text(const FavoritismState& state) {
  using textio::format_double;
  std::string out;
  out += kStateHeader;
  out += "\nepoch,";
  out += std::to_string(state.epoch);
  out += "\ngrand_mean,";
  out += format_double(state.grand_mean);
  out += '\n';
  out += kStateColumns;
  out += '\n';
  for (std::size_t c = 0; c < state.class_count(); ++c) {
    out += std::to_string(c) + ',' + format_double(state.mean_conf[c]) + ',' +
           format_double(state.favoritism[c]) + ',' +
           format_double(state.margin_coeff[c]) + '\n';
  }
  return out;
}

FavoritismState favoritism_from_text(std::string_view text) {
  textio::LineReader reader(text);
  std::string_view line;
  auto expect_line = [&](std::string_view what) {
    if (!reader.next(line)) parse_fail(reader.line_number() + 1, "missing " + std::string(what));
  };
  expect_line("header");
  if (line != kStateHeader) parse_fail(reader.line_number(), "unexpected header");

  FavoritismState s;
  expect_line("epoch");
  auto fields = textio::split(line, ',');
  if (fields.size() != 2 || fields[0] != "epoch") parse_fail(reader.line_number(), "expected epoch");
  s.epoch = static_cast<int>(textio::parse_int(fields[1], "epoch"));

  expect_line("grand_mean");
  fields = textio::split(line, ',');
  if (fields.size() != 2 || fields[0] != "grand_mean") {
    parse_fail(reader.line_number(), "expected grand_mean");
  }
  s.grand_mean = textio::parse_double(fields[1], "grand_mean");

  expect_line("column header");
  if (line != kStateColumns) parse_fail(reader.line_number(), "unexpected column header");

  while (reader.next(line)) {
    if (line.empty()) continue;
    fields = textio::split(line, ',');
    if (fields.size() != 4) parse_fail(reader.line_number(), "expected 4 fields");
    const auto c = textio::parse_int(fields[0], "class");
    if (c != static_cast<long long>(s.mean_conf.size())) {
      parse_fail(reader.line_number(), "classes must be listed in order");
    }
    s.mean_conf.push_back(textio::parse_double(fields[1], "mean_conf"));
    s.favoritism.push_back(textio::parse_double(fields[2], "favoritism"));
    s.margin_coeff.push_back(textio::parse_double(fields[3], "margin_coeff"));
  }
  return s;
}

void save_favoritism(const FavoritismState& state, const std::string& path) {
  textio::write_file(path, favoritism_to_text(state));
}

FavoritismState load_favoritism(const std::string& path) {
  return favoritism_from_text(textio::read_file(path));
}

std::string favoritism_history_to_text(const std::vector<FavoritismState>& history) {
  using textio::format_double;
  std::string out;
  out += kHistoryHeader;
  out += '\n';
  out += kHistoryColumns;
  out += '\n';
  for (const auto& s : history) {
    for (std::size_t c = 0; c < s.class_count(); ++c) {
      out += std::to_string(s.epoch) + ',' + std::to_string(c) + ',' +
             format_double(s.mean_conf[c]) + ',' + format_double(s.grand_mean) + ',' +
             format_double(s.favoritism[c]) + ',' + format_double(s.margin_coeff[c]) +
             '\n';
    }
  }
  return out;
}

std::vector<FavoritismState> favoritism_history_from_text(std::string_view text) {
  textio::LineReader reader(text);
  std::string_view line;
  if (!reader.next(line) || line != kHistoryHeader) parse_fail(1, "unexpected header");
  if (!reader.next(line) || line != kHistoryColumns) parse_fail(2, "unexpected column header");

  std::vector<FavoritismState> history;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto fields = textio::split(line, ',');
    if (fields.size() != 6) parse_fail(reader.line_number(), "expected 6 fields");
    const int epoch = static_cast<int>(textio::parse_int(fields[0], "epoch"));
    const auto c = textio::parse_int(fields[1], "class");
    if (c == 0) {
      history.emplace_back();
      history.back().epoch = epoch;
      history.back().grand_mean = textio::parse_double(fields[3], "grand_mean");
    } else if (history.empty() || history.back().epoch != epoch ||
               c != static_cast<long long>(history.back().mean_conf.size())) {
      parse_fail(reader.line_number(), "rows out of order");
    }
    auto& s = history.back();
    s.mean_conf.push_back(textio::parse_double(fields[2], "mean_conf"));
    s.favoritism.push_back(textio::parse_double(fields[4], "favoritism"));
    s.margin_coeff.push_back(textio::parse_double(fields[5], "margin_coeff"));
  }
  return history;
}

}  // namespace fairmargin
