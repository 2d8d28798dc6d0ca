#include "fairmargin/config.hpp"

#include <functional>
#include <map>
#include <set>

#include "fairmargin/error.hpp"
#include "fairmargin/textio.hpp"

namespace fairmargin {

namespace {

using Setter = std::function<void(RunConfig&, std::string_view)>;

double as_double(std::string_view v) { return textio::parse_double(v, "value"); }

long long as_int(std::string_view v) { return textio::parse_int(v, "value"); }

std::size_t as_size(std::string_view v) {
  const long long n = as_int(v);
  if (n < 0) throw Error(ErrorCode::kParseError, "value must be non-negative");
  return static_cast<std::size_t>(n);
}

bool as_bool(std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error(ErrorCode::kParseError, "expected true or false");
}

std::vector<std::string> as_list(std::string_view v) {
  std::vector<std::string> out;
  if (textio::trim(v).empty()) return out;
  for (auto item : textio::split(v, ',')) {
    item = textio::trim(item);
    if (item.empty()) throw Error(ErrorCode::kParseError, "empty list item");
    out.emplace_back(item);
  }
  return out;
}

std::vector<GroupSpec> as_groups(std::string_view v) {
  std::vector<GroupSpec> groups;
  for (const auto& item : as_list(v)) {
    const auto parts = textio::split(item, ':');
    if (parts.size() != 4) {
      throw Error(ErrorCode::kParseError, "group '" + item + "' is not name:classes:sigma:samples");
    }
    groups.push_back({std::string(parts[0]), as_size(parts[1]), as_double(parts[2]),
                      as_size(parts[3])});
  }
  return groups;
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"seed", [](RunConfig& c, std::string_view v) { c.set_seed(static_cast<std::uint64_t>(as_size(v))); }},
      {"groups", [](RunConfig& c, std::string_view v) { c.synthetic.groups = as_groups(v); }},
      {"input_dim", [](RunConfig& c, std::string_view v) { c.synthetic.input_dim = as_size(v); }},
      {"prototype_separation", [](RunConfig& c, std::string_view v) { c.synthetic.prototype_separation = as_double(v); }},
      {"batch_size", [](RunConfig& c, std::string_view v) { c.train.batch_size = as_size(v); }},
      {"epochs", [](RunConfig& c, std::string_view v) { c.train.epochs = static_cast<int>(as_size(v)); }},
      {"lr_start", [](RunConfig& c, std::string_view v) { c.train.lr_start = as_double(v); }},
      {"lr_end", [](RunConfig& c, std::string_view v) { c.train.lr_end = as_double(v); }},
      {"weight_decay", [](RunConfig& c, std::string_view v) { c.train.weight_decay = as_double(v); }},
      {"momentum", [](RunConfig& c, std::string_view v) { c.train.momentum = as_double(v); }},
      {"scale", [](RunConfig& c, std::string_view v) { c.train.margin_params.scale = as_double(v); }},
      {"margin", [](RunConfig& c, std::string_view v) { c.train.margin_params.margin = as_double(v); }},
      {"gamma", [](RunConfig& c, std::string_view v) { c.train.fairness_params.gamma = as_double(v); }},
      {"harmony", [](RunConfig& c, std::string_view v) { c.train.fairness_params.harmony = as_double(v); }},
      {"loss", [](RunConfig& c, std::string_view v) { c.train.loss = parse_loss_kind(v); }},
      {"favoritism_source", [](RunConfig& c, std::string_view v) { c.train.favoritism_source = parse_favoritism_source(v); }},
      {"split_ratio", [](RunConfig& c, std::string_view v) { c.train.split_ratio = as_double(v); }},
      {"early_stop_patience", [](RunConfig& c, std::string_view v) { c.train.early_stop_patience = static_cast<int>(as_size(v)); }},
      {"hidden_widths", [](RunConfig& c, std::string_view v) {
         c.train.hidden_widths.clear();
         for (const auto& w : as_list(v)) c.train.hidden_widths.push_back(as_size(w));
       }},
      {"embedding_dim", [](RunConfig& c, std::string_view v) { c.train.embedding_dim = as_size(v); }},
      {"activation", [](RunConfig& c, std::string_view v) { c.train.activation = parse_activation(v); }},
      {"checkpoint_interval", [](RunConfig& c, std::string_view v) { c.checkpoint_interval = static_cast<int>(as_size(v)); }},
      {"log_wall_time", [](RunConfig& c, std::string_view v) { c.log_wall_time = as_bool(v); }},
      {"genuine_pairs_per_class", [](RunConfig& c, std::string_view v) { c.eval.genuine_pairs_per_class = as_size(v); }},
      {"impostor_pairs", [](RunConfig& c, std::string_view v) { c.eval.impostor_pairs = as_size(v); }},
      {"eval_attributes", [](RunConfig& c, std::string_view v) { c.eval.attributes = as_list(v); }},
      {"gradcheck_configurations", [](RunConfig& c, std::string_view v) { c.grad_check.configurations = as_size(v); }},
      {"gradcheck_step", [](RunConfig& c, std::string_view v) { c.grad_check.step = as_double(v); }},
  };
  return table;
}

}  // namespace

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  synthetic.seed = s;
  train.seed = s;
  grad_check.seed = s;
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  std::set<std::string, std::less<>> seen;
  textio::LineReader reader(text);
  std::string_view line;
  while (reader.next(line)) {
    line = textio::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(reader.line_number());
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kConfigInvalid, where + ": expected key = value");
    }
    const std::string key(textio::trim(line.substr(0, eq)));
    const auto value = textio::trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      throw Error(ErrorCode::kConfigInvalid, where + ": unknown key '" + key + "'");
    }
    if (!seen.insert(key).second) {
      throw Error(ErrorCode::kConfigInvalid, where + ": duplicate key '" + key + "'");
    }
    try {
      it->second(cfg, value);
    } catch (const Error& e) {
      throw Error(ErrorCode::kConfigInvalid,
                  where + ": bad value for '" + key + "': " + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(textio::read_file(path));
}

}  // namespace fairmargin
