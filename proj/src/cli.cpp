#include "dlk/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "dlk/attention.hpp"
#include "dlk/checks.hpp"
#include "dlk/cnn.hpp"
#include "dlk/datasets.hpp"
#include "dlk/graphnet.hpp"
#include "dlk/linear.hpp"
#include "dlk/mlp.hpp"
#include "dlk/optim.hpp"
#include "dlk/random.hpp"
#include "dlk/recurrent.hpp"
#include "dlk/scalers.hpp"

namespace dlk::cli {

namespace {

using json = nlohmann::json;

enum class FieldType { String, Uint, Number, Bool, UintList, Optimizer, Blocks };

struct FieldInfo {
  FieldType type;
  const char* help;
};

const std::map<std::string, FieldInfo>& field_table() {
  static const std::map<std::string, FieldInfo> table{
      {"seed", {FieldType::Uint, "random seed"}},
      {"data", {FieldType::String, "input CSV"}},
      {"out", {FieldType::String, "output CSV path"}},
      {"kind", {FieldType::String, "dataset kind: ball_annulus, blobs, xor, shapes_grid, copy_sequence"}},
      {"n", {FieldType::Uint, "points per class, or sequence count"}},
      {"n_inner", {FieldType::Uint, "ball points"}},
      {"n_outer", {FieldType::Uint, "annulus points"}},
      {"margin", {FieldType::Number, "blob margin"}},
      {"dims", {FieldType::Uint, "blob dimension"}},
      {"noise", {FieldType::Number, "pixel noise standard deviation"}},
      {"length", {FieldType::Uint, "sequence length"}},
      {"lag", {FieldType::Uint, "copy lag"}},
      {"max_epochs", {FieldType::Uint, "epoch cap"}},
      {"fit_bias", {FieldType::Bool, "learn an offset"}},
      {"shuffle", {FieldType::Bool, "shuffle every epoch"}},
      {"scaler", {FieldType::String, "none, minmax or standard"}},
      {"epochs", {FieldType::Uint, "training epochs"}},
      {"learning_rate", {FieldType::Number, "step size"}},
      {"layer_sizes", {FieldType::UintList, "n_0,...,n_d"}},
      {"optimizer", {FieldType::Optimizer, "gd, momentum, rmsprop or adam"}},
      {"batch_size", {FieldType::Uint, "mini-batch size"}},
      {"dropout", {FieldType::Number, "hidden dropout rate"}},
      {"l2_lambda", {FieldType::Number, "L2 penalty"}},
      {"model_out", {FieldType::String, "write the trained model as JSON"}},
      {"blocks", {FieldType::Blocks, "layer descriptors"}},
      {"cell", {FieldType::String, "simple, lstm or gru"}},
      {"hidden", {FieldType::Uint, "hidden size"}},
      {"profile_out", {FieldType::String, "write the Jacobian norm profile CSV"}},
      {"d_k", {FieldType::Uint, "key width"}},
      {"d_v", {FieldType::Uint, "value width"}},
      {"graph", {FieldType::String, "edge-list file"}},
      {"n_max", {FieldType::Uint, "largest cycle length"}},
      {"module", {FieldType::String, "suite or group name"}},
      {"instances", {FieldType::Uint, "random instances per suite"}},
  };
  return table;
}

const std::map<std::string, std::vector<std::string>>& subcommand_fields() {
  static const std::map<std::string, std::vector<std::string>> fields{
      {"gen-data", {"seed", "out", "kind", "n", "n_inner", "n_outer", "margin", "dims", "noise", "length", "lag"}},
      {"train-perceptron", {"seed", "data", "out", "max_epochs", "fit_bias", "shuffle", "scaler"}},
      {"train-logreg", {"seed", "data", "out", "epochs", "learning_rate", "scaler"}},
      {"train-mlp",
       {"seed", "data", "out", "layer_sizes", "optimizer", "learning_rate", "epochs", "batch_size", "scaler", "dropout",
        "l2_lambda", "shuffle", "model_out"}},
      {"train-cnn", {"seed", "data", "out", "blocks", "optimizer", "learning_rate", "epochs", "batch_size", "shuffle"}},
      {"train-rnn",
       {"seed", "data", "out", "cell", "hidden", "optimizer", "learning_rate", "epochs", "batch_size", "profile_out", "n",
        "length", "lag"}},
      {"demo-attention", {"seed", "data", "out", "d_k", "d_v"}},
      {"graph-census", {"out", "graph", "n_max"}},
      {"gradcheck", {"seed", "out", "module", "instances"}},
  };
  return fields;
}

const char* describe(FieldType t) {
  switch (t) {
    case FieldType::String: return "a string";
    case FieldType::Uint: return "a non-negative integer";
    case FieldType::Number: return "a number";
    case FieldType::Bool: return "a boolean";
    case FieldType::UintList: return "a list of non-negative integers";
    case FieldType::Optimizer: return "an optimizer name or object";
    case FieldType::Blocks: return "a list of block objects";
  }
  return "";
}

void check_keys(const json& obj, const std::string& where, const std::map<std::string, FieldType>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    auto it = allowed.find(key);
    if (it == allowed.end()) throw ConfigError(fmt::format("{}: unknown field '{}'", where, key));
    const bool ok = it->second == FieldType::String   ? value.is_string()
                    : it->second == FieldType::Uint   ? value.is_number_unsigned()
                    : it->second == FieldType::Number ? value.is_number()
                                                      : true;
    if (!ok) throw ConfigError(fmt::format("{}.{} must be {}", where, key, describe(it->second)));
  }
}

void check_field(const std::string& name, FieldType type, const json& value) {
  bool ok = false;
  switch (type) {
    case FieldType::String: ok = value.is_string(); break;
    case FieldType::Uint: ok = value.is_number_unsigned(); break;
    case FieldType::Number: ok = value.is_number(); break;
    case FieldType::Bool: ok = value.is_boolean(); break;
    case FieldType::UintList:
      ok = value.is_array() && std::all_of(value.begin(), value.end(), [](const json& v) { return v.is_number_unsigned(); });
      break;
    case FieldType::Optimizer:
      if (value.is_object()) {
        check_keys(value, name,
                   {{"kind", FieldType::String},
                    {"learning_rate", FieldType::Number},
                    {"gamma", FieldType::Number},
                    {"beta", FieldType::Number},
                    {"beta1", FieldType::Number},
                    {"beta2", FieldType::Number},
                    {"epsilon", FieldType::Number}});
        ok = true;
      } else {
        ok = value.is_string();
      }
      break;
    case FieldType::Blocks:
      ok = value.is_array();
      for (std::size_t i = 0; ok && i < value.size(); ++i) {
        if (!value[i].is_object()) {
          ok = false;
          break;
        }
        check_keys(value[i], fmt::format("{}[{}]", name, i),
                   {{"type", FieldType::String},
                    {"out_channels", FieldType::Uint},
                    {"kernel", FieldType::Uint},
                    {"stride", FieldType::Uint},
                    {"pad", FieldType::Uint},
                    {"size", FieldType::Uint},
                    {"rate", FieldType::Number},
                    {"units", FieldType::Uint}});
        if (!value[i].contains("type")) throw ConfigError(fmt::format("{}[{}]: missing field 'type'", name, i));
      }
      break;
  }
  if (!ok) throw ConfigError(fmt::format("{} must be {}", name, describe(type)));
}

/// Validated settings for one subcommand.
class Config {
 public:
  Config(std::string task, json values) : task_(std::move(task)), j_(std::move(values)) {}

  const std::string& task() const { return task_; }
  bool has(const char* name) const { return j_.contains(name); }
  const json& raw(const char* name) const { return j_.at(name); }

  std::string str(const char* name, const std::string& def) const { return has(name) ? j_.at(name).get<std::string>() : def; }
  std::uint64_t uint(const char* name, std::uint64_t def) const { return has(name) ? j_.at(name).get<std::uint64_t>() : def; }
  double number(const char* name, double def) const { return has(name) ? j_.at(name).get<double>() : def; }
  bool flag(const char* name, bool def) const { return has(name) ? j_.at(name).get<bool>() : def; }
  std::size_t positive(const char* name, std::size_t def) const {
    const std::uint64_t v = uint(name, def);
    if (v == 0) throw ConfigError(fmt::format("{} must be at least 1", name));
    return static_cast<std::size_t>(v);
  }

 private:
  std::string task_;
  json j_;
};

json load_config_file(const std::string& path, const std::string& task) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("config: cannot open '{}'", path));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("config: invalid JSON in '{}': {}", path, e.what()));
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  const auto& allowed = subcommand_fields().at(task);
  for (const auto& [key, value] : j.items()) {
    if (key == "task") {
      if (!value.is_string() || value.get<std::string>() != task) {
        throw ConfigError(fmt::format("config: task '{}' does not match subcommand '{}'", value.dump(), task));
      }
      continue;
    }
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(fmt::format("config: unknown field '{}' for {}", key, task));
    }
    check_field(key, field_table().at(key).type, value);
  }
  j.erase("task");
  return j;
}

/// Command-line storage for one field.
struct Binding {
  std::string field;
  FieldType type;
  std::string s;
  std::uint64_t u = 0;
  double d = 0.0;
  bool b = false;
  std::vector<std::size_t> list;
  CLI::Option* option = nullptr;

  bool given() const { return option != nullptr && option->count() > 0; }

  void apply(json& j) const {
    switch (type) {
      case FieldType::String: j[field] = s; break;
      case FieldType::Uint: j[field] = u; break;
      case FieldType::Number: j[field] = d; break;
      case FieldType::Bool: j[field] = b; break;
      case FieldType::UintList: j[field] = list; break;
      case FieldType::Optimizer:
        if (j.contains(field) && j[field].is_object()) {
          j[field]["kind"] = s;
        } else {
          j[field] = s;
        }
        break;
      case FieldType::Blocks: break;
    }
  }
};

std::string flag_name(const std::string& field) {
  std::string f = field;
  std::replace(f.begin(), f.end(), '_', '-');
  return "--" + f;
}

void bind(CLI::App* app, Binding& b) {
  const FieldInfo& info = field_table().at(b.field);
  const std::string name = flag_name(b.field);
  switch (b.type) {
    case FieldType::String:
    case FieldType::Optimizer: b.option = app->add_option(name, b.s, info.help); break;
    case FieldType::Uint: b.option = app->add_option(name, b.u, info.help); break;
    case FieldType::Number: b.option = app->add_option(name, b.d, info.help); break;
    case FieldType::Bool: b.option = app->add_flag(name + ",!--no-" + name.substr(2), b.b, info.help); break;
    case FieldType::UintList: b.option = app->add_option(name, b.list, info.help)->delimiter(','); break;
    case FieldType::Blocks: break;  // config file only
  }
}

// Output routing.

struct Io {
  std::ostream& csv;
  std::ostream& summary;
};

std::string num(double v) { return fmt::format("{}", v); }

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError(fmt::format("cannot write '{}'", path));
  f << text;
}

// Shared pieces.

OptimizerConfig optimizer_from(const Config& c) {
  OptimizerConfig o = OptimizerConfig::defaults(OptimizerKind::Adam);
  o.learning_rate = 0.01;
  if (c.has("optimizer")) {
    const json& spec = c.raw("optimizer");
    try {
      if (spec.is_string()) {
        o = OptimizerConfig::defaults(parse_optimizer_kind(spec.get<std::string>()));
      } else {
        if (spec.contains("kind")) o = OptimizerConfig::defaults(parse_optimizer_kind(spec["kind"].get<std::string>()));
        o.learning_rate = spec.value("learning_rate", o.learning_rate);
        o.gamma = spec.value("gamma", o.gamma);
        o.beta = spec.value("beta", o.beta);
        o.beta1 = spec.value("beta1", o.beta1);
        o.beta2 = spec.value("beta2", o.beta2);
        o.epsilon = spec.value("epsilon", o.epsilon);
      }
    } catch (const std::invalid_argument& e) {
      throw ConfigError(fmt::format("optimizer: {}", e.what()));
    }
  }
  o.learning_rate = c.number("learning_rate", o.learning_rate);
  try {
    o.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("optimizer: {}", e.what()));
  }
  return o;
}

Matrix apply_scaler(const Config& c, const Matrix& x) {
  const std::string kind = c.str("scaler", "none");
  if (kind == "none") return x;
  if (kind == "minmax") return transform(x, fit_scaler(x, ScalerKind::MinMax));
  if (kind == "standard") return transform(x, fit_scaler(x, ScalerKind::Standard));
  throw ConfigError(fmt::format("scaler: expected none, minmax or standard, got '{}'", kind));
}

std::uint64_t model_seed(const Config& c) { return mix_seed(c.uint("seed", 0), 1); }

std::size_t class_count(const std::vector<int>& labels) {
  int hi = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw ConfigError(fmt::format("data: row {} has negative class label {}", i, labels[i]));
    hi = std::max(hi, labels[i]);
  }
  if (hi < 1) throw ConfigError("data: need at least two classes");
  return static_cast<std::size_t>(hi) + 1;
}

LabeledSet binary_set(const Table& t, LabelConvention target) {
  bool zero_one = true;
  bool plus_minus = true;
  for (int y : t.labels) {
    zero_one = zero_one && (y == 0 || y == 1);
    plus_minus = plus_minus && (y == -1 || y == 1);
  }
  if (!zero_one && !plus_minus) throw ConfigError("data: labels must be 0/1 or -1/+1");
  return with_convention(LabeledSet(t.x, t.labels, zero_one ? LabelConvention::ZeroOne : LabelConvention::PlusMinusOne),
                         target);
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Subcommands.

int gen_data(const Config& c, Io& io) {
  const std::string kind = c.str("kind", "");
  const std::uint64_t seed = c.uint("seed", 0);
  Table t;
  if (kind == "ball_annulus") {
    t = to_table(make_ball_annulus(c.positive("n_inner", 100), c.positive("n_outer", 100), seed));
  } else if (kind == "blobs") {
    t = to_table(make_blobs(c.positive("n", 50), c.number("margin", 1.0), seed, c.positive("dims", 2)).data);
  } else if (kind == "xor") {
    t = to_table(make_xor());
  } else if (kind == "shapes_grid") {
    t = to_table(make_shapes_grid(c.positive("n", 64), seed, c.number("noise", 0.05)));
  } else if (kind == "copy_sequence") {
    const std::size_t lag = c.uint("lag", 1);
    t = copy_sequence_table(make_copy_sequence(c.positive("n", 64), c.positive("length", 10), lag, seed), lag);
  } else if (kind.empty()) {
    throw ConfigError("kind: required (ball_annulus, blobs, xor, shapes_grid, copy_sequence)");
  } else {
    throw ConfigError(fmt::format("kind: unknown dataset kind '{}'", kind));
  }
  write_csv(io.csv, t);
  io.summary << fmt::format("gen-data: kind={} rows={} features={}\n", kind, t.size(), t.x.cols());
  return kExitOk;
}

Table load_or(const Config& c, const std::function<Table()>& fallback) {
  return c.has("data") ? read_csv_file(c.str("data", "")) : fallback();
}

int train_perceptron(const Config& c, Io& io) {
  const Table t = load_or(c, [&] { return to_table(make_blobs(50, 1.0, c.uint("seed", 0)).data); });
  LabeledSet data = binary_set(t, LabelConvention::PlusMinusOne);
  data.x = apply_scaler(c, data.x);
  PerceptronOptions o;
  o.max_epochs = c.positive("max_epochs", 1000);
  o.fit_bias = c.flag("fit_bias", true);
  o.shuffle = c.flag("shuffle", false);
  o.seed = model_seed(c);
  o.record_trace = true;
  const PerceptronModel m = perceptron_train(data, o);
  std::vector<std::size_t> per_epoch(m.epochs_run, 0);
  for (const PerceptronUpdate& u : m.trace) ++per_epoch[u.epoch];
  io.csv << "epoch,loss\n";
  for (std::size_t e = 0; e < per_epoch.size(); ++e) io.csv << e << ',' << per_epoch[e] << '\n';
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += perceptron_predict(m, data.x.row(i)) == data.y[i];
  io.summary << fmt::format("train-perceptron: epochs={} updates={} converged={} accuracy={}\n", m.epochs_run,
                            m.update_count, m.converged ? "true" : "false",
                            num(static_cast<double>(correct) / static_cast<double>(data.size())));
  return kExitOk;
}

int train_logreg(const Config& c, Io& io) {
  const Table t = load_or(c, [&] { return to_table(make_ball_annulus(100, 100, c.uint("seed", 0))); });
  LabeledSet data = binary_set(t, LabelConvention::ZeroOne);
  data.x = apply_scaler(c, data.x);
  LogisticOptions o;
  o.epochs = c.positive("epochs", 100);
  o.learning_rate = c.number("learning_rate", 0.1);
  o.seed = model_seed(c);
  const LogisticModel m = logistic_train(data, o);
  io.csv << "epoch,loss\n";
  for (std::size_t e = 0; e < m.loss_history.size(); ++e) io.csv << e << ',' << num(m.loss_history[e]) << '\n';
  if (!all_finite(m.loss_history)) throw TaskFailure("train-logreg: loss became non-finite");
  io.summary << fmt::format("train-logreg: epochs={} final_loss={} accuracy={}\n", m.loss_history.size(),
                            num(m.loss_history.back()), num(logistic_accuracy(m, data)));
  return kExitOk;
}

template <typename Epoch>
void write_loss_accuracy(std::ostream& out, const std::vector<Epoch>& history) {
  out << "epoch,loss,accuracy\n";
  for (std::size_t e = 0; e < history.size(); ++e) {
    out << e << ',' << num(history[e].loss) << ',' << num(history[e].accuracy) << '\n';
  }
}

/// Cuts a history at the first non-finite loss; returns false when it did.
template <typename Epoch>
bool truncate_at_nonfinite(std::vector<Epoch>& history) {
  auto bad = std::find_if(history.begin(), history.end(), [](const Epoch& e) { return !std::isfinite(e.loss); });
  if (bad == history.end()) return true;
  history.erase(bad, history.end());
  return false;
}

int train_mlp_cmd(const Config& c, Io& io) {
  const Table t = load_or(c, [&] { return to_table(make_ball_annulus(100, 100, c.uint("seed", 0))); });
  const std::size_t classes = class_count(t.labels);
  MlpSpec spec;
  if (c.has("layer_sizes")) {
    spec.layer_sizes = c.raw("layer_sizes").get<std::vector<std::size_t>>();
  } else {
    spec.layer_sizes = {t.x.cols(), 16, 16, classes};
  }
  if (spec.layer_sizes.size() < 2) throw ConfigError("layer_sizes: need at least input and output sizes");
  if (spec.layer_sizes.front() != t.x.cols()) {
    throw ConfigError(fmt::format("layer_sizes: input size {} but the data has {} features", spec.layer_sizes.front(),
                                  t.x.cols()));
  }
  if (spec.layer_sizes.back() < classes) {
    throw ConfigError(fmt::format("layer_sizes: output size {} but labels need {} classes", spec.layer_sizes.back(), classes));
  }
  spec.seed = model_seed(c);
  spec.dropout_rate = c.number("dropout", 0.0);
  spec.l2_lambda = c.number("l2_lambda", 0.0);
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  MlpTrainOptions o;
  o.epochs = c.positive("epochs", 300);
  o.batch_size = c.positive("batch_size", 32);
  o.shuffle = c.flag("shuffle", false);
  o.optimizer = optimizer_from(c);
  MlpTrainResult r = train_mlp(spec, apply_scaler(c, t.x), t.labels, o);
  const bool finite = truncate_at_nonfinite(r.history);
  write_loss_accuracy(io.csv, r.history);
  if (!finite) throw TaskFailure("train-mlp: loss became non-finite");
  if (c.has("model_out")) write_text_file(c.str("model_out", ""), mlp_state_to_json(r.state));
  io.summary << fmt::format("train-mlp: epochs={} final_loss={} accuracy={}\n", r.history.size(),
                            num(r.history.back().loss), num(r.history.back().accuracy));
  return kExitOk;
}

std::vector<BlockDescriptor> blocks_from(const Config& c, std::size_t classes) {
  if (!c.has("blocks")) {
    BlockDescriptor conv{"conv"};
    conv.out_channels = 4;
    conv.kernel = 3;
    conv.pad = 1;
    BlockDescriptor pool{"maxpool"};
    pool.size = 2;
    pool.stride = 2;
    BlockDescriptor dense{"dense"};
    dense.units = classes;
    return {conv, BlockDescriptor{"relu"}, pool, BlockDescriptor{"flatten"}, dense};
  }
  std::vector<BlockDescriptor> out;
  for (const json& b : c.raw("blocks")) {
    BlockDescriptor d;
    d.type = b["type"].get<std::string>();
    d.out_channels = b.value("out_channels", d.out_channels);
    d.kernel = b.value("kernel", d.kernel);
    d.stride = b.value("stride", d.stride);
    d.pad = b.value("pad", d.pad);
    d.size = b.value("size", d.size);
    d.rate = b.value("rate", d.rate);
    d.units = b.value("units", d.units);
    out.push_back(d);
  }
  return out;
}

int train_cnn_cmd(const Config& c, Io& io) {
  const Table t = load_or(c, [&] { return to_table(make_shapes_grid(64, c.uint("seed", 0))); });
  const std::size_t classes = class_count(t.labels);
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(t.x.cols()))));
  if (side * side != t.x.cols()) {
    throw ConfigError(fmt::format("data: {} features do not form a square single-channel image", t.x.cols()));
  }
  const Tensor4 images({t.size(), 1, side, side}, t.x.raw());
  Sequential net;
  try {
    net = build_network(blocks_from(c, classes), {1, 1, side, side}, model_seed(c));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("blocks: {}", e.what()));
  }
  CnnTrainOptions o;
  o.epochs = c.positive("epochs", 10);
  o.batch_size = c.positive("batch_size", 16);
  o.shuffle = c.flag("shuffle", true);
  o.seed = mix_seed(c.uint("seed", 0), 2);
  o.optimizer = optimizer_from(c);
  std::vector<CnnEpoch> history = train_cnn(net, images, t.labels, o);
  const bool finite = truncate_at_nonfinite(history);
  write_loss_accuracy(io.csv, history);
  if (!finite) throw TaskFailure("train-cnn: loss became non-finite");
  io.summary << fmt::format("train-cnn: epochs={} final_loss={} accuracy={}\n", history.size(),
                            num(history.back().loss), num(history.back().accuracy));
  return kExitOk;
}

int train_rnn_cmd(const Config& c, Io& io) {
  CellKind kind;
  try {
    kind = parse_cell_kind(c.str("cell", "simple"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("cell: {}", e.what()));
  }
  if (c.has("profile_out") && kind != CellKind::Simple) throw ConfigError("profile_out: only available for the simple cell");
  std::vector<SequenceExample> data;
  if (c.has("data")) {
    try {
      data = copy_sequences_from_table(read_csv_file(c.str("data", "")));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(fmt::format("data: {}", e.what()));
    }
  } else {
    data = make_copy_sequence(c.positive("n", 64), c.positive("length", 10), c.uint("lag", 1), c.uint("seed", 0));
  }
  RecurrentModel model(kind, 1, c.positive("hidden", 8), 1, OutputKind::Identity, model_seed(c));
  SequenceTrainOptions o;
  o.epochs = c.positive("epochs", 50);
  o.batch_size = c.positive("batch_size", 8);
  o.loss = StepLoss::MeanSquared;
  o.optimizer = optimizer_from(c);
  std::vector<double> history = train_sequence_model(model, data, o);
  auto bad = std::find_if(history.begin(), history.end(), [](double v) { return !std::isfinite(v); });
  const bool finite = bad == history.end();
  history.erase(bad, history.end());
  io.csv << "epoch,loss\n";
  for (std::size_t e = 0; e < history.size(); ++e) io.csv << e << ',' << num(history[e]) << '\n';
  if (!finite) throw TaskFailure("train-rnn: loss became non-finite");
  if (c.has("profile_out")) {
    const RnnForward fwd = rnn_forward(model.simple(), data.front().inputs);
    const std::vector<double> profile = jacobian_norm_profile(model.simple(), fwd, 0);
    std::ostringstream csv;
    csv << "k,norm\n";
    for (std::size_t k = 0; k < profile.size(); ++k) csv << k << ',' << num(profile[k]) << '\n';
    write_text_file(c.str("profile_out", ""), csv.str());
  }
  io.summary << fmt::format("train-rnn: cell={} epochs={} final_loss={}\n", c.str("cell", "simple"), history.size(),
                            history.empty() ? std::string("n/a") : num(history.back()));
  return kExitOk;
}

void write_long(std::ostream& out, const char* name, const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out << name << ',' << i << ',' << j << ',' << num(m(i, j)) << '\n';
}

int demo_attention(const Config& c, Io& io) {
  Matrix x;
  if (c.has("data")) {
    std::ifstream in(c.str("data", ""));
    if (!in) throw ConfigError(fmt::format("data: cannot open '{}'", c.str("data", "")));
    x = read_matrix_csv(in);
  } else {
    Rng rng(c.uint("seed", 0));
    x = rng.normal_matrix(4, 4);
  }
  const std::size_t d = x.cols();
  Rng rng(model_seed(c));
  const AttentionHead head = AttentionHead::random(d, c.positive("d_k", d), c.positive("d_v", d), rng);
  const AttentionCache cache = attention_forward(x, head);
  io.csv << "matrix,row,col,value\n";
  write_long(io.csv, "A", cache.a);
  write_long(io.csv, "Z", cache.z);
  double worst = 0.0;
  for (std::size_t i = 0; i < cache.a.rows(); ++i) {
    double s = 0.0;
    for (double v : cache.a.row(i)) s += v;
    worst = std::max(worst, std::abs(s - 1.0));
  }
  io.summary << fmt::format("demo-attention: n={} d={} d_k={} d_v={} max_row_sum_error={}\n", x.rows(), d,
                            head.key_dim(), head.value_dim(), num(worst));
  return kExitOk;
}

int graph_census(const Config& c, Io& io) {
  if (!c.has("graph")) throw ConfigError("graph: required (edge-list file)");
  EdgeList edges;
  try {
    edges = read_edge_list(c.str("graph", ""));
  } catch (const GraphError& e) {
    throw ConfigError(fmt::format("graph: {}", e.what()));
  } catch (const std::runtime_error& e) {
    throw ConfigError(fmt::format("graph: {}", e.what()));
  }
  const std::size_t n_max = c.positive("n_max", std::max<std::size_t>(edges.graph.nodes().size(), 1));
  const std::vector<BigCount> census = memory_census(edges.graph, n_max);
  io.csv << "n,count\n";
  for (std::size_t n = 0; n < census.size(); ++n) io.csv << n + 1 << ',' << census[n].str() << '\n';
  io.summary << fmt::format("graph-census: nodes={} arcs={} acyclic={}\n", edges.graph.nodes().size(),
                            edges.graph.arcs().size(), is_acyclic(edges.graph) ? "true" : "false");
  return kExitOk;
}

int gradcheck_cmd(const Config& c, Io& io) {
  std::vector<std::string> suites;
  try {
    suites = resolve_suites(c.str("module", "all"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("module: {}", e.what()));
  }
  const std::size_t instances = c.positive("instances", kDefaultCheckInstances);
  io.csv << "suite,instances,max_rel_error,tolerance,worst_block,pass\n";
  std::size_t passed = 0;
  double worst = 0.0;
  std::vector<std::string> failed;
  for (const std::string& s : suites) {
    const SuiteResult r = run_check_suite(s, instances, c.uint("seed", 0));
    io.csv << fmt::format("{},{},{},{},{},{}\n", r.name, r.instances, num(r.report.max_rel_error), num(r.report.tolerance),
                          r.report.worst_block, r.report.pass ? "true" : "false");
    worst = std::max(worst, r.report.max_rel_error);
    if (r.report.pass) {
      ++passed;
    } else {
      failed.push_back(r.name);
    }
  }
  io.summary << fmt::format("gradcheck: {}/{} suites passed, max_rel_error={}{}\n", passed, suites.size(), num(worst),
                            failed.empty() ? "" : fmt::format(" failed: {}", fmt::join(failed, " ")));
  return failed.empty() ? kExitOk : kExitTaskFailure;
}

using Handler = int (*)(const Config&, Io&);

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> table{
      {"gen-data", gen_data},           {"train-perceptron", train_perceptron}, {"train-logreg", train_logreg},
      {"train-mlp", train_mlp_cmd},     {"train-cnn", train_cnn_cmd},           {"train-rnn", train_rnn_cmd},
      {"demo-attention", demo_attention}, {"graph-census", graph_census},       {"gradcheck", gradcheck_cmd},
  };
  return table;
}

const std::map<std::string, std::string>& descriptions() {
  static const std::map<std::string, std::string> d{
      {"gen-data", "write a synthetic dataset as CSV"},
      {"train-perceptron", "train a perceptron; CSV epoch,loss (updates per epoch)"},
      {"train-logreg", "train logistic regression; CSV epoch,loss"},
      {"train-mlp", "train a ReLU/softmax MLP; CSV epoch,loss,accuracy"},
      {"train-cnn", "train a small CNN on 8x8 images; CSV epoch,loss,accuracy"},
      {"train-rnn", "train a recurrent cell on copy sequences; CSV epoch,loss"},
      {"demo-attention", "print attention scores A and output Z; CSV matrix,row,col,value"},
      {"graph-census", "cycle census of an edge-list graph; CSV n,count"},
      {"gradcheck", "run gradient-check suites; CSV report"},
  };
  return d;
}

int dispatch(const std::string& task, const json& values, std::ostream& out, std::ostream& err) {
  const Config config(task, values);
  if (config.has("out")) {
    const std::string path = config.str("out", "");
    std::ofstream file(path, std::ios::binary);
    if (!file) throw ConfigError(fmt::format("out: cannot write '{}'", path));
    Io io{file, out};
    return handlers().at(task)(config, io);
  }
  Io io{out, err};
  return handlers().at(task)(config, io);
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"gen-data",  "train-perceptron", "train-logreg",
                                              "train-mlp", "train-cnn",        "train-rnn",
                                              "demo-attention", "graph-census", "gradcheck"};
  return names;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"dlk: neural-network building blocks with hand-written gradients"};
  app.name("dlk");
  app.require_subcommand(1);
  std::map<std::string, std::string> config_paths;
  std::vector<std::unique_ptr<Binding>> bindings;
  std::map<std::string, CLI::App*> apps;
  for (const std::string& name : subcommands()) {
    CLI::App* sub = app.add_subcommand(name, descriptions().at(name));
    apps[name] = sub;
    sub->add_option("--config", config_paths[name], "JSON run configuration");
    for (const std::string& field : subcommand_fields().at(name)) {
      auto b = std::make_unique<Binding>();
      b->field = field;
      b->type = field_table().at(field).type;
      bind(sub, *b);
      bindings.push_back(std::move(b));
    }
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfigError;
  }
  std::string task;
  for (const auto& [name, sub] : apps)
    if (sub->parsed()) task = name;

  try {
    json values = json::object();
    if (!config_paths[task].empty()) values = load_config_file(config_paths[task], task);
    for (const auto& b : bindings)
      if (b->given() && apps[task]->get_option_no_throw(flag_name(b->field)) == b->option) b->apply(values);
    return dispatch(task, values, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const CsvError& e) {
    err << "error: data: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const TaskFailure& e) {
    err << "error: " << e.what() << '\n';
    return kExitTaskFailure;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitTaskFailure;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace dlk::cli
