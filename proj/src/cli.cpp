#include "stochnet/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stochnet/checkpoint.hpp"
#include "stochnet/random.hpp"
#include "stochnet/synthetic.hpp"
#include "stochnet/transfer.hpp"

namespace stochnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class CliError : public Error {
 public:
  CliError(std::string kind, const std::string& message) : Error(std::move(kind), message) {}
};

constexpr int kConfigVersion = 1;

struct Seeds {
  std::uint64_t source_net = 0;
  std::uint64_t target_net = 0;
  std::uint64_t subsample = 0;
  std::uint64_t source_shuffle = 0;
  std::uint64_t target_shuffle = 0;
  std::uint64_t synthetic = 0;
};

// Everything a command may consume. Paths are resolved here but never echoed
// into outputs; the digests of what they point at are.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  double rho = 0.75;
  double fraction = 0.20;
  std::string sampling = "stratified";
  std::string source_format = "synthetic";
  std::string target_format = "synthetic";
  std::size_t stl10_downsample = 3;
  SGDConfig source;
  SGDConfig target;
  SyntheticConfig synthetic;
  json seed_overrides = json::object();

  fs::path source_data;
  fs::path target_data;
  fs::path source_checkpoint;

  Seeds seeds() const {
    const CounterStream root(seed);
    Seeds s{root.bits(0), root.bits(1), root.bits(2), root.bits(3), root.bits(4), root.bits(5)};
    auto pick = [&](const char* key, std::uint64_t& v) {
      if (seed_overrides.contains(key)) v = seed_overrides.at(key).get<std::uint64_t>();
    };
    pick("source_net", s.source_net);
    pick("target_net", s.target_net);
    pick("subsample", s.subsample);
    pick("source_shuffle", s.source_shuffle);
    pick("target_shuffle", s.target_shuffle);
    pick("synthetic", s.synthetic);
    return s;
  }
};

json sgd_to_json(const SGDConfig& c) {
  return {{"lr", c.learning_rate},     {"momentum", c.momentum}, {"batch", c.batch_size},
          {"epochs", c.epochs},        {"lr_decay", c.lr_decay}, {"shuffle_seed", c.shuffle_seed},
          {"log_iterations", c.log_iterations}};
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw CliError("config", where + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return key == k; }) ==
        keys.end())
      throw CliError("config", "unknown key '" + key + "' in " + where);
}

void sgd_from_json(const json& j, const std::string& where, SGDConfig& c) {
  check_keys(j, where, {"lr", "momentum", "batch", "epochs", "lr_decay", "log_iterations"});
  if (j.contains("lr")) c.learning_rate = j.at("lr").get<double>();
  if (j.contains("momentum")) c.momentum = j.at("momentum").get<double>();
  if (j.contains("batch")) c.batch_size = j.at("batch").get<std::size_t>();
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
  if (j.contains("lr_decay")) c.lr_decay = j.at("lr_decay").get<double>();
  if (j.contains("log_iterations")) c.log_iterations = j.at("log_iterations").get<bool>();
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError("io", "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string file_digest(const fs::path& path) {
  const std::string text = read_text(path);
  return sha256_hex({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void load_config_file(const fs::path& path, ExperimentConfig& cfg) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw CliError("config", path.filename().string() + ": " + e.what());
  }
  check_keys(j, "config",
             {"seed", "rho", "fraction", "sampling", "source_format", "target_format",
              "source_data", "target_data", "source_checkpoint", "stl10_downsample", "source",
              "target", "synthetic", "seeds"});
  // Relative paths are taken from the config file's directory.
  const fs::path base = path.parent_path();
  auto rel = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  try {
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("rho")) cfg.rho = j.at("rho").get<double>();
    if (j.contains("fraction")) cfg.fraction = j.at("fraction").get<double>();
    if (j.contains("sampling")) cfg.sampling = j.at("sampling").get<std::string>();
    if (j.contains("source_format")) cfg.source_format = j.at("source_format").get<std::string>();
    if (j.contains("target_format")) cfg.target_format = j.at("target_format").get<std::string>();
    if (j.contains("source_data")) cfg.source_data = rel(j.at("source_data").get<std::string>());
    if (j.contains("target_data")) cfg.target_data = rel(j.at("target_data").get<std::string>());
    if (j.contains("source_checkpoint"))
      cfg.source_checkpoint = rel(j.at("source_checkpoint").get<std::string>());
    if (j.contains("stl10_downsample"))
      cfg.stl10_downsample = j.at("stl10_downsample").get<std::size_t>();
    if (j.contains("source")) sgd_from_json(j.at("source"), "source", cfg.source);
    if (j.contains("target")) sgd_from_json(j.at("target"), "target", cfg.target);
    if (j.contains("synthetic")) {
      const json& s = j.at("synthetic");
      check_keys(s, "synthetic",
                 {"n_per_class", "test_per_class", "num_classes", "image_hw", "channels"});
      auto& sc = cfg.synthetic;
      if (s.contains("n_per_class")) sc.n_per_class = s.at("n_per_class").get<std::size_t>();
      if (s.contains("test_per_class")) sc.test_per_class = s.at("test_per_class").get<std::size_t>();
      if (s.contains("num_classes")) sc.num_classes = s.at("num_classes").get<std::size_t>();
      if (s.contains("image_hw")) sc.image_hw = s.at("image_hw").get<std::size_t>();
      if (s.contains("channels")) sc.channels = s.at("channels").get<std::size_t>();
    }
    if (j.contains("seeds")) {
      check_keys(j.at("seeds"), "seeds",
                 {"source_net", "target_net", "subsample", "source_shuffle", "target_shuffle",
                  "synthetic"});
      cfg.seed_overrides = j.at("seeds");
    }
  } catch (const json::exception& e) {
    throw CliError("config", e.what());
  }
}

void validate(const ExperimentConfig& cfg) {
  if (!(cfg.rho > 0.0 && cfg.rho <= 1.0)) throw CliError("config", "rho must lie in (0, 1]");
  if (!(cfg.fraction > 0.0 && cfg.fraction <= 1.0))
    throw CliError("config", "fraction must lie in (0, 1]");
  if (cfg.sampling != "stratified" && cfg.sampling != "uniform")
    throw CliError("config", "sampling must be 'stratified' or 'uniform'");
  if (cfg.source_format != "synthetic" && cfg.source_format != "cifar10")
    throw CliError("config", "source_format must be 'synthetic' or 'cifar10'");
  if (cfg.target_format != "synthetic" && cfg.target_format != "stl10")
    throw CliError("config", "target_format must be 'synthetic' or 'stl10'");
  if (cfg.stl10_downsample == 0) throw CliError("config", "stl10_downsample must be positive");
  cfg.source.validate();
  cfg.target.validate();
}

json seeds_json(const Seeds& s) {
  return {{"source_net", s.source_net},         {"target_net", s.target_net},
          {"subsample", s.subsample},           {"source_shuffle", s.source_shuffle},
          {"target_shuffle", s.target_shuffle}, {"synthetic", s.synthetic}};
}

// The resolved configuration as echoed into every artifact.
json resolved(const ExperimentConfig& cfg, const std::string& command, const json& inputs) {
  const auto& sc = cfg.synthetic;
  return {{"version", kConfigVersion},
          {"command", command},
          {"seed", cfg.seed},
          {"seeds", seeds_json(cfg.seeds())},
          {"rho", cfg.rho},
          {"fraction", cfg.fraction},
          {"sampling", cfg.sampling},
          {"source_format", cfg.source_format},
          {"target_format", cfg.target_format},
          {"stl10_downsample", cfg.stl10_downsample},
          {"normalization", "scale-to-unit"},
          {"source", sgd_to_json(cfg.source)},
          {"target", sgd_to_json(cfg.target)},
          {"synthetic",
           {{"n_per_class", sc.n_per_class},
            {"test_per_class", sc.test_per_class},
            {"num_classes", sc.num_classes},
            {"image_hw", sc.image_hw},
            {"channels", sc.channels}}},
          {"inputs", inputs}};
}

// Refuses to clobber earlier results unless asked to.
void prepare_outputs(const fs::path& dir, const std::vector<std::string>& names, bool overwrite) {
  if (dir.empty()) throw CliError("usage", "--out is required");
  if (fs::exists(dir) && !fs::is_directory(dir))
    throw CliError("io", dir.string() + " exists and is not a directory");
  if (!overwrite)
    for (const auto& n : names)
      if (fs::exists(dir / n))
        throw CliError("io", (dir / n).string() + " already exists (pass --overwrite)");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CliError("io", "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text) || !out.flush()) throw CliError("io", "cannot write " + path.string());
}

struct Split {
  Dataset train;
  Dataset test;
  json digests;
};

Split load_synthetic_dir(const fs::path& dir, const std::string& domain) {
  const fs::path manifest_path = dir / "manifest.json";
  json m;
  try {
    m = json::parse(read_text(manifest_path));
    const auto channels = m.at("channels").get<std::size_t>();
    const auto hw = m.at("hw").get<std::size_t>();
    const auto classes = m.at("num_classes").get<std::size_t>();
    Split s;
    const std::string tr = domain + "_train.bin", te = domain + "_test.bin";
    s.train = read_label_first_records(dir / tr, channels, hw, classes);
    s.test = read_label_first_records(dir / te, channels, hw, classes);
    s.digests = {{tr, file_digest(dir / tr)}, {te, file_digest(dir / te)}};
    return s;
  } catch (const json::exception& e) {
    throw CliError("data", manifest_path.string() + ": " + e.what());
  }
}

json digests_of(const fs::path& dir, std::initializer_list<const char*> names) {
  json d = json::object();
  for (const char* n : names) d[n] = file_digest(dir / n);
  return d;
}

Split load_source(const ExperimentConfig& cfg) {
  if (cfg.source_data.empty()) throw CliError("usage", "no source data (--data or source_data)");
  if (!fs::is_directory(cfg.source_data))
    throw CliError("io", cfg.source_data.string() + " is not a directory");
  if (cfg.source_format == "synthetic") return load_synthetic_dir(cfg.source_data, "source");
  TrainTestSplit t = load_cifar10(cfg.source_data);
  return {std::move(t.train), std::move(t.test),
          digests_of(cfg.source_data, {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
                                       "data_batch_4.bin", "data_batch_5.bin", "test_batch.bin"})};
}

Split load_target(const ExperimentConfig& cfg) {
  if (cfg.target_data.empty()) throw CliError("usage", "no target data (--data or target_data)");
  if (!fs::is_directory(cfg.target_data))
    throw CliError("io", cfg.target_data.string() + " is not a directory");
  if (cfg.target_format == "synthetic") return load_synthetic_dir(cfg.target_data, "target");
  TrainTestSplit t = load_stl10(cfg.target_data);
  if (cfg.stl10_downsample > 1) {
    t.train = resize_box(t.train, cfg.stl10_downsample);
    t.test = resize_box(t.test, cfg.stl10_downsample);
  }
  return {std::move(t.train), std::move(t.test),
          digests_of(cfg.target_data, {"train_X.bin", "train_y.bin", "test_X.bin", "test_y.bin"})};
}

SubsampleMode sampling_mode(const ExperimentConfig& cfg) {
  return cfg.sampling == "uniform" ? SubsampleMode::kUniform : SubsampleMode::kStratified;
}

void write_log(const fs::path& dir, const std::string& stem, const TrainingLog& log,
               const json& config, std::ostream& out) {
  const std::string preamble = "config: " + config.dump();
  write_text(dir / (stem + "_log.csv"), log.to_csv(preamble));
  if (!log.iterations.empty())
    write_text(dir / (stem + "_iterations.csv"), log.iterations_csv(preamble));
  for (const auto& r : log.epochs) {
    char line[128];
    std::snprintf(line, sizeof line, "%s epoch %zu train_error=%.6f test_error=%.6f loss=%.6f\n",
                  stem.c_str(), r.epoch, r.train_error, r.test_error, r.mean_loss);
    out << line;
  }
}

std::vector<std::string> log_outputs(const std::string& stem, const SGDConfig& c) {
  std::vector<std::string> names{stem + ".ckpt", stem + "_log.csv"};
  if (c.log_iterations) names.push_back(stem + "_iterations.csv");
  return names;
}

struct Options {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> rho;
  std::optional<double> fraction;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch;
  std::string data;
  std::string format;
  std::string sampling;
  std::string source_checkpoint;
  bool overwrite = false;
  bool log_iterations = false;
  std::string log_a;
  std::string log_b;
  std::string label_a = "transfer";
  std::string label_b = "baseline";
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--seed", o.seed, "root seed");
  sub->add_option("--rho", o.rho, "expected connectivity (default 0.75)");
  sub->add_option("--fraction", o.fraction, "target training fraction (default 0.20)");
  sub->add_option("--epochs", o.epochs, "training epochs");
  sub->add_option("--lr", o.lr, "learning rate");
  sub->add_option("--batch", o.batch, "mini-batch size");
  sub->add_flag("--overwrite", o.overwrite, "replace existing outputs");
}

// Config file first, then flags. `sgd` is the section the training flags hit.
ExperimentConfig resolve(const Options& o, SGDConfig ExperimentConfig::*sgd) {
  ExperimentConfig cfg;
  if (!o.config_path.empty()) load_config_file(o.config_path, cfg);
  if (o.seed) cfg.seed = *o.seed;
  if (o.rho) cfg.rho = *o.rho;
  if (o.fraction) cfg.fraction = *o.fraction;
  if (!o.sampling.empty()) cfg.sampling = o.sampling;
  if (sgd) {
    SGDConfig& c = cfg.*sgd;
    if (o.epochs) c.epochs = *o.epochs;
    if (o.lr) c.learning_rate = *o.lr;
    if (o.batch) c.batch_size = *o.batch;
    if (o.log_iterations) c.log_iterations = true;
  }
  const Seeds s = cfg.seeds();
  cfg.source.shuffle_seed = s.source_shuffle;
  cfg.target.shuffle_seed = s.target_shuffle;
  cfg.synthetic.seed = s.synthetic;
  validate(cfg);
  return cfg;
}

int cmd_gen_synthetic(const Options& o, std::ostream& out) {
  const ExperimentConfig cfg = resolve(o, nullptr);
  const fs::path dir = o.out;
  const std::vector<std::string> names{"source_train.bin", "source_test.bin", "target_train.bin",
                                       "target_test.bin", "manifest.json"};
  prepare_outputs(dir, names, o.overwrite);
  const SyntheticDomains d = generate_synthetic_domains(cfg.synthetic);
  const std::pair<const char*, const Dataset*> parts[] = {{"source_train.bin", &d.source_train},
                                                          {"source_test.bin", &d.source_test},
                                                          {"target_train.bin", &d.target_train},
                                                          {"target_test.bin", &d.target_test}};
  json files = json::object();
  for (const auto& [name, data] : parts) {
    write_label_first_records(dir / name, *data);
    files[name] = file_digest(dir / name);
  }
  const json manifest = {{"channels", cfg.synthetic.channels},
                         {"hw", cfg.synthetic.image_hw},
                         {"num_classes", cfg.synthetic.num_classes},
                         {"files", files},
                         {"config", resolved(cfg, "gen-synthetic", json::object())}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  out << "wrote " << d.source_train.size() + d.source_test.size() << " source and "
      << d.target_train.size() + d.target_test.size() << " target samples\n";
  return 0;
}

int cmd_train_source(const Options& o, std::ostream& out) {
  ExperimentConfig cfg = resolve(o, &ExperimentConfig::source);
  if (!o.data.empty()) cfg.source_data = o.data;
  if (!o.format.empty()) cfg.source_format = o.format;
  validate(cfg);
  const fs::path dir = o.out;
  prepare_outputs(dir, log_outputs("source", cfg.source), o.overwrite);
  const Split data = load_source(cfg);
  Network net = build_paper_architecture(data.train.channels(), data.train.height(),
                                         data.train.num_classes, cfg.rho, cfg.seeds().source_net);
  const TrainingLog log = train(net, data.train, data.test, cfg.source);
  save(net, dir / "source.ckpt");
  write_log(dir, "source", log,
            resolved(cfg, "train-source", {{"source_data", data.digests}}), out);
  return 0;
}

int cmd_target(const Options& o, bool with_transfer, std::ostream& out) {
  ExperimentConfig cfg = resolve(o, &ExperimentConfig::target);
  if (!o.data.empty()) cfg.target_data = o.data;
  if (!o.format.empty()) cfg.target_format = o.format;
  if (!o.source_checkpoint.empty()) cfg.source_checkpoint = o.source_checkpoint;
  validate(cfg);
  const std::string stem = with_transfer ? "transfer" : "baseline";
  const fs::path dir = o.out;
  if (with_transfer && cfg.source_checkpoint.empty())
    throw CliError("usage", "transfer-train needs --source-checkpoint");
  prepare_outputs(dir, log_outputs(stem, cfg.target), o.overwrite);

  const Split data = load_target(cfg);
  const Seeds seeds = cfg.seeds();
  const Dataset subset = subsample(data.train, cfg.fraction, sampling_mode(cfg), seeds.subsample);
  Network net = build_paper_architecture(data.train.channels(), data.train.height(),
                                         data.train.num_classes, cfg.rho, seeds.target_net);
  json inputs = {{"target_data", data.digests}};
  if (with_transfer) {
    net = transfer_conv(load(cfg.source_checkpoint), net);
    inputs["source_checkpoint"] = file_digest(cfg.source_checkpoint);
  }
  const TrainingLog log = train(net, subset, data.test, cfg.target);
  save(net, dir / (stem + ".ckpt"));
  inputs["target_train_size"] = subset.size();
  write_log(dir, stem, log, resolved(cfg, with_transfer ? "transfer-train" : "baseline", inputs),
            out);
  return 0;
}

TrainingLog read_log(const std::string& path) {
  if (path.empty()) throw CliError("usage", "two log files are required");
  TrainingLog log = TrainingLog::from_csv(read_text(path));
  if (log.epochs.empty()) throw CliError("value", path + " has no epochs");
  return log;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

int cmd_compare(const Options& o, std::ostream& out) {
  const TrainingLog a = read_log(o.log_a);
  const TrainingLog b = read_log(o.log_b);
  const fs::path dir = o.out;
  prepare_outputs(dir, {"comparison.csv"}, o.overwrite);
  std::ostringstream csv;
  csv << "# a: " << file_digest(o.log_a) << "\n# b: " << file_digest(o.log_b) << '\n';
  csv << "epoch,a_train_error,a_test_error,b_train_error,b_test_error,test_error_delta\n";
  const std::size_t rows = std::max(a.epochs.size(), b.epochs.size());
  for (std::size_t i = 0; i < rows; ++i) {
    const EpochRecord* ra = i < a.epochs.size() ? &a.epochs[i] : nullptr;
    const EpochRecord* rb = i < b.epochs.size() ? &b.epochs[i] : nullptr;
    csv << i + 1 << ',' << (ra ? fixed6(ra->train_error) : "") << ','
        << (ra ? fixed6(ra->test_error) : "") << ',' << (rb ? fixed6(rb->train_error) : "") << ','
        << (rb ? fixed6(rb->test_error) : "") << ','
        << (ra && rb ? fixed6(ra->test_error - rb->test_error) : "") << '\n';
  }
  const double delta = a.epochs.back().test_error - b.epochs.back().test_error;
  csv << "# final_test_error_delta=" << fixed6(delta) << '\n';
  write_text(dir / "comparison.csv", csv.str());
  out << "final_test_error_delta=" << fixed6(delta) << '\n';
  return 0;
}

std::string polyline(const std::vector<EpochRecord>& rows, double EpochRecord::*field,
                     std::size_t max_epoch, const char* colour, bool dashed) {
  constexpr double kLeft = 60, kTop = 20, kWidth = 520, kHeight = 300;
  std::ostringstream os;
  os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\"";
  if (dashed) os << " stroke-dasharray=\"6 4\"";
  os << " points=\"";
  for (const auto& r : rows) {
    const double x = max_epoch > 1 ? kLeft + kWidth * static_cast<double>(r.epoch - 1) /
                                                 static_cast<double>(max_epoch - 1)
                                   : kLeft;
    const double y = kTop + kHeight * (1.0 - std::clamp(r.*field, 0.0, 1.0));
    char pt[64];
    std::snprintf(pt, sizeof pt, "%.2f,%.2f ", x, y);
    os << pt;
  }
  os << "\"/>\n";
  return os.str();
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Train (dashed) and test (solid) error of both runs, blue for a, purple for b.
int cmd_plot(const Options& o, std::ostream& out) {
  const TrainingLog a = read_log(o.log_a);
  const TrainingLog b = read_log(o.log_b);
  const fs::path dir = o.out;
  prepare_outputs(dir, {"plot.svg"}, o.overwrite);
  const std::size_t max_epoch = std::max(a.epochs.back().epoch, b.epochs.back().epoch);
  constexpr const char* kBlue = "#1f4fd1";
  constexpr const char* kPurple = "#8e3ab8";
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"380\" "
         "font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"640\" height=\"380\" fill=\"white\"/>\n"
      << "<line x1=\"60\" y1=\"320\" x2=\"580\" y2=\"320\" stroke=\"black\"/>\n"
      << "<line x1=\"60\" y1=\"20\" x2=\"60\" y2=\"320\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = 320 - 75.0 * t;
    svg << "<text x=\"52\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fixed6(0.25 * t).substr(0, 4)
        << "</text>\n";
  }
  svg << "<text x=\"320\" y=\"345\" text-anchor=\"middle\">epoch (1.." << max_epoch << ")</text>\n"
      << "<text x=\"16\" y=\"170\" transform=\"rotate(-90 16 170)\" text-anchor=\"middle\">error</text>\n";
  svg << polyline(a.epochs, &EpochRecord::train_error, max_epoch, kBlue, true)
      << polyline(a.epochs, &EpochRecord::test_error, max_epoch, kBlue, false)
      << polyline(b.epochs, &EpochRecord::train_error, max_epoch, kPurple, true)
      << polyline(b.epochs, &EpochRecord::test_error, max_epoch, kPurple, false);
  svg << "<text x=\"470\" y=\"40\" fill=\"" << kBlue << "\">" << escape_xml(o.label_a) << "</text>\n"
      << "<text x=\"470\" y=\"56\" fill=\"" << kPurple << "\">" << escape_xml(o.label_b) << "</text>\n"
      << "<text x=\"470\" y=\"72\">dashed: train, solid: test</text>\n"
      << "</svg>\n";
  write_text(dir / "plot.svg", svg.str());
  out << "wrote " << (dir / "plot.svg").string() << '\n';
  return 0;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"StochasticNet transfer-learning experiments", "stochnet"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-synthetic", "write a two-domain synthetic dataset");
  add_common(gen, o);

  auto* src = app.add_subcommand("train-source", "train a source network");
  add_common(src, o);

  auto* xfer = app.add_subcommand("transfer-train", "transplant a source conv stack and train the head");
  add_common(xfer, o);
  xfer->add_option("--source-checkpoint", o.source_checkpoint, "source network checkpoint");

  auto* base = app.add_subcommand("baseline", "train a target network from scratch");
  add_common(base, o);

  for (auto* sub : {src, xfer, base}) {
    sub->add_option("--data", o.data, "dataset directory");
    sub->add_option("--format", o.format, "synthetic, cifar10 or stl10");
    sub->add_flag("--log-iterations", o.log_iterations, "also log every SGD step");
  }
  for (auto* sub : {xfer, base})
    sub->add_option("--sampling", o.sampling, "stratified (default) or uniform");

  auto* cmp = app.add_subcommand("compare", "compare two training logs");
  auto* plot = app.add_subcommand("plot", "render two training logs as SVG");
  for (auto* sub : {cmp, plot}) {
    add_common(sub, o);
    sub->add_option("log_a", o.log_a, "first log (e.g. transfer)")->required();
    sub->add_option("log_b", o.log_b, "second log (e.g. baseline)")->required();
  }
  plot->add_option("--label-a", o.label_a);
  plot->add_option("--label-b", o.label_b);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << '\n';
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_synthetic(o, out);
    if (src->parsed()) return cmd_train_source(o, out);
    if (xfer->parsed()) return cmd_target(o, true, out);
    if (base->parsed()) return cmd_target(o, false, out);
    if (cmp->parsed()) return cmd_compare(o, out);
    if (plot->parsed()) return cmd_plot(o, out);
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 1;
}

}  // namespace stochnet::cli
