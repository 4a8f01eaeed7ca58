#include "flipbound/cli.hpp"

#include "flipbound/parallel.hpp"
#include "flipbound/trainer.hpp"
#include "flipbound/types.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <ostream>
#include <thread>

namespace flipbound::cli {

namespace {

void emit_error(std::ostream& err, const std::string& command, const std::string& kind, const std::string& message,
                nlohmann::json extra = nlohmann::json::object()) {
  nlohmann::json record{{"status", "error"}, {"command", command}, {"kind", kind}, {"message", message}};
  record.update(extra);
  err << record.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Exact decision-boundary (flip point) analysis of erf networks", "flipbound"};
  app.require_subcommand(1);

  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out_dir;
  std::optional<std::string> data_dir;
  std::vector<std::string> overrides;
  app.add_option("--config", config_file, "flat key = value config file");
  app.add_option("--seed", seed, "global seed");
  app.add_option("--threads", threads, "worker threads (0: all cores)");
  app.add_option("--out-dir", out_dir, "artifact directory");
  app.add_option("--data-dir", data_dir, "directory holding the CIFAR-10 binary batches");
  app.add_option("--set", overrides, "config override key=value (repeatable)");

  const auto sub = [&](const char* name, const char* help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->fallthrough();
    return s;
  };
  sub("prepare", "select wavelet coefficients and write feature datasets");
  sub("train", "train the network and write a checkpoint");
  sub("recon", "reconstruct an image from leading coefficient subsets");
  sub("flip", "closest flip points, Taylor and directional baselines");
  CLI::App* path = sub("path", "softmax profile along a segment");
  sub("regions", "within-class adjacency and connectivity");
  sub("attack", "constrained-loss attack sweep versus flip points");

  PathRequest req;
  path->add_option("--from", req.from, "image id (row of the split)")->required();
  path->add_option("--to", req.to, "second image id; omitted: the flip point of --from");
  path->add_option("--split", req.split, "train or test")->check(CLI::IsMember({"train", "test"}));

  std::vector<std::string> argv(args.rbegin(), args.rend());
  if (!argv.empty()) argv.pop_back();  // program name
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    emit_error(err, "", "usage", e.what());
    return kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    ExperimentConfig cfg;
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    if (out_dir) cfg.out_dir = *out_dir;
    if (data_dir) cfg.data_dir = *data_dir;
    cfg.validate();
    set_thread_count(cfg.threads > 0 ? cfg.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));

    std::vector<std::filesystem::path> outputs;
    if (command == "prepare") outputs = cmd_prepare(cfg, out);
    else if (command == "train") outputs = cmd_train(cfg, out);
    else if (command == "recon") outputs = cmd_recon(cfg, out);
    else if (command == "flip") outputs = cmd_flip(cfg, out);
    else if (command == "path") outputs = cmd_path(cfg, req, out);
    else if (command == "regions") outputs = cmd_regions(cfg, out);
    else outputs = cmd_attack(cfg, out);
    write_manifest(cfg, command, outputs);
    for (const auto& p : outputs) out << "wrote " << p.string() << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    emit_error(err, command, "config", e.what());
    return kExitUsage;
  } catch (const DependencyError& e) {
    emit_error(err, command, "dependency", e.what(), {{"missing_file", e.file().string()}, {"producer", e.producer()}});
    return kExitDependency;
  } catch (const FormatError& e) {
    emit_error(err, command, "format", e.what());
    return kExitInput;
  } catch (const std::invalid_argument& e) {  // shape, parameter and input errors
    emit_error(err, command, "input", e.what());
    return kExitInput;
  } catch (const TrainingDiverged& e) {
    emit_error(err, command, "diverged", e.what(), {{"epoch", e.epoch()}});
    return kExitFailure;
  } catch (const std::exception& e) {
    emit_error(err, command, "failure", e.what());
    return kExitFailure;
  }
}

}  // namespace flipbound::cli
