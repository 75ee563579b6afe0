// Command-line front end: flowcent <subcommand> --config <path> [--out <path>]
// [--seed N] [--format json|csv].
//
// Exit status: 0 on success, 2 on a validation error (nothing written),
// 3 on a numerical failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cli/commands.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

using flowcent::cli::json;

json load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw flowcent::ValidationError("config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw flowcent::ValidationError(std::string("config: malformed JSON: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical experiments on commuting flows, actions and their suspensions"};
  app.require_subcommand(1);

  std::string config_path, out_path, format;
  std::optional<std::uint64_t> seed;
  for (const auto& name : flowcent::cli::subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON experiment config")->required(name != "lorenz-demo");
    sub->add_option("--out", out_path, "write the report here instead of stdout");
    sub->add_option("--seed", seed, "seed for sampled experiments (default 0)");
    sub->add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }
  const std::string subcommand = app.get_subcommands().front()->get_name();

  try {
    json cfg = config_path.empty() ? json::object() : load_config(config_path);
    if (cfg.is_object() && cfg.contains("output")) {
      const json& o = cfg.at("output");
      flowcent::cli::allow_keys(o, {"path", "format"}, "output");
      if (out_path.empty()) out_path = flowcent::cli::string(o, "path", "output", "");
      if (format.empty()) format = flowcent::cli::string(o, "format", "output", "json");
    }
    if (format.empty()) format = "json";
    if (format != "json" && format != "csv") throw flowcent::ValidationError("output.format: expected json or csv");
    if (!seed) {
      const long s = cfg.is_object() ? flowcent::cli::integer(cfg, "seed", "config", 0) : 0;
      if (s < 0) throw flowcent::ValidationError("config.seed: must be nonnegative");
      seed = static_cast<std::uint64_t>(s);
    }

    const auto report = flowcent::cli::run(subcommand, cfg, *seed);
    const std::string text = format == "csv" ? flowcent::cli::render_csv(report.table) : report.doc.dump(2) + "\n";
    if (out_path.empty()) {
      std::cout << text;
    } else {
      std::ofstream out(out_path, std::ios::binary);
      if (!out) throw flowcent::ValidationError("output: cannot write '" + out_path + "'");
      out << text;
    }
    return 0;
  } catch (const flowcent::ValidationError& e) {
    std::cerr << "flowcent " << subcommand << ": validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const flowcent::NumericalError& e) {
    std::cerr << "flowcent " << subcommand << ": numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const json::exception& e) {
    std::cerr << "flowcent " << subcommand << ": validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "flowcent " << subcommand << ": numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}
