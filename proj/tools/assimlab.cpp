#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "assimlab/commands.hpp"

namespace cli = assimlab::cli;

namespace {

enum Exit { kOk = 0, kConfig = 2, kNumerical = 3, kIo = 4 };

int run(const std::string& command, const std::string& config_path, const std::filesystem::path& out,
        std::optional<std::size_t> workers, std::optional<std::uint64_t> seed) {
  assimlab::Config cfg = config_path.empty() ? assimlab::Config() : assimlab::Config::load(config_path);
  if (workers) cfg.set("workers", std::to_string(*workers));
  if (seed) cfg.set("seed", std::to_string(*seed));
  if (command == "generate") {
    cli::cmd_generate(cfg, out);
  } else if (command == "train") {
    cli::cmd_train(cfg, out);
  } else if (command == "evaluate") {
    cli::cmd_evaluate(cfg, out);
  } else if (command == "assimilate") {
    cli::cmd_assimilate(cfg, out);
  } else if (command == "report") {
    for (const auto& s : cli::cmd_report(cfg, out)) {
      std::cout << s.length << '\t' << s.variant << '\t' << cli::num(s.mean_mse) << " +- " << cli::num(s.std_mse)
                << "\t(n=" << s.count << ")\n";
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lorenz-96 data assimilation experiments"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out = ".";
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  for (const char* name : {"generate", "train", "evaluate", "assimilate", "report"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory");
    sub->add_option("--workers", workers, "worker threads (results do not depend on it)");
    sub->add_option("--seed", seed, "root seed, overrides the config");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, config_path, out, workers, seed);
  } catch (const assimlab::ConfigError& e) {
    cli::log(cli::LogLevel::Error, e.what());
    return kConfig;
  } catch (const assimlab::ContractError& e) {
    cli::log(cli::LogLevel::Error, e.what());
    return kConfig;
  } catch (const assimlab::NumericalError& e) {
    cli::log(cli::LogLevel::Error, e.what());
    return kNumerical;
  } catch (const assimlab::IoError& e) {
    cli::log(cli::LogLevel::Error, e.what());
    return kIo;
  } catch (const assimlab::FormatError& e) {
    cli::log(cli::LogLevel::Error, e.what());
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    cli::log(cli::LogLevel::Error, e.what());
    return kIo;
  }
}
