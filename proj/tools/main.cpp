#include <cstring>
#include <iostream>
#include <string>
#include <vector>

#include "updet/commands.hpp"

namespace {

constexpr const char* kUsage = R"(usage: updet <command> [options]

commands:
  train       train a model on a scenario
  eval        evaluate a checkpoint greedily
  transfer    fine-tune a checkpoint on a (new) scenario
  attention   export per-tick grouped attention matrices + heatmaps

options:
  --config PATH       load a key/value config file
  --set KEY=VALUE     override one config key (section.key), repeatable
  --seed N            run seed
  --out DIR           output directory
  --checkpoint PATH   checkpoint to evaluate / resume / transfer from
  --scenario NxM      team sizes, e.g. 3x3
  --episodes N        episodes for eval (default 32) / attention (default 1)

exit codes: 0 ok, 2 config error, 3 checkpoint error, 4 runtime fault
)";

struct CliArgs {
    std::string command;
    updet::RunConfig cfg;
    std::string checkpoint_flag;
    int episodes = -1;
};

std::string need_value(int argc, char** argv, int& i, const char* flag) {
    if (i + 1 >= argc) throw updet::ConfigError(std::string(flag) + " needs a value");
    return argv[++i];
}

CliArgs parse(int argc, char** argv) {
    if (argc < 2) throw updet::ConfigError("missing command");
    CliArgs args;
    args.command = argv[1];

    // --config applies first so flags and --set override it, in order.
    std::vector<std::pair<std::string, std::string>> sets;
    std::string config_path, scenario, seed, out;
    for (int i = 2; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config") config_path = need_value(argc, argv, i, "--config");
        else if (a == "--set") {
            const std::string kv = need_value(argc, argv, i, "--set");
            const std::size_t eq = kv.find('=');
            if (eq == std::string::npos)
                throw updet::ConfigError("--set expects section.key=value, got '" + kv + "'");
            sets.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
        } else if (a == "--seed") seed = need_value(argc, argv, i, "--seed");
        else if (a == "--out") out = need_value(argc, argv, i, "--out");
        else if (a == "--checkpoint") args.checkpoint_flag = need_value(argc, argv, i, "--checkpoint");
        else if (a == "--scenario") scenario = need_value(argc, argv, i, "--scenario");
        else if (a == "--episodes") args.episodes = std::stoi(need_value(argc, argv, i, "--episodes"));
        else throw updet::ConfigError("unknown option '" + a + "'");
    }
    if (!config_path.empty()) args.cfg = updet::load_config_file(config_path, args.cfg);
    for (const auto& [k, v] : sets) updet::apply_override(args.cfg, k, v);
    if (!scenario.empty()) updet::apply_scenario_size(args.cfg, scenario);
    if (!seed.empty()) updet::apply_override(args.cfg, "run.seed", seed);
    if (!out.empty()) args.cfg.out_dir = out;
    if (!args.checkpoint_flag.empty()) args.cfg.checkpoint = args.checkpoint_flag;
    return args;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc >= 2 && (std::strcmp(argv[1], "--help") == 0 || std::strcmp(argv[1], "-h") == 0)) {
        std::cout << kUsage;
        return 0;
    }
    try {
        CliArgs args = parse(argc, argv);
        if (args.command == "train") {
            updet::cmd_train(args.cfg);
        } else if (args.command == "eval") {
            if (args.cfg.checkpoint.empty())
                throw updet::ConfigError("eval needs --checkpoint");
            updet::cmd_eval(args.cfg, args.cfg.checkpoint,
                            args.episodes > 0 ? args.episodes : 32);
        } else if (args.command == "transfer") {
            if (args.cfg.checkpoint.empty())
                throw updet::ConfigError("transfer needs --checkpoint");
            updet::cmd_transfer(args.cfg, args.cfg.checkpoint);
        } else if (args.command == "attention") {
            if (args.cfg.checkpoint.empty())
                throw updet::ConfigError("attention needs --checkpoint");
            updet::cmd_attention(args.cfg, args.cfg.checkpoint,
                                 args.episodes > 0 ? args.episodes : 1);
        } else {
            std::cerr << "unknown command '" << args.command << "'\n" << kUsage;
            return 2;
        }
        return 0;
    } catch (const updet::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const updet::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
