#include "updet/run_config.hpp"

#include <fstream>
#include <sstream>

namespace updet {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

int to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const int out = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(key + ": not an integer: '" + v + "'");
    }
}

long long to_ll(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long out = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(key + ": not an integer: '" + v + "'");
    }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const unsigned long long out = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(key + ": not an unsigned integer: '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(key + ": not a number: '" + v + "'");
    }
}

}  // namespace

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
    const std::size_t dot = key.find('.');
    if (dot == std::string::npos)
        throw ConfigError("override key must be section.name, got '" + key + "'");
    const std::string sec = key.substr(0, dot);
    const std::string k = key.substr(dot + 1);

    if (sec == "scenario") {
        ScenarioSpec& s = cfg.scenario;
        if (k == "n_ally") s.n_ally = to_int(key, value);
        else if (k == "n_enemy") s.n_enemy = to_int(key, value);
        else if (k == "grid_w") s.grid_w = to_int(key, value);
        else if (k == "grid_h") s.grid_h = to_int(key, value);
        else if (k == "unit_hp") s.unit_hp = to_int(key, value);
        else if (k == "attack_damage") s.attack_damage = to_int(key, value);
        else if (k == "attack_range") s.attack_range = to_double(key, value);
        else if (k == "view_radius") s.view_radius = to_double(key, value);
        else if (k == "max_cooldown") s.max_cooldown = to_int(key, value);
        else if (k == "max_steps") s.max_steps = to_int(key, value);
        else if (k == "win_bonus") s.win_bonus = to_double(key, value);
        else if (k == "spawn_band") s.spawn_band = to_int(key, value);
        else throw ConfigError("unknown key " + key);
    } else if (sec == "model") {
        ModelConfig& m = cfg.model;
        if (k == "d_emb") m.d_emb = to_int(key, value);
        else if (k == "n_heads") m.n_heads = to_int(key, value);
        else if (k == "n_layers") m.n_layers = to_int(key, value);
        else if (k == "d_channel") m.d_channel = to_int(key, value);
        else if (k == "block_mode") m.block_mode = block_mode_from(value);
        else if (k == "head_mode") m.head_mode = head_mode_from(value);
        else if (k == "temporal_mode") m.temporal_mode = temporal_mode_from(value);
        else if (k == "rnn_hidden") m.rnn_hidden = to_int(key, value);
        else throw ConfigError("unknown key " + key);
    } else if (sec == "mixer") {
        if (k == "kind") cfg.mixer_kind = mixer_kind_from(value);
        else if (k == "mixing_dim") cfg.mixer_mixing_dim = to_int(key, value);
        else if (k == "hypernet_layers") cfg.mixer_hypernet_layers = to_int(key, value);
        else if (k == "hypernet_dim") cfg.mixer_hypernet_dim = to_int(key, value);
        else throw ConfigError("unknown key " + key);
    } else if (sec == "trainer") {
        TrainerConfig& t = cfg.trainer;
        if (k == "batch_size") t.batch_size = to_int(key, value);
        else if (k == "gamma") t.gamma = to_double(key, value);
        else if (k == "buffer_capacity") t.buffer_capacity = to_int(key, value);
        else if (k == "epsilon_start") t.epsilon_start = to_double(key, value);
        else if (k == "epsilon_end") t.epsilon_end = to_double(key, value);
        else if (k == "epsilon_anneal_steps") t.epsilon_anneal_steps = to_ll(key, value);
        else if (k == "target_update_interval") t.target_update_interval = to_int(key, value);
        else if (k == "test_interval") t.test_interval = to_ll(key, value);
        else if (k == "eval_episodes") t.eval_episodes = to_int(key, value);
        else if (k == "step_budget") t.step_budget = to_ll(key, value);
        else if (k == "lr") t.lr = to_double(key, value);
        else if (k == "rms_alpha") t.rms_alpha = to_double(key, value);
        else if (k == "rms_eps") t.rms_eps = to_double(key, value);
        else throw ConfigError("unknown key " + key);
    } else if (sec == "run") {
        if (k == "seed") cfg.seed = to_u64(key, value);
        else if (k == "out_dir") cfg.out_dir = value;
        else if (k == "checkpoint") cfg.checkpoint = value;
        else throw ConfigError("unknown key " + key);
    } else {
        throw ConfigError("unknown config section '" + sec + "'");
    }
}

void apply_scenario_size(RunConfig& cfg, const std::string& spec) {
    const std::size_t x = spec.find_first_of("xX");
    if (x == std::string::npos || x == 0 || x + 1 >= spec.size())
        throw ConfigError("scenario size must look like 3x3, got '" + spec + "'");
    cfg.scenario.n_ally = to_int("scenario", spec.substr(0, x));
    cfg.scenario.n_enemy = to_int("scenario", spec.substr(x + 1));
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::string line, section;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        const std::size_t hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(path + ":" + std::to_string(line_no) + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw ConfigError(path + ":" + std::to_string(line_no) + ": key outside a section");
        apply_override(base, section + "." + key, value);
    }
    return base;
}

std::string config_to_string(const RunConfig& cfg) {
    std::ostringstream os;
    os << "[scenario]\n"
       << "n_ally = " << cfg.scenario.n_ally << "\nn_enemy = " << cfg.scenario.n_enemy
       << "\ngrid_w = " << cfg.scenario.grid_w << "\ngrid_h = " << cfg.scenario.grid_h
       << "\nunit_hp = " << cfg.scenario.unit_hp
       << "\nattack_damage = " << cfg.scenario.attack_damage
       << "\nattack_range = " << cfg.scenario.attack_range
       << "\nview_radius = " << cfg.scenario.view_radius
       << "\nmax_cooldown = " << cfg.scenario.max_cooldown
       << "\nmax_steps = " << cfg.scenario.max_steps << "\nwin_bonus = " << cfg.scenario.win_bonus
       << "\nspawn_band = " << cfg.scenario.spawn_band << "\n\n[model]\n"
       << "d_emb = " << cfg.model.d_emb << "\nn_heads = " << cfg.model.n_heads
       << "\nn_layers = " << cfg.model.n_layers << "\nd_channel = " << cfg.model.d_channel
       << "\nblock_mode = " << to_string(cfg.model.block_mode)
       << "\nhead_mode = " << to_string(cfg.model.head_mode)
       << "\ntemporal_mode = " << to_string(cfg.model.temporal_mode)
       << "\nrnn_hidden = " << cfg.model.rnn_hidden << "\n\n[mixer]\n"
       << "kind = " << to_string(cfg.mixer_kind) << "\nmixing_dim = " << cfg.mixer_mixing_dim
       << "\nhypernet_layers = " << cfg.mixer_hypernet_layers
       << "\nhypernet_dim = " << cfg.mixer_hypernet_dim << "\n\n[trainer]\n"
       << "batch_size = " << cfg.trainer.batch_size << "\ngamma = " << cfg.trainer.gamma
       << "\nbuffer_capacity = " << cfg.trainer.buffer_capacity
       << "\nepsilon_start = " << cfg.trainer.epsilon_start
       << "\nepsilon_end = " << cfg.trainer.epsilon_end
       << "\nepsilon_anneal_steps = " << cfg.trainer.epsilon_anneal_steps
       << "\ntarget_update_interval = " << cfg.trainer.target_update_interval
       << "\ntest_interval = " << cfg.trainer.test_interval
       << "\neval_episodes = " << cfg.trainer.eval_episodes
       << "\nstep_budget = " << cfg.trainer.step_budget << "\nlr = " << cfg.trainer.lr
       << "\nrms_alpha = " << cfg.trainer.rms_alpha << "\nrms_eps = " << cfg.trainer.rms_eps
       << "\n\n[run]\n"
       << "seed = " << cfg.seed << "\nout_dir = " << cfg.out_dir
       << "\ncheckpoint = " << cfg.checkpoint << "\n";
    return os.str();
}

}  // namespace updet
