#include "tmat/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "core/errors.hpp"

namespace ecdm::tmat {

TmatConfig TmatConfig::toy() {
    TmatConfig cfg;
    cfg.s_diff = 30;
    cfg.s_adv = 10;
    cfg.batch_size = 16;
    cfg.learning_rate = 1e-4;
    return cfg;
}

void TmatConfig::validate() const {
    if (s_diff < 1 || s_g < 1 || s_d < 0 || s_adv < 0 || batch_size < 1)
        throw ConfigError("TmatConfig: counts must be >= 1 (s_adv/s_d may be 0)");
    if (learning_rate <= 0 && learning_rate != 0.0)
        throw ConfigError("TmatConfig: learning_rate must be >= 0");
    if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1)
        throw ConfigError("TmatConfig: Adam moment coefficients must be in [0,1)");
    if (schedule_steps < 1 || beta_start <= 0 || beta_end >= 1 || beta_start > beta_end)
        throw ConfigError("TmatConfig: invalid schedule settings");
    weights.validate();
    sampler.validate();
    model.validate();
    disc.validate();
    edge::validate(edge_cfg);
}

namespace {

std::string join_ints(const std::vector<int>& xs) {
    std::string out;
    for (size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(xs[i]);
    }
    return out;
}

std::vector<int> split_ints(const std::string& s, const std::string& key) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (...) {
            throw ConfigError("config: bad integer list for " + key + ": '" + s + "'");
        }
    }
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void apply_kv(TmatConfig& cfg, const std::string& key, const std::string& value) {
    auto as_int = [&](const char* k) {
        try {
            return std::stoi(value);
        } catch (...) {
            throw ConfigError(std::string("config: bad integer for ") + k + ": '" + value + "'");
        }
    };
    auto as_double = [&](const char* k) {
        try {
            return std::stod(value);
        } catch (...) {
            throw ConfigError(std::string("config: bad number for ") + k + ": '" + value + "'");
        }
    };
    auto as_bool = [&](const char* k) {
        if (value == "true" || value == "1") return true;
        if (value == "false" || value == "0") return false;
        throw ConfigError(std::string("config: bad bool for ") + k + ": '" + value + "'");
    };

    if (key == "s_diff") cfg.s_diff = as_int("s_diff");
    else if (key == "s_adv") cfg.s_adv = as_int("s_adv");
    else if (key == "s_g") cfg.s_g = as_int("s_g");
    else if (key == "s_d") cfg.s_d = as_int("s_d");
    else if (key == "batch_size") cfg.batch_size = as_int("batch_size");
    else if (key == "learning_rate") cfg.learning_rate = as_double("learning_rate");
    else if (key == "adam_beta1") cfg.adam_beta1 = as_double("adam_beta1");
    else if (key == "adam_beta2") cfg.adam_beta2 = as_double("adam_beta2");
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(std::stoull(value));
    else if (key == "weights.lambda_real") cfg.weights.lambda_real = as_double(key.c_str());
    else if (key == "weights.lambda_diff") cfg.weights.lambda_diff = as_double(key.c_str());
    else if (key == "weights.lambda_style") cfg.weights.lambda_style = as_double(key.c_str());
    else if (key == "weights.lambda_mod") cfg.weights.lambda_mod = as_double(key.c_str());
    else if (key == "weights.lambda_edge") cfg.weights.lambda_edge = as_double(key.c_str());
    else if (key == "sampler.timesteps") cfg.sampler.timesteps = as_int(key.c_str());
    else if (key == "sampler.order") cfg.sampler.order = as_int(key.c_str());
    else if (key == "sampler.skip") cfg.sampler.skip = value;
    else if (key == "sampler.method") cfg.sampler.method = value;
    else if (key == "sampler.type") cfg.sampler.solver_type = value;
    else if (key == "sampler.condition_scale")
        cfg.sampler.condition_scale = as_double(key.c_str());
    else if (key == "sampler.atol") cfg.sampler.atol = as_double(key.c_str());
    else if (key == "sampler.rtol") cfg.sampler.rtol = as_double(key.c_str());
    else if (key == "schedule.T") cfg.schedule_steps = as_int(key.c_str());
    else if (key == "schedule.beta_start") cfg.beta_start = as_double(key.c_str());
    else if (key == "schedule.beta_end") cfg.beta_end = as_double(key.c_str());
    else if (key == "model.base_channels") cfg.model.base_channels = as_int(key.c_str());
    else if (key == "model.channel_multipliers")
        cfg.model.channel_multipliers = split_ints(value, key);
    else if (key == "model.attention_levels")
        cfg.model.attention_levels = value.empty() ? std::vector<int>{} : split_ints(value, key);
    else if (key == "model.time_embed_dim") cfg.model.time_embed_dim = as_int(key.c_str());
    else if (key == "model.norm_groups") cfg.model.norm_groups = as_int(key.c_str());
    else if (key == "disc.base_channels") cfg.disc.base_channels = as_int(key.c_str());
    else if (key == "edge.cutoff_fraction") cfg.edge_cfg.cutoff_fraction = as_double(key.c_str());
    else if (key == "edge.soft_width") cfg.edge_cfg.soft_width = as_double(key.c_str());
    else if (key == "eq11_adversarial") cfg.eq11_adversarial = as_bool(key.c_str());
    else if (key == "mu_alpha_bar_form") cfg.mu_alpha_bar_form = as_bool(key.c_str());
    else if (key == "data.thermal") cfg.thermal_data = value;
    else if (key == "data.visible") cfg.visible_data = value;
    else throw ConfigError("config: unknown key '" + key + "'");
}

std::pair<std::string, std::string> split_kv(const std::string& line) {
    const auto eq = line.find('=');
    if (eq == std::string::npos)
        throw ConfigError("config: expected key=value, got '" + line + "'");
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    return {trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
}

} // namespace

TmatConfig parse_config_text(const std::string& text,
                             const std::vector<std::string>& overrides) {
    TmatConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto [key, value] = split_kv(line);
        apply_kv(cfg, key, value);
    }
    for (const auto& o : overrides) {
        const auto [key, value] = split_kv(o);
        apply_kv(cfg, key, value);
    }
    cfg.validate();
    return cfg;
}

TmatConfig parse_config_file(const std::string& path,
                             const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text, overrides);
}

std::string canonical_text(const TmatConfig& cfg) {
    std::ostringstream out;
    out << "s_diff=" << cfg.s_diff << "\n"
        << "s_adv=" << cfg.s_adv << "\n"
        << "s_g=" << cfg.s_g << "\n"
        << "s_d=" << cfg.s_d << "\n"
        << "batch_size=" << cfg.batch_size << "\n"
        << "learning_rate=" << fmt(cfg.learning_rate) << "\n"
        << "adam_beta1=" << fmt(cfg.adam_beta1) << "\n"
        << "adam_beta2=" << fmt(cfg.adam_beta2) << "\n"
        << "seed=" << cfg.seed << "\n"
        << "weights.lambda_real=" << fmt(cfg.weights.lambda_real) << "\n"
        << "weights.lambda_diff=" << fmt(cfg.weights.lambda_diff) << "\n"
        << "weights.lambda_style=" << fmt(cfg.weights.lambda_style) << "\n"
        << "weights.lambda_mod=" << fmt(cfg.weights.lambda_mod) << "\n"
        << "weights.lambda_edge=" << fmt(cfg.weights.lambda_edge) << "\n"
        << "sampler.timesteps=" << cfg.sampler.timesteps << "\n"
        << "sampler.order=" << cfg.sampler.order << "\n"
        << "sampler.skip=" << cfg.sampler.skip << "\n"
        << "sampler.method=" << cfg.sampler.method << "\n"
        << "sampler.type=" << cfg.sampler.solver_type << "\n"
        << "sampler.condition_scale=" << fmt(cfg.sampler.condition_scale) << "\n"
        << "sampler.atol=" << fmt(cfg.sampler.atol) << "\n"
        << "sampler.rtol=" << fmt(cfg.sampler.rtol) << "\n"
        << "schedule.T=" << cfg.schedule_steps << "\n"
        << "schedule.beta_start=" << fmt(cfg.beta_start) << "\n"
        << "schedule.beta_end=" << fmt(cfg.beta_end) << "\n"
        << "model.base_channels=" << cfg.model.base_channels << "\n"
        << "model.channel_multipliers=" << join_ints(cfg.model.channel_multipliers) << "\n"
        << "model.attention_levels=" << join_ints(cfg.model.attention_levels) << "\n"
        << "model.time_embed_dim=" << cfg.model.time_embed_dim << "\n"
        << "model.norm_groups=" << cfg.model.norm_groups << "\n"
        << "disc.base_channels=" << cfg.disc.base_channels << "\n"
        << "edge.cutoff_fraction=" << fmt(cfg.edge_cfg.cutoff_fraction) << "\n"
        << "edge.soft_width=" << fmt(cfg.edge_cfg.soft_width) << "\n"
        << "eq11_adversarial=" << (cfg.eq11_adversarial ? "true" : "false") << "\n"
        << "mu_alpha_bar_form=" << (cfg.mu_alpha_bar_form ? "true" : "false") << "\n"
        << "data.thermal=" << cfg.thermal_data << "\n"
        << "data.visible=" << cfg.visible_data << "\n";
    return out.str();
}

std::string config_hash(const TmatConfig& cfg) {
    // FNV-1a over the canonical text minus the dataset paths
    const std::string text = canonical_text(cfg);
    std::istringstream in(text);
    std::string line;
    uint64_t h = 1469598103934665603ULL;
    while (std::getline(in, line)) {
        if (line.rfind("data.", 0) == 0) continue;
        for (char c : line) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        h ^= '\n';
        h *= 1099511628211ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace ecdm::tmat
