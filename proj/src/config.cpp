#include "occsplat/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace occsplat {

namespace {

struct Field {
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

double parse_double(const std::string& v) {
    size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("bad numeric value '" + v + "'");
    return out;
}

long long parse_int(const std::string& v) {
    size_t pos = 0;
    const long long out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("bad integer value '" + v + "'");
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw std::invalid_argument("bad boolean value '" + v + "'");
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> t;
        auto add_int = [&](const std::string& k, int TrainConfig::* p) {
            t[k] = {[p](TrainConfig& c, const std::string& v) { c.*p = static_cast<int>(parse_int(v)); },
                    [p](const TrainConfig& c) { return std::to_string(c.*p); }};
        };
        auto add_double = [&](const std::string& k, double TrainConfig::* p) {
            t[k] = {[p](TrainConfig& c, const std::string& v) { c.*p = parse_double(v); },
                    [p](const TrainConfig& c) { return fmt(c.*p); }};
        };
        auto add_bool = [&](const std::string& k, bool TrainConfig::* p) {
            t[k] = {[p](TrainConfig& c, const std::string& v) { c.*p = parse_bool(v); },
                    [p](const TrainConfig& c) { return (c.*p) ? "1" : "0"; }};
        };
        auto add_loss = [&](const std::string& k, double LossWeights::* p) {
            t[k] = {[p](TrainConfig& c, const std::string& v) { c.weights.*p = parse_double(v); },
                    [p](const TrainConfig& c) { return fmt(c.weights.*p); }};
        };
        add_int("iterations", &TrainConfig::iterations);
        t["seed"] = {[](TrainConfig& c, const std::string& v) {
                         c.seed = static_cast<std::uint64_t>(parse_int(v));
                     },
                     [](const TrainConfig& c) { return std::to_string(c.seed); }};
        add_int("knn_k", &TrainConfig::knn_k);
        add_double("lr_mean", &TrainConfig::lr_mean);
        add_double("lr_sh", &TrainConfig::lr_sh);
        add_double("lr_opacity", &TrainConfig::lr_opacity);
        add_double("lr_scale", &TrainConfig::lr_scale);
        add_double("lr_rotation", &TrainConfig::lr_rotation);
        add_double("lr_mlp", &TrainConfig::lr_mlp);
        add_int("densify_interval", &TrainConfig::densify_interval);
        add_int("densify_start", &TrainConfig::densify_start);
        add_double("densify_stop_fraction", &TrainConfig::densify_stop_fraction);
        add_double("densify_grad_threshold", &TrainConfig::densify_grad_threshold);
        add_double("densify_scale_fraction", &TrainConfig::densify_scale_fraction);
        add_double("densify_opacity_prune", &TrainConfig::densify_opacity_prune);
        add_double("densify_surface_fraction", &TrainConfig::densify_surface_fraction);
        add_loss("lambda_mask", &LossWeights::lambda_mask);
        add_loss("lambda_ssim", &LossWeights::lambda_ssim);
        add_loss("lambda_lpips", &LossWeights::lambda_lpips);
        add_loss("lambda_occ", &LossWeights::lambda_occ);
        add_loss("lambda_con", &LossWeights::lambda_con);
        add_loss("opacity_eps", &LossWeights::opacity_eps);
        add_bool("disable_knn", &TrainConfig::disable_knn);
        add_bool("disable_aggregation", &TrainConfig::disable_aggregation);
        add_bool("disable_occlusion_losses", &TrainConfig::disable_occlusion_losses);
        add_bool("disable_mlp_heads", &TrainConfig::disable_mlp_heads);
        add_int("workers", &TrainConfig::workers);
        return t;
    }();
    return table;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

void apply_pair(TrainConfig& config, const std::string& key, const std::string& value) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw std::invalid_argument("unknown config key '" + key + "'");
    it->second.set(config, value);
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
    TrainConfig config;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        " is not 'key = value'");
        apply_pair(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return config;
}

TrainConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_config_text(buf.str());
}

void apply_overrides(TrainConfig& config, const std::string& overrides) {
    std::istringstream in(overrides);
    std::string pair;
    while (std::getline(in, pair, ';')) {
        pair = trim(pair);
        if (pair.empty()) continue;
        const auto eq = pair.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("override '" + pair + "' is not key=value");
        apply_pair(config, trim(pair.substr(0, eq)), trim(pair.substr(eq + 1)));
    }
}

std::string serialize_config(const TrainConfig& config) {
    std::ostringstream os;
    for (const auto& [key, field] : fields()) os << key << " = " << field.get(config) << "\n";
    return os.str();
}

}  // namespace occsplat
