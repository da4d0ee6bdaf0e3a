#include "slabgan/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "slabgan/batch.hpp"

namespace slabgan {

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const char* end = text.data() + text.size();
    std::from_chars_result r{};
    if constexpr (std::is_floating_point_v<T>) {
        // from_chars for double is available, but strtod also accepts "2e-4" portably.
        char* stop = nullptr;
        v = std::strtod(text.c_str(), &stop);
        if (text.empty() || stop != text.c_str() + text.size()) {
            throw ConfigError(fmt::format("{}: '{}' is not a number", key, text));
        }
        return v;
    } else {
        r = std::from_chars(text.data(), end, v);
        if (r.ec != std::errc{} || r.ptr != end) throw ConfigError(fmt::format("{}: '{}' is not an integer", key, text));
        return v;
    }
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, text));
}

std::optional<int> parse_optional_int(const std::string& key, const std::string& text) {
    if (text == "none" || text.empty()) return std::nullopt;
    return parse_number<int>(key, text);
}

std::string fmt_optional(const std::optional<int>& v) { return v ? std::to_string(*v) : "none"; }

struct Field {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

#define SLABGAN_STR(member) \
    Field { #member, [](const RunConfig& c) { return c.member; }, [](RunConfig& c, const std::string&, const std::string& v) { c.member = v; } }
#define SLABGAN_NUM(member, T)                                                              \
    Field {                                                                                 \
        #member, [](const RunConfig& c) { return fmt::format("{}", c.member); },           \
            [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_number<T>(k, v); } \
    }
#define SLABGAN_BOOL(member)                                                                \
    Field {                                                                                 \
        #member, [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }, \
            [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); } \
    }
#define SLABGAN_OPT(member)                                                                 \
    Field {                                                                                 \
        #member, [](const RunConfig& c) { return fmt_optional(c.member); },                \
            [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_optional_int(k, v); } \
    }

const std::vector<Field>& fields() {
    using namespace model;
    static const std::vector<Field> table = [] {
        std::vector<Field> f = {
            SLABGAN_STR(data.manifest),
            SLABGAN_STR(data.volume_root),
            SLABGAN_STR(data.out_root),
            SLABGAN_STR(data.source_modality),
            SLABGAN_STR(data.target_modality),
            SLABGAN_NUM(data.split_ratio, double),
            SLABGAN_NUM(data.split_seed, std::uint64_t),
            SLABGAN_OPT(data.few_shot_cap),
            {"generator.encoder", [](const RunConfig& c) { return to_string(c.generator.encoder); },
             [](RunConfig& c, const std::string&, const std::string& v) { c.generator.encoder = parse_encoder(v); }},
            {"generator.decoder", [](const RunConfig& c) { return to_string(c.generator.decoder); },
             [](RunConfig& c, const std::string&, const std::string& v) { c.generator.decoder = parse_decoder(v); }},
            SLABGAN_NUM(generator.depth, int),
            SLABGAN_NUM(generator.base_channels, int),
            SLABGAN_NUM(generator.max_channels, int),
            SLABGAN_NUM(generator.se_reduction, int),
            {"generator.skip_density", [](const RunConfig& c) { return to_string(c.generator.skip_density); },
             [](RunConfig& c, const std::string&, const std::string& v) { c.generator.skip_density = parse_skip_density(v); }},
            {"generator.upsample", [](const RunConfig& c) { return to_string(c.generator.upsample); },
             [](RunConfig& c, const std::string&, const std::string& v) { c.generator.upsample = parse_upsample(v); }},
            SLABGAN_NUM(discriminator.n_down, int),
            SLABGAN_NUM(discriminator.base_channels, int),
            SLABGAN_NUM(discriminator.max_channels, int),
            {"objective.lambda1", [](const RunConfig& c) { return fmt::format("{}", c.train.loss.lambda1); },
             [](RunConfig& c, const std::string& k, const std::string& v) { c.train.loss.lambda1 = parse_number<double>(k, v); }},
            {"objective.lambda2", [](const RunConfig& c) { return fmt::format("{}", c.train.loss.lambda2); },
             [](RunConfig& c, const std::string& k, const std::string& v) { c.train.loss.lambda2 = parse_number<double>(k, v); }},
            {"objective.gan_mode", [](const RunConfig& c) { return objectives::to_string(c.train.gan_mode); },
             [](RunConfig& c, const std::string&, const std::string& v) { c.train.gan_mode = objectives::parse_gan_mode(v); }},
            SLABGAN_NUM(train.lr_g, double),
            SLABGAN_NUM(train.lr_d, double),
            SLABGAN_NUM(train.beta1, double),
            SLABGAN_NUM(train.beta2, double),
            SLABGAN_NUM(train.batch_size, int),
            SLABGAN_NUM(train.epochs, int),
            SLABGAN_NUM(train.seed, std::uint64_t),
            SLABGAN_NUM(train.resolution, int),
            SLABGAN_NUM(train.checkpoint_every, int),
            SLABGAN_OPT(train.few_shot),
            SLABGAN_NUM(train.threads, int),
            SLABGAN_NUM(eval.resolution, int),
            SLABGAN_STR(eval.lpips_backend),
            SLABGAN_BOOL(eval.save_images),
            SLABGAN_BOOL(eval.shared_heatmap_scale),
            SLABGAN_STR(run_root),
            SLABGAN_STR(run_dir),
        };
        // Present run-level keys under the "run." prefix.
        for (auto& field : f) {
            if (field.key == "run_root") field.key = "run.root";
            if (field.key == "run_dir") field.key = "run.dir";
        }
        return f;
    }();
    return table;
}

#undef SLABGAN_STR
#undef SLABGAN_NUM
#undef SLABGAN_BOOL
#undef SLABGAN_OPT

const Field& field(const std::string& key) {
    for (const auto& f : fields())
        if (f.key == key) return f;
    throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lr_g > 0) || !(lr_d > 0)) throw ConfigError("learning rates must be > 0");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must be in [0, 1)");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (checkpoint_every < 1) throw ConfigError("train.checkpoint_every must be >= 1");
    if (few_shot && *few_shot < 1) throw ConfigError("train.few_shot must be >= 1");
    if (threads < 0) throw ConfigError("train.threads must be >= 0");
    data::require_supported_resolution(resolution);
    loss.validate();
}

void RunConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, key, trim(value)); }

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> k = [] {
        std::vector<std::string> out;
        for (const auto& f : fields()) out.push_back(f.key);
        return out;
    }();
    return k;
}

std::string RunConfig::serialize() const {
    std::string out;
    for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
    return out;
}

void RunConfig::apply_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(fmt::format("{}:{}: expected 'key = value'", origin, lineno));
        const std::string key = trim(line.substr(0, eq));
        try {
            set(key, line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(fmt::format("{}:{}: {}", origin, lineno, e.what()));
        }
    }
}

void RunConfig::apply_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    apply_text(buf.str(), path.string());
    source_file = path;
}

void RunConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
    overrides.push_back(assignment);
}

void RunConfig::validate() const {
    generator.validate();
    discriminator.validate();
    train.validate();
    data::require_supported_resolution(eval.resolution);
    if (!(data.split_ratio > 0 && data.split_ratio < 1)) throw ConfigError("data.split_ratio must be in (0, 1)");
}

fs::path RunConfig::resolved_run_dir() const {
    if (!run_dir.empty()) return run_dir;
    return fs::path(run_root) /
           fmt::format("{}_{}_seed{}", model::to_string(generator.encoder), model::to_string(generator.decoder), train.seed);
}

}  // namespace slabgan
