#include "hgan/config.hpp"

#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace hgan {

namespace {

template <class T>
void get_if(const Json& j, const char* key, T& out)
{
    if (auto it = j.find(key); it != j.end())
        it->get_to(out);
}

}  // namespace

void to_json(Json& j, const GeneratorSpec& s)
{
    j = Json{{"depth", s.depth},
             {"encoder_filters", s.encoder_filters},
             {"d1_filters", s.d1_filters},
             {"d2_filters", s.d2_filters},
             {"dropout_blocks", s.dropout_blocks},
             {"dropout_rate", s.dropout_rate},
             {"topology", to_string(s.topology)},
             {"leaky_encoder", s.leaky_encoder},
             {"in_channels", s.in_channels},
             {"out_channels", s.out_channels}};
}

void from_json(const Json& j, GeneratorSpec& s)
{
    std::string topo = to_string(s.topology);
    get_if(j, "topology", topo);
    s.topology = parse_topology(topo);
    if (auto it = j.find("depth"); it != j.end()) {
        const bool leaky = s.leaky_encoder;
        s = GeneratorSpec::with_depth(it->get<int>(), s.topology);
        s.leaky_encoder = leaky;
    }
    get_if(j, "encoder_filters", s.encoder_filters);
    get_if(j, "d1_filters", s.d1_filters);
    get_if(j, "d2_filters", s.d2_filters);
    get_if(j, "dropout_blocks", s.dropout_blocks);
    get_if(j, "dropout_rate", s.dropout_rate);
    get_if(j, "leaky_encoder", s.leaky_encoder);
    get_if(j, "in_channels", s.in_channels);
    get_if(j, "out_channels", s.out_channels);
}

void to_json(Json& j, const DiscriminatorSpec& s)
{
    j = Json{{"mode", to_string(s.mode)}, {"filters", s.filters}, {"leaky_slope", s.leaky_slope}};
}

void from_json(const Json& j, DiscriminatorSpec& s)
{
    std::string mode = to_string(s.mode);
    get_if(j, "mode", mode);
    s.mode = parse_discriminator_mode(mode);
    get_if(j, "filters", s.filters);
    get_if(j, "leaky_slope", s.leaky_slope);
}

void to_json(Json& j, const CompositeSchedule& s)
{
    j = Json{{"start_epoch", s.start_epoch},
             {"mid_epoch", s.mid_epoch},
             {"end_epoch", s.end_epoch},
             {"steepness", s.steepness}};
}

void from_json(const Json& j, CompositeSchedule& s)
{
    get_if(j, "start_epoch", s.start_epoch);
    get_if(j, "mid_epoch", s.mid_epoch);
    get_if(j, "end_epoch", s.end_epoch);
    get_if(j, "steepness", s.steepness);
}

void to_json(Json& j, const TrainConfig& c)
{
    j = Json{{"variant", variant_config(c.variant).name()},
             {"depth", c.depth},
             {"leaky_encoder", c.leaky_encoder},
             {"batch_size", c.batch_size},
             {"total_epochs", c.total_epochs},
             {"base_lr", c.base_lr},
             {"decay_start_epoch", c.decay_start_epoch},
             {"lambda_l1", c.lambda_l1},
             {"adam_beta1", c.adam_beta1},
             {"adam_beta2", c.adam_beta2},
             {"adam_eps", c.adam_eps},
             {"backprop_through_cd3", c.backprop_through_cd3},
             {"schedule", c.schedule},
             {"seed", c.seed},
             {"topology", to_string(c.topology)},
             {"compositing", c.compositing},
             {"discriminator_mode", to_string(c.discriminator_mode)},
             {"regression", c.regression}};
}

void from_json(const Json& j, TrainConfig& c)
{
    if (auto it = j.find("variant"); it != j.end())
        c.apply_variant(parse_variant(it->get<std::string>()));
    get_if(j, "depth", c.depth);
    get_if(j, "leaky_encoder", c.leaky_encoder);
    get_if(j, "batch_size", c.batch_size);
    get_if(j, "total_epochs", c.total_epochs);
    get_if(j, "base_lr", c.base_lr);
    get_if(j, "decay_start_epoch", c.decay_start_epoch);
    get_if(j, "lambda_l1", c.lambda_l1);
    get_if(j, "adam_beta1", c.adam_beta1);
    get_if(j, "adam_beta2", c.adam_beta2);
    get_if(j, "adam_eps", c.adam_eps);
    get_if(j, "backprop_through_cd3", c.backprop_through_cd3);
    get_if(j, "schedule", c.schedule);
    get_if(j, "seed", c.seed);
    if (auto it = j.find("topology"); it != j.end())
        c.topology = parse_topology(it->get<std::string>());
    get_if(j, "compositing", c.compositing);
    if (auto it = j.find("discriminator_mode"); it != j.end())
        c.discriminator_mode = parse_discriminator_mode(it->get<std::string>());
    get_if(j, "regression", c.regression);
}

void to_json(Json& j, const SynthParams& p)
{
    j = Json{{"patch_side", p.patch_side},
             {"n_cells_min", p.n_cells_min},
             {"n_cells_max", p.n_cells_max},
             {"cd3_fraction", p.cd3_fraction},
             {"cd8_fraction_of_cd3", p.cd8_fraction_of_cd3},
             {"nucleus_radius", p.nucleus_radius},
             {"radius_jitter", p.radius_jitter},
             {"min_gap", p.min_gap},
             {"marker_offset", p.marker_offset},
             {"marker_radius_ratio", p.marker_radius_ratio},
             {"nucleus_amplitude", p.nucleus_amplitude},
             {"marker_amplitude", p.marker_amplitude},
             {"tcell_radius_scale", p.tcell_radius_scale},
             {"cd3_hoechst_gain", p.cd3_hoechst_gain},
             {"cd8_hoechst_gain", p.cd8_hoechst_gain},
             {"background_level", p.background_level},
             {"background_noise_sigma", p.background_noise_sigma},
             {"max_placement_attempts", p.max_placement_attempts},
             {"seed", p.seed}};
}

void from_json(const Json& j, SynthParams& p)
{
    get_if(j, "patch_side", p.patch_side);
    if (auto it = j.find("n_cells"); it != j.end())
        p.n_cells_min = p.n_cells_max = it->get<int>();
    get_if(j, "n_cells_min", p.n_cells_min);
    get_if(j, "n_cells_max", p.n_cells_max);
    get_if(j, "cd3_fraction", p.cd3_fraction);
    get_if(j, "cd8_fraction_of_cd3", p.cd8_fraction_of_cd3);
    get_if(j, "nucleus_radius", p.nucleus_radius);
    get_if(j, "radius_jitter", p.radius_jitter);
    get_if(j, "min_gap", p.min_gap);
    get_if(j, "marker_offset", p.marker_offset);
    get_if(j, "marker_radius_ratio", p.marker_radius_ratio);
    get_if(j, "nucleus_amplitude", p.nucleus_amplitude);
    get_if(j, "marker_amplitude", p.marker_amplitude);
    get_if(j, "tcell_radius_scale", p.tcell_radius_scale);
    get_if(j, "cd3_hoechst_gain", p.cd3_hoechst_gain);
    get_if(j, "cd8_hoechst_gain", p.cd8_hoechst_gain);
    get_if(j, "background_level", p.background_level);
    get_if(j, "background_noise_sigma", p.background_noise_sigma);
    get_if(j, "max_placement_attempts", p.max_placement_attempts);
    get_if(j, "seed", p.seed);
}

void to_json(Json& j, const SplitSpec& s)
{
    j = Json{{"n_patches", s.n_patches}, {"n_slides", s.n_slides}, {"n_train_slides", s.n_train_slides}};
}

void from_json(const Json& j, SplitSpec& s)
{
    get_if(j, "n_patches", s.n_patches);
    get_if(j, "n_slides", s.n_slides);
    get_if(j, "n_train_slides", s.n_train_slides);
}

void to_json(Json& j, const IntensityModel& m)
{
    j = Json{{"mu", m.mu}, {"sigma", m.sigma}, {"sample_count", m.sample_count}};
}

void from_json(const Json& j, IntensityModel& m)
{
    j.at("mu").get_to(m.mu);
    j.at("sigma").get_to(m.sigma);
    j.at("sample_count").get_to(m.sample_count);
    m.validate();
}

void to_json(Json& j, const EmptinessCriterion& c)
{
    j = Json{{"pixel_floor", c.pixel_floor}, {"min_fraction", c.min_fraction}};
}

void from_json(const Json& j, EmptinessCriterion& c)
{
    get_if(j, "pixel_floor", c.pixel_floor);
    get_if(j, "min_fraction", c.min_fraction);
}

std::string fnv1a_hex(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

Json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_json_atomic(const std::filesystem::path& path, const Json& j)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        if (!out)
            throw std::runtime_error("cannot write " + tmp.string());
        out << j.dump(2) << '\n';
        if (!out)
            throw std::runtime_error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

namespace {

Json parse_value(const std::string& text)
{
    try {
        return Json::parse(text);
    } catch (const Json::parse_error&) {
        return Json(text);
    }
}

void assign_path(Json& j, const std::string& dotted, Json value)
{
    Json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = dotted.find('.', start);
        const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty())
            throw ConfigError("malformed override key '" + dotted + "'");
        if (!node->is_object())
            *node = Json::object();
        if (dot == std::string::npos) {
            (*node)[key] = std::move(value);
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

}  // namespace

void apply_override(Json& j, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like key=value, got '" + assignment + "'");
    assign_path(j, assignment.substr(0, eq), parse_value(assignment.substr(eq + 1)));
}

void apply_env_overrides(Json& j, const char* const* environ_list)
{
    if (!environ_list)
        return;
    const std::string prefix = "HGAN_";
    for (const char* const* e = environ_list; *e; ++e) {
        const std::string entry = *e;
        if (entry.rfind(prefix, 0) != 0)
            continue;
        const auto eq = entry.find('=');
        if (eq == std::string::npos)
            continue;
        std::string key = entry.substr(prefix.size(), eq - prefix.size());
        for (auto& ch : key)
            ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        std::string dotted;
        for (std::size_t i = 0; i < key.size(); ++i) {
            if (key[i] == '_' && i + 1 < key.size() && key[i + 1] == '_') {
                dotted += '.';
                ++i;
            } else {
                dotted += key[i];
            }
        }
        const auto top = dotted.substr(0, dotted.find('.'));
        if (!j.is_object() || !j.contains(top))
            continue;
        assign_path(j, dotted, parse_value(entry.substr(eq + 1)));
    }
}

}  // namespace hgan
