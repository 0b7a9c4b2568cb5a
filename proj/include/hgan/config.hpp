#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

#include "hgan/model.hpp"
#include "hgan/preprocess.hpp"
#include "hgan/synthdata.hpp"
#include "hgan/train.hpp"

namespace hgan {

using Json = nlohmann::json;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void to_json(Json& j, const GeneratorSpec& s);
void from_json(const Json& j, GeneratorSpec& s);
void to_json(Json& j, const DiscriminatorSpec& s);
void from_json(const Json& j, DiscriminatorSpec& s);
void to_json(Json& j, const CompositeSchedule& s);
void from_json(const Json& j, CompositeSchedule& s);
void to_json(Json& j, const TrainConfig& c);
void from_json(const Json& j, TrainConfig& c);
void to_json(Json& j, const SynthParams& p);
void from_json(const Json& j, SynthParams& p);
void to_json(Json& j, const SplitSpec& s);
void from_json(const Json& j, SplitSpec& s);
void to_json(Json& j, const IntensityModel& m);
void from_json(const Json& j, IntensityModel& m);
void to_json(Json& j, const EmptinessCriterion& c);
void from_json(const Json& j, EmptinessCriterion& c);

std::string fnv1a_hex(std::string_view bytes);

Json read_json(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it into place.
void write_json_atomic(const std::filesystem::path& path, const Json& j);

/// Applies "key=value" overrides onto j. Dotted keys address nested objects;
/// values are parsed as JSON when possible and kept as strings otherwise.
void apply_override(Json& j, const std::string& assignment);

/// Applies HGAN_<KEY>=value environment variables whose lower-cased key exists
/// at the top level of j (e.g. HGAN_BATCH_SIZE=16). Double underscores nest.
void apply_env_overrides(Json& j, const char* const* environ_list);

}  // namespace hgan
