#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "hgan/model.hpp"

namespace hgan::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
    kOk = 0,
    kInternalError = 1,  ///< unexpected failure; diagnostics on stderr
    kUsageError = 2,     ///< bad arguments, unreadable inputs, invalid config
    kDegenerateData = 3  ///< inputs readable but statistically unusable
};

/// Provenance record written beside every command's artifacts.
struct RunManifest {
    std::string command;
    std::vector<std::string> arguments;
    nlohmann::json config = nlohmann::json::object();
    std::map<std::string, std::uint64_t> seeds;
    std::string dataset_fingerprint;
    std::string source_revision;
    std::string started_at;
    std::string finished_at;
    std::string status = "running";
    std::map<std::string, std::string> artifacts;
};

nlohmann::json to_json(const RunManifest& m);

/// The named seed streams derived from one root seed.
std::map<std::string, std::uint64_t> seed_streams(std::uint64_t root);

/// Revision of the sources this binary was built from ("unknown" outside git).
std::string source_revision();

/// Maps the Table 2 suffix flags (M, C, D, regression) to a variant; throws
/// UnknownVariant for combinations that are not a published configuration.
Variant variant_from_flags(bool mutual, bool compositing, bool joint_discriminator, bool regression);

/// Runs one invocation ("hgan <subcommand> ..."). env is a null-terminated
/// environment block consulted for HGAN_* overrides (may be null).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const char* const* env = nullptr);

}  // namespace hgan::cli
