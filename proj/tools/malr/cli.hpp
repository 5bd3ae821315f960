#pragma once

#include "malr/feedback.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace malr::cli {

enum ExitCode : int { ok = 0, usage = 1, backend_failure = 2, data_error = 3 };

struct BackendConfig {
    std::string kind = "scripted";  // scripted | http
    std::string scripted_mode = "perfect";
    std::string endpoint;
    std::string model;
    std::string credential_env = "MALR_API_KEY";
    long timeout_ms = 60000;
};

struct EmbedderConfig {
    std::string kind = "trigram";  // trigram | http
    std::size_t dim = 4096;
    std::string endpoint;
    std::string model;
    std::string credential_env = "MALR_API_KEY";
};

// Settings shared by every command. Loaded from a JSON config file, then overridden by flags.
struct CliConfig {
    BackendConfig backend;
    OracleAdapterSpec oracle;
    EmbedderConfig embedder;
    std::optional<std::filesystem::path> templates_dir;
    double zeta = 0.8;
    int max_trials = 2;
    std::size_t workers = 1;
    // Unset means "on for scripted backends".
    std::optional<bool> deterministic;

    static CliConfig from_document(const std::string& doc);
    static CliConfig load(const std::filesystem::path& path);
};

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err, std::istream& in);
// argv[0] is supplied internally.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in);

}  // namespace malr::cli
