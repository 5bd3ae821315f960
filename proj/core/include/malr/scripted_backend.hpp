#pragma once

#include "malr/gateway.hpp"

#include <string>
#include <string_view>

namespace malr {

enum class ScriptedMode {
    perfect,      // exact predicate evaluation
    affirmative,  // every judgment is "yes"
    flawed,       // answers "yes" on one element regardless of the facts unless hinted
};

enum class ReflectorQuality { accurate, misdirected };

struct ScriptedConfig {
    ScriptedMode mode = ScriptedMode::perfect;
    std::string flawed_element;
    ReflectorQuality reflector = ReflectorQuality::accurate;

    // "perfect", "affirmative", "flawed:subject", "flawed:subject:misdirected"
    static ScriptedConfig parse(std::string_view spec);
    std::string describe() const;
};

// Deterministic backend for the synthetic rule world. It reads the `[TASK name]` header
// and the tagged sections of the built-in templates and answers every pipeline stage by
// evaluating the rule and fact markers. Holds no state between calls. Token counts are
// whitespace-token counts of the prompt (plus preamble) and of the reply.
class ScriptedBackend final : public CompletionBackend {
public:
    explicit ScriptedBackend(ScriptedConfig config = {}) : config_(std::move(config)) {}
    CompletionResult complete(const CompletionRequest& request) const override;
    std::string id() const override { return "scripted:" + config_.describe(); }
    const ScriptedConfig& config() const noexcept { return config_; }

    std::string respond(std::string_view prompt) const;

private:
    ScriptedConfig config_;
};

// Returns the content of the first <tag>...</tag> section outside any <examples> block.
std::string tagged_section(std::string_view prompt, std::string_view tag);
// Name inside the leading "[TASK name]" header, or empty.
std::string task_of(std::string_view prompt);

}  // namespace malr
