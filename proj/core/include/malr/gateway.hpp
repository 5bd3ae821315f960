#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace malr {

// Text with `{slot}` markers. A slot name is [A-Za-z_][A-Za-z0-9_]*; any other brace
// sequence (JSON snippets, say) is literal text.
struct PromptTemplate {
    std::string name;
    std::string body;
    std::set<std::string> required_slots;

    // Throws ValidationError when a required slot does not occur in body.
    static PromptTemplate make(std::string name, std::string body,
                               std::set<std::string> required_slots);
};

using Bindings = std::map<std::string, std::string>;

// Slot names in order of first occurrence.
std::vector<std::string> slots_in(std::string_view body);

// Replaces every slot occurrence in one pass; substituted text is not rescanned. Optional
// slots without a binding render empty. Throws MissingSlotError for an unbound required slot.
std::string render(const PromptTemplate& tpl, const Bindings& bindings);

// Named prompt templates: the compiled-in defaults, optionally overridden by `<name>.txt`
// files from a directory. Overrides must still contain the slots their stage relies on.
class TemplateLibrary {
public:
    static TemplateLibrary builtin();
    static TemplateLibrary from_directory(const std::filesystem::path& dir);

    const PromptTemplate& get(const std::string& name) const;
    bool has(const std::string& name) const { return templates_.count(name) != 0; }
    void put(PromptTemplate tpl);
    std::vector<std::string> names() const;

    // Slots every template with that name must carry.
    static std::set<std::string> mandated_slots(const std::string& name);

private:
    std::map<std::string, PromptTemplate> templates_;
};

struct DecodingParams {
    double temperature = 0.0;
    int max_output_tokens = 1024;
};

struct CompletionRequest {
    std::string rendered_prompt;
    std::optional<std::string> role_preamble;
    DecodingParams decoding;
};

struct CompletionResult {
    std::string text;
    long prompt_tokens = 0;
    long output_tokens = 0;
    std::string backend_id;
};

// Reentrant completion provider. Implementations may be called from several threads.
class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;
    virtual CompletionResult complete(const CompletionRequest& request) const = 0;
    virtual std::string id() const = 0;
};

// Validates the request and the result around one backend call.
CompletionResult complete(const CompletionRequest& request, const CompletionBackend& backend);

struct UsageTotals {
    long prompt_tokens = 0;
    long output_tokens = 0;
    long completions = 0;
};

// Thread-safe token accumulator fed by MeteredBackend.
class UsageMeter {
public:
    void record(const CompletionResult& result);
    UsageTotals totals() const;
    void reset();

private:
    mutable std::mutex mutex_;
    UsageTotals totals_;
};

class MeteredBackend final : public CompletionBackend {
public:
    MeteredBackend(const CompletionBackend& inner, UsageMeter& meter) : inner_(inner), meter_(meter) {}
    CompletionResult complete(const CompletionRequest& request) const override;
    std::string id() const override { return inner_.id(); }

private:
    const CompletionBackend& inner_;
    UsageMeter& meter_;
};

struct EmbeddingVector {
    std::vector<double> values;
    std::size_t dim() const noexcept { return values.size(); }
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual EmbeddingVector embed(std::string_view text) const = 0;
    virtual std::string id() const = 0;
};

// Offline embedder: counts of hashed code-point trigrams (ASCII lowercased) in a fixed
// number of buckets. Text shorter than three code points counts as a single gram.
class TrigramEmbedder final : public Embedder {
public:
    explicit TrigramEmbedder(std::size_t dim = 4096);
    EmbeddingVector embed(std::string_view text) const override;
    std::string id() const override { return "trigram-" + std::to_string(dim_); }

    // Bucket a gram lands in; exposed so tests can rule out collisions.
    std::size_t bucket_of(std::u32string_view gram) const;

private:
    std::size_t dim_;
};

std::u32string decode_utf8(std::string_view s);

// dot(u,v)/(|u||v|). Throws PreconditionError on mismatched dims or a zero vector.
double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v);

}  // namespace malr
