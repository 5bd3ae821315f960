#include "malr/gateway.hpp"

#include "malr/errors.hpp"
#include "malr/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>

namespace malr {

namespace {

bool slot_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_'; }
bool slot_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }

// Length of a `{name}` marker starting at pos, or 0.
std::size_t marker_at(std::string_view body, std::size_t pos, std::string_view& name) {
    if (body[pos] != '{' || pos + 2 >= body.size() || !slot_start(body[pos + 1])) return 0;
    std::size_t end = pos + 2;
    while (end < body.size() && slot_char(body[end])) ++end;
    if (end >= body.size() || body[end] != '}') return 0;
    name = body.substr(pos + 1, end - pos - 1);
    return end - pos + 1;
}

struct BuiltinTemplate {
    const char* name;
    const char* body;
};

constexpr BuiltinTemplate kBuiltinTemplates[] = {
#include "builtin_templates.inc"
};

const std::map<std::string, std::set<std::string>>& mandated_table() {
    static const std::map<std::string, std::set<std::string>> table = {
        {"planner", {"question", "rule", "fact"}},
        {"canonicalize", {"labels"}},
        {"subtask_judge", {"role", "aspect", "rule", "fact", "insights", "feedback", "reflection"}},
        {"reflect", {"charge", "expected", "rule", "fact", "trajectory"}},
        {"draw_pair", {"charge", "rule", "aspect", "error_answer", "success_answer"}},
        {"draw_success",
         {"fact", "golden_charge", "golden_rule", "golden_trajectory", "confusing_charge", "confusing_rule",
          "confusing_trajectory"}},
        {"filter", {"charge", "insights"}},
        {"direct_insight", {"charge", "rule", "aspects"}},
        {"transfer_insight", {"reference_charge", "reference_rule", "reference_insights", "charge", "rule", "aspects"}},
        {"select_fact_check", {"aspects", "insights"}},
        {"key_question", {"aspect", "fact", "insights"}},
        {"expert", {"question"}},
        {"baseline_zs_cot", {"rule", "fact", "charge"}},
        {"baseline_lrp", {"rule", "fact", "charge"}},
        {"baseline_fs_prompt", {"rule", "fact", "charge", "examples"}},
        {"baseline_fs_cot", {"rule", "fact", "charge", "examples"}},
        {"baseline_chain_of_logic", {"rule", "fact", "charge"}},
    };
    return table;
}

}  // namespace

std::vector<std::string> slots_in(std::string_view body) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < body.size(); ++i) {
        std::string_view name;
        if (auto len = marker_at(body, i, name)) {
            if (seen.emplace(name).second) out.emplace_back(name);
            i += len - 1;
        }
    }
    return out;
}

PromptTemplate PromptTemplate::make(std::string name, std::string body, std::set<std::string> required_slots) {
    const auto present = slots_in(body);
    const std::set<std::string> present_set(present.begin(), present.end());
    for (const auto& slot : required_slots) {
        if (!present_set.count(slot)) {
            throw ValidationError("template '" + name + "' does not contain required slot '{" + slot + "}'");
        }
    }
    return PromptTemplate{std::move(name), std::move(body), std::move(required_slots)};
}

std::string render(const PromptTemplate& tpl, const Bindings& bindings) {
    for (const auto& slot : tpl.required_slots) {
        if (!bindings.count(slot)) throw MissingSlotError(tpl.name, slot);
    }
    const std::string_view body = tpl.body;
    std::string out;
    out.reserve(body.size());
    for (std::size_t i = 0; i < body.size(); ++i) {
        std::string_view name;
        if (auto len = marker_at(body, i, name)) {
            if (auto it = bindings.find(std::string(name)); it != bindings.end()) out += it->second;
            i += len - 1;
        } else {
            out.push_back(body[i]);
        }
    }
    return out;
}

std::set<std::string> TemplateLibrary::mandated_slots(const std::string& name) {
    const auto& table = mandated_table();
    if (auto it = table.find(name); it != table.end()) return it->second;
    return {};
}

TemplateLibrary TemplateLibrary::builtin() {
    TemplateLibrary lib;
    for (const auto& t : kBuiltinTemplates) {
        lib.put(PromptTemplate::make(t.name, t.body, mandated_slots(t.name)));
    }
    return lib;
}

TemplateLibrary TemplateLibrary::from_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw DataError("templates directory '" + dir.string() + "' does not exist");
    }
    TemplateLibrary lib = builtin();
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        std::ifstream in(entry.path(), std::ios::binary);
        if (!in) throw DataError("cannot read template '" + entry.path().string() + "'");
        std::ostringstream body;
        body << in.rdbuf();
        const std::string name = entry.path().stem().string();
        lib.put(PromptTemplate::make(name, body.str(), mandated_slots(name)));
    }
    return lib;
}

const PromptTemplate& TemplateLibrary::get(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw NotFoundError("unknown prompt template '" + name + "'");
    return it->second;
}

void TemplateLibrary::put(PromptTemplate tpl) {
    auto name = tpl.name;
    templates_.insert_or_assign(std::move(name), std::move(tpl));
}

std::vector<std::string> TemplateLibrary::names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : templates_) out.push_back(name);
    return out;
}

CompletionResult complete(const CompletionRequest& request, const CompletionBackend& backend) {
    if (!(request.decoding.temperature >= 0.0)) throw PreconditionError("temperature must be >= 0");
    if (request.decoding.max_output_tokens <= 0) throw PreconditionError("max_output_tokens must be positive");
    auto result = backend.complete(request);
    if (result.prompt_tokens < 0 || result.output_tokens < 0) {
        throw MalformedResponseError("backend '" + backend.id() + "' reported negative token counts", result.text);
    }
    if (result.backend_id.empty()) result.backend_id = backend.id();
    return result;
}

void UsageMeter::record(const CompletionResult& result) {
    std::lock_guard lock(mutex_);
    totals_.prompt_tokens += result.prompt_tokens;
    totals_.output_tokens += result.output_tokens;
    totals_.completions += 1;
}

UsageTotals UsageMeter::totals() const {
    std::lock_guard lock(mutex_);
    return totals_;
}

void UsageMeter::reset() {
    std::lock_guard lock(mutex_);
    totals_ = {};
}

CompletionResult MeteredBackend::complete(const CompletionRequest& request) const {
    auto result = inner_.complete(request);
    meter_.record(result);
    return result;
}

std::u32string decode_utf8(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        char32_t cp = 0;
        std::size_t extra = 0;
        if (c < 0x80) {
            cp = c;
        } else if ((c & 0xE0) == 0xC0) {
            cp = c & 0x1F;
            extra = 1;
        } else if ((c & 0xF0) == 0xE0) {
            cp = c & 0x0F;
            extra = 2;
        } else if ((c & 0xF8) == 0xF0) {
            cp = c & 0x07;
            extra = 3;
        } else {
            out.push_back(U'\uFFFD');
            ++i;
            continue;
        }
        bool ok = true;
        for (std::size_t k = 1; k <= extra; ++k) {
            if (i + k >= s.size()) {
                ok = false;
                break;
            }
            const auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (cc & 0x3F);
        }
        if (!ok) {
            out.push_back(U'\uFFFD');
            ++i;
            continue;
        }
        out.push_back(cp);
        i += extra + 1;
    }
    return out;
}

TrigramEmbedder::TrigramEmbedder(std::size_t dim) : dim_(dim) {
    if (dim_ == 0) throw PreconditionError("embedding dimension must be positive");
}

std::size_t TrigramEmbedder::bucket_of(std::u32string_view gram) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (char32_t cp : gram) {
        for (int shift = 0; shift < 32; shift += 8) {
            h ^= static_cast<std::uint64_t>((cp >> shift) & 0xFF);
            h *= 1099511628211ULL;
        }
    }
    return static_cast<std::size_t>(h % dim_);
}

EmbeddingVector TrigramEmbedder::embed(std::string_view text) const {
    if (text::trim(text).empty()) throw PreconditionError("cannot embed empty text");
    std::u32string cps = decode_utf8(text);
    for (auto& cp : cps) {
        if (cp < 0x80) cp = static_cast<char32_t>(std::tolower(static_cast<int>(cp)));
    }
    EmbeddingVector v;
    v.values.assign(dim_, 0.0);
    if (cps.size() < 3) {
        v.values[bucket_of(cps)] += 1.0;
        return v;
    }
    const std::u32string_view view(cps);
    for (std::size_t i = 0; i + 3 <= view.size(); ++i) v.values[bucket_of(view.substr(i, 3))] += 1.0;
    return v;
}

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
    if (u.dim() != v.dim()) {
        throw PreconditionError("embedding dimension mismatch: " + std::to_string(u.dim()) + " vs " +
                                std::to_string(v.dim()));
    }
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.dim(); ++i) {
        dot += u.values[i] * v.values[i];
        nu += u.values[i] * u.values[i];
        nv += v.values[i] * v.values[i];
    }
    if (nu == 0.0 || nv == 0.0) throw PreconditionError("cosine similarity of a zero vector");
    const double c = dot / (std::sqrt(nu) * std::sqrt(nv));
    return std::clamp(c, -1.0, 1.0);
}

}  // namespace malr
