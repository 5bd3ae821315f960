#pragma once

#include <compare>
#include <cstddef>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>

namespace malr {

// String identifier tagged by what it names, so a charge name cannot be passed where a
// sub-task id is expected.
template <class Tag>
class Id {
public:
    Id() = default;
    explicit Id(std::string value) : value_(std::move(value)) {}
    explicit Id(std::string_view value) : value_(value) {}
    explicit Id(const char* value) : value_(value) {}

    const std::string& str() const noexcept { return value_; }
    bool empty() const noexcept { return value_.empty(); }

    friend auto operator<=>(const Id&, const Id&) = default;
    friend bool operator==(const Id&, const Id&) = default;

    friend std::ostream& operator<<(std::ostream& os, const Id& id) { return os << id.value_; }

private:
    std::string value_;
};

using CaseId = Id<struct CaseIdTag>;
using ChargeName = Id<struct ChargeNameTag>;
using SubTaskId = Id<struct SubTaskIdTag>;
using InsightId = Id<struct InsightIdTag>;
using FeedbackId = Id<struct FeedbackIdTag>;

}  // namespace malr

template <class Tag>
struct std::hash<malr::Id<Tag>> {
    std::size_t operator()(const malr::Id<Tag>& id) const noexcept {
        return std::hash<std::string>{}(id.str());
    }
};
