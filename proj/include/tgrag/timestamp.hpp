#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tgrag {

// Ordered coarse to fine; the numeric order is relied on by comparisons.
enum class Granularity : std::uint8_t { kYear = 0, kQuarter = 1, kMonth = 2, kDay = 3 };

std::string_view granularity_name(Granularity g);
std::optional<Granularity> granularity_from_name(std::string_view name);

// A calendar-aligned time bucket. Fields that do not apply to the
// granularity are zero, so defaulted equality is value equality.
//
// Ordering is chronological by interval start; buckets sharing a start day
// sort coarse before fine (2020 < 2020-Q1 < 2020-01 < 2020-01-01).
struct Timestamp {
    Granularity granularity = Granularity::kYear;
    int year = 0;
    int quarter = 0;
    int month = 0;
    int day = 0;

    static Timestamp of_year(int year);
    static Timestamp of_quarter(int year, int quarter);
    static Timestamp of_month(int year, int month);
    static Timestamp of_day(int year, int month, int day);

    // Days since 1970-01-01 of the first and last day covered.
    std::int64_t first_day() const;
    std::int64_t last_day() const;

    std::string to_string() const;

    bool operator==(const Timestamp&) const = default;
    std::strong_ordering operator<=>(const Timestamp& other) const;
};

// Accepts the canonical forms "YYYY", "YYYY-Qn", "YYYY-MM", "YYYY-MM-DD" and
// a few common extractor spellings ("2020~Q3", "2020 Q3", "Q3 2020",
// "2020/07/15"). Surrounding whitespace and quotes are ignored.
// Throws Error(kMalformedTimestamp) or Error(kInvalidDate).
Timestamp parse_timestamp(std::string_view text);

std::optional<Timestamp> parent_of(const Timestamp& t);

// Strictly coarser chain, nearest first: DAY -> [MONTH, QUARTER, YEAR].
std::vector<Timestamp> ancestors(const Timestamp& t);

// The same-granularity bucket that follows / precedes t.
Timestamp next_bucket(const Timestamp& t);

// The ancestor (or t itself) at the requested coarser-or-equal granularity.
Timestamp lift_to(const Timestamp& t, Granularity g);

// Interval containment. Buckets are nested, so two buckets either are
// disjoint or one contains the other.
bool contains(const Timestamp& outer, const Timestamp& inner);
bool overlaps(const Timestamp& a, const Timestamp& b);

bool is_valid(const Timestamp& t);

} // namespace tgrag

template <>
struct std::hash<tgrag::Timestamp> {
    std::size_t operator()(const tgrag::Timestamp& t) const noexcept {
        std::size_t h = static_cast<std::size_t>(t.granularity);
        for (int v : {t.year, t.quarter, t.month, t.day}) {
            h = h * 1000003u ^ static_cast<std::size_t>(v);
        }
        return h;
    }
};
