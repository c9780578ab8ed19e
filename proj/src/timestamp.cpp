#include "tgrag/timestamp.hpp"

#include "tgrag/error.hpp"

#include <cstdio>
#include <regex>

namespace tgrag {

namespace {

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
    static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return m == 2 && is_leap(y) ? 29 : kDays[m - 1];
}

// Howard Hinnant's days_from_civil.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::string_view trim(std::string_view s) {
    const auto is_junk = [](char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '"' || c == '\'';
    };
    while (!s.empty() && is_junk(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_junk(s.back())) s.remove_suffix(1);
    return s;
}

int first_month_of_quarter(int q) { return (q - 1) * 3 + 1; }

} // namespace

std::string_view granularity_name(Granularity g) {
    switch (g) {
    case Granularity::kYear: return "year";
    case Granularity::kQuarter: return "quarter";
    case Granularity::kMonth: return "month";
    case Granularity::kDay: return "day";
    }
    return "unknown";
}

std::optional<Granularity> granularity_from_name(std::string_view name) {
    if (name == "year") return Granularity::kYear;
    if (name == "quarter") return Granularity::kQuarter;
    if (name == "month") return Granularity::kMonth;
    if (name == "day" || name == "date") return Granularity::kDay;
    return std::nullopt;
}

Timestamp Timestamp::of_year(int year) { return {Granularity::kYear, year, 0, 0, 0}; }

Timestamp Timestamp::of_quarter(int year, int quarter) {
    return {Granularity::kQuarter, year, quarter, 0, 0};
}

Timestamp Timestamp::of_month(int year, int month) {
    return {Granularity::kMonth, year, 0, month, 0};
}

Timestamp Timestamp::of_day(int year, int month, int day) {
    return {Granularity::kDay, year, 0, month, day};
}

std::int64_t Timestamp::first_day() const {
    switch (granularity) {
    case Granularity::kYear: return days_from_civil(year, 1, 1);
    case Granularity::kQuarter:
        return days_from_civil(year, static_cast<unsigned>(first_month_of_quarter(quarter)), 1);
    case Granularity::kMonth: return days_from_civil(year, static_cast<unsigned>(month), 1);
    case Granularity::kDay:
        return days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
    }
    return 0;
}

std::int64_t Timestamp::last_day() const {
    if (granularity == Granularity::kDay) return first_day();
    return next_bucket(*this).first_day() - 1;
}

std::string Timestamp::to_string() const {
    char buf[16];
    switch (granularity) {
    case Granularity::kYear: std::snprintf(buf, sizeof buf, "%04d", year); break;
    case Granularity::kQuarter: std::snprintf(buf, sizeof buf, "%04d-Q%d", year, quarter); break;
    case Granularity::kMonth: std::snprintf(buf, sizeof buf, "%04d-%02d", year, month); break;
    case Granularity::kDay:
        std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
        break;
    }
    return buf;
}

std::strong_ordering Timestamp::operator<=>(const Timestamp& other) const {
    if (auto c = first_day() <=> other.first_day(); c != 0) return c;
    return granularity <=> other.granularity;
}

bool is_valid(const Timestamp& t) {
    if (t.year < 0 || t.year > 9999) return false;
    switch (t.granularity) {
    case Granularity::kYear: return t.quarter == 0 && t.month == 0 && t.day == 0;
    case Granularity::kQuarter:
        return t.quarter >= 1 && t.quarter <= 4 && t.month == 0 && t.day == 0;
    case Granularity::kMonth: return t.quarter == 0 && t.month >= 1 && t.month <= 12 && t.day == 0;
    case Granularity::kDay:
        return t.quarter == 0 && t.month >= 1 && t.month <= 12 && t.day >= 1 &&
               t.day <= days_in_month(t.year, t.month);
    }
    return false;
}

Timestamp parse_timestamp(std::string_view raw) {
    static const std::regex kYear(R"((\d{4}))");
    static const std::regex kYearQuarter(R"((\d{4})\s*[-~/ ]?\s*[Qq](\d))");
    static const std::regex kQuarterYear(R"([Qq](\d)\s*[-~/ ]?\s*(\d{4}))");
    static const std::regex kMonth(R"((\d{4})[-/](\d{1,2}))");
    static const std::regex kDay(R"((\d{4})[-/](\d{1,2})[-/](\d{1,2}))");

    const std::string text(trim(raw));
    if (text.empty()) throw Error(ErrorCode::kMalformedTimestamp, "empty timestamp");

    std::smatch m;
    Timestamp t;
    const auto num = [&m](std::size_t i) { return std::stoi(m[i].str()); };
    if (std::regex_match(text, m, kYear)) {
        t = Timestamp::of_year(num(1));
    } else if (std::regex_match(text, m, kYearQuarter)) {
        t = Timestamp::of_quarter(num(1), num(2));
    } else if (std::regex_match(text, m, kQuarterYear)) {
        t = Timestamp::of_quarter(num(2), num(1));
    } else if (std::regex_match(text, m, kMonth)) {
        t = Timestamp::of_month(num(1), num(2));
    } else if (std::regex_match(text, m, kDay)) {
        t = Timestamp::of_day(num(1), num(2), num(3));
    } else {
        throw Error(ErrorCode::kMalformedTimestamp, "unrecognized timestamp '" + text + "'");
    }
    if (!is_valid(t)) throw Error(ErrorCode::kInvalidDate, "impossible date '" + text + "'");
    return t;
}

std::optional<Timestamp> parent_of(const Timestamp& t) {
    switch (t.granularity) {
    case Granularity::kYear: return std::nullopt;
    case Granularity::kQuarter: return Timestamp::of_year(t.year);
    case Granularity::kMonth: return Timestamp::of_quarter(t.year, (t.month + 2) / 3);
    case Granularity::kDay: return Timestamp::of_month(t.year, t.month);
    }
    return std::nullopt;
}

std::vector<Timestamp> ancestors(const Timestamp& t) {
    std::vector<Timestamp> out;
    for (auto p = parent_of(t); p; p = parent_of(*p)) out.push_back(*p);
    return out;
}

Timestamp next_bucket(const Timestamp& t) {
    switch (t.granularity) {
    case Granularity::kYear: return Timestamp::of_year(t.year + 1);
    case Granularity::kQuarter:
        return t.quarter == 4 ? Timestamp::of_quarter(t.year + 1, 1)
                              : Timestamp::of_quarter(t.year, t.quarter + 1);
    case Granularity::kMonth:
        return t.month == 12 ? Timestamp::of_month(t.year + 1, 1)
                             : Timestamp::of_month(t.year, t.month + 1);
    case Granularity::kDay:
        if (t.day < days_in_month(t.year, t.month)) {
            return Timestamp::of_day(t.year, t.month, t.day + 1);
        }
        return t.month == 12 ? Timestamp::of_day(t.year + 1, 1, 1)
                             : Timestamp::of_day(t.year, t.month + 1, 1);
    }
    return t;
}

Timestamp lift_to(const Timestamp& t, Granularity g) {
    Timestamp cur = t;
    while (cur.granularity > g) cur = *parent_of(cur);
    return cur;
}

bool contains(const Timestamp& outer, const Timestamp& inner) {
    if (outer.granularity > inner.granularity) return false;
    return lift_to(inner, outer.granularity) == outer;
}

bool overlaps(const Timestamp& a, const Timestamp& b) { return contains(a, b) || contains(b, a); }

} // namespace tgrag
