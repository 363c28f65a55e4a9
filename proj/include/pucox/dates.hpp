#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace pucox {

// Proleptic Gregorian calendar date, stored as days since 1970-01-01.
// Conversion routines follow the classic days_from_civil/civil_from_days
// algorithms.
struct Date {
    int32_t days = 0;  // since epoch

    friend bool operator==(Date a, Date b) { return a.days == b.days; }
    friend bool operator!=(Date a, Date b) { return a.days != b.days; }
    friend bool operator<(Date a, Date b) { return a.days < b.days; }
    friend bool operator<=(Date a, Date b) { return a.days <= b.days; }
    friend bool operator>(Date a, Date b) { return a.days > b.days; }
    friend bool operator>=(Date a, Date b) { return a.days >= b.days; }

    Date plus_days(int32_t n) const { return Date{days + n}; }
};

inline int32_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = unsigned(y - era * 400);
    const unsigned doy = (153u * unsigned(m + (m > 2 ? -3 : 9)) + 2u) / 5u + unsigned(d) - 1u;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + int(doe) - 719468;
}

inline void civil_from_days(int32_t z, int& y, int& m, int& d) {
    z += 719468;
    const int era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = unsigned(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int yr = int(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = int(doy - (153 * mp + 2) / 5 + 1);
    m = int(mp + (mp < 10 ? 3 : -9));
    y = yr + (m <= 2);
}

inline Date make_date(int y, int m, int d) { return Date{days_from_civil(y, m, d)}; }

// strict ISO-8601 "YYYY-MM-DD"
inline Date parse_date(const std::string& s) {
    int y = 0, m = 0, d = 0;
    char extra = 0;
    if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2d-%2d%c", &y, &m, &d, &extra) != 3)
        throw std::invalid_argument("bad date '" + s + "' (expected YYYY-MM-DD)");
    if (m < 1 || m > 12 || d < 1 || d > 31)
        throw std::invalid_argument("bad date '" + s + "' (month/day out of range)");
    Date date = make_date(y, m, d);
    int y2, m2, d2;
    civil_from_days(date.days, y2, m2, d2);
    if (y2 != y || m2 != m || d2 != d)
        throw std::invalid_argument("bad date '" + s + "' (no such calendar day)");
    return date;
}

inline std::string format_date(Date date) {
    int y, m, d;
    civil_from_days(date.days, y, m, d);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
    return buf;
}

}  // namespace pucox
