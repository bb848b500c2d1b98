#pragma once

// Readable gtest failure output for library value types.

#include <ostream>

#include "regionfocus/actions.hpp"

namespace regionfocus {

inline void PrintTo(const Action& a, std::ostream* os) { *os << describe(a); }
inline void PrintTo(const Point& p, std::ostream* os) { *os << p.str(); }

}  // namespace regionfocus
