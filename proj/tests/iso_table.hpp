#pragma once

#include <array>

namespace ixda::test {

// ISO 26262-3 ASIL determination table, transcribed row by row.
// Rows: S1E1..S1E4, S2E1..S2E4, S3E1..S3E4. Columns: C1, C2, C3.
constexpr std::array<std::array<const char*, 3>, 12> kIsoTable = {{
    {"QM", "QM", "QM"},  // S1 E1
    {"QM", "QM", "QM"},  // S1 E2
    {"QM", "QM", "A"},   // S1 E3
    {"QM", "A", "B"},    // S1 E4
    {"QM", "QM", "QM"},  // S2 E1
    {"QM", "QM", "A"},   // S2 E2
    {"QM", "A", "B"},    // S2 E3
    {"A", "B", "C"},     // S2 E4
    {"QM", "QM", "A"},   // S3 E1
    {"QM", "A", "B"},    // S3 E2
    {"A", "B", "C"},     // S3 E3
    {"B", "C", "D"},     // S3 E4
}};

constexpr const char* iso_asil(int s, int e, int c) {
  return kIsoTable[static_cast<std::size_t>((s - 1) * 4 + (e - 1))][static_cast<std::size_t>(c - 1)];
}

}  // namespace ixda::test
