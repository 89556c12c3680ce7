#pragma once

#include <iosfwd>

namespace vsseg {

/// In-process invariant suite: gradient checks, permutation bijections,
/// block-wise attention against the dense oracle, and memory-refinement
/// convexity. Prints one line per check. With inject_fault a permutation
/// index is deliberately flipped; the run must then report failure.
bool run_selftest(bool inject_fault, std::ostream& out);

}  // namespace vsseg
