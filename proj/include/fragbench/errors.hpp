#pragma once

#include <stdexcept>
#include <string>

namespace fragbench {

// Error taxonomy. Argument errors use std::invalid_argument directly;
// everything a caller might want to catch separately gets its own type.

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input records, rank files, manifests.
struct parse_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Inputs that are individually well-formed but mutually inconsistent
// (mask built for a different document, fragmented text not derivable
// from its original, mismatched curve grids).
struct consistency_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Content-level rejections (needle candidate equals a corpus line).
struct validation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace fragbench
