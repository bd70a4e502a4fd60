#ifndef ABYSSLIGHT_ERRORS_HPP
#define ABYSSLIGHT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace abysslight {

// Error categories map onto the CLI exit codes:
//   io_error -> 1, argument_error and subclasses -> 2, metric_error -> 3.

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unreadable, unwritable or corrupt files.
struct io_error : error {
  using error::error;
};

// Invalid arguments, configuration or data handed to an operation.
struct argument_error : error {
  using error::error;
};

// Supported container but unsupported layout (bit depth, alpha, ...).
struct format_error : argument_error {
  using argument_error::argument_error;
};

// A frame stream violated its homogeneity or length contract.
struct stream_error : argument_error {
  using argument_error::argument_error;
};

// A metric could not be evaluated (empty overlap, degenerate input).
struct metric_error : error {
  using error::error;
};

}  // namespace abysslight

#endif
