#pragma once

#include <stdexcept>
#include <string>

namespace geoshift {

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dimension or layout disagreement between tensors/parameters.
struct shape_error : error {
  using error::error;
};

// Invalid parameter value, invalid config key/value, infeasible setting.
struct config_error : error {
  using error::error;
};

// Operation received an empty split/stream it cannot work on.
struct empty_input_error : error {
  using error::error;
};

// A MixedSampler pool required by the current alpha is empty.
struct sampler_error : error {
  using error::error;
};

// Loss or score became non-finite.
struct numeric_error : error {
  using error::error;
};

// Container / checkpoint I/O failures, one subtype per failure mode.
struct io_error : error {
  using error::error;
};
struct magic_error : io_error {
  using io_error::io_error;
};
struct version_error : io_error {
  using io_error::io_error;
};
struct truncation_error : io_error {
  using io_error::io_error;
};
struct checksum_error : io_error {
  using io_error::io_error;
};

}  // namespace geoshift
