// wcl/model_file.hpp — plain-text model descriptions.
//
// A model file is an INI-style description of a small system plus its
// reservoir channels:
//
//   [system]
//   dim = 2
//   cluster_tol = 1e-9
//   K = 0 0  0 0  0 0  1 0          # row-major, re im pairs
//
//   [channel.1]                      # label: transition frequency
//   interval = 0.5 1.5
//   multiplicity = 1
//   profile = flat 0.2               # flat A | lorentzian A c w | gaussian A c w
//   coupling = 0 0  1 0  1 0  0 0    # row-major, re im, (dim*mult) x dim
//
//   [tail]                           # unlabeled far-field channel
//   interval = 2.0 4.0
//   ...
//
//   [discretization]
//   rule = midpoint                  # midpoint | gauss
//   modes_per_channel = 64
//
// A `profile = table x1 v1 x2 v2 ...` row lists sample points for linear
// interpolation. Parse errors carry the line number and field name.
#pragma once

#include "wcl/system_model.hpp"

#include <iosfwd>
#include <string>

namespace wcl::sys {

struct ModelFile {
  SmallSystem system;
  ReservoirModel reservoir;
  GridRule rule = GridRule::Midpoint;
  int modes_per_channel = 64;

  DiscretizedReservoir discretize() const {
    return discretize_reservoir(system, reservoir, rule, modes_per_channel);
  }
  DiscretizedReservoir discretize(int n) const {
    return discretize_reservoir(system, reservoir, rule, n);
  }
};

// Parses a model description; throws std::runtime_error with the offending
// line number on malformed input.
ModelFile parse_model(std::istream& in, const std::string& origin = "<stream>");
ModelFile load_model(const std::string& path);

}  // namespace wcl::sys
