#pragma once

#include <string>
#include <vector>

#include "gca/synthetic.hpp"
#include "gca/tensor.hpp"

namespace gca {

// Shortest decimal string that parses back to exactly the same double.
// Used for every number we persist, so rewriting a file never changes it.
std::string format_double(double x);

// Series CSV layout: header `t,var_0,...,var_{M-1}`, one row per timestep,
// first column the 0-based step index.
void write_series_csv(const std::string& path, const Tensor& series);
Tensor read_series_csv(const std::string& path);

// Ground-truth structure JSON: {M, k, adjacency k*M*M ints, weights k*M*M}.
void write_structures_json(const std::string& path,
                           const std::vector<WeightedLagStructure>& structures);
std::vector<WeightedLagStructure> read_structures_json(const std::string& path);

}  // namespace gca
