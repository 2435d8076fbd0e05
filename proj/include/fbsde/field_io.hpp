#pragma once

#include <iosfwd>
#include <vector>

#include "fbsde/value_field.hpp"

namespace fbsde {

/// Plain-text "key=value" header, a blank line, then little-endian f64 values in ValueField order.
void write_field(const ValueField& field, std::ostream& out);
ValueField read_field(std::istream& in);

/// CSV with columns t,p..,e,v for the requested stored times at p node p_flat.
void write_slices_csv(const ValueField& field, const std::vector<double>& times, int p_flat, std::ostream& out);

}  // namespace fbsde
