#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>

#include "gse/baselines.hpp"
#include "gse/gse_layer.hpp"
#include "gse/matrix.hpp"

namespace gse {

/// Decimal text for a double with 17 significant digits; parse_double inverts
/// it bit-exactly (including negative zero, infinities, and nan).
std::string fmt17(double v);
double parse_double(const std::string& token);

/// Standalone matrix container, the CLI's weight-file format:
///   gse-matrix 1
///   dims <rows> <cols>
///   <rows lines of cols decimals>
void save_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix load_matrix(const std::filesystem::path& path);

/// Layer snapshot: config, both backbone variants, all factors, router, and
/// the spectral segments. Round trip is bit-exact.
void save_layer(const std::filesystem::path& path, const GseLayer& layer);
GseLayer load_layer(const std::filesystem::path& path);

void write_layer(std::ostream& out, const GseLayer& layer);
GseLayer read_layer(std::istream& in);

/// Kind-tagged adapter snapshot; GSE adapters embed a layer record.
void save_adapter(const std::filesystem::path& path, const Adapter& adapter);
std::unique_ptr<Adapter> load_adapter(const std::filesystem::path& path);

}  // namespace gse
