#pragma once

#include <string>
#include <string_view>

#include "droopgrid/types.hpp"

namespace droopgrid {

/// `%.12g` formatting used by every text artifact.
std::string format_number(double value);

/// The double nearest to format_number(value), so JSON output carries 12 digits.
double round12(double value);

/// Row-major CSV preceded by `# matrix <name> n=<rows>`.
std::string matrix_csv(std::string_view name, const MatrixXd& m);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

} // namespace droopgrid
