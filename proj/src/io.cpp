#include "droopgrid/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "droopgrid/error.hpp"

namespace droopgrid {

std::string format_number(double value)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", value);
    return buf;
}

double round12(double value) { return std::strtod(format_number(value).c_str(), nullptr); }

std::string matrix_csv(std::string_view name, const MatrixXd& m)
{
    std::string out = "# matrix " + std::string(name) + " n=" + std::to_string(m.rows()) + "\n";
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j > 0)
                out += ',';
            out += format_number(m(i, j));
        }
        out += '\n';
    }
    return out;
}

std::string read_text_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InputError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, std::string_view text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw InputError("cannot write " + path);
    out << text;
}

} // namespace droopgrid
