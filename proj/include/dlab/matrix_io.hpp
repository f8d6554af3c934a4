#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "dlab/matrix.hpp"

namespace dlab::io {

// CSV: one row per line, values comma-separated and printed with %.17g.
std::string to_csv(const Matrix& m);
Matrix from_csv(const std::string& text);
void write_csv(const std::filesystem::path& path, const Matrix& m);
Matrix read_csv(const std::filesystem::path& path);

// Binary frame: u64 rows, u64 cols, then rows*cols f64, all little-endian.
void write_frame(std::ostream& os, const Matrix& m);
Matrix read_frame(std::istream& is);
void write_binary(const std::filesystem::path& path, const Matrix& m);
Matrix read_binary(const std::filesystem::path& path);

void write_u64(std::ostream& os, std::uint64_t v);
std::uint64_t read_u64(std::istream& is);

std::string format_double(double v);

}  // namespace dlab::io
