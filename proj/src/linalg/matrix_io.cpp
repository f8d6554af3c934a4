#include "dlab/matrix_io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dlab/error.hpp"

namespace dlab::io {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string to_csv(const Matrix& m) {
  std::string out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

Matrix from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<double> data;
  std::size_t rows = 0, cols = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t count = 0;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        data.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw InputError("csv: cannot parse value '" + cell + "' on row " + std::to_string(rows));
      }
      ++count;
    }
    if (rows == 0) cols = count;
    if (count != cols) throw ShapeError("csv: row " + std::to_string(rows) + " has " + std::to_string(count) +
                                        " values, expected " + std::to_string(cols));
    ++rows;
  }
  return {rows, cols, std::move(data)};
}

void write_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os << to_csv(m);
}

Matrix read_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return from_csv(ss.str());
}

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw InputError("binary matrix: truncated stream");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_frame(std::ostream& os, const Matrix& m) {
  write_u64(os, m.rows());
  write_u64(os, m.cols());
  for (double v : m.data()) write_u64(os, std::bit_cast<std::uint64_t>(v));
}

Matrix read_frame(std::istream& is) {
  const std::uint64_t rows = read_u64(is);
  const std::uint64_t cols = read_u64(is);
  if (cols != 0 && rows > (std::uint64_t{1} << 40) / cols) throw InputError("binary matrix: implausible shape");
  std::vector<double> data(rows * cols);
  for (double& v : data) v = std::bit_cast<double>(read_u64(is));
  return {rows, cols, std::move(data)};
}

void write_binary(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  write_frame(os, m);
}

Matrix read_binary(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  return read_frame(is);
}

}  // namespace dlab::io
