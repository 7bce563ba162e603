#ifndef RDMM_MMIO_HPP
#define RDMM_MMIO_HPP

// Matrix Market coordinate I/O (real/integer/pattern, general or symmetric;
// symmetric inputs are expanded).  Reading goes through zlib so plain and
// gzip-compressed files are both accepted.

#include <zlib.h>

#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>

#include "rdmm/tile.hpp"

namespace rdmm {

class mmio_error : public std::runtime_error {
 public:
  explicit mmio_error(const std::string& w) : std::runtime_error(w) {}
};

namespace mmiodetail {

struct GzLineReader {
  gzFile f;
  explicit GzLineReader(const std::string& path) {
    f = gzopen(path.c_str(), "rb");
    if (!f) throw mmio_error("cannot open " + path);
  }
  ~GzLineReader() { gzclose(f); }
  bool getline(std::string& out) {
    out.clear();
    char buf[1 << 14];
    for (;;) {
      if (gzgets(f, buf, sizeof buf) == nullptr) return !out.empty();
      out += buf;
      if (!out.empty() && out.back() == '\n') {
        out.pop_back();
        if (!out.empty() && out.back() == '\r') out.pop_back();
        return true;
      }
    }
  }
};

}  // namespace mmiodetail

template <typename T = float>
CsrTile<T> read_matrix_market(const std::string& path) {
  mmiodetail::GzLineReader in(path);
  std::string line;
  if (!in.getline(line)) throw mmio_error("empty file: " + path);

  std::istringstream hdr(line);
  std::string banner, object, format, field, symmetry;
  hdr >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket" || object != "matrix")
    throw mmio_error("malformed Matrix Market header");
  if (format != "coordinate")
    throw mmio_error("only coordinate format is supported");
  bool pattern = field == "pattern";
  if (field != "real" && field != "integer" && field != "pattern")
    throw mmio_error("unsupported field type: " + field);
  bool symmetric = symmetry == "symmetric";
  if (symmetry != "general" && symmetry != "symmetric")
    throw mmio_error("unsupported symmetry: " + symmetry);

  // skip comments
  do {
    if (!in.getline(line)) throw mmio_error("missing size line");
  } while (!line.empty() && line[0] == '%');

  std::uint64_t rows = 0, cols = 0, entries = 0;
  {
    std::istringstream sz(line);
    if (!(sz >> rows >> cols >> entries))
      throw mmio_error("malformed size line");
  }

  std::vector<std::tuple<index_t, index_t, T>> coo;
  coo.reserve(entries * (symmetric ? 2 : 1));
  for (std::uint64_t e = 0; e < entries; ++e) {
    if (!in.getline(line)) throw mmio_error("unexpected end of file");
    std::istringstream ls(line);
    std::uint64_t r, c;
    double v = 1.0;
    if (!(ls >> r >> c)) throw mmio_error("malformed entry line");
    if (!pattern && !(ls >> v)) throw mmio_error("malformed entry value");
    if (r < 1 || r > rows || c < 1 || c > cols)
      throw mmio_error("entry indices out of range");
    coo.emplace_back(static_cast<index_t>(r - 1), static_cast<index_t>(c - 1),
                     static_cast<T>(v));
    if (symmetric && r != c)
      coo.emplace_back(static_cast<index_t>(c - 1), static_cast<index_t>(r - 1),
                       static_cast<T>(v));
  }
  return CsrTile<T>::from_coo(static_cast<index_t>(rows),
                              static_cast<index_t>(cols), std::move(coo));
}

template <typename T>
void write_matrix_market(const CsrTile<T>& m, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw mmio_error("cannot open " + path + " for writing");
  std::fprintf(f, "%%%%MatrixMarket matrix coordinate real general\n");
  std::fprintf(f, "%u %u %llu\n", m.rows, m.cols,
               static_cast<unsigned long long>(m.nnz()));
  for (index_t r = 0; r < m.rows; ++r)
    for (index_t s = m.row_ptr[r]; s < m.row_ptr[r + 1]; ++s)
      std::fprintf(f, "%u %u %.9g\n", r + 1, m.col_idx[s] + 1,
                   double(m.values[s]));
  std::fclose(f);
}

}  // namespace rdmm

#endif  // RDMM_MMIO_HPP
