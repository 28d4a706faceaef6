#include "tba/pgm.hpp"

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tba/errors.hpp"

namespace tba {

namespace {

// Reads one PNM header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (!std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      while ((c = in.peek()) != EOF && !std::isspace(c) && c != '#') {
        tok.push_back(static_cast<char>(in.get()));
      }
      return tok;
    }
  }
  return tok;
}

int parse_int(const std::string& tok, const std::string& path, const char* what) {
  if (tok.empty()) throw FormatError(path + ": unexpected end of PGM header");
  for (char ch : tok) {
    if (!std::isdigit(static_cast<unsigned char>(ch))) {
      throw FormatError(path + ": bad " + what + " '" + tok + "' in PGM header");
    }
  }
  long v = std::strtol(tok.c_str(), nullptr, 10);
  if (v <= 0 || v > 1 << 20) throw FormatError(path + ": out-of-range " + what + " in PGM header");
  return static_cast<int>(v);
}

}  // namespace

PgmImage load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);

  if (next_token(in) != "P5") throw FormatError(path + ": not a binary PGM (P5)");
  PgmImage img;
  img.width = parse_int(next_token(in), path, "width");
  img.height = parse_int(next_token(in), path, "height");
  const std::string maxval = next_token(in);
  if (maxval != "255") throw FormatError(path + ": PGM maxval must be 255, got '" + maxval + "'");
  // Exactly one whitespace byte separates the header from the raster.
  const int sep = in.get();
  if (sep == EOF || !std::isspace(sep)) throw FormatError(path + ": malformed PGM header");

  const size_t n = static_cast<size_t>(img.width) * img.height;
  img.pixels.resize(n);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n) throw FormatError(path + ": truncated PGM raster");
  return img;
}

void save_pgm(const PgmImage& img, const std::string& path) {
  std::string out;
  char header[64];
  std::snprintf(header, sizeof(header), "P5\n%d %d\n255\n", img.width, img.height);
  out.append(header);
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  atomic_write_file(path, out);
}

void atomic_write_file(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      std::filesystem::remove(tmp);
      throw ConfigError("write failed for " + tmp);
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw ConfigError("cannot rename " + tmp + " to " + path + ": " + ec.message());
  }
}

}  // namespace tba
