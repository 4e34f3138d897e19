#include "rstab/formats.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>

#include "rstab/error.hpp"

namespace rstab {

namespace fs = std::filesystem;

namespace {

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

std::uint32_t load_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void store_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

float load_f32(const unsigned char* p, bool little) {
  std::uint32_t bits = load_u32_le(p);
  if (!little) bits = ((bits & 0xFFu) << 24) | ((bits & 0xFF00u) << 8) | ((bits >> 8) & 0xFF00u) | (bits >> 24);
  return std::bit_cast<float>(bits);
}

void store_f32_le(std::vector<unsigned char>& out, float v) { store_u32_le(out, std::bit_cast<std::uint32_t>(v)); }

unsigned char to_byte(float v) {
  const float c = std::clamp(std::isfinite(v) ? v : 0.0f, 0.0f, 1.0f);
  return static_cast<unsigned char>(std::lround(c * 255.0f));
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + quoted(path) + ": " + std::strerror(errno));
  return f;
}

void write_png_raw(const fs::path& path, int width, int height, int color_type, int channels,
                   const std::vector<unsigned char>& bytes) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed for " + quoted(path));
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG " + quoted(path));
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, bytes.data() + static_cast<std::size_t>(y) * width * channels);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(f.get()) != 0) throw IoError("failed writing PNG " + quoted(path));
}

// Decodes any PNG into 8-bit RGB or gray according to `want_rgb`.
std::vector<unsigned char> read_png_raw(const fs::path& path, bool want_rgb, int& width, int& height) {
  FilePtr f = open_file(path, "rb");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError("not a PNG file: " + quoted(path));
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed for " + quoted(path));
  }
  std::vector<unsigned char> bytes;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG " + quoted(path));
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  const bool is_gray = color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA;
  if (want_rgb && is_gray) png_set_gray_to_rgb(png);
  if (!want_rgb && !is_gray) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  const std::size_t channels = want_rgb ? 3 : 1;
  if (row_bytes != channels * static_cast<std::size_t>(width)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported PNG layout in " + quoted(path));
  }
  bytes.resize(row_bytes * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return bytes;
}

Image read_ppm(const fs::path& path) {
  const std::vector<unsigned char> bytes = read_file_bytes(path);
  std::size_t pos = 0;
  auto token = [&]() {
    std::string t;
    while (pos < bytes.size()) {
      const char c = static_cast<char>(bytes[pos]);
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        ++pos;
      } else {
        t.push_back(c);
        ++pos;
      }
    }
    return t;
  };
  if (token() != "P6") throw IoError("not a binary PPM (P6): " + quoted(path));
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(token());
    height = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw IoError("malformed PPM header in " + quoted(path));
  }
  ++pos;  // single whitespace after maxval
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) {
    throw IoError("unsupported PPM dimensions or maxval in " + quoted(path));
  }
  const std::size_t need = static_cast<std::size_t>(width) * height * 3;
  if (bytes.size() < pos + need) throw IoError("truncated PPM data in " + quoted(path));
  Image img(height, width, 3);
  for (std::size_t i = 0; i < need; ++i) {
    img.data()[i] = static_cast<float>(bytes[pos + i]) / static_cast<float>(maxval);
  }
  return img;
}

}  // namespace

std::vector<unsigned char> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + quoted(path));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + quoted(path));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + quoted(path));
}

Image read_image(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".ppm") return read_ppm(path);
  int width = 0, height = 0;
  const std::vector<unsigned char> bytes = read_png_raw(path, true, width, height);
  Image img(height, width, 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.data()[i] = static_cast<float>(bytes[i]) / 255.0f;
  return img;
}

void write_png(const Image& image, const fs::path& path) {
  if (image.channels() != 3) throw ContractViolation("write_png expects a 3-channel image");
  std::vector<unsigned char> bytes(image.data().size());
  std::transform(image.data().begin(), image.data().end(), bytes.begin(), to_byte);
  write_png_raw(path, image.width(), image.height(), PNG_COLOR_TYPE_RGB, 3, bytes);
}

void write_mask_png(const Mask& mask, const fs::path& path) {
  std::vector<unsigned char> bytes(mask.data().size());
  std::transform(mask.data().begin(), mask.data().end(), bytes.begin(),
                 [](std::uint8_t v) { return static_cast<unsigned char>(v ? 255 : 0); });
  write_png_raw(path, mask.width(), mask.height(), PNG_COLOR_TYPE_GRAY, 1, bytes);
}

Mask read_mask_png(const fs::path& path) {
  int width = 0, height = 0;
  const std::vector<unsigned char> bytes = read_png_raw(path, false, width, height);
  Mask mask(height, width, 1);
  for (std::size_t i = 0; i < bytes.size(); ++i) mask.data()[i] = bytes[i] >= 128 ? 1 : 0;
  return mask;
}

DepthMap read_pfm(const fs::path& path) {
  const std::vector<unsigned char> bytes = read_file_bytes(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  const std::string magic = token();
  if (magic == "PF") throw IoError("color PFM not supported for depth: " + quoted(path));
  if (magic != "Pf") throw IoError("bad PFM magic in " + quoted(path));
  int width = 0, height = 0;
  double scale = 0.0;
  try {
    width = std::stoi(token());
    height = std::stoi(token());
    scale = std::stod(token());
  } catch (const std::exception&) {
    throw IoError("malformed PFM header in " + quoted(path));
  }
  if (width <= 0 || height <= 0 || scale == 0.0) throw IoError("invalid PFM header values in " + quoted(path));
  ++pos;  // single whitespace terminates the header
  const bool little = scale < 0.0;
  const std::size_t need = static_cast<std::size_t>(width) * height * 4;
  if (bytes.size() < pos + need) throw IoError("truncated PFM data in " + quoted(path));
  DepthMap depth(height, width, 1);
  const unsigned char* p = bytes.data() + pos;
  for (int row = 0; row < height; ++row) {
    const int y = height - 1 - row;
    for (int x = 0; x < width; ++x, p += 4) depth(y, x) = load_f32(p, little);
  }
  return depth;
}

void write_pfm(const DepthMap& depth, const fs::path& path) {
  if (depth.channels() != 1) throw ContractViolation("write_pfm expects a single-channel map");
  const std::string header = "Pf\n" + std::to_string(depth.width()) + " " + std::to_string(depth.height()) + "\n-1.0\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + depth.data().size() * 4);
  for (int y = depth.height() - 1; y >= 0; --y) {
    for (int x = 0; x < depth.width(); ++x) store_f32_le(out, depth(y, x));
  }
  write_file_bytes(path, out);
}

FlowField read_flo(const fs::path& path) {
  const std::vector<unsigned char> bytes = read_file_bytes(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "PIEH", 4) != 0) {
    throw IoError("bad .flo magic (expected PIEH) in " + quoted(path));
  }
  const auto width = static_cast<std::int32_t>(load_u32_le(bytes.data() + 4));
  const auto height = static_cast<std::int32_t>(load_u32_le(bytes.data() + 8));
  if (width <= 0 || height <= 0 || width > (1 << 16) || height > (1 << 16)) {
    throw IoError("invalid .flo dimensions in " + quoted(path));
  }
  const std::size_t need = static_cast<std::size_t>(width) * height * 8;
  if (bytes.size() != 12 + need) throw IoError(".flo size does not match its dimensions in " + quoted(path));
  FlowField flow(height, width, 2);
  const unsigned char* p = bytes.data() + 12;
  for (float& v : flow.data()) {
    v = load_f32(p, true);
    p += 4;
  }
  return flow;
}

void write_flo(const FlowField& flow, const fs::path& path) {
  if (flow.channels() != 2) throw ContractViolation("write_flo expects a 2-channel field");
  std::vector<unsigned char> out = {'P', 'I', 'E', 'H'};
  store_u32_le(out, static_cast<std::uint32_t>(flow.width()));
  store_u32_le(out, static_cast<std::uint32_t>(flow.height()));
  for (float v : flow.data()) store_f32_le(out, v);
  write_file_bytes(path, out);
}

PoseSequence read_poses(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + quoted(path));
  PoseSequence seq;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    int t = 0;
    double qw, qx, qy, qz, tx, ty, tz;
    if (!(ls >> t >> qw >> qx >> qy >> qz >> tx >> ty >> tz)) {
      throw IoError("malformed pose line " + std::to_string(line_no) + " in " + quoted(path));
    }
    try {
      seq.poses.emplace_back(Eigen::Quaterniond(qw, qx, qy, qz), Eigen::Vector3d(tx, ty, tz));
    } catch (const ContractViolation& e) {
      throw IoError("invalid pose on line " + std::to_string(line_no) + " in " + quoted(path) + ": " + e.what());
    }
    seq.timestamps.push_back(t);
  }
  try {
    seq.validate();
  } catch (const ContractViolation& e) {
    throw IoError(quoted(path) + ": " + e.what());
  }
  return seq;
}

void write_poses(const PoseSequence& seq, const fs::path& path) {
  seq.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + quoted(path));
  out << std::setprecision(17);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const Pose& p = seq.poses[i];
    out << seq.timestamps[i] << ' ' << p.rotation().w() << ' ' << p.rotation().x() << ' ' << p.rotation().y() << ' '
        << p.rotation().z() << ' ' << p.translation().x() << ' ' << p.translation().y() << ' '
        << p.translation().z() << '\n';
  }
  if (!out) throw IoError("failed writing " + quoted(path));
}

Intrinsics read_intrinsics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + quoted(path));
  Intrinsics k;
  if (!(in >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height)) {
    throw IoError("malformed intrinsics file " + quoted(path));
  }
  try {
    k.validate();
  } catch (const ContractViolation& e) {
    throw IoError(quoted(path) + ": " + e.what());
  }
  return k;
}

void write_intrinsics(const Intrinsics& k, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + quoted(path));
  out << std::setprecision(17) << k.fx << ' ' << k.fy << ' ' << k.cx << ' ' << k.cy << ' ' << k.width << ' '
      << k.height << '\n';
  if (!out) throw IoError("failed writing " + quoted(path));
}

}  // namespace rstab
