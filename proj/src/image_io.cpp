#include "msff/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace msff {

namespace {

bool host_is_little_endian() {
  const std::uint16_t probe = 1;
  return *reinterpret_cast<const std::uint8_t*>(&probe) == 1;
}

void swap_floats(std::vector<float>& v) {
  for (float& f : v) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    u = __builtin_bswap32(u);
    std::memcpy(&f, &u, 4);
  }
}

// Whitespace-delimited PFM header token, single '#' comments not part of the
// spec so not handled.
std::string next_token(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw IoError(IoErrorKind::truncated, "pfm: truncated header");
  return tok;
}

}  // namespace

void save_pfm(const std::string& path, const HdrImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(IoErrorKind::os_error, "cannot open for writing: " + path);
  out << "PF\n" << img.width << " " << img.height << "\n-1.0\n";
  // Bottom-to-top row order.
  std::vector<float> row(static_cast<std::size_t>(img.width) * 3);
  for (int y = img.height - 1; y >= 0; --y) {
    std::memcpy(row.data(), img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3,
                row.size() * 4);
    if (!host_is_little_endian()) swap_floats(row);
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
  }
  if (!out) throw IoError(IoErrorKind::os_error, "write failed: " + path);
}

HdrImage load_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorKind::os_error, "cannot open: " + path);
  const std::string magic = next_token(in);
  if (magic != "PF" && magic != "Pf")
    throw IoError(IoErrorKind::bad_magic, "pfm: bad magic '" + magic + "' in " + path);
  const bool gray = magic == "Pf";
  int w = 0, h = 0;
  double scale = 0;
  try {
    w = std::stoi(next_token(in));
    h = std::stoi(next_token(in));
    scale = std::stod(next_token(in));
  } catch (const std::exception&) {
    throw IoError(IoErrorKind::truncated, "pfm: unparsable header in " + path);
  }
  if (w <= 0 || h <= 0)
    throw IoError(IoErrorKind::bad_dims, "pfm: nonpositive dims " + std::to_string(w) + "x" +
                                             std::to_string(h) + " in " + path);
  in.get();  // single whitespace byte after the scale line
  const int ch = gray ? 1 : 3;
  std::vector<float> row(static_cast<std::size_t>(w) * ch);
  HdrImage img;
  img.width = w;
  img.height = h;
  img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  const bool file_le = scale < 0;
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
    if (!in) throw IoError(IoErrorKind::truncated, "pfm: truncated payload in " + path);
    if (file_le != host_is_little_endian()) swap_floats(row);
    float* dst = img.rgb.data() + static_cast<std::size_t>(y) * w * 3;
    if (gray) {
      for (int x = 0; x < w; ++x) dst[x * 3] = dst[x * 3 + 1] = dst[x * 3 + 2] = row[x];
    } else {
      std::memcpy(dst, row.data(), row.size() * 4);
    }
  }
  return img;
}

void save_flow_pfm(const std::string& path, const FlowImage& flow) {
  HdrImage packed;
  packed.height = flow.height;
  packed.width = flow.width;
  packed.rgb.assign(static_cast<std::size_t>(flow.height) * flow.width * 3, 0.f);
  for (int y = 0; y < flow.height; ++y)
    for (int x = 0; x < flow.width; ++x) {
      packed.at(y, x, 0) = flow.dx(y, x);
      packed.at(y, x, 1) = flow.dy(y, x);
    }
  save_pfm(path, packed);
}

FlowImage load_flow_pfm(const std::string& path) {
  const HdrImage packed = load_pfm(path);
  FlowImage flow;
  flow.height = packed.height;
  flow.width = packed.width;
  flow.xy.resize(static_cast<std::size_t>(packed.height) * packed.width * 2);
  for (int y = 0; y < packed.height; ++y)
    for (int x = 0; x < packed.width; ++x)
      flow.set(y, x, packed.at(y, x, 0), packed.at(y, x, 1));
  return flow;
}

namespace {

struct PngReadCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* fp = nullptr;
  ~PngReadCloser() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngWriteCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* fp = nullptr;
  ~PngWriteCloser() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

// Decodes to interleaved 16-bit RGB rows regardless of source layout.
void png_read_rgb16(const std::string& path, std::vector<std::uint16_t>& out, int& h, int& w,
                    int& bit_depth) {
  PngReadCloser ctx;
  ctx.fp = std::fopen(path.c_str(), "rb");
  if (!ctx.fp) throw IoError(IoErrorKind::os_error, "cannot open: " + path);
  std::uint8_t sig[8];
  if (std::fread(sig, 1, 8, ctx.fp) != 8)
    throw IoError(IoErrorKind::truncated, "png: truncated signature in " + path);
  if (png_sig_cmp(sig, 0, 8))
    throw IoError(IoErrorKind::bad_magic, "png: bad signature in " + path);
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info) throw IoError(IoErrorKind::os_error, "png: init failed");
  if (setjmp(png_jmpbuf(ctx.png)))
    throw IoError(IoErrorKind::truncated, "png: decode error in " + path);
  png_init_io(ctx.png, ctx.fp);
  png_set_sig_bytes(ctx.png, 8);
  png_read_info(ctx.png, ctx.info);

  w = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
  h = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
  if (w <= 0 || h <= 0) throw IoError(IoErrorKind::bad_dims, "png: nonpositive dims in " + path);
  bit_depth = png_get_bit_depth(ctx.png, ctx.info);
  const int color = png_get_color_type(ctx.png, ctx.info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
  if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
  if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(ctx.png);
  png_set_strip_alpha(ctx.png);
  if (bit_depth < 16) png_set_expand_16(ctx.png);
  if (host_is_little_endian()) png_set_swap(ctx.png);  // PNG stores 16-bit big-endian
  png_read_update_info(ctx.png, ctx.info);

  out.resize(static_cast<std::size_t>(h) * w * 3);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[static_cast<std::size_t>(y)] =
        reinterpret_cast<png_bytep>(out.data() + static_cast<std::size_t>(y) * w * 3);
  png_read_image(ctx.png, rows.data());
  png_read_end(ctx.png, nullptr);
}

void png_write_impl(const std::string& path, const void* data, int h, int w, int bit_depth,
                    int color_type, int channels) {
  PngWriteCloser ctx;
  ctx.fp = std::fopen(path.c_str(), "wb");
  if (!ctx.fp) throw IoError(IoErrorKind::os_error, "cannot open for writing: " + path);
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info) throw IoError(IoErrorKind::os_error, "png: init failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw IoError(IoErrorKind::os_error, "png: write error");
  png_init_io(ctx.png, ctx.fp);
  png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  if (bit_depth == 16 && host_is_little_endian()) png_set_swap(ctx.png);
  const std::size_t row_bytes = static_cast<std::size_t>(w) * channels * (bit_depth / 8);
  const auto* bytes = static_cast<const std::uint8_t*>(data);
  for (int y = 0; y < h; ++y)
    png_write_row(ctx.png, const_cast<png_bytep>(bytes + static_cast<std::size_t>(y) * row_bytes));
  png_write_end(ctx.png, nullptr);
}

}  // namespace

void save_png8(const std::string& path, const std::vector<std::uint8_t>& rgb, int h, int w) {
  png_write_impl(path, rgb.data(), h, w, 8, PNG_COLOR_TYPE_RGB, 3);
}

void save_png16(const std::string& path, const LdrImage& img) {
  std::vector<std::uint16_t> codes(static_cast<std::size_t>(img.height) * img.width * 3);
  for (std::size_t i = 0; i < codes.size(); ++i)
    codes[i] = static_cast<std::uint16_t>(
        std::lround(std::clamp(img.rgb[i], 0.f, 1.f) * 65535.f));
  png_write_impl(path, codes.data(), img.height, img.width, 16, PNG_COLOR_TYPE_RGB, 3);
}

void save_mask_png(const std::string& path, const MaskImage& mask) {
  std::vector<std::uint8_t> bytes(mask.v.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.v[i] ? 255 : 0;
  png_write_impl(path, bytes.data(), mask.height, mask.width, 8, PNG_COLOR_TYPE_GRAY, 1);
}

LdrImage load_png(const std::string& path) {
  std::vector<std::uint16_t> codes;
  int h = 0, w = 0, bit_depth = 0;
  png_read_rgb16(path, codes, h, w, bit_depth);
  LdrImage img;
  img.height = h;
  img.width = w;
  img.rgb.resize(codes.size());
  // expand_16 maps 8-bit x to x*257, so dividing by 65535 preserves the
  // 8-bit normalization x/255 exactly.
  for (std::size_t i = 0; i < codes.size(); ++i)
    img.rgb[i] = static_cast<float>(codes[i]) / 65535.f;
  return img;
}

MaskImage load_mask_png(const std::string& path) {
  const LdrImage img = load_png(path);
  MaskImage mask;
  mask.height = img.height;
  mask.width = img.width;
  mask.v.resize(static_cast<std::size_t>(img.height) * img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      mask.v[static_cast<std::size_t>(y) * img.width + x] = img.at(y, x, 0) > 0.5f ? 1 : 0;
  return mask;
}

void save_ppm(const std::string& path, const LdrImage& img, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16)
    throw IoError(IoErrorKind::unsupported, "ppm: bit depth must be 8 or 16");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(IoErrorKind::os_error, "cannot open for writing: " + path);
  const int maxval = bit_depth == 8 ? 255 : 65535;
  out << "P6\n" << img.width << " " << img.height << "\n" << maxval << "\n";
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const long code = std::lround(std::clamp(img.at(y, x, c), 0.f, 1.f) * maxval);
        if (bit_depth == 8) {
          out.put(static_cast<char>(code));
        } else {
          out.put(static_cast<char>(code >> 8));  // P6 16-bit is big-endian
          out.put(static_cast<char>(code & 0xff));
        }
      }
  if (!out) throw IoError(IoErrorKind::os_error, "write failed: " + path);
}

LdrImage load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorKind::os_error, "cannot open: " + path);
  std::string magic = next_token(in);
  if (magic != "P6") throw IoError(IoErrorKind::bad_magic, "ppm: bad magic '" + magic + "'");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(in));
    h = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw IoError(IoErrorKind::truncated, "ppm: unparsable header in " + path);
  }
  if (w <= 0 || h <= 0) throw IoError(IoErrorKind::bad_dims, "ppm: nonpositive dims in " + path);
  if (maxval != 255 && maxval != 65535)
    throw IoError(IoErrorKind::unsupported, "ppm: unsupported maxval " + std::to_string(maxval));
  in.get();  // single whitespace after maxval
  const int bytes_per = maxval == 255 ? 1 : 2;
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h * 3 * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw IoError(IoErrorKind::truncated, "ppm: truncated payload in " + path);
  LdrImage img;
  img.height = h;
  img.width = w;
  img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) {
    const int code = bytes_per == 1 ? raw[i] : (raw[i * 2] << 8) | raw[i * 2 + 1];
    img.rgb[i] = static_cast<float>(code) / static_cast<float>(maxval);
  }
  return img;
}

LdrImage load_ldr(const std::string& path) {
  const std::string ext = fs::path(path).extension().string();
  if (ext == ".png") return load_png(path);
  if (ext == ".ppm") return load_ppm(path);
  throw IoError(IoErrorKind::unsupported, "unsupported LDR format: " + path);
}

HdrImage load_hdr(const std::string& path) { return load_pfm(path); }

void save_hdr(const std::string& path, const HdrImage& img) { save_pfm(path, img); }

std::vector<double> load_exposures(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoErrorKind::os_error, "cannot open: " + path);
  std::vector<double> evs;
  double v;
  while (in >> v) evs.push_back(v);
  if (evs.empty()) throw IoError(IoErrorKind::truncated, "no exposure values in " + path);
  return evs;
}

void save_exposures(const std::string& path, const std::vector<double>& evs) {
  std::ofstream out(path);
  if (!out) throw IoError(IoErrorKind::os_error, "cannot open for writing: " + path);
  for (double ev : evs) out << ev << "\n";
}

Scene load_scene(const std::string& dir) {
  Scene scene;
  scene.name = fs::path(dir).filename().string();
  auto input_path = [&](int i) {
    const std::string png = dir + "/input_" + std::to_string(i) + ".png";
    if (fs::exists(png)) return png;
    const std::string ppm = dir + "/input_" + std::to_string(i) + ".ppm";
    if (fs::exists(ppm)) return ppm;
    throw IoError(IoErrorKind::os_error, "scene " + dir + ": missing input_" +
                                             std::to_string(i) + ".png/.ppm");
  };
  scene.stack.ldr[0] = load_ldr(input_path(1));
  scene.stack.ldr[1] = load_ldr(input_path(2));
  const std::vector<double> evs = load_exposures(dir + "/exposures.txt");
  if (evs.size() < 2)
    throw IoError(IoErrorKind::truncated, "scene " + dir + ": need two exposure values");
  const double ev_min = std::min(evs[0], evs[1]);
  scene.stack.ldr[0].exposure_t = std::exp2(evs[0] - ev_min);
  scene.stack.ldr[1].exposure_t = std::exp2(evs[1] - ev_min);
  if (fs::exists(dir + "/gt.pfm")) scene.stack.gt = load_pfm(dir + "/gt.pfm");
  if (fs::exists(dir + "/gt_flow.pfm")) scene.gt_flow = load_flow_pfm(dir + "/gt_flow.pfm");
  if (fs::exists(dir + "/mask.png")) scene.occlusion = load_mask_png(dir + "/mask.png");
  scene.stack.validate();
  return scene;
}

std::vector<Scene> load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError(IoErrorKind::os_error, "not a directory: " + dir);
  std::vector<std::string> subdirs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) subdirs.push_back(entry.path().string());
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<Scene> scenes;
  scenes.reserve(subdirs.size());
  for (const auto& sub : subdirs) scenes.push_back(load_scene(sub));
  return scenes;
}

}  // namespace msff
