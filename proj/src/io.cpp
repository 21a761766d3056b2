#include "filmrec/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <system_error>

#include "filmrec/error.hpp"

namespace filmrec {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

struct PngWriteState {
  std::vector<std::uint8_t>* out;
};

void png_write_cb(png_structp png, png_bytep data, png_size_t length) {
  auto* state = static_cast<PngWriteState*>(png_get_io_ptr(png));
  state->out->insert(state->out->end(), data, data + length);
}

void png_flush_cb(png_structp) {}

struct PngReadState {
  std::span<const std::uint8_t> in;
  std::size_t pos = 0;
};

void png_read_cb(png_structp png, png_bytep data, png_size_t length) {
  auto* state = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (state->pos + length > state->in.size()) {
    png_error(png, "truncated PNG stream");
    return;
  }
  std::memcpy(data, state->in.data() + state->pos, length);
  state->pos += length;
}

// libpng is C; errors leave through its setjmp buffer, never as exceptions.
void png_error_cb(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

void png_warning_cb(png_structp, png_const_charp) {}

}  // namespace

// --------------------------------------------------------------------- FMAP

std::vector<std::uint8_t> encode_fmap(const MapField& field) {
  static_assert(std::numeric_limits<float>::is_iec559);
  std::vector<std::uint8_t> out;
  const std::size_t pixels = field.pixel_count();
  out.reserve(17 + (pixels + 7) / 8 + pixels * field.channels() * 4);
  out.insert(out.end(), {'F', 'M', 'A', 'P'});
  put_u32(out, static_cast<std::uint32_t>(field.height()));
  put_u32(out, static_cast<std::uint32_t>(field.width()));
  put_u32(out, static_cast<std::uint32_t>(field.channels()));
  out.push_back(static_cast<std::uint8_t>(field.role()));

  std::vector<std::uint8_t> bitmap((pixels + 7) / 8, 0);
  const auto valid = field.valid_mask();
  for (std::size_t p = 0; p < pixels; ++p) {
    if (valid[p]) bitmap[p / 8] |= static_cast<std::uint8_t>(0x80u >> (p % 8));
  }
  out.insert(out.end(), bitmap.begin(), bitmap.end());

  for (double v : field.data()) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

MapField decode_fmap(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 17 || std::memcmp(bytes.data(), "FMAP", 4) != 0) {
    throw FormatError("bad magic: not an FMAP file");
  }
  const std::uint32_t h = get_u32(bytes, 4);
  const std::uint32_t w = get_u32(bytes, 8);
  const std::uint32_t c = get_u32(bytes, 12);
  const std::uint8_t role_code = bytes[16];
  if (role_code > static_cast<std::uint8_t>(Role::kMask)) {
    throw FormatError("FMAP: unknown role code " + std::to_string(role_code));
  }
  const auto role = static_cast<Role>(role_code);
  if (static_cast<int>(c) != role_channels(role)) {
    throw FormatError("FMAP: channel count " + std::to_string(c) + " does not match role " +
                      std::string(role_name(role)));
  }
  const std::size_t pixels = static_cast<std::size_t>(h) * w;
  const std::size_t bitmap_bytes = (pixels + 7) / 8;
  const std::size_t expected = 17 + bitmap_bytes + pixels * c * 4;
  if (bytes.size() != expected) {
    throw FormatError("FMAP: expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  std::vector<std::uint8_t> valid(pixels);
  for (std::size_t p = 0; p < pixels; ++p) {
    valid[p] = (bytes[17 + p / 8] & (0x80u >> (p % 8))) ? 1 : 0;
  }
  std::vector<double> data(pixels * c);
  const std::size_t base = 17 + bitmap_bytes;
  for (std::size_t k = 0; k < data.size(); ++k) {
    data[k] = std::bit_cast<float>(get_u32(bytes, base + 4 * k));
  }
  return MapField(static_cast<int>(h), static_cast<int>(w), role, std::move(data),
                  std::move(valid));
}

void write_fmap(const std::filesystem::path& path, const MapField& field) {
  write_file_atomic(path, encode_fmap(field));
}

MapField read_fmap(const std::filesystem::path& path) {
  try {
    return decode_fmap(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------- PNG

std::vector<std::uint8_t> encode_png(const ImageGrid& img) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw ArgumentError("PNG export supports 1 or 3 channels");
  }
  if (img.range() != RangeTag::kUnit) {
    throw ContractError("PNG export expects a UNIT image");
  }
  std::vector<std::uint8_t> out;
  std::string error_text;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &error_text, png_error_cb, png_warning_cb);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  PngWriteState state{&out};
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width()) * img.channels());
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png encode: " + error_text);
  }
  {
    png_set_write_fn(png, &state, png_write_cb, png_flush_cb);
    png_set_IHDR(png, info, img.width(), img.height(), 8,
                 img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        for (int c = 0; c < img.channels(); ++c) {
          row[static_cast<std::size_t>(x) * img.channels() + c] = to_byte(img.at(y, x, c));
        }
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

ImageGrid decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw FormatError("bad magic: not a PNG file");
  }
  std::string error_text;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &error_text, png_error_cb, png_warning_cb);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  PngReadState state{bytes, 0};
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;
  std::vector<std::uint8_t> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("png decode: " + error_text);
  }
  {
    png_set_read_fn(png, &state, png_read_cb);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
      png_destroy_read_struct(&png, &info, nullptr);
      throw FormatError("unsupported PNG channel layout");
    }
    row.resize(png_get_rowbytes(png, info));
    data.resize(static_cast<std::size_t>(width) * height * channels);
    for (int y = 0; y < height; ++y) {
      png_read_row(png, row.data(), nullptr);
      for (std::size_t k = 0; k < static_cast<std::size_t>(width) * channels; ++k) {
        data[static_cast<std::size_t>(y) * width * channels + k] = row[k] / 255.0;
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return ImageGrid(height, width, channels, std::move(data));
}

void write_png(const std::filesystem::path& path, const ImageGrid& img) {
  write_file_atomic(path, encode_png(img));
}

ImageGrid read_png(const std::filesystem::path& path) {
  try {
    return decode_png(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ------------------------------------------------------------------- HU raw

std::vector<std::uint8_t> encode_hu_raw(const HuStack& stack) {
  const int h = stack.slices.empty() ? 0 : stack.slices.front().height;
  const int w = stack.slices.empty() ? 0 : stack.slices.front().width;
  for (const auto& s : stack.slices) {
    if (s.height != h || s.width != w) throw ArgumentError("HU slices differ in size");
  }
  nlohmann::json header = stack.extra;
  header["h"] = h;
  header["w"] = w;
  header["slices"] = stack.slices.size();
  const std::string text = header.dump() + "\n";
  std::vector<std::uint8_t> out(text.begin(), text.end());
  for (const auto& s : stack.slices) {
    for (std::int16_t v : s.data) {
      const auto u = static_cast<std::uint16_t>(v);
      out.push_back(static_cast<std::uint8_t>(u & 0xff));
      out.push_back(static_cast<std::uint8_t>(u >> 8));
    }
  }
  return out;
}

HuStack decode_hu_raw(std::span<const std::uint8_t> bytes) {
  const auto newline = std::find(bytes.begin(), bytes.end(), std::uint8_t{'\n'});
  if (bytes.empty() || bytes.front() != '{' || newline == bytes.end()) {
    throw FormatError("bad magic: HU raw file lacks a JSON header line");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin(), newline);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("HU raw header: ") + e.what());
  }
  HuStack stack;
  const int h = header.at("h").get<int>();
  const int w = header.at("w").get<int>();
  const int n = header.at("slices").get<int>();
  const auto payload = bytes.subspan(static_cast<std::size_t>(newline - bytes.begin()) + 1);
  const std::size_t per_slice = static_cast<std::size_t>(h) * w;
  if (payload.size() != per_slice * n * 2) {
    throw FormatError("HU raw payload size does not match header");
  }
  for (int s = 0; s < n; ++s) {
    HuGrid g{h, w, std::vector<std::int16_t>(per_slice)};
    for (std::size_t k = 0; k < per_slice; ++k) {
      const std::size_t at = (s * per_slice + k) * 2;
      g.data[k] = static_cast<std::int16_t>(
          static_cast<std::uint16_t>(payload[at] | (payload[at + 1] << 8)));
    }
    stack.slices.push_back(std::move(g));
  }
  header.erase("h");
  header.erase("w");
  header.erase("slices");
  stack.extra = std::move(header);
  return stack;
}

void write_hu_raw(const std::filesystem::path& path, const HuStack& stack) {
  write_file_atomic(path, encode_hu_raw(stack));
}

HuStack read_hu_raw(const std::filesystem::path& path) {
  try {
    return decode_hu_raw(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ------------------------------------------------------------------ generic

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  const auto parent = path.parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw IoError("directory does not exist: " + parent.string());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename to " + path.string() + " failed: " + ec.message());
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                    text.size()));
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  write_text_atomic(path, doc.dump(2) + "\n");
}

nlohmann::json read_json(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace filmrec
