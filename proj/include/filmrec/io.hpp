#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "filmrec/image.hpp"

namespace filmrec {

// HU slice stack. Values are int16 Hounsfield units.
struct HuGrid {
  int height = 0;
  int width = 0;
  std::vector<std::int16_t> data;

  std::int16_t at(int y, int x) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
};

// FMAP: "FMAP", u32 height, u32 width, u32 channels (LE), u8 role,
// validity bitmap (row-major, 8 px/byte, MSB first), then f32 LE samples
// row-major channel-interleaved.
std::vector<std::uint8_t> encode_fmap(const MapField& field);
MapField decode_fmap(std::span<const std::uint8_t> bytes);
void write_fmap(const std::filesystem::path& path, const MapField& field);
MapField read_fmap(const std::filesystem::path& path);

// 8-bit PNG, gray or RGB. Samples are rounded to the nearest of 256 levels.
std::vector<std::uint8_t> encode_png(const ImageGrid& img);
ImageGrid decode_png(std::span<const std::uint8_t> bytes);
void write_png(const std::filesystem::path& path, const ImageGrid& img);
ImageGrid read_png(const std::filesystem::path& path);

// Raw HU stack: one line of JSON header ({"h","w","slices", ...extra}) ending
// in '\n', followed by h*w*slices int16 little-endian samples.
struct HuStack {
  std::vector<HuGrid> slices;
  nlohmann::json extra = nlohmann::json::object();
};
std::vector<std::uint8_t> encode_hu_raw(const HuStack& stack);
HuStack decode_hu_raw(std::span<const std::uint8_t> bytes);
void write_hu_raw(const std::filesystem::path& path, const HuStack& stack);
HuStack read_hu_raw(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace filmrec
