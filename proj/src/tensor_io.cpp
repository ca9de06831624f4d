#include "evoattack/tensor_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

namespace evoattack {
namespace {

constexpr std::array<char, 4> kMagic = {'P', 'T', 'E', 'N'};
constexpr std::size_t kHeaderBytes = 16;

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void check_channels(std::size_t channels, const std::filesystem::path& path) {
  if (channels != 1 && channels != 3)
    throw IoError(path.string() + ": unsupported channel count " + std::to_string(channels));
}

}  // namespace

ImageFormat format_for(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" ? ImageFormat::Png : ImageFormat::FlatBinary;
}

RawTensor read_flat(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic.data(), 4) != 0)
    throw IoError(path.string() + ": not a PTEN tensor file");

  RawTensor raw;
  raw.shape = {get_u16(&bytes[4]), get_u16(&bytes[6]), get_u16(&bytes[8])};
  if (raw.shape.size() == 0) throw IoError(path.string() + ": empty tensor shape");
  if (raw.shape.channels > 4)
    throw IoError(path.string() + ": unsupported channel count " +
                  std::to_string(raw.shape.channels));
  const std::size_t expected = kHeaderBytes + raw.shape.size() * 4;
  if (bytes.size() != expected)
    throw IoError(path.string() + ": payload is " + std::to_string(bytes.size()) +
                  " bytes, header implies " + std::to_string(expected));

  raw.data.resize(raw.shape.size());
  const unsigned char* p = bytes.data() + kHeaderBytes;
  for (std::size_t i = 0; i < raw.data.size(); ++i, p += 4) {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                               (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) |
                               (static_cast<std::uint32_t>(p[3]) << 24);
    raw.data[i] = std::bit_cast<float>(bits);
  }
  return raw;
}

void write_flat(const std::filesystem::path& path, const Shape& shape,
                std::span<const float> data) {
  constexpr auto kMax = std::numeric_limits<std::uint16_t>::max();
  if (shape.height > kMax || shape.width > kMax || shape.channels > kMax)
    throw IoError(path.string() + ": dimension overflow for shape " + to_string(shape));
  if (data.size() != shape.size()) throw ShapeError("write_flat: data does not match shape");

  std::vector<unsigned char> bytes(kMagic.begin(), kMagic.end());
  bytes.reserve(kHeaderBytes + data.size() * 4);
  put_u16(bytes, static_cast<std::uint16_t>(shape.height));
  put_u16(bytes, static_cast<std::uint16_t>(shape.width));
  put_u16(bytes, static_cast<std::uint16_t>(shape.channels));
  put_u16(bytes, 0);
  bytes.resize(kHeaderBytes, 0);
  for (float v : data) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<unsigned char>(bits >> (8 * k)));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

ImageTensor load_image(const std::filesystem::path& path, ImageFormat format) {
  if (format == ImageFormat::FlatBinary) {
    auto raw = read_flat(path);
    check_channels(raw.shape.channels, path);
    try {
      return ImageTensor(raw.shape, std::move(raw.data));
    } catch (const RangeError& e) {
      throw IoError(path.string() + ": " + e.what());
    }
  }

  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw IoError(path.string() + ": " + img.message);
  // Anything with colour is read as RGB, everything else as gray; alpha is dropped.
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const Shape shape{img.height, img.width, color ? 3u : 1u};
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw IoError(path.string() + ": " + msg);
  }
  std::vector<float> data(shape.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(buf[i]) / 255.0f;
  return ImageTensor(shape, std::move(data));
}

ImageTensor load_image(const std::filesystem::path& path) {
  return load_image(path, format_for(path));
}

void save_image(const ImageTensor& image, const std::filesystem::path& path, ImageFormat format) {
  check_channels(image.shape().channels, path);
  if (format == ImageFormat::FlatBinary) {
    write_flat(path, image.shape(), image.data());
    return;
  }

  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.shape().width);
  img.height = static_cast<png_uint_32>(image.shape().height);
  img.format = image.shape().channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(image.size());
  auto src = image.data();
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<png_byte>(std::lround(src[i] * 255.0f));
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
    std::string msg = img.message;
    throw IoError(path.string() + ": " + msg);
  }
}

void save_image(const ImageTensor& image, const std::filesystem::path& path) {
  save_image(image, path, format_for(path));
}

Perturbation load_perturbation(const std::filesystem::path& path) {
  auto raw = read_flat(path);
  try {
    return Perturbation(raw.shape, std::move(raw.data));
  } catch (const RangeError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void save_perturbation(const Perturbation& pert, const std::filesystem::path& path) {
  write_flat(path, pert.shape(), pert.data());
}

}  // namespace evoattack
