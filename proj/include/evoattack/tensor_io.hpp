#ifndef EVOATTACK_TENSOR_IO_HPP
#define EVOATTACK_TENSOR_IO_HPP

#include <filesystem>
#include <stdexcept>
#include <vector>

#include "evoattack/tensor.hpp"

namespace evoattack {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ImageFormat { Png, FlatBinary };

/// Picks the format from the extension: ".png" is PNG, anything else flat binary.
ImageFormat format_for(const std::filesystem::path& path);

// Flat binary layout, little-endian:
//   "PTEN" | u16 height | u16 width | u16 channels | u16 reserved(0) | 4 zero bytes
//   (16-byte header), followed by height*width*channels float32 values, channel-interleaved row-major.
struct RawTensor {
  Shape shape;
  std::vector<float> data;
};

RawTensor read_flat(const std::filesystem::path& path);
void write_flat(const std::filesystem::path& path, const Shape& shape,
                std::span<const float> data);

ImageTensor load_image(const std::filesystem::path& path, ImageFormat format);
ImageTensor load_image(const std::filesystem::path& path);
void save_image(const ImageTensor& image, const std::filesystem::path& path, ImageFormat format);
void save_image(const ImageTensor& image, const std::filesystem::path& path);

/// Flat binary only; PNG cannot carry signed values.
Perturbation load_perturbation(const std::filesystem::path& path);
void save_perturbation(const Perturbation& pert, const std::filesystem::path& path);

}  // namespace evoattack

#endif  // EVOATTACK_TENSOR_IO_HPP
