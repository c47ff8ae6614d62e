#pragma once

// ".utr" tensor container.
//
// Layout (all integers little-endian):
//   magic        4 bytes  "UTR1"
//   entry count  u64
//   per entry:
//     name length u64, name bytes (UTF-8)
//     dtype       u8   (0 = f32, 1 = i64, 2 = u8)
//     ndim        u64
//     dims        ndim x u64
//     payload     row-major, little-endian elements

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace unitr {

enum class DType : std::uint8_t { kF32 = 0, kI64 = 1, kU8 = 2 };

std::size_t dtype_size(DType dtype);

struct Tensor {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<std::int64_t> shape;
  std::vector<std::uint8_t> bytes;  // little-endian payload

  std::int64_t numel() const;

  static Tensor f32(std::string name, std::vector<std::int64_t> shape, std::span<const float> values);
  // Rounds each value to f32.
  static Tensor f32_from(std::string name, std::vector<std::int64_t> shape,
                         std::span<const double> values);
  static Tensor i64(std::string name, std::vector<std::int64_t> shape,
                    std::span<const std::int64_t> values);
  static Tensor u8(std::string name, std::vector<std::int64_t> shape,
                   std::span<const std::uint8_t> values);

  std::vector<float> as_f32() const;
  std::vector<double> as_f64() const;  // widening from f32
  std::vector<std::int64_t> as_i64() const;
  std::vector<std::uint8_t> as_u8() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

class TensorContainer {
 public:
  void add(Tensor tensor);
  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  const std::vector<Tensor>& entries() const { return entries_; }

  std::vector<std::uint8_t> serialize() const;
  static TensorContainer deserialize(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static TensorContainer load(const std::filesystem::path& path);

  friend bool operator==(const TensorContainer&, const TensorContainer&) = default;

 private:
  std::vector<Tensor> entries_;
};

}  // namespace unitr
