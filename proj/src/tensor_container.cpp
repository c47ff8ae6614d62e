#include "unitr/tensor_container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "unitr/common.hpp"

namespace unitr {
namespace {

constexpr char kMagic[4] = {'U', 'T', 'R', '1'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename Word>
void put_words(std::vector<std::uint8_t>& out, std::span<const Word> words) {
  for (Word w : words) {
    for (std::size_t i = 0; i < sizeof(Word); ++i) out.push_back(static_cast<std::uint8_t>(w >> (8 * i)));
  }
}

template <typename Word>
Word get_word(const std::uint8_t* p) {
  Word w = 0;
  for (std::size_t i = 0; i < sizeof(Word); ++i) w |= static_cast<Word>(p[i]) << (8 * i);
  return w;
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  const std::uint8_t* take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw Error(ErrorCode::kIo, "truncated tensor container");
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint64_t u64() { return get_word<std::uint64_t>(take(8)); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::int64_t product(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void check_dtype(const Tensor& t, DType want) {
  if (t.dtype != want) throw Error(ErrorCode::kShapeMismatch, "tensor '" + t.name + "' has unexpected dtype");
}

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kF32: return 4;
    case DType::kI64: return 8;
    case DType::kU8: return 1;
  }
  throw Error(ErrorCode::kIo, "unknown dtype");
}

std::int64_t Tensor::numel() const { return product(shape); }

Tensor Tensor::f32(std::string name, std::vector<std::int64_t> shape, std::span<const float> values) {
  if (product(shape) != static_cast<std::int64_t>(values.size()))
    throw Error(ErrorCode::kShapeMismatch, "f32 tensor '" + name + "' shape/size mismatch");
  std::vector<std::uint32_t> words(values.size());
  std::transform(values.begin(), values.end(), words.begin(),
                 [](float f) { return std::bit_cast<std::uint32_t>(f); });
  Tensor t{std::move(name), DType::kF32, std::move(shape), {}};
  t.bytes.reserve(words.size() * 4);
  put_words<std::uint32_t>(t.bytes, words);
  return t;
}

Tensor Tensor::f32_from(std::string name, std::vector<std::int64_t> shape, std::span<const double> values) {
  std::vector<float> narrowed(values.begin(), values.end());
  return f32(std::move(name), std::move(shape), narrowed);
}

Tensor Tensor::i64(std::string name, std::vector<std::int64_t> shape, std::span<const std::int64_t> values) {
  if (product(shape) != static_cast<std::int64_t>(values.size()))
    throw Error(ErrorCode::kShapeMismatch, "i64 tensor '" + name + "' shape/size mismatch");
  Tensor t{std::move(name), DType::kI64, std::move(shape), {}};
  t.bytes.reserve(values.size() * 8);
  std::vector<std::uint64_t> words(values.begin(), values.end());
  put_words<std::uint64_t>(t.bytes, words);
  return t;
}

Tensor Tensor::u8(std::string name, std::vector<std::int64_t> shape, std::span<const std::uint8_t> values) {
  if (product(shape) != static_cast<std::int64_t>(values.size()))
    throw Error(ErrorCode::kShapeMismatch, "u8 tensor '" + name + "' shape/size mismatch");
  return Tensor{std::move(name), DType::kU8, std::move(shape), {values.begin(), values.end()}};
}

std::vector<float> Tensor::as_f32() const {
  check_dtype(*this, DType::kF32);
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::bit_cast<float>(get_word<std::uint32_t>(bytes.data() + 4 * i));
  return out;
}

std::vector<double> Tensor::as_f64() const {
  const auto f = as_f32();
  return {f.begin(), f.end()};
}

std::vector<std::int64_t> Tensor::as_i64() const {
  check_dtype(*this, DType::kI64);
  std::vector<std::int64_t> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::int64_t>(get_word<std::uint64_t>(bytes.data() + 8 * i));
  return out;
}

std::vector<std::uint8_t> Tensor::as_u8() const {
  check_dtype(*this, DType::kU8);
  return bytes;
}

void TensorContainer::add(Tensor tensor) {
  if (contains(tensor.name)) throw Error(ErrorCode::kInvalidArgument, "duplicate tensor name '" + tensor.name + "'");
  entries_.push_back(std::move(tensor));
}

bool TensorContainer::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Tensor& t) { return t.name == name; });
}

const Tensor& TensorContainer::at(std::string_view name) const {
  for (const auto& t : entries_)
    if (t.name == name) return t;
  throw Error(ErrorCode::kIo, "tensor '" + std::string(name) + "' not found in container");
}

std::vector<std::uint8_t> TensorContainer::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u64(out, entries_.size());
  for (const auto& t : entries_) {
    put_u64(out, t.name.size());
    out.insert(out.end(), t.name.begin(), t.name.end());
    out.push_back(static_cast<std::uint8_t>(t.dtype));
    put_u64(out, t.shape.size());
    for (auto d : t.shape) put_u64(out, static_cast<std::uint64_t>(d));
    out.insert(out.end(), t.bytes.begin(), t.bytes.end());
  }
  return out;
}

TensorContainer TensorContainer::deserialize(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  if (std::memcmp(in.take(4), kMagic, 4) != 0) throw Error(ErrorCode::kIo, "bad magic, not a UTR1 container");
  const std::uint64_t count = in.u64();
  TensorContainer c;
  for (std::uint64_t e = 0; e < count; ++e) {
    Tensor t;
    const std::uint64_t name_len = in.u64();
    const auto* name = in.take(name_len);
    t.name.assign(reinterpret_cast<const char*>(name), name_len);
    const std::uint8_t code = *in.take(1);
    if (code > 2) throw Error(ErrorCode::kIo, "unknown dtype code in '" + t.name + "'");
    t.dtype = static_cast<DType>(code);
    const std::uint64_t ndim = in.u64();
    if (ndim > 64) throw Error(ErrorCode::kIo, "implausible rank in '" + t.name + "'");
    for (std::uint64_t d = 0; d < ndim; ++d) t.shape.push_back(static_cast<std::int64_t>(in.u64()));
    const auto n = static_cast<std::size_t>(t.numel()) * dtype_size(t.dtype);
    const auto* payload = in.take(n);
    t.bytes.assign(payload, payload + n);
    c.add(std::move(t));
  }
  if (!in.done()) throw Error(ErrorCode::kIo, "trailing bytes after tensor container");
  return c;
}

void TensorContainer::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

TensorContainer TensorContainer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace unitr
