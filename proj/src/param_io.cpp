#include "jscq/param_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

namespace jscq {

namespace {

constexpr std::array<char, 4> kMagic{'J', 'S', 'C', 'Q'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

void put_f64(std::ostream& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError(std::string("parameter container truncated while reading ") + what);
  }
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4, what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  read_exact(in, reinterpret_cast<char*>(b), 8, "values");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

Tensor& ParameterSet::add(std::string name, Tensor tensor) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  entries_.emplace_back(std::move(name), std::move(tensor));
  return entries_.back().second;
}

Tensor& ParameterSet::at(std::string_view name) {
  for (auto& [n, t] : entries_)
    if (n == name) return t;
  throw std::out_of_range("no parameter named " + std::string(name));
}

const Tensor& ParameterSet::at(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->at(name);
}

bool ParameterSet::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

ParameterSet ParameterSet::clone() const {
  ParameterSet copy;
  for (const auto& [name, t] : entries_) {
    auto fresh = t.detach();
    fresh.set_requires_grad(t.requires_grad());
    copy.add(name, fresh);
  }
  return copy;
}

void ParameterSet::assign_values(const ParameterSet& other) {
  for (auto& [name, t] : entries_) {
    const auto& src = other.at(name);
    if (src.shape() != t.shape()) {
      throw ShapeError("assign_values: " + name + " has shape " + shape_str(t.shape()) +
                       " but source has " + shape_str(src.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), t.mutable_data().begin());
  }
}

void write_parameters(std::ostream& out, const ParameterSet& params, std::string_view metadata) {
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kContainerVersion);
  put_u32(out, static_cast<std::uint32_t>(metadata.size()));
  out.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params.entries()) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_f64(out, v);
  }
  if (!out) throw FormatError("failed writing parameter container");
}

LoadedParameters read_parameters(std::istream& in) {
  std::array<char, 4> magic{};
  read_exact(in, magic.data(), 4, "magic");
  if (magic != kMagic) throw FormatError("not a JSCQ parameter container (bad magic)");
  const auto version = get_u32(in, "version");
  if (version != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(version));
  }
  LoadedParameters loaded;
  loaded.metadata.resize(get_u32(in, "metadata length"));
  read_exact(in, loaded.metadata.data(), loaded.metadata.size(), "metadata");
  const auto count = get_u32(in, "parameter count");
  for (std::uint32_t p = 0; p < count; ++p) {
    std::string name(get_u32(in, "name length"), '\0');
    read_exact(in, name.data(), name.size(), "name");
    const auto rank = get_u32(in, "rank");
    Shape shape(rank);
    for (auto& d : shape) d = get_u32(in, "dims");
    std::vector<double> values(numel_of(shape));
    for (auto& v : values) v = get_f64(in);
    loaded.params.add(std::move(name), Tensor::from(std::move(shape), std::move(values), true));
  }
  return loaded;
}

void save_parameters(const std::string& path, const ParameterSet& params, std::string_view metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  write_parameters(out, params, metadata);
}

LoadedParameters load_parameters(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  return read_parameters(in);
}

}  // namespace jscq
