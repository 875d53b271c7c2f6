#include "bagvae/serialize.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bagvae {

namespace {

void write_f32_le(std::string& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  out.push_back(static_cast<char>(u & 0xff));
  out.push_back(static_cast<char>((u >> 8) & 0xff));
  out.push_back(static_cast<char>((u >> 16) & 0xff));
  out.push_back(static_cast<char>((u >> 24) & 0xff));
}

float read_f32_le(const unsigned char* p) {
  std::uint32_t u = static_cast<std::uint32_t>(p[0]) |
                    (static_cast<std::uint32_t>(p[1]) << 8) |
                    (static_cast<std::uint32_t>(p[2]) << 16) |
                    (static_cast<std::uint32_t>(p[3]) << 24);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace

void Container::put_meta(const std::string& key, const std::string& value) {
  if (key.find_first_of(" \n") != std::string::npos)
    throw std::invalid_argument("Container: meta key may not contain spaces");
  if (value.find('\n') != std::string::npos)
    throw std::invalid_argument("Container: meta value may not contain newline");
  meta_.emplace_back(key, value);
}

void Container::put_tensor(const std::string& name, const Tensor& t) {
  if (has(name)) throw std::invalid_argument("Container: duplicate " + name);
  Entry e;
  e.name = name;
  e.dtype = "f32";
  e.shape = t.shape;
  e.f64 = t.data;
  entries_.push_back(std::move(e));
}

void Container::put_bytes(const std::string& name,
                          const std::vector<std::uint8_t>& b) {
  if (has(name)) throw std::invalid_argument("Container: duplicate " + name);
  Entry e;
  e.name = name;
  e.dtype = "u8";
  e.shape = {b.size()};
  e.bytes = b;
  entries_.push_back(std::move(e));
}

bool Container::has(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

bool Container::has_meta(const std::string& key) const {
  for (const auto& kv : meta_)
    if (kv.first == key) return true;
  return false;
}

const Container::Entry& Container::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw std::invalid_argument("Container: no entry " + name);
}

Tensor Container::tensor(const std::string& name) const {
  const Entry& e = find(name);
  if (e.dtype != "f32")
    throw std::invalid_argument("Container: " + name + " is not a tensor");
  return Tensor(e.shape, e.f64);
}

const std::vector<std::uint8_t>& Container::bytes(
    const std::string& name) const {
  const Entry& e = find(name);
  if (e.dtype != "u8")
    throw std::invalid_argument("Container: " + name + " is not a byte blob");
  return e.bytes;
}

std::string Container::meta_value(const std::string& key) const {
  for (const auto& kv : meta_)
    if (kv.first == key) return kv.second;
  throw std::invalid_argument("Container: no meta key " + key);
}

void Container::save(const std::string& path) const {
  std::string payload;
  std::ostringstream head;
  head << "BVAE1\n";
  for (const auto& kv : meta_) head << "meta " << kv.first << " " << kv.second << "\n";
  for (const auto& e : entries_) {
    if (e.name.find_first_of(" \n") != std::string::npos)
      throw std::invalid_argument("Container: entry name may not contain spaces");
    head << "tensor " << e.name << " " << e.dtype << " " << e.shape.size();
    for (std::size_t d : e.shape) head << " " << d;
    head << " " << payload.size() << "\n";
    if (e.dtype == "f32") {
      for (double v : e.f64) write_f32_le(payload, static_cast<float>(v));
    } else {
      payload.append(reinterpret_cast<const char*>(e.bytes.data()),
                     e.bytes.size());
    }
  }
  head << "end\n";
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("Container: cannot open " + path);
  os << head.str();
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!os) throw std::runtime_error("Container: write failed for " + path);
}

Container Container::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("Container: cannot open " + path);
  std::string all((std::istreambuf_iterator<char>(is)),
                  std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto next_line = [&]() {
    std::size_t nl = all.find('\n', pos);
    if (nl == std::string::npos)
      throw std::runtime_error("Container: truncated header in " + path);
    std::string line = all.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  if (next_line() != "BVAE1")
    throw std::runtime_error("Container: bad magic in " + path);
  Container c;
  struct Pending {
    Entry e;
    std::size_t offset;
  };
  std::vector<Pending> pending;
  for (;;) {
    std::string line = next_line();
    if (line == "end") break;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value[0] == ' ') value.erase(0, 1);
      c.meta_.emplace_back(key, value);
    } else if (kind == "tensor") {
      Pending p;
      std::size_t rank = 0;
      ls >> p.e.name >> p.e.dtype >> rank;
      p.e.shape.resize(rank);
      for (std::size_t i = 0; i < rank; ++i) ls >> p.e.shape[i];
      ls >> p.offset;
      if (!ls) throw std::runtime_error("Container: bad header line: " + line);
      pending.push_back(std::move(p));
    } else {
      throw std::runtime_error("Container: bad header line: " + line);
    }
  }
  const unsigned char* base =
      reinterpret_cast<const unsigned char*>(all.data()) + pos;
  std::size_t payload_size = all.size() - pos;
  for (auto& p : pending) {
    std::size_t n = shape_numel(p.e.shape);
    if (p.e.dtype == "f32") {
      if (p.offset + 4 * n > payload_size)
        throw std::runtime_error("Container: payload out of range for " +
                                 p.e.name);
      p.e.f64.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        p.e.f64[i] = static_cast<double>(read_f32_le(base + p.offset + 4 * i));
    } else if (p.e.dtype == "u8") {
      if (p.offset + n > payload_size)
        throw std::runtime_error("Container: payload out of range for " +
                                 p.e.name);
      p.e.bytes.assign(base + p.offset, base + p.offset + n);
    } else {
      throw std::runtime_error("Container: unknown dtype " + p.e.dtype);
    }
    c.entries_.push_back(std::move(p.e));
  }
  return c;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace bagvae
