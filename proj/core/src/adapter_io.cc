// Copyright 2026 The zoserve Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Binary layout (all integers and reals little-endian):
//   "ZOAD" u32 version
//   u64 entry_count, then per entry:
//     u64 slot_count, slot*; u8 has_probe, [slot]; i32 sign; f64 epsilon
//   u64 vector_count, then per vector: u8 present, [u64 length, f64*]
//   i32 state_sign; f64 state_epsilon
//   slot := u64 rows, u64 cols, u64 rank, f64 scale, f64[rows*rank] A, f64[cols*rank] B

#include <bit>
#include <fstream>
#include <string>

#include <json.hpp>

#include "zoserve/adapter.h"
#include "zoserve/errors.h"

namespace zoserve {
namespace {

constexpr char kMagic[4] = {'Z', 'O', 'A', 'D'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw InputError("cannot open " + path.string() + " for writing");
  }
  void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void u64(std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
    bytes(b, 8);
  }
  void u32(std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>(v >> (8 * i));
    bytes(b, 4);
  }
  void u8(std::uint8_t v) { bytes(reinterpret_cast<const char*>(&v), 1); }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void matrix(const Matrix& m) {
    for (double x : m.data()) f64(x);
  }
  void slot(const LoraSlot& s) {
    u64(s.a.rows());
    u64(s.b.rows());
    u64(s.rank());
    f64(s.scale);
    matrix(s.a);
    matrix(s.b);
  }
  void finish() {
    out_.flush();
    if (!out_) throw InputError("adapter write failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw InputError("cannot open " + path.string());
  }
  void bytes(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (!in_) throw InputError("adapter file truncated");
  }
  std::uint64_t u64() {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint8_t u8() {
    char c;
    bytes(&c, 1);
    return static_cast<std::uint8_t>(c);
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::uint64_t count(std::uint64_t limit = 1ull << 32) {
    const std::uint64_t n = u64();
    if (n > limit) throw InputError("adapter file: implausible count " + std::to_string(n));
    return n;
  }
  Matrix matrix(std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (double& x : m.data()) x = f64();
    return m;
  }
  LoraSlot slot() {
    const std::size_t rows = count(1u << 24);
    const std::size_t cols = count(1u << 24);
    const std::size_t rank = count(1u << 24);
    LoraSlot s;
    s.scale = f64();
    s.a = matrix(rows, rank);
    s.b = matrix(cols, rank);
    return s;
  }

 private:
  std::ifstream in_;
};

}  // namespace

void save_adapter(const AdapterState& state, const std::filesystem::path& path) {
  Writer w(path);
  w.bytes(kMagic, 4);
  w.u32(kAdapterFileVersion);
  w.u64(state.block_count());
  for (const auto& e : state.entries()) {
    w.u64(e.update_slots.size());
    for (const auto& s : e.update_slots) w.slot(s);
    w.u8(e.perturb_slot ? 1 : 0);
    if (e.perturb_slot) w.slot(*e.perturb_slot);
    w.i32(e.perturb_sign);
    w.f64(e.epsilon);
  }
  w.u64(state.vector_count());
  for (std::size_t v = 0; v < state.vector_count(); ++v) {
    const auto& z = state.vector_direction(v);
    w.u8(z ? 1 : 0);
    if (z) {
      w.u64(z->size());
      for (double x : *z) w.f64(x);
    }
  }
  w.i32(state.perturb_sign());
  w.f64(state.epsilon());
  w.finish();
}

AdapterState load_adapter(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != std::string(kMagic, 4)) throw InputError("not an adapter file");
  const std::uint32_t version = r.u32();
  if (version != kAdapterFileVersion) {
    throw InputError("unsupported adapter file version " + std::to_string(version));
  }
  std::vector<AdapterEntry> entries(r.count());
  for (auto& e : entries) {
    const std::uint64_t slots = r.count();
    for (std::uint64_t i = 0; i < slots; ++i) e.update_slots.push_back(r.slot());
    if (r.u8() != 0) e.perturb_slot = r.slot();
    e.perturb_sign = r.i32();
    e.epsilon = r.f64();
  }
  std::vector<std::optional<std::vector<double>>> dirs(r.count());
  for (auto& d : dirs) {
    if (r.u8() == 0) continue;
    std::vector<double> z(r.count());
    for (double& x : z) x = r.f64();
    d = std::move(z);
  }
  const int sign = r.i32();
  const double eps = r.f64();
  return AdapterState(std::move(entries), std::move(dirs), sign, eps);
}

void write_adapter_manifest(const AdapterState& state, const std::filesystem::path& path) {
  nlohmann::json manifest;
  manifest["format"] = "zoserve-adapter";
  manifest["version"] = kAdapterFileVersion;
  manifest["state_digest"] = state.digest().hex();
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t b = 0; b < state.block_count(); ++b) {
    const auto& e = state.entry(b);
    nlohmann::json je;
    je["block"] = b;
    nlohmann::json slots = nlohmann::json::array();
    for (const auto& s : e.update_slots) {
      slots.push_back({{"rank", s.rank()},
                       {"scale", s.scale},
                       {"a_digest", digest(s.a).hex()},
                       {"b_digest", digest(s.b).hex()}});
    }
    je["update_slots"] = std::move(slots);
    if (e.perturb_slot) {
      je["perturb_slot"] = {{"rank", e.perturb_slot->rank()},
                            {"a_digest", digest(e.perturb_slot->a).hex()},
                            {"b_digest", digest(e.perturb_slot->b).hex()}};
    }
    entries.push_back(std::move(je));
  }
  manifest["entries"] = std::move(entries);
  std::ofstream out(path.string() + ".manifest.json");
  if (!out) throw InputError("cannot write manifest for " + path.string());
  out << manifest.dump(2) << '\n';
}

}  // namespace zoserve
