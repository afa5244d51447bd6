// Copyright 2026 The dualseg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "dseg/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>

namespace dseg {

namespace {

class Writer {
 public:
  void u8(uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void bytes(std::string_view s) { out_.append(s); }
  void str(std::string_view s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
  uint32_t u32() {
    const auto b = take(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(b[i])) << (8 * i);
    return v;
  }
  uint64_t u64() {
    const auto b = take(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(b[i])) << (8 * i);
    return v;
  }
  std::string_view take(std::size_t n) {
    if (in_.size() - pos_ < n) {
      throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_) + " (need " +
                            std::to_string(n) + " more)");
    }
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() { return std::string(take(u32())); }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::add(const std::string& name, const Tensor<float>& t) {
  CheckpointEntry e;
  e.name = name;
  e.dtype = DType::kF32;
  e.shape = t.shape();
  e.f32.assign(t.values().begin(), t.values().end());
  entries.push_back(std::move(e));
}

void Checkpoint::add(const std::string& name, const Tensor<double>& t) {
  CheckpointEntry e;
  e.name = name;
  e.dtype = DType::kF64;
  e.shape = t.shape();
  e.f64.assign(t.values().begin(), t.values().end());
  entries.push_back(std::move(e));
}

const CheckpointEntry* Checkpoint::find(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::string Checkpoint::serialize() const {
  Writer w;
  w.bytes(kMagic);
  w.u32(kVersion);
  w.str(metadata);
  w.u32(static_cast<uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.str(e.name);
    w.u8(static_cast<uint8_t>(e.dtype));
    w.u32(4);
    for (int64_t d : {e.shape.n, e.shape.c, e.shape.h, e.shape.w}) w.u64(static_cast<uint64_t>(d));
    if (e.dtype == DType::kF32) {
      for (float v : e.f32) w.u32(std::bit_cast<uint32_t>(v));
    } else {
      for (double v : e.f64) w.u64(std::bit_cast<uint64_t>(v));
    }
  }
  return w.take();
}

Checkpoint Checkpoint::parse(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size()) != kMagic) throw CheckpointError("not a checkpoint: bad magic");
  const uint32_t version = r.u32();
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.metadata = r.str();
  const uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.str();
    const uint8_t tag = r.u8();
    if (tag != 1 && tag != 2) {
      throw CheckpointError("entry '" + e.name + "': unknown dtype tag " + std::to_string(tag));
    }
    e.dtype = static_cast<DType>(tag);
    const uint32_t rank = r.u32();
    if (rank != 4) throw CheckpointError("entry '" + e.name + "': rank " + std::to_string(rank) + " != 4");
    e.shape.n = static_cast<int64_t>(r.u64());
    e.shape.c = static_cast<int64_t>(r.u64());
    e.shape.h = static_cast<int64_t>(r.u64());
    e.shape.w = static_cast<int64_t>(r.u64());
    const auto n = static_cast<std::size_t>(e.shape.numel());
    if (e.dtype == DType::kF32) {
      e.f32.resize(n);
      for (auto& v : e.f32) v = std::bit_cast<float>(r.u32());
    } else {
      e.f64.resize(n);
      for (auto& v : e.f64) v = std::bit_cast<double>(r.u64());
    }
    ck.entries.push_back(std::move(e));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after last checkpoint entry");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write to '" + path.string() + "' failed");
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(bytes);
}

}  // namespace dseg
