/* Copyright (c) 2026 The mmtlab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#include "mmtlab/mmtf.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "mmtlab/error.hpp"

namespace mmt::mmtf {

namespace {

static_assert(sizeof(float) == 4, "MMTF needs 32-bit floats");

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw FormatError("MMTF record truncated");
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

constexpr std::uint32_t kMaxRank = 8;

}  // namespace

std::uint64_t record_size(const Tensor::Shape& shape) {
  return kMagicSize + 4 + 4 * shape.size() + 4 * shape_size(shape);
}

void write_record(std::ostream& out, const Tensor& tensor) {
  if (tensor.empty()) throw Error("cannot write an empty tensor as MMTF");
  if (!tensor.all_finite()) throw Error("MMTF payload must be finite");
  out.write(kMagic, kMagicSize);
  put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
  for (auto d : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : tensor.storage()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw FormatError("failed writing MMTF record");
}

Tensor read_record(std::istream& in) {
  char magic[kMagicSize];
  if (!in.read(magic, kMagicSize)) throw FormatError("MMTF record truncated before magic");
  if (std::memcmp(magic, kMagic, kMagicSize) != 0) throw FormatError("bad MMTF magic");
  const auto rank = get_u32(in);
  if (rank == 0 || rank > kMaxRank) throw FormatError("MMTF rank " + std::to_string(rank) + " out of range");
  Tensor::Shape shape(rank);
  for (auto& d : shape) {
    d = get_u32(in);
    if (d == 0) throw FormatError("MMTF dimension of zero");
  }
  std::vector<double> data(shape_size(shape));
  for (auto& v : data) {
    v = static_cast<double>(std::bit_cast<float>(get_u32(in)));
    if (!std::isfinite(v)) throw FormatError("MMTF payload contains a non-finite value");
  }
  return Tensor(std::move(shape), std::move(data));
}

std::filesystem::path index_path(const std::filesystem::path& data_path) {
  auto p = data_path;
  p += ".idx";
  return p;
}

void write_feature_file(const std::filesystem::path& data_path,
                        const std::vector<std::pair<std::string, Tensor>>& records) {
  std::ofstream data(data_path, std::ios::binary);
  if (!data) throw FormatError("cannot open " + data_path.string() + " for writing");
  std::ofstream index(index_path(data_path), std::ios::binary);
  if (!index) throw FormatError("cannot open " + index_path(data_path).string() + " for writing");
  std::set<std::string> seen;
  std::uint64_t offset = 0;
  for (const auto& [id, tensor] : records) {
    if (id.empty() || id.find_first_of("\t\r\n") != std::string::npos) {
      throw Error("invalid segment id '" + id + "'");
    }
    if (!seen.insert(id).second) throw Error("duplicate segment id '" + id + "'");
    index << id << '\t' << offset << '\n';
    write_record(data, tensor);
    offset += record_size(tensor.shape());
  }
}

FeatureFile::FeatureFile(std::filesystem::path data_path) : data_path_(std::move(data_path)) {
  std::ifstream index(index_path(data_path_));
  if (!index) throw FormatError("missing feature index " + index_path(data_path_).string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(index, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw FormatError(index_path(data_path_).string() + ":" + std::to_string(line_no) + ": expected id<TAB>offset");
    }
    std::uint64_t offset = 0;
    try {
      offset = std::stoull(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw FormatError(index_path(data_path_).string() + ":" + std::to_string(line_no) + ": bad offset");
    }
    auto id = line.substr(0, tab);
    if (!offsets_.emplace(id, offset).second) {
      throw FormatError(index_path(data_path_).string() + ": duplicate segment id '" + id + "'");
    }
    order_.push_back(std::move(id));
  }
}

Tensor FeatureFile::read(const std::string& segment_id) const {
  auto it = offsets_.find(segment_id);
  if (it == offsets_.end()) throw Error("segment '" + segment_id + "' not in " + data_path_.string());
  std::ifstream data(data_path_, std::ios::binary);
  if (!data) throw FormatError("cannot open " + data_path_.string());
  data.seekg(static_cast<std::streamoff>(it->second));
  if (!data) throw FormatError("bad offset for segment '" + segment_id + "'");
  return read_record(data);
}

}  // namespace mmt::mmtf
