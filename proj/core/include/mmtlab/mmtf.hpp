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

#pragma once

// MMTF tensor records.
//
// A record is the ASCII magic "MMTF1", a little-endian uint32 rank, rank
// little-endian uint32 dimensions, then the payload as little-endian IEEE
// float32 in row-major order. A feature file is a concatenation of records;
// its companion index file (feature path + ".idx") holds one
// "segment_id<TAB>byte_offset" line per record.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mmtlab/tensor.hpp"

namespace mmt::mmtf {

inline constexpr char kMagic[] = "MMTF1";
inline constexpr std::size_t kMagicSize = 5;

void write_record(std::ostream& out, const Tensor& tensor);
Tensor read_record(std::istream& in);

/// Byte size of the record write_record() produces for a tensor of this shape.
std::uint64_t record_size(const Tensor::Shape& shape);

std::filesystem::path index_path(const std::filesystem::path& data_path);

/// Writes a data file and its index. Segment ids must be unique and free of
/// tabs and newlines.
void write_feature_file(const std::filesystem::path& data_path,
                        const std::vector<std::pair<std::string, Tensor>>& records);

/// Random access to a feature file through its index.
class FeatureFile {
 public:
  explicit FeatureFile(std::filesystem::path data_path);

  bool contains(const std::string& segment_id) const { return offsets_.count(segment_id) > 0; }
  Tensor read(const std::string& segment_id) const;
  const std::vector<std::string>& segment_ids() const noexcept { return order_; }
  const std::filesystem::path& path() const noexcept { return data_path_; }

 private:
  std::filesystem::path data_path_;
  std::map<std::string, std::uint64_t> offsets_;
  std::vector<std::string> order_;
};

}  // namespace mmt::mmtf
