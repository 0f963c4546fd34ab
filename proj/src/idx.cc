/*
 * Copyright 2026 The fedsim Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "fedsim/idx.h"

#include <fstream>
#include <iterator>
#include <vector>

#include <fmt/format.h>

namespace fedsim {

namespace {

std::vector<unsigned char> ReadAll(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

uint32_t BigEndian32(const std::vector<unsigned char>& buf, size_t offset, const std::string& path) {
  if (buf.size() < offset + 4) {
    throw IdxError(IdxError::Kind::kTruncated, fmt::format("{}: header truncated", path));
  }
  return (uint32_t{buf[offset]} << 24) | (uint32_t{buf[offset + 1]} << 16) |
         (uint32_t{buf[offset + 2]} << 8) | uint32_t{buf[offset + 3]};
}

}  // namespace

LabeledMatrix LoadMnistIdx(const std::string& images_path, const std::string& labels_path) {
  const auto images = ReadAll(images_path);
  const auto labels = ReadAll(labels_path);

  if (uint32_t magic = BigEndian32(images, 0, images_path); magic != kIdxImagesMagic) {
    throw IdxError(IdxError::Kind::kBadMagic,
                   fmt::format("{}: image magic 0x{:08x}, expected 0x{:08x}", images_path, magic,
                               kIdxImagesMagic));
  }
  if (uint32_t magic = BigEndian32(labels, 0, labels_path); magic != kIdxLabelsMagic) {
    throw IdxError(IdxError::Kind::kBadMagic,
                   fmt::format("{}: label magic 0x{:08x}, expected 0x{:08x}", labels_path, magic,
                               kIdxLabelsMagic));
  }
  const size_t n_images = BigEndian32(images, 4, images_path);
  const size_t rows = BigEndian32(images, 8, images_path);
  const size_t cols = BigEndian32(images, 12, images_path);
  const size_t n_labels = BigEndian32(labels, 4, labels_path);
  if (n_images != n_labels) {
    throw IdxError(IdxError::Kind::kCountMismatch,
                   fmt::format("{} images but {} labels", n_images, n_labels));
  }

  const size_t pixels = rows * cols;
  constexpr size_t kImageHeader = 16;
  constexpr size_t kLabelHeader = 8;
  if (images.size() < kImageHeader + n_images * pixels) {
    throw IdxError(IdxError::Kind::kTruncated,
                   fmt::format("{}: expected {} pixel bytes, found {}", images_path,
                               n_images * pixels, images.size() - kImageHeader));
  }
  if (labels.size() < kLabelHeader + n_labels) {
    throw IdxError(IdxError::Kind::kTruncated,
                   fmt::format("{}: expected {} label bytes, found {}", labels_path, n_labels,
                               labels.size() - kLabelHeader));
  }

  LabeledMatrix out;
  out.rows = n_images;
  out.cols = pixels;
  out.n_classes = 10;
  out.features.resize(n_images * pixels);
  for (size_t i = 0; i < out.features.size(); ++i) {
    out.features[i] = static_cast<double>(images[kImageHeader + i]) / 255.0;
  }
  out.labels.resize(n_labels);
  for (size_t i = 0; i < n_labels; ++i) {
    const int y = labels[kLabelHeader + i];
    if (y >= out.n_classes) {
      throw IdxError(IdxError::Kind::kBadLabel, fmt::format("{}: label {} at {} is not a digit",
                                                            labels_path, y, i));
    }
    out.labels[i] = y;
  }
  return out;
}

}  // namespace fedsim
