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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

namespace fedsim {
namespace {

namespace fs = std::filesystem;

void Put32(std::vector<unsigned char>& buf, uint32_t v) {
  buf.push_back(static_cast<unsigned char>(v >> 24));
  buf.push_back(static_cast<unsigned char>(v >> 16));
  buf.push_back(static_cast<unsigned char>(v >> 8));
  buf.push_back(static_cast<unsigned char>(v));
}

std::vector<unsigned char> Images(uint32_t magic, uint32_t count, uint32_t rows, uint32_t cols, size_t pixels) {
  std::vector<unsigned char> buf;
  Put32(buf, magic);
  Put32(buf, count);
  Put32(buf, rows);
  Put32(buf, cols);
  for (size_t i = 0; i < pixels; ++i) buf.push_back(static_cast<unsigned char>(i % 256));
  return buf;
}

std::vector<unsigned char> Labels(uint32_t magic, uint32_t count, const std::vector<unsigned char>& ys) {
  std::vector<unsigned char> buf;
  Put32(buf, magic);
  Put32(buf, count);
  buf.insert(buf.end(), ys.begin(), ys.end());
  return buf;
}

class IdxFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("fedsim_idx_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string Write(const std::string& name, const std::vector<unsigned char>& bytes) {
    const auto path = (dir_ / name).string();
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    return path;
  }

  IdxError::Kind KindOf(const std::vector<unsigned char>& images, const std::vector<unsigned char>& labels) {
    try {
      LoadMnistIdx(Write("img", images), Write("lbl", labels));
    } catch (const IdxError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "expected IdxError";
    return IdxError::Kind::kIo;
  }

  fs::path dir_;
};

TEST_F(IdxFiles, ReadsScaledPixelsAndLabels) {
  const auto m = LoadMnistIdx(Write("img", Images(kIdxImagesMagic, 3, 2, 2, 12)),
                              Write("lbl", Labels(kIdxLabelsMagic, 3, {7, 0, 9})));
  EXPECT_EQ(m.rows, 3u);
  EXPECT_EQ(m.cols, 4u);
  ASSERT_EQ(m.features.size(), 12u);
  EXPECT_EQ(m.features[0], 0.0);
  EXPECT_DOUBLE_EQ(m.features[5], 5.0 / 255.0);
  EXPECT_EQ(m.labels, (std::vector<int>{7, 0, 9}));
}

TEST_F(IdxFiles, BadMagic) {
  EXPECT_EQ(KindOf(Images(0x00000801, 1, 1, 1, 1), Labels(kIdxLabelsMagic, 1, {1})), IdxError::Kind::kBadMagic);
  EXPECT_EQ(KindOf(Images(kIdxImagesMagic, 1, 1, 1, 1), Labels(0x00000803, 1, {1})), IdxError::Kind::kBadMagic);
}

TEST_F(IdxFiles, Truncated) {
  EXPECT_EQ(KindOf(Images(kIdxImagesMagic, 2, 2, 2, 7), Labels(kIdxLabelsMagic, 2, {1, 2})),
            IdxError::Kind::kTruncated);
  EXPECT_EQ(KindOf(Images(kIdxImagesMagic, 2, 2, 2, 8), Labels(kIdxLabelsMagic, 2, {1})),
            IdxError::Kind::kTruncated);
  EXPECT_EQ(KindOf({0x00, 0x00, 0x08}, Labels(kIdxLabelsMagic, 1, {1})), IdxError::Kind::kTruncated);
}

TEST_F(IdxFiles, CountMismatch) {
  EXPECT_EQ(KindOf(Images(kIdxImagesMagic, 2, 1, 1, 2), Labels(kIdxLabelsMagic, 3, {1, 2, 3})),
            IdxError::Kind::kCountMismatch);
}

TEST_F(IdxFiles, LabelOutOfRange) {
  EXPECT_EQ(KindOf(Images(kIdxImagesMagic, 2, 1, 1, 2), Labels(kIdxLabelsMagic, 2, {3, 10})),
            IdxError::Kind::kBadLabel);
}

TEST_F(IdxFiles, MissingFile) {
  EXPECT_THROW(LoadMnistIdx((dir_ / "none").string(), (dir_ / "none2").string()), IdxError);
}

}  // namespace
}  // namespace fedsim
