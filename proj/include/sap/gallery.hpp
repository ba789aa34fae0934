// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sap/common.hpp"

namespace sap {

class EmbeddingMatrix;

struct GalleryImage {
  std::string image_id;
  std::string uri;
  int width = 0;
  int height = 0;

  friend bool operator==(const GalleryImage&, const GalleryImage&) = default;
};

struct KeypointFlags {
  bool head_visible = false;
  bool left_shoulder_visible = false;
  bool right_shoulder_visible = false;

  friend bool operator==(const KeypointFlags&, const KeypointFlags&) = default;
};

struct PersonCrop {
  std::string crop_id;
  std::string source_image_id;
  BBox bbox;
  double confidence = 0.0;
  KeypointFlags keypoints;

  friend bool operator==(const PersonCrop&, const PersonCrop&) = default;
};

/// Full-scene images plus the pedestrian crops detected in them. Every crop
/// resolves to exactly one image; ids are unique. Immutable once built, so a
/// Gallery can be shared freely between reader threads.
class Gallery {
 public:
  Gallery() = default;

  /// Validates every invariant and throws sap::Error on the first violation.
  Gallery(std::vector<GalleryImage> images, std::vector<PersonCrop> crops);

  const std::vector<GalleryImage>& images() const { return images_; }
  const std::vector<PersonCrop>& crops() const { return crops_; }

  const GalleryImage* find_image(const std::string& image_id) const;
  const PersonCrop* find_crop(const std::string& crop_id) const;

  /// Source scene of a crop. Throws on an unknown crop_id.
  const GalleryImage& scene_of(const PersonCrop& crop) const;

  friend bool operator==(const Gallery& a, const Gallery& b) {
    return a.images_ == b.images_ && a.crops_ == b.crops_;
  }

 private:
  std::vector<GalleryImage> images_;
  std::vector<PersonCrop> crops_;
  std::unordered_map<std::string, std::size_t> image_index_;
  std::unordered_map<std::string, std::size_t> crop_index_;
};

struct IngestOptions {
  /// Skip invalid records (reporting them through `on_skip`) instead of failing.
  bool lenient = false;
  std::function<void(const std::string&)> on_skip;
};

/// Reads the line-delimited manifest and detection files. Blank lines are
/// ignored. Errors name the file and 1-based line number.
Gallery load_manifest(const std::filesystem::path& manifest_path,
                      const std::filesystem::path& detections_path,
                      const IngestOptions& options = {});

void save_manifest(const Gallery& gallery, const std::filesystem::path& manifest_path,
                   const std::filesystem::path& detections_path);

/// Writes only the detection records, e.g. after filter or dedup.
void save_detections(const Gallery& gallery, const std::filesystem::path& detections_path);

/// Head visible and at least one shoulder visible.
bool completeness_filter(const KeypointFlags& flags);

/// Keeps only crops passing completeness_filter. Images are untouched.
Gallery apply_filter(const Gallery& gallery);

inline constexpr double kDefaultDedupThreshold = 0.95;

/// Greedy keep-first deduplication over crops in ascending crop_id order. A
/// crop is dropped when an already retained crop reaches `threshold` cosine on
/// both the crop embedding and the source-scene embedding. Comparison spans the
/// whole gallery, not just crops of the same source video.
Gallery dedup(const Gallery& gallery, const EmbeddingMatrix& crop_embeddings,
              const EmbeddingMatrix& scene_embeddings,
              double threshold = kDefaultDedupThreshold);

}  // namespace sap
