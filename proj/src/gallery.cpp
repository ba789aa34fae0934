// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#include "sap/gallery.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "jsonl.hpp"
#include "sap/embedding.hpp"
#include "sap/kernels.hpp"

namespace sap {

namespace {

void check_image(const GalleryImage& img) {
  if (img.image_id.empty()) throw Error("empty image_id");
  if (img.width <= 0 || img.height <= 0) {
    throw Error("image " + img.image_id + ": width and height must be positive");
  }
}

void check_crop_bounds(const PersonCrop& crop, const GalleryImage& img) {
  if (!bbox_within(crop.bbox, img.width, img.height)) {
    throw Error("bbox out of bounds: crop " + crop.crop_id + " " + format_bbox(crop.bbox) +
                " in image " + img.image_id + " (" + std::to_string(img.width) + "x" +
                std::to_string(img.height) + ")");
  }
}

GalleryImage parse_image(const nlohmann::json& rec) {
  GalleryImage img;
  img.image_id = detail::require_string(rec, "image_id");
  img.uri = detail::require_string(rec, "uri");
  const auto& w = detail::require(rec, "width");
  const auto& h = detail::require(rec, "height");
  if (!w.is_number_integer() || !h.is_number_integer()) {
    throw Error("malformed record: width and height must be integers");
  }
  img.width = w.get<int>();
  img.height = h.get<int>();
  check_image(img);
  return img;
}

PersonCrop parse_crop(const nlohmann::json& rec) {
  PersonCrop crop;
  crop.crop_id = detail::require_string(rec, "crop_id");
  crop.source_image_id = detail::require_string(rec, "image_id");
  crop.bbox = detail::parse_bbox(detail::require(rec, "bbox"));
  const auto& conf = detail::require(rec, "confidence");
  if (!conf.is_number()) throw Error("malformed record: confidence must be a number");
  crop.confidence = conf.get<double>();
  if (!(crop.confidence >= 0.0 && crop.confidence <= 1.0)) {
    throw Error("malformed record: confidence outside [0, 1]");
  }
  const auto& kp = detail::require(rec, "keypoints");
  auto flag = [&](const char* name) {
    const auto& v = detail::require(kp, name);
    if (!v.is_boolean()) throw Error(std::string("malformed record: keypoint '") + name + "' must be a boolean");
    return v.get<bool>();
  };
  crop.keypoints = {flag("head"), flag("l_shoulder"), flag("r_shoulder")};
  if (crop.crop_id.empty()) throw Error("empty crop_id");
  return crop;
}

}  // namespace

Gallery::Gallery(std::vector<GalleryImage> images, std::vector<PersonCrop> crops)
    : images_(std::move(images)), crops_(std::move(crops)) {
  image_index_.reserve(images_.size());
  for (std::size_t i = 0; i < images_.size(); ++i) {
    check_image(images_[i]);
    if (!image_index_.emplace(images_[i].image_id, i).second) {
      throw Error("duplicate image_id: " + images_[i].image_id);
    }
  }
  crop_index_.reserve(crops_.size());
  for (std::size_t i = 0; i < crops_.size(); ++i) {
    const auto& crop = crops_[i];
    if (!crop_index_.emplace(crop.crop_id, i).second) {
      throw Error("duplicate crop_id: " + crop.crop_id);
    }
    const auto* img = find_image(crop.source_image_id);
    if (img == nullptr) {
      throw Error("dangling source_image_id: crop " + crop.crop_id + " references " +
                  crop.source_image_id);
    }
    check_crop_bounds(crop, *img);
  }
}

const GalleryImage* Gallery::find_image(const std::string& image_id) const {
  auto it = image_index_.find(image_id);
  return it == image_index_.end() ? nullptr : &images_[it->second];
}

const PersonCrop* Gallery::find_crop(const std::string& crop_id) const {
  auto it = crop_index_.find(crop_id);
  return it == crop_index_.end() ? nullptr : &crops_[it->second];
}

const GalleryImage& Gallery::scene_of(const PersonCrop& crop) const {
  const auto* img = find_image(crop.source_image_id);
  if (img == nullptr) throw Error("dangling source_image_id: " + crop.source_image_id);
  return *img;
}

Gallery load_manifest(const std::filesystem::path& manifest_path,
                      const std::filesystem::path& detections_path, const IngestOptions& options) {
  if (!std::filesystem::exists(manifest_path)) throw Error("missing file: " + manifest_path.string());
  if (!std::filesystem::exists(detections_path)) {
    throw Error("missing file: " + detections_path.string());
  }

  // In lenient mode record-level failures are reported and skipped.
  std::function<void(const Error&)> on_error;
  if (options.lenient) {
    on_error = [&](const Error& e) {
      if (options.on_skip) options.on_skip(e.what());
    };
  }

  std::vector<GalleryImage> images;
  std::unordered_map<std::string, std::size_t> image_index;
  detail::for_each_jsonl(manifest_path, [&](const nlohmann::json& rec, std::size_t) {
    auto img = parse_image(rec);
    if (image_index.contains(img.image_id)) throw Error("duplicate image_id: " + img.image_id);
    image_index.emplace(img.image_id, images.size());
    images.push_back(std::move(img));
  }, on_error);

  std::vector<PersonCrop> crops;
  std::unordered_map<std::string, std::size_t> crop_index;
  detail::for_each_jsonl(detections_path, [&](const nlohmann::json& rec, std::size_t) {
    auto crop = parse_crop(rec);
    if (crop_index.contains(crop.crop_id)) throw Error("duplicate crop_id: " + crop.crop_id);
    auto it = image_index.find(crop.source_image_id);
    if (it == image_index.end()) {
      throw Error("dangling source_image_id: crop " + crop.crop_id + " references " +
                  crop.source_image_id);
    }
    check_crop_bounds(crop, images[it->second]);
    crop_index.emplace(crop.crop_id, crops.size());
    crops.push_back(std::move(crop));
  }, on_error);

  return Gallery(std::move(images), std::move(crops));
}

namespace {

std::string detections_jsonl(const Gallery& gallery) {
  std::ostringstream detections;
  for (const auto& crop : gallery.crops()) {
    nlohmann::json rec = {{"crop_id", crop.crop_id},
                          {"image_id", crop.source_image_id},
                          {"bbox", detail::bbox_json(crop.bbox)},
                          {"confidence", crop.confidence},
                          {"keypoints",
                           {{"head", crop.keypoints.head_visible},
                            {"l_shoulder", crop.keypoints.left_shoulder_visible},
                            {"r_shoulder", crop.keypoints.right_shoulder_visible}}}};
    detections << rec.dump() << '\n';
  }
  return detections.str();
}

}  // namespace

void save_manifest(const Gallery& gallery, const std::filesystem::path& manifest_path,
                   const std::filesystem::path& detections_path) {
  std::ostringstream manifest;
  for (const auto& img : gallery.images()) {
    nlohmann::json rec = {{"image_id", img.image_id},
                          {"uri", img.uri},
                          {"width", img.width},
                          {"height", img.height}};
    manifest << rec.dump() << '\n';
  }
  detail::write_atomically(manifest_path, manifest.str());
  save_detections(gallery, detections_path);
}

void save_detections(const Gallery& gallery, const std::filesystem::path& detections_path) {
  detail::write_atomically(detections_path, detections_jsonl(gallery));
}

bool completeness_filter(const KeypointFlags& flags) {
  return flags.head_visible && (flags.left_shoulder_visible || flags.right_shoulder_visible);
}

Gallery apply_filter(const Gallery& gallery) {
  std::vector<PersonCrop> kept;
  kept.reserve(gallery.crops().size());
  std::copy_if(gallery.crops().begin(), gallery.crops().end(), std::back_inserter(kept),
               [](const PersonCrop& c) { return completeness_filter(c.keypoints); });
  return Gallery(gallery.images(), std::move(kept));
}

Gallery dedup(const Gallery& gallery, const EmbeddingMatrix& crop_embeddings,
              const EmbeddingMatrix& scene_embeddings, double threshold) {
  for (const auto& crop : gallery.crops()) {
    if (!crop_embeddings.contains(crop.crop_id)) {
      throw Error("missing embedding for crop " + crop.crop_id);
    }
  }
  for (const auto& img : gallery.images()) {
    if (!scene_embeddings.contains(img.image_id)) {
      throw Error("missing embedding for image " + img.image_id);
    }
  }

  struct Unit {
    std::span<const float> v;
    double norm;
  };
  auto unit = [](const EmbeddingMatrix& m, const std::string& key) {
    auto v = m.at(key);
    double norm = std::sqrt(kernels::dot(v, v));
    if (norm == 0.0) throw Error("zero-norm embedding for " + key);
    return Unit{v, norm};
  };
  auto cosine = [](const Unit& a, const Unit& b) {
    return kernels::dot(a.v, b.v) / (a.norm * b.norm);
  };

  std::vector<const PersonCrop*> order;
  order.reserve(gallery.crops().size());
  for (const auto& c : gallery.crops()) order.push_back(&c);
  std::sort(order.begin(), order.end(),
            [](const PersonCrop* a, const PersonCrop* b) { return a->crop_id < b->crop_id; });

  struct Kept {
    Unit crop;
    Unit scene;
  };
  std::vector<Kept> retained;
  std::unordered_map<std::string, bool> keep;
  for (const PersonCrop* c : order) {
    Kept cur{unit(crop_embeddings, c->crop_id), unit(scene_embeddings, c->source_image_id)};
    bool duplicate = std::any_of(retained.begin(), retained.end(), [&](const Kept& r) {
      return cosine(cur.crop, r.crop) >= threshold && cosine(cur.scene, r.scene) >= threshold;
    });
    keep[c->crop_id] = !duplicate;
    if (!duplicate) retained.push_back(cur);
  }

  std::vector<PersonCrop> kept;
  for (const auto& c : gallery.crops()) {
    if (keep[c.crop_id]) kept.push_back(c);
  }
  return Gallery(gallery.images(), std::move(kept));
}

}  // namespace sap
