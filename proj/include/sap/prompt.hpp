// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sap/common.hpp"
#include "sap/retrieval.hpp"

namespace sap {

/// NP: text and images only. BOP: a red rectangle is drawn over the candidate.
/// BEP: candidate coordinates are embedded in the text inside <box> tags.
enum class PromptVariant { kNp, kBop, kBep };

std::string_view variant_name(PromptVariant v);  // "np" | "bop" | "bep"
PromptVariant parse_variant(std::string_view name);

inline constexpr int kDefaultOverlayStrokePx = 4;

/// Rasterization request for the adapter side. The engine never touches pixels.
struct Overlay {
  BBox bbox;
  std::string color = "red";
  int stroke_px = kDefaultOverlayStrokePx;

  friend bool operator==(const Overlay&, const Overlay&) = default;
};

struct Attachment {
  std::string uri;
  std::optional<Overlay> overlay;
  std::optional<BBox> embedded_box;

  friend bool operator==(const Attachment&, const Attachment&) = default;
};

/// Multimodal prompt: text segments plus images in candidate order. For
/// ranking prompts text_blocks holds one `Image-m:` line per attachment
/// followed by the instruction paragraph.
struct PromptBundle {
  PromptVariant variant = PromptVariant::kBep;
  std::vector<std::string> text_blocks;
  std::vector<Attachment> attachments;

  friend bool operator==(const PromptBundle&, const PromptBundle&) = default;
};

/// The ranking instruction with the description and candidate count filled in.
/// The ten-index exemplar list is kept verbatim for every K; only its final
/// element becomes K.
std::string ranking_instruction(std::string_view text, std::size_t k);

/// `Image-m: <image>` with ` <box>[x, y, w, h]</box>` appended for BEP.
std::string image_line(PromptVariant variant, std::size_t index, const BBox& box);

PromptBundle build_prompt(PromptVariant variant, const std::vector<SceneCandidate>& scene_cands,
                          std::string_view text,
                          int overlay_stroke_px = kDefaultOverlayStrokePx);

extern const std::string_view kDescriptionPrompt;

/// Single-image red-box prompt used to caption a pedestrian in its scene.
PromptBundle build_description_prompt(const GalleryImage& image, const BBox& bbox,
                                      int overlay_stroke_px = kDefaultOverlayStrokePx);

/// text_blocks joined by '\n'.
std::string render_text(const PromptBundle& bundle);

/// Recovers the quoted description from a rendered ranking prompt.
std::optional<std::string> extract_query_text(std::string_view prompt_text);

}  // namespace sap
