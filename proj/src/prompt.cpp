// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#include "sap/prompt.hpp"

namespace sap {

namespace {

constexpr std::string_view kInstructionHead = "Instruction: For the text description: \"";
constexpr std::string_view kInstructionBody =
    "\", order the images based on how accurately they reflect the overall context in the text, "
    "starting with the most faithful match. Please output only a Python list format like this: "
    "[4, 2, 8, 1, 5, 3, 6, 9, 10, 7, ..., ";

}  // namespace

const std::string_view kDescriptionPrompt =
    "Generate a description of the individual within the red bounding box and the connection "
    "with the surroundings. Ensure that the description is a natural, fluent paragraph (under 50 "
    "words) that a real witness would actually say to police or friends when trying to help find "
    "this exact person. Do not include text details or labels, and strictly avoid any punctuation "
    "other than commas and periods.";

std::string_view variant_name(PromptVariant v) {
  switch (v) {
    case PromptVariant::kNp: return "np";
    case PromptVariant::kBop: return "bop";
    case PromptVariant::kBep: return "bep";
  }
  return "?";
}

PromptVariant parse_variant(std::string_view name) {
  for (auto v : {PromptVariant::kNp, PromptVariant::kBop, PromptVariant::kBep}) {
    if (name == variant_name(v)) return v;
  }
  throw Error("unknown prompt variant: " + std::string(name) + " (expected np, bop or bep)");
}

std::string ranking_instruction(std::string_view text, std::size_t k) {
  std::string out;
  out.reserve(kInstructionHead.size() + text.size() + kInstructionBody.size() + 8);
  out += kInstructionHead;
  out += text;
  out += kInstructionBody;
  out += std::to_string(k);
  out += "].";
  return out;
}

std::string image_line(PromptVariant variant, std::size_t index, const BBox& box) {
  std::string line = "Image-" + std::to_string(index) + ": <image>";
  if (variant == PromptVariant::kBep) line += " <box>" + format_bbox(box) + "</box>";
  return line;
}

PromptBundle build_prompt(PromptVariant variant, const std::vector<SceneCandidate>& scene_cands,
                          std::string_view text, int overlay_stroke_px) {
  if (scene_cands.empty()) throw Error("build_prompt: empty candidate list");
  if (text.empty()) throw Error("build_prompt: empty description");

  PromptBundle bundle;
  bundle.variant = variant;
  bundle.text_blocks.reserve(scene_cands.size() + 1);
  bundle.attachments.reserve(scene_cands.size());
  for (std::size_t i = 0; i < scene_cands.size(); ++i) {
    const auto& c = scene_cands[i];
    const std::size_t index = i + 1;
    bundle.text_blocks.push_back(image_line(variant, index, c.bbox));

    Attachment att{c.image.uri, std::nullopt, std::nullopt};
    if (variant == PromptVariant::kBop) att.overlay = Overlay{c.bbox, "red", overlay_stroke_px};
    if (variant == PromptVariant::kBep) att.embedded_box = c.bbox;
    bundle.attachments.push_back(std::move(att));
  }
  bundle.text_blocks.push_back(ranking_instruction(text, scene_cands.size()));
  return bundle;
}

PromptBundle build_description_prompt(const GalleryImage& image, const BBox& bbox,
                                      int overlay_stroke_px) {
  if (!bbox_within(bbox, image.width, image.height)) {
    throw Error("bbox out of bounds: " + format_bbox(bbox) + " in image " + image.image_id);
  }
  PromptBundle bundle;
  bundle.variant = PromptVariant::kBop;
  bundle.text_blocks.emplace_back(kDescriptionPrompt);
  bundle.attachments.push_back({image.uri, Overlay{bbox, "red", overlay_stroke_px}, std::nullopt});
  return bundle;
}

std::string render_text(const PromptBundle& bundle) {
  std::string out;
  for (std::size_t i = 0; i < bundle.text_blocks.size(); ++i) {
    if (i > 0) out += '\n';
    out += bundle.text_blocks[i];
  }
  return out;
}

std::optional<std::string> extract_query_text(std::string_view prompt_text) {
  const auto head = prompt_text.find(kInstructionHead);
  if (head == std::string_view::npos) return std::nullopt;
  const auto start = head + kInstructionHead.size();
  const auto tail = prompt_text.rfind("\", order the images based on how");
  if (tail == std::string_view::npos || tail < start) return std::nullopt;
  return std::string(prompt_text.substr(start, tail - start));
}

}  // namespace sap
