#pragma once

#include "nsod/matrix.hpp"
#include "nsod/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace nsod {

// ---------------------------------------------------------------------------
// Manifest (JSON document)
//
//   {"classes": [...],
//    "images": [{"id", "path", "width", "height", "split",
//                "support_label"?, "is_distractor"?}, ...]}
//
// Ground truth never appears inline; it lives in its own JSONL file so the
// no-annotation contract stays mechanically auditable.
// ---------------------------------------------------------------------------

Manifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const Manifest& manifest);

// ---------------------------------------------------------------------------
// JSON-lines artifacts
// ---------------------------------------------------------------------------

/// gt.jsonl: {"id": ..., "instances": [{"box": [x1,y1,x2,y2], "class": j}]}
std::vector<GroundTruth> read_ground_truth(const std::string& path);
void write_ground_truth(const std::string& path,
                        const std::vector<GroundTruth>& gt);

/// proposals.jsonl: {"id": ..., "boxes": [[x1,y1,x2,y2], ...]}
std::vector<ProposalSet> read_proposals(const std::string& path);
void write_proposals(const std::string& path,
                     const std::vector<ProposalSet>& proposals);

/// pseudo.jsonl: {"id", "sigma_s", "sigma_a"?, "q_hat", "cway", "y_hat"}
std::vector<PseudoLabelRecord> read_pseudo_labels(const std::string& path);
void write_pseudo_labels(const std::string& path,
                         const std::vector<PseudoLabelRecord>& records);

/// det.jsonl: {"id", "box", "class", "score"}
std::vector<Detection> read_detections(const std::string& path);
void write_detections(const std::string& path,
                      const std::vector<Detection>& detections);

// ---------------------------------------------------------------------------
// Feature files
//
// Binary: 8-byte magic "NSODFEAT", two u32 little-endian fields (rows, dim),
// then rows*dim float32 little-endian values, row-major. Round-trips are
// bit-exact.
// ---------------------------------------------------------------------------

void write_features(const std::string& path, const MatF& matrix);
MatF read_features(const std::string& path);

// ---------------------------------------------------------------------------
// Lookup helpers
// ---------------------------------------------------------------------------

std::map<std::string, std::vector<GtInstance>> gt_by_image(
    const std::vector<GroundTruth>& gt);
std::map<std::string, std::vector<Box>> proposals_by_image(
    const std::vector<ProposalSet>& proposals);

// ---------------------------------------------------------------------------
// Low-level binary helpers shared by the model codecs
// ---------------------------------------------------------------------------

namespace detail {
void write_file_bytes(const std::string& path, const std::string& bytes);
std::string read_file_bytes(const std::string& path);
void append_u32le(std::string& out, std::uint32_t v);
void append_f32le(std::string& out, float v);
std::uint32_t take_u32le(const std::string& in, std::size_t& pos,
                         const std::string& path);
float take_f32le(const std::string& in, std::size_t& pos,
                 const std::string& path);
void expect_magic(const std::string& in, std::size_t& pos,
                  const char (&magic)[9], const std::string& path,
                  const std::string& what);
}  // namespace detail

}  // namespace nsod
