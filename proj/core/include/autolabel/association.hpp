#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "autolabel/scene.hpp"

namespace autolabel {

struct AssociationConfig {
  // Weight of the appearance term; the location term gets the complement.
  double appearance_weight = 0.5;
  // Location kernel width as a fraction of the panorama width.
  double location_scale_frac = 0.05;
  // Pair scores below this never match.
  double match_threshold = 0.3;
};

// Identity of one mask track: which view, which per-view track id.
struct MaskKey {
  int view_index = 0;
  int64_t local_id = 0;
  auto operator<=>(const MaskKey&) const = default;
};

// Horizontal mask center unrolled onto the panorama: box2d center plus the
// summed widths of all views left of this one.
double panoramic_u(const MaskRecord& record, int view_index,
                   const SceneBundle& bundle);

// Similarity of two masks from different views of the same frame and the
// same category: appearance_weight * max(0, <feat_a, feat_b>) plus
// (1 - appearance_weight) * exp(-du / scale), where du is the panoramic
// distance with wraparound and scale = location_scale_frac * panorama width.
double pair_similarity(const MaskRecord& a, int view_a, const MaskRecord& b,
                       int view_b, const SceneBundle& bundle,
                       const AssociationConfig& cfg);

// Maximum-total-score one-to-one assignment between two sides. scores is
// row-major [rows x cols]; ineligible pairs hold a negative value and are
// never selected. Returns column index per row (-1 = unmatched). Totals are
// optimal; ties resolve deterministically by scan order.
std::vector<int> max_score_assignment(const std::vector<double>& scores,
                                      int rows, int cols);

struct PairMatch {
  MaskKey a, b;
  double score = 0.0;
};

// Assignment result for one adjacent view pair of one frame.
struct AdjacentPairResult {
  int view_a = 0, view_b = 0;
  std::vector<PairMatch> matches;
  double total = 0.0;  // sum of matched scores, the assignment optimum
};

// Frame-level association: per-adjacent-pair optimal assignments plus the
// transitive-closure partition of all foreground masks in the frame.
struct FrameAssociation {
  std::vector<AdjacentPairResult> pairs;
  std::vector<std::vector<MaskKey>> groups;  // each sorted; sorted by front
};

// Associates the foreground masks of one frame across adjacent views
// (panoramic order, wrapping around for rigs with three or more views).
// Groups never contain two masks from the same view; when closing the
// panorama would force that, the weakest conflicting link is dropped.
// The partition does not depend on mask record order.
FrameAssociation associate_frame(const SceneBundle& bundle, size_t frame_pos,
                                 const AssociationConfig& cfg);

// Sequence-level identity map. Once a (view, local_id) track is bound to a
// global ID every frame reuses it.
struct GlobalIdMap {
  std::map<MaskKey, uint32_t> ids;     // dense ids starting at 1
  std::map<MaskKey, double> scores;    // mean accepted link similarity
  uint32_t id_count = 0;

  std::optional<uint32_t> global_id(int view_index, int64_t local_id) const {
    auto it = ids.find(MaskKey{view_index, local_id});
    if (it == ids.end()) return std::nullopt;
    return it->second;
  }
};

// Runs associate_frame over the whole sequence and reconciles per-frame links
// into track-level global IDs. Cross-view links must hold in a strict
// majority of the frames where both tracks are visible; accepted links merge
// tracks unless two tracks from one view would overlap in time.
GlobalIdMap unify_sequence(const SceneBundle& bundle,
                           const AssociationConfig& cfg);

}  // namespace autolabel
