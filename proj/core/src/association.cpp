#include "autolabel/association.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace autolabel {

double panoramic_u(const MaskRecord& record, int view_index,
                   const SceneBundle& bundle) {
  const double center = 0.5 * (record.box2d[0] + record.box2d[2]);
  return center + bundle.panorama_offset(view_index);
}

double pair_similarity(const MaskRecord& a, int view_a, const MaskRecord& b,
                       int view_b, const SceneBundle& bundle,
                       const AssociationConfig& cfg) {
  double dot = 0.0;
  if (a.appearance.size() > 0 && a.appearance.size() == b.appearance.size())
    dot = a.appearance.dot(b.appearance);
  const double appearance = std::max(0.0, dot);

  const double panorama = bundle.panorama_width();
  double du = std::abs(panoramic_u(a, view_a, bundle) -
                       panoramic_u(b, view_b, bundle));
  du = std::min(du, panorama - du);  // wrap across the panorama seam
  const double scale = cfg.location_scale_frac * panorama;
  const double location = std::exp(-du / scale);

  return cfg.appearance_weight * appearance +
         (1.0 - cfg.appearance_weight) * location;
}

// Hungarian method with potentials on a square zero-padded matrix.
// Minimizes cost = -score; dummy and ineligible cells cost 0, so they never
// displace a positive-score match and padding preserves the optimum over
// partial matchings.
std::vector<int> max_score_assignment(const std::vector<double>& scores,
                                      int rows, int cols) {
  const int n = std::max(rows, cols);
  if (n == 0) return {};
  auto cost = [&](int i, int j) -> double {
    if (i >= rows || j >= cols) return 0.0;
    const double s = scores[static_cast<size_t>(i) * cols + j];
    return s > 0.0 ? -s : 0.0;
  };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> match(rows, -1);
  for (int j = 1; j <= n; ++j) {
    const int i = p[j] - 1;
    if (i < 0 || i >= rows || j - 1 >= cols) continue;
    if (scores[static_cast<size_t>(i) * cols + (j - 1)] > 0.0) match[i] = j - 1;
  }
  return match;
}

namespace {

struct FrameMask {
  MaskKey key;
  const MaskRecord* record = nullptr;
};

std::vector<std::vector<FrameMask>> collect_foreground(
    const SceneBundle& bundle, size_t frame_pos) {
  std::vector<std::vector<FrameMask>> by_view(bundle.view_count());
  for (size_t vi = 0; vi < bundle.view_count(); ++vi) {
    if (frame_pos >= bundle.masks[vi].size()) continue;
    for (const auto& r : bundle.masks[vi][frame_pos].records) {
      if (!r.is_foreground()) continue;
      by_view[vi].push_back({MaskKey{static_cast<int>(vi), r.local_id}, &r});
    }
    std::sort(by_view[vi].begin(), by_view[vi].end(),
              [](const FrameMask& a, const FrameMask& b) {
                return a.key.local_id < b.key.local_id;
              });
  }
  return by_view;
}

// Union-find over mask keys where each root tracks the set of views its
// group touches; merges that would give a group two masks in one view are
// refused.
class ViewDisjointGroups {
 public:
  void add(const MaskKey& key) {
    if (parent_.count(key)) return;
    parent_[key] = key;
    views_[key] = {key.view_index};
  }

  MaskKey find(MaskKey k) {
    while (!(parent_[k] == k)) {
      parent_[k] = parent_[parent_[k]];
      k = parent_[k];
    }
    return k;
  }

  bool merge(const MaskKey& a, const MaskKey& b) {
    MaskKey ra = find(a), rb = find(b);
    if (ra == rb) return true;
    auto& va = views_[ra];
    auto& vb = views_[rb];
    for (int v : vb)
      if (va.count(v)) return false;
    va.insert(vb.begin(), vb.end());
    views_.erase(rb);
    parent_[rb] = ra;
    return true;
  }

  std::vector<std::vector<MaskKey>> groups() {
    std::map<MaskKey, std::vector<MaskKey>> by_root;
    for (const auto& [k, _] : parent_) by_root[find(k)].push_back(k);
    std::vector<std::vector<MaskKey>> out;
    out.reserve(by_root.size());
    for (auto& [_, members] : by_root) {
      std::sort(members.begin(), members.end());
      out.push_back(std::move(members));
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    return out;
  }

 private:
  std::map<MaskKey, MaskKey> parent_;
  std::map<MaskKey, std::set<int>> views_;
};

std::vector<std::pair<int, int>> adjacent_view_pairs(size_t view_count) {
  std::vector<std::pair<int, int>> pairs;
  if (view_count < 2) return pairs;
  const int v = static_cast<int>(view_count);
  for (int i = 0; i + 1 < v; ++i) pairs.emplace_back(i, i + 1);
  if (v > 2) pairs.emplace_back(v - 1, 0);  // panorama seam
  return pairs;
}

}  // namespace

FrameAssociation associate_frame(const SceneBundle& bundle, size_t frame_pos,
                                 const AssociationConfig& cfg) {
  FrameAssociation out;
  const auto by_view = collect_foreground(bundle, frame_pos);

  ViewDisjointGroups groups;
  for (const auto& masks : by_view)
    for (const auto& m : masks) groups.add(m.key);

  for (const auto& [va, vb] : adjacent_view_pairs(bundle.view_count())) {
    const auto& a = by_view[va];
    const auto& b = by_view[vb];
    AdjacentPairResult pr;
    pr.view_a = va;
    pr.view_b = vb;
    if (!a.empty() && !b.empty()) {
      const int rows = static_cast<int>(a.size());
      const int cols = static_cast<int>(b.size());
      std::vector<double> scores(static_cast<size_t>(rows) * cols, -1.0);
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
          if (a[i].record->category != b[j].record->category) continue;
          const double s = pair_similarity(*a[i].record, va, *b[j].record, vb,
                                           bundle, cfg);
          if (s >= cfg.match_threshold)
            scores[static_cast<size_t>(i) * cols + j] = s;
        }
      }
      const auto match = max_score_assignment(scores, rows, cols);
      for (int i = 0; i < rows; ++i) {
        if (match[i] < 0) continue;
        const double s = scores[static_cast<size_t>(i) * cols + match[i]];
        pr.matches.push_back({a[i].key, b[match[i]].key, s});
        pr.total += s;
      }
    }
    out.pairs.push_back(std::move(pr));
  }

  // Close the partition. Strong links merge first so that when the seam pair
  // would place two same-view masks in one group, the weakest link loses.
  std::vector<const PairMatch*> links;
  for (const auto& pr : out.pairs)
    for (const auto& m : pr.matches) links.push_back(&m);
  std::sort(links.begin(), links.end(), [](const PairMatch* x, const PairMatch* y) {
    if (x->score != y->score) return x->score > y->score;
    if (!(x->a == y->a)) return x->a < y->a;
    return x->b < y->b;
  });
  for (const PairMatch* m : links) groups.merge(m->a, m->b);

  out.groups = groups.groups();
  return out;
}

GlobalIdMap unify_sequence(const SceneBundle& bundle,
                           const AssociationConfig& cfg) {
  struct LinkStats {
    int votes = 0;
    double score_sum = 0.0;
  };
  std::map<std::pair<MaskKey, MaskKey>, LinkStats> link_stats;
  std::map<MaskKey, std::vector<uint64_t>> frames_of;  // visibility bitsets
  std::map<MaskKey, int> first_frame;

  const size_t n_frames = bundle.frame_count();
  const size_t words = (n_frames + 63) / 64;

  for (size_t f = 0; f < n_frames; ++f) {
    for (size_t vi = 0; vi < bundle.view_count(); ++vi) {
      for (const auto& r : bundle.masks[vi][f].records) {
        if (!r.is_foreground()) continue;
        const MaskKey key{static_cast<int>(vi), r.local_id};
        auto& bits = frames_of[key];
        bits.resize(words, 0);
        bits[f / 64] |= uint64_t{1} << (f % 64);
        first_frame.try_emplace(key, static_cast<int>(f));
      }
    }
    const FrameAssociation assoc = associate_frame(bundle, f, cfg);
    for (const auto& pr : assoc.pairs) {
      for (const auto& m : pr.matches) {
        auto key = std::minmax(m.a, m.b);
        auto& s = link_stats[{key.first, key.second}];
        s.votes += 1;
        s.score_sum += m.score;
      }
    }
  }

  // A link survives only if it held in a strict majority of the frames where
  // both tracks were visible.
  struct Accepted {
    MaskKey a, b;
    int votes;
    double score_sum;
  };
  std::vector<Accepted> accepted;
  for (const auto& [pair, stats] : link_stats) {
    const auto& fa = frames_of[pair.first];
    const auto& fb = frames_of[pair.second];
    int co = 0;
    for (size_t w = 0; w < words; ++w) co += std::popcount(fa[w] & fb[w]);
    if (stats.votes * 2 > co)
      accepted.push_back({pair.first, pair.second, stats.votes, stats.score_sum});
  }
  std::sort(accepted.begin(), accepted.end(), [](const Accepted& x, const Accepted& y) {
    if (x.votes != y.votes) return x.votes > y.votes;
    if (x.score_sum != y.score_sum) return x.score_sum > y.score_sum;
    if (!(x.a == y.a)) return x.a < y.a;
    return x.b < y.b;
  });

  // Track-level union-find; a merge is refused when two tracks of one view
  // would overlap in time inside the same group.
  std::map<MaskKey, MaskKey> parent;
  std::map<MaskKey, std::map<int, std::vector<uint64_t>>> group_bits;
  for (const auto& [key, bits] : frames_of) {
    parent[key] = key;
    group_bits[key][key.view_index] = bits;
  }
  auto find = [&](MaskKey k) {
    while (!(parent[k] == k)) {
      parent[k] = parent[parent[k]];
      k = parent[k];
    }
    return k;
  };
  std::map<MaskKey, double> score_of;
  std::map<MaskKey, int> link_count;
  for (const auto& link : accepted) {
    const MaskKey ra = find(link.a);
    const MaskKey rb = find(link.b);
    if (!(ra == rb)) {
      auto& ga = group_bits[ra];
      auto& gb = group_bits[rb];
      bool clash = false;
      for (const auto& [view, bits] : gb) {
        auto it = ga.find(view);
        if (it == ga.end()) continue;
        for (size_t w = 0; w < words && !clash; ++w)
          if (bits[w] & it->second[w]) clash = true;
        if (clash) break;
      }
      if (clash) continue;
      for (const auto& [view, bits] : gb) {
        auto& dst = ga[view];
        dst.resize(words, 0);
        for (size_t w = 0; w < words; ++w) dst[w] |= bits[w];
      }
      group_bits.erase(rb);
      parent[rb] = ra;
    }
    const double mean = link.score_sum / std::max(1, link.votes);
    for (const MaskKey& k : {link.a, link.b}) {
      score_of[k] += mean;
      link_count[k] += 1;
    }
  }

  // Dense ids ordered by (first frame, view, local id) of each group's
  // earliest member, so numbering is stable under mask file reordering.
  std::map<MaskKey, std::vector<MaskKey>> members;
  for (const auto& [key, _] : parent) members[find(key)].push_back(key);
  struct GroupOrder {
    int first_frame;
    MaskKey key;
    const std::vector<MaskKey>* members;
  };
  std::vector<GroupOrder> order;
  for (auto& [root, mem] : members) {
    std::sort(mem.begin(), mem.end());
    int ff = std::numeric_limits<int>::max();
    MaskKey fk = mem.front();
    for (const auto& k : mem) {
      const int f = first_frame[k];
      if (f < ff || (f == ff && k < fk)) {
        ff = f;
        fk = k;
      }
    }
    order.push_back({ff, fk, &mem});
  }
  std::sort(order.begin(), order.end(), [](const GroupOrder& a, const GroupOrder& b) {
    if (a.first_frame != b.first_frame) return a.first_frame < b.first_frame;
    return a.key < b.key;
  });

  GlobalIdMap out;
  uint32_t next = 1;
  for (const auto& g : order) {
    for (const auto& k : *g.members) {
      out.ids[k] = next;
      const auto it = link_count.find(k);
      out.scores[k] =
          it == link_count.end() ? 0.0 : score_of[k] / it->second;
    }
    ++next;
  }
  out.id_count = next - 1;
  return out;
}

}  // namespace autolabel
