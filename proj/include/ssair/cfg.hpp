#pragma once

#include <optional>
#include <vector>

#include "ssair/ir.hpp"

namespace ssair {

/// Control-flow graph facts for one function: edges, reverse postorder,
/// and the dominator tree (Cooper-Harvey-Kennedy iteration).
class Cfg {
 public:
  explicit Cfg(const Function& f);

  size_t size() const { return succ_.size(); }
  const std::vector<BlockId>& succs(BlockId b) const { return succ_[b.index]; }
  /// Distinct predecessors in first-seen order (block order).
  const std::vector<BlockId>& preds(BlockId b) const { return pred_[b.index]; }
  const std::vector<BlockId>& rpo() const { return rpo_; }
  bool reachable(BlockId b) const { return rpo_index_[b.index] >= 0; }
  int rpo_index(BlockId b) const { return rpo_index_[b.index]; }
  std::optional<BlockId> idom(BlockId b) const { return idom_[b.index]; }
  bool dominates(BlockId a, BlockId b) const;

  /// Edges u->h with h dominating u.
  std::vector<std::pair<BlockId, BlockId>> back_edges() const;
  /// True iff every retreating DFS edge is a back edge.
  bool reducible() const;
  /// Blocks of the natural loop for header h (including h).
  std::vector<bool> natural_loop(BlockId header) const;

 private:
  std::vector<std::vector<BlockId>> succ_, pred_;
  std::vector<BlockId> rpo_;
  std::vector<int> rpo_index_;
  std::vector<std::optional<BlockId>> idom_;
  std::vector<std::pair<BlockId, BlockId>> retreating_;
};

/// Immediate post-dominators for a function whose reachable blocks all reach
/// a single return block. Entries for the exit (and unreachable blocks) are
/// nullopt.
std::vector<std::optional<BlockId>> post_idoms(const Function& f, const Cfg& cfg);

}  // namespace ssair
