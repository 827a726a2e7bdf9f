#include "ssair/cfg.hpp"

#include <algorithm>

namespace ssair {

namespace {

// Generic CHK dominator iteration over a graph given as successor lists.
std::vector<std::optional<uint32_t>> compute_idoms(
    const std::vector<std::vector<uint32_t>>& succ, uint32_t root,
    std::vector<uint32_t>& rpo_out, std::vector<int>& rpo_index) {
  const size_t n = succ.size();
  std::vector<std::vector<uint32_t>> pred(n);
  for (uint32_t u = 0; u < n; ++u)
    for (auto v : succ[u]) pred[v].push_back(u);

  // iterative DFS postorder
  std::vector<uint32_t> post;
  std::vector<char> seen(n, 0);
  std::vector<std::pair<uint32_t, size_t>> st{{root, 0}};
  seen[root] = 1;
  while (!st.empty()) {
    auto& [u, i] = st.back();
    if (i < succ[u].size()) {
      uint32_t v = succ[u][i++];
      if (!seen[v]) {
        seen[v] = 1;
        st.push_back({v, 0});
      }
    } else {
      post.push_back(u);
      st.pop_back();
    }
  }
  rpo_out.assign(post.rbegin(), post.rend());
  rpo_index.assign(n, -1);
  for (size_t i = 0; i < rpo_out.size(); ++i) rpo_index[rpo_out[i]] = static_cast<int>(i);

  std::vector<std::optional<uint32_t>> idom(n);
  idom[root] = root;
  auto intersect = [&](uint32_t a, uint32_t b) {
    while (a != b) {
      while (rpo_index[a] > rpo_index[b]) a = *idom[a];
      while (rpo_index[b] > rpo_index[a]) b = *idom[b];
    }
    return a;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t i = 1; i < rpo_out.size(); ++i) {
      uint32_t b = rpo_out[i];
      std::optional<uint32_t> nd;
      for (auto p : pred[b]) {
        if (rpo_index[p] < 0 || !idom[p]) continue;
        nd = nd ? intersect(p, *nd) : p;
      }
      if (nd && idom[b] != nd) {
        idom[b] = nd;
        changed = true;
      }
    }
  }
  idom[root].reset();
  return idom;
}

}  // namespace

Cfg::Cfg(const Function& f) {
  const size_t n = f.blocks.size();
  succ_.resize(n);
  pred_.resize(n);
  for (uint32_t b = 0; b < n; ++b) {
    for (auto s : successors(f.blocks[b])) {
      if (s.index >= n) continue;
      succ_[b].push_back(s);
      auto& p = pred_[s.index];
      if (std::find(p.begin(), p.end(), BlockId{b}) == p.end()) p.push_back(BlockId{b});
    }
  }
  if (n == 0) return;
  std::vector<std::vector<uint32_t>> s(n);
  for (size_t b = 0; b < n; ++b)
    for (auto x : succ_[b]) s[b].push_back(x.index);
  std::vector<uint32_t> rpo;
  auto idom = compute_idoms(s, 0, rpo, rpo_index_);
  for (auto r : rpo) rpo_.push_back(BlockId{r});
  idom_.resize(n);
  for (size_t i = 0; i < n; ++i)
    if (idom[i]) idom_[i] = BlockId{*idom[i]};

  // retreating edges: target is an ancestor on the DFS stack
  std::vector<int> state(n, 0);  // 0 new, 1 on stack, 2 done
  std::vector<std::pair<uint32_t, size_t>> st{{0, 0}};
  state[0] = 1;
  while (!st.empty()) {
    auto& [u, i] = st.back();
    if (i < s[u].size()) {
      uint32_t v = s[u][i++];
      if (state[v] == 1) retreating_.push_back({BlockId{u}, BlockId{v}});
      else if (state[v] == 0) {
        state[v] = 1;
        st.push_back({v, 0});
      }
    } else {
      state[u] = 2;
      st.pop_back();
    }
  }
}

bool Cfg::dominates(BlockId a, BlockId b) const {
  if (!reachable(b)) return false;
  std::optional<BlockId> cur = b;
  while (cur) {
    if (*cur == a) return true;
    cur = idom_[cur->index];
  }
  return false;
}

std::vector<std::pair<BlockId, BlockId>> Cfg::back_edges() const {
  std::vector<std::pair<BlockId, BlockId>> out;
  for (size_t u = 0; u < succ_.size(); ++u) {
    if (!reachable(BlockId{static_cast<uint32_t>(u)})) continue;
    for (auto v : succ_[u])
      if (dominates(v, BlockId{static_cast<uint32_t>(u)}))
        out.push_back({BlockId{static_cast<uint32_t>(u)}, v});
  }
  return out;
}

bool Cfg::reducible() const {
  for (auto [u, v] : retreating_)
    if (!dominates(v, u)) return false;
  return true;
}

std::vector<bool> Cfg::natural_loop(BlockId header) const {
  std::vector<bool> in(size(), false);
  in[header.index] = true;
  std::vector<BlockId> work;
  for (auto [u, v] : back_edges())
    if (v == header && !in[u.index]) {
      in[u.index] = true;
      work.push_back(u);
    }
  while (!work.empty()) {
    auto b = work.back();
    work.pop_back();
    for (auto p : pred_[b.index])
      if (reachable(p) && !in[p.index]) {
        in[p.index] = true;
        work.push_back(p);
      }
  }
  return in;
}

std::vector<std::optional<BlockId>> post_idoms(const Function& f, const Cfg& cfg) {
  const size_t n = cfg.size();
  std::vector<std::optional<BlockId>> out(n);
  // virtual exit node n feeds every return block
  std::vector<std::vector<uint32_t>> rs(n + 1);
  for (uint32_t b = 0; b < n; ++b) {
    if (!cfg.reachable(BlockId{b})) continue;
    for (auto s : cfg.succs(BlockId{b})) rs[s.index].push_back(b);
    const auto& t = f.blocks[b].terminator;
    if (t && std::holds_alternative<ReturnTerm>(*t)) rs[n].push_back(b);
  }
  std::vector<uint32_t> rpo;
  std::vector<int> idx;
  auto idom = compute_idoms(rs, static_cast<uint32_t>(n), rpo, idx);
  for (size_t i = 0; i < n; ++i)
    if (idom[i] && *idom[i] != n) out[i] = BlockId{*idom[i]};
  return out;
}

}  // namespace ssair
