#pragma once

#include <set>
#include <vector>

#include "codecforge/graph.hpp"

namespace testing {

// Symbolic run of the node connectivity pipeline: every value is the node that
// produced it, and each read of a value records an edge. Kept as close to the
// pseudo-code loops as possible; the only departure is that the encoder's
// DownSampling runs before Coding, so node (i,0) sits at row i.
inline std::set<codecforge::Edge> enumerate_algorithm1(int L) {
  using codecforge::EdgeTransform;
  using codecforge::NodeId;
  const int N = L + 1;
  std::vector<std::vector<NodeId>> List(N);
  std::set<codecforge::Edge> edges;
  NodeId x = codecforge::kEmbeddingNode;

  for (int j = 0; j < N; ++j) {
    if (j == 0) {
      for (int i = 0; i < N - j; ++i) {
        const NodeId coded{i, j};
        edges.insert({x, coded, EdgeTransform::Down});
        x = coded;
        List[j].push_back(x);
      }
    } else if (j > 0) {
      for (int i = 0; i < N - j; ++i) {
        const NodeId coded{i, j};
        edges.insert({List[j - 1][i], coded, EdgeTransform::Horizontal});  // x0
        edges.insert({List[j - 1][i + 1], coded, EdgeTransform::Up});      // x1
        if (i > 0) edges.insert({x, coded, EdgeTransform::Down});          // x2
        if (i + j == N - 1) edges.insert({List[0][i], coded, EdgeTransform::LongSkip});  // x3
        x = coded;
        List[j].push_back(x);
      }
    }
  }
  return edges;
}

}  // namespace testing
