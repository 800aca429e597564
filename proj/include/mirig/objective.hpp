#pragma once
#include <vector>

#include "mirig/graph.hpp"

namespace mirig::objective {

// Contrastive loss over K positive pairs.  Each of the 2K rows serves as an
// anchor once; the denominator mixes the positive with the 2K-2 other
// in-batch embeddings, so each anchor sees 2K-1 candidates.
struct LossValue {
  double nats = 0.0;
  std::vector<double> per_anchor;  // 2K terms, each >= 0
};

// emb_x, emb_y: (K, d) with unit rows (checked to 1e-4).
LossValue nt_xent(const Tensor& emb_x, const Tensor& emb_y, double tau);

// Variant with an external negative set: the denominator for every anchor is
// its positive plus scores against emb_neg (M, d); in-batch negatives are not
// used.  Each anchor sees M+1 candidates.
LossValue nt_xent_external(const Tensor& emb_x, const Tensor& emb_y, const Tensor& emb_neg,
                           double tau);

struct MiBits {
  double bits = 0.0;
  double bound_bits = 0.0;  // log2(2K-1) or log2(M+1) for the external variant
};

// log2(2K-1) - loss/ln2.  Asserts the estimate never exceeds the bound
// (violation would indicate a numerical fault) and counts every check.
MiBits estimated_mi_bits(const LossValue& loss, int k);
MiBits estimated_mi_bits_external(const LossValue& loss, int k, int m);
double bound_bits(int k);
long bound_checks_performed();

// Exact mutual information in bits of a discrete joint (rows x, cols y).
// Entries must be non-negative and sum to 1 within 1e-9.
double exact_mi_discrete(const std::vector<std::vector<double>>& joint);

// Graph builders.  emb2k holds x embeddings in rows [0,K) and y embeddings in
// rows [K,2K).  Returns the scalar loss node; *per_anchor_node (if non-null)
// receives the node holding the 2K per-anchor terms.
int append_nt_xent(diff::Graph& g, int emb2k, int k, double tau, int* per_anchor_node = nullptr);

// From a precomputed (2K,2K) score matrix (already divided by tau).
int append_nt_xent_scores(diff::Graph& g, int scores, int k, int* per_anchor_node = nullptr);

// emb_all: rows [0,K) x, [K,2K) y, [2K,2K+M) external negatives.
int append_nt_xent_external(diff::Graph& g, int emb_all, int k, int m, double tau,
                            int* per_anchor_node = nullptr);

}  // namespace mirig::objective
