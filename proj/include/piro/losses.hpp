#pragma once

#include <cstddef>
#include <vector>

#include "piro/autodiff.hpp"
#include "piro/encoder.hpp"

namespace piro {

// Margins and term toggles for the training objective.
struct Margins {
    double alpha = 0.25;   // intra-object margin
    double beta = 1.00;    // inter-object margin
    double theta = 0.25;   // category clustering margin
    int gamma = 4;         // integer angular margin of the large-margin softmax
    // Annealing coefficient for the large-margin target logit:
    // target = (lambda * original + margined) / (1 + lambda).
    double lambda_blend = 0.0;
    bool use_cat = true;
    bool use_picat = true;
    bool use_piobj = true;
    bool use_separation = true;  // inter term inside the object loss
};

struct ConfuserPair {
    std::size_t index_a = 0;
    std::size_t index_b = 0;
    double distance = 0.0;
};

// Exhaustive argmin over all cross pairs of single-view object embeddings.
// Ties break lexicographically by (index_a, index_b).
ConfuserPair find_confusers(const Tensor& embeddings_a, const Tensor& embeddings_b);
ConfuserPair find_confusers(const std::vector<std::vector<double>>& embeddings_a,
                            const std::vector<std::vector<double>>& embeddings_b);

// [d(o_mv, o_con) - alpha]_+
Var clustering_loss(Graph& g, Var obj_mv, Var obj_con, double alpha);
// [beta - d(con_a, con_b)]_+ + [beta - d(mv_a, mv_b)]_+
Var separation_loss(Graph& g, Var con_a, Var con_b, Var mv_a, Var mv_b, double beta);

struct PiObjParts {
    Var total;
    double intra = 0.0;
    double inter = 0.0;
};

// Clustering terms for both objects plus the separation term, with confusers
// recomputed from the current embeddings. Confuser selection is a hard choice
// per step: gradients flow through the selected embeddings, not the argmin.
PiObjParts piobj_loss(Graph& g, const DualEmbeddings& emb_a, const DualEmbeddings& emb_b,
                      const Margins& margins);

// [d_sm^a - theta]_+ + [d_sm^b - theta]_+ + [d(c_mv^a, c_mv^b) - theta]_+
// where d_sm is the mean single-to-multi-view distance in category space.
Var picat_loss(Graph& g, const DualEmbeddings& emb_a, const DualEmbeddings& emb_b,
               double theta);

// Large-margin softmax cross-entropy for one category embedding. The target
// logit ||W_y|| ||x|| cos(t) is replaced by ||W_y|| ||x|| psi(t) with
// psi(t) = (-1)^k cos(gamma t) - 2k on t in [k pi/gamma, (k+1) pi/gamma],
// optionally blended with the unmargined logit via lambda.
Var lsoftmax_cat_loss(Graph& g, Var embedding, int label, Var classifier_weight,
                      int gamma, double lambda_blend);

struct PairEmbeddings {
    DualEmbeddings a, b;
    int category_id = -1;
};

struct LossBreakdown {
    Var total;
    double cat = 0.0;
    double picat = 0.0;
    double piobj_intra = 0.0;
    double piobj_inter = 0.0;
};

// Mean over pairs of L_cat^a + L_cat^b + L_picat + L_piobj, with per-term
// toggles from Margins. L_cat^x averages the per-view margin softmax losses.
LossBreakdown total_loss(Graph& g, const std::vector<PairEmbeddings>& pairs,
                         Var classifier_weight, const Margins& margins);

}  // namespace piro
