#include "piro/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace piro {

namespace {

double row_distance(const Tensor& a, std::size_t ia, const Tensor& b, std::size_t ib) {
    double sq = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
        double d = a.at(ia, j) - b.at(ib, j);
        sq += d * d;
    }
    return std::sqrt(sq);
}

}  // namespace

ConfuserPair find_confusers(const Tensor& embeddings_a, const Tensor& embeddings_b) {
    if (embeddings_a.shape.size() != 2 || embeddings_b.shape.size() != 2 ||
        embeddings_a.rows() == 0 || embeddings_b.rows() == 0) {
        throw std::invalid_argument("find_confusers: embedding sets must be non-empty matrices");
    }
    if (embeddings_a.cols() != embeddings_b.cols()) {
        throw std::invalid_argument("find_confusers: embedding dimensions differ");
    }
    ConfuserPair best;
    best.distance = row_distance(embeddings_a, 0, embeddings_b, 0);
    for (std::size_t ia = 0; ia < embeddings_a.rows(); ++ia) {
        for (std::size_t ib = 0; ib < embeddings_b.rows(); ++ib) {
            double d = row_distance(embeddings_a, ia, embeddings_b, ib);
            if (d < best.distance) {
                best = {ia, ib, d};
            }
        }
    }
    return best;
}

ConfuserPair find_confusers(const std::vector<std::vector<double>>& embeddings_a,
                            const std::vector<std::vector<double>>& embeddings_b) {
    if (embeddings_a.empty() || embeddings_b.empty()) {
        throw std::invalid_argument("find_confusers: empty embedding set");
    }
    auto pack = [](const std::vector<std::vector<double>>& rows) {
        std::vector<double> flat;
        for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
        return Tensor::matrix(rows.size(), rows.front().size(), std::move(flat));
    };
    return find_confusers(pack(embeddings_a), pack(embeddings_b));
}

Var clustering_loss(Graph& g, Var obj_mv, Var obj_con, double alpha) {
    return hinge(g, add_scalar(g, distance(g, obj_mv, obj_con), -alpha));
}

Var separation_loss(Graph& g, Var con_a, Var con_b, Var mv_a, Var mv_b, double beta) {
    Var con_term = hinge(g, scale(g, add_scalar(g, distance(g, con_a, con_b), -beta), -1.0));
    Var mv_term = hinge(g, scale(g, add_scalar(g, distance(g, mv_a, mv_b), -beta), -1.0));
    return add(g, con_term, mv_term);
}

PiObjParts piobj_loss(Graph& g, const DualEmbeddings& emb_a, const DualEmbeddings& emb_b,
                      const Margins& margins) {
    ConfuserPair confusers = find_confusers(emb_a.obj_single.value(), emb_b.obj_single.value());
    Var con_a = row(g, emb_a.obj_single, confusers.index_a);
    Var con_b = row(g, emb_b.obj_single, confusers.index_b);
    Var intra = add(g, clustering_loss(g, emb_a.obj_mv, con_a, margins.alpha),
                    clustering_loss(g, emb_b.obj_mv, con_b, margins.alpha));
    PiObjParts parts;
    parts.intra = intra.value().data[0];
    if (margins.use_separation) {
        Var inter = separation_loss(g, con_a, con_b, emb_a.obj_mv, emb_b.obj_mv, margins.beta);
        parts.inter = inter.value().data[0];
        parts.total = add(g, intra, inter);
    } else {
        parts.total = intra;
    }
    return parts;
}

namespace {

Var mean_single_to_multi_distance(Graph& g, Var single, Var multi) {
    std::size_t num_views = single.value().rows();
    Var acc = distance(g, row(g, single, 0), multi);
    for (std::size_t k = 1; k < num_views; ++k) {
        acc = add(g, acc, distance(g, row(g, single, k), multi));
    }
    return scale(g, acc, 1.0 / static_cast<double>(num_views));
}

}  // namespace

Var picat_loss(Graph& g, const DualEmbeddings& emb_a, const DualEmbeddings& emb_b,
               double theta) {
    Var dsm_a = mean_single_to_multi_distance(g, emb_a.cat_single, emb_a.cat_mv);
    Var dsm_b = mean_single_to_multi_distance(g, emb_b.cat_single, emb_b.cat_mv);
    Var mv_term = hinge(g, add_scalar(g, distance(g, emb_a.cat_mv, emb_b.cat_mv), -theta));
    return add(g, add(g, hinge(g, add_scalar(g, dsm_a, -theta)),
                      hinge(g, add_scalar(g, dsm_b, -theta))),
               mv_term);
}

Var lsoftmax_cat_loss(Graph& g, Var embedding, int label, Var classifier_weight,
                      int gamma, double lambda_blend) {
    if (gamma < 1) {
        throw std::invalid_argument("lsoftmax_cat_loss: gamma must be >= 1");
    }
    const Tensor& w = classifier_weight.value();
    std::size_t dim = embedding.value().size();
    std::size_t num_categories = w.cols();
    if (w.rows() != dim) {
        throw std::invalid_argument("lsoftmax_cat_loss: embedding/classifier dims differ");
    }
    if (label < 0 || static_cast<std::size_t>(label) >= num_categories) {
        throw std::invalid_argument("lsoftmax_cat_loss: label out of range");
    }
    Var logits = reshape(g, matmul(g, reshape(g, embedding, {1, dim}), classifier_weight),
                         {num_categories});
    Var target_column = row(g, transpose(g, classifier_weight), static_cast<std::size_t>(label));
    Var embedding_norm = norm(g, embedding);
    Var column_norm = norm(g, target_column);
    if (embedding_norm.value().data[0] == 0.0 || column_norm.value().data[0] == 0.0) {
        throw std::invalid_argument(
            "lsoftmax_cat_loss: zero-norm embedding or weight column, angle undefined");
    }
    Var norm_product = mul(g, embedding_norm, column_norm);
    Var cosine = div(g, element(g, logits, static_cast<std::size_t>(label)), norm_product);
    Var angle = acos_op(g, cosine);

    // psi is piecewise in k = floor(gamma * t / pi); k is a constant of the
    // forward pass (psi is C^1 across the interval boundaries).
    double angle_value = angle.value().data[0];
    int k = std::min(static_cast<int>(std::floor(angle_value * gamma / std::numbers::pi)),
                     gamma - 1);
    double sign = (k % 2 == 0) ? 1.0 : -1.0;
    Var psi = add_scalar(g, scale(g, cos_op(g, scale(g, angle, static_cast<double>(gamma))), sign),
                         -2.0 * k);
    Var margined = mul(g, norm_product, psi);
    Var target = margined;
    if (lambda_blend > 0.0) {
        Var original = element(g, logits, static_cast<std::size_t>(label));
        target = scale(g, add(g, scale(g, original, lambda_blend), margined),
                       1.0 / (1.0 + lambda_blend));
    }

    // Stabilized log-sum-exp with the target logit substituted in. The shift
    // is the max over the substituted target and the non-label logits, and the
    // non-label sum is formed with a mask instead of subtracting the label
    // term, so the denominator is at least one and never cancels to zero.
    double shift = target.value().data[0];
    for (std::size_t i = 0; i < num_categories; ++i) {
        if (i != static_cast<std::size_t>(label)) {
            shift = std::max(shift, logits.value().data[i]);
        }
    }
    Tensor mask_values = Tensor::zeros({num_categories});
    for (std::size_t i = 0; i < num_categories; ++i) {
        mask_values.data[i] = i == static_cast<std::size_t>(label) ? 0.0 : 1.0;
    }
    Var mask = g.input(std::move(mask_values));
    Var shifted_logits = add_scalar(g, logits, -shift);
    Var shifted_target = add_scalar(g, target, -shift);
    Var without_label = sum(g, mul(g, exp_op(g, shifted_logits), mask));
    Var denom = add(g, without_label, exp_op(g, shifted_target));
    return sub(g, log_op(g, denom), shifted_target);
}

LossBreakdown total_loss(Graph& g, const std::vector<PairEmbeddings>& pairs,
                         Var classifier_weight, const Margins& margins) {
    if (pairs.empty()) {
        throw std::invalid_argument("total_loss: empty pair list");
    }
    LossBreakdown breakdown;
    Var acc = g.constant(0.0);
    for (const PairEmbeddings& pair : pairs) {
        Var pair_loss = g.constant(0.0);
        if (margins.use_cat) {
            for (const DualEmbeddings* emb : {&pair.a, &pair.b}) {
                std::size_t num_views = emb->cat_single.value().rows();
                Var cat_acc = g.constant(0.0);
                for (std::size_t k = 0; k < num_views; ++k) {
                    cat_acc = add(g, cat_acc,
                                  lsoftmax_cat_loss(g, row(g, emb->cat_single, k),
                                                    pair.category_id, classifier_weight,
                                                    margins.gamma, margins.lambda_blend));
                }
                cat_acc = scale(g, cat_acc, 1.0 / static_cast<double>(num_views));
                breakdown.cat += cat_acc.value().data[0];
                pair_loss = add(g, pair_loss, cat_acc);
            }
        }
        if (margins.use_picat) {
            Var picat = picat_loss(g, pair.a, pair.b, margins.theta);
            breakdown.picat += picat.value().data[0];
            pair_loss = add(g, pair_loss, picat);
        }
        if (margins.use_piobj) {
            PiObjParts piobj = piobj_loss(g, pair.a, pair.b, margins);
            breakdown.piobj_intra += piobj.intra;
            breakdown.piobj_inter += piobj.inter;
            pair_loss = add(g, pair_loss, piobj.total);
        }
        acc = add(g, acc, pair_loss);
    }
    double inv = 1.0 / static_cast<double>(pairs.size());
    breakdown.total = scale(g, acc, inv);
    breakdown.cat *= inv;
    breakdown.picat *= inv;
    breakdown.piobj_intra *= inv;
    breakdown.piobj_inter *= inv;
    return breakdown;
}

}  // namespace piro
