#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "piro/dataset.hpp"
#include "piro/encoder.hpp"
#include "piro/trainer.hpp"

namespace piro {

struct GalleryEntry {
    std::string object_id;
    int category_id = -1;
    int view_index = -1;  // -1 for multi-view entries
    bool is_multiview = false;
    std::vector<double> embedding;
};

// Embeddings of one test object: every single view in both spaces, the
// multi-view embeddings, and the leave-one-out multi-view object embeddings
// used as recognition prototypes for single-view queries.
struct ObjectEmbeddingSet {
    std::string object_id;
    int category_id = -1;
    std::vector<std::vector<double>> obj_single;
    std::vector<std::vector<double>> cat_single;
    std::vector<double> obj_mv;
    std::vector<double> cat_mv;
    std::vector<std::vector<double>> obj_mv_loo;  // one per excluded view
};

using EmbeddingTable = std::vector<ObjectEmbeddingSet>;

struct PerQueryRecord {
    std::string task;
    std::string query_id;
    double average_precision = 0.0;
};

struct EvalReport {
    double sv_cat_cls = 0.0, mv_cat_cls = 0.0;
    double sv_obj_rec = 0.0, mv_obj_rec = 0.0;
    double sv_cat_retr = 0.0, mv_cat_retr = 0.0;
    double sv_obj_retr = 0.0, mv_obj_retr = 0.0;
    double avg_classification = 0.0, avg_retrieval = 0.0;
    double avg_category = 0.0, avg_object = 0.0;
    DistanceStats distances;

    nlohmann::json to_json() const;
};

double euclidean(const std::vector<double>& a, const std::vector<double>& b);

// Ranks gallery entries by ascending distance to the query; ties keep gallery
// insertion order (stable sort). Returns indices into the gallery.
std::vector<std::size_t> rank_gallery(const std::vector<GalleryEntry>& gallery,
                                      const std::vector<double>& query);

// Argmax over classifier logits; ties resolve to the lowest category id.
int classify_category(const std::vector<double>& cat_embedding, const Tensor& classifier_weight);

// Nearest prototype by Euclidean distance; ties resolve to the earliest
// (lowest-id) gallery entry. Throws on an empty gallery.
std::size_t recognize_object(const std::vector<GalleryEntry>& prototypes,
                             const std::vector<double>& query);

// AP with binary relevance; a query with no relevant entries scores 0.
double average_precision(const std::vector<int>& relevance);
double mean_average_precision(const std::vector<std::vector<int>>& rankings);

EmbeddingTable compute_embeddings(EncoderParams& encoder, const Dataset& dataset, Split split);

// All eight tasks over a precomputed embedding table.
EvalReport evaluate_table(const EmbeddingTable& table, const Tensor& classifier_weight,
                          std::vector<PerQueryRecord>* per_query = nullptr);

EvalReport evaluate_all(EncoderParams& encoder, const ClassifierParams& classifier,
                        const Dataset& dataset, Split split,
                        std::vector<PerQueryRecord>* per_query = nullptr);

}  // namespace piro
