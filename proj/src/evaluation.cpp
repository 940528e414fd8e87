#include "piro/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "piro/io.hpp"

namespace piro {

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("euclidean: dimension mismatch");
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        sq += d * d;
    }
    return std::sqrt(sq);
}

std::vector<std::size_t> rank_gallery(const std::vector<GalleryEntry>& gallery,
                                      const std::vector<double>& query) {
    if (gallery.empty()) {
        throw std::invalid_argument("rank_gallery: empty gallery");
    }
    std::vector<double> distances(gallery.size());
    for (std::size_t i = 0; i < gallery.size(); ++i) {
        distances[i] = euclidean(gallery[i].embedding, query);
    }
    std::vector<std::size_t> order(gallery.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return distances[a] < distances[b]; });
    return order;
}

int classify_category(const std::vector<double>& cat_embedding, const Tensor& classifier_weight) {
    if (classifier_weight.rows() != cat_embedding.size()) {
        throw std::invalid_argument("classify_category: embedding/classifier dims differ");
    }
    std::size_t num_categories = classifier_weight.cols();
    int best = 0;
    double best_logit = 0.0;
    for (std::size_t c = 0; c < num_categories; ++c) {
        double logit = 0.0;
        for (std::size_t i = 0; i < cat_embedding.size(); ++i) {
            logit += cat_embedding[i] * classifier_weight.at(i, c);
        }
        if (c == 0 || logit > best_logit) {
            best = static_cast<int>(c);
            best_logit = logit;
        }
    }
    return best;
}

std::size_t recognize_object(const std::vector<GalleryEntry>& prototypes,
                             const std::vector<double>& query) {
    if (prototypes.empty()) {
        throw std::invalid_argument("recognize_object: empty gallery");
    }
    std::size_t best = 0;
    double best_distance = euclidean(prototypes[0].embedding, query);
    for (std::size_t i = 1; i < prototypes.size(); ++i) {
        double d = euclidean(prototypes[i].embedding, query);
        if (d < best_distance) {
            best = i;
            best_distance = d;
        }
    }
    return best;
}

double average_precision(const std::vector<int>& relevance) {
    std::size_t relevant_seen = 0;
    double sum = 0.0;
    for (std::size_t r = 0; r < relevance.size(); ++r) {
        if (relevance[r]) {
            ++relevant_seen;
            sum += static_cast<double>(relevant_seen) / static_cast<double>(r + 1);
        }
    }
    if (relevant_seen == 0) return 0.0;
    return sum / static_cast<double>(relevant_seen);
}

double mean_average_precision(const std::vector<std::vector<int>>& rankings) {
    if (rankings.empty()) {
        throw std::invalid_argument("mean_average_precision: empty query set");
    }
    double sum = 0.0;
    for (const auto& r : rankings) sum += average_precision(r);
    return sum / static_cast<double>(rankings.size());
}

EmbeddingTable compute_embeddings(EncoderParams& encoder, const Dataset& dataset, Split split) {
    EmbeddingTable table;
    for (const ObjectRecord& object : dataset.objects) {
        if (object.split != split) continue;
        ObjectEmbeddingSet set;
        set.object_id = object.object_id;
        set.category_id = object.category_id;

        Graph graph;
        BoundEncoder bound(graph, encoder);
        DualEmbeddings emb = bound.embed(object.views, Mode::kEval, nullptr);
        const Tensor& obj_single = emb.obj_single.value();
        const Tensor& cat_single = emb.cat_single.value();
        for (std::size_t k = 0; k < obj_single.rows(); ++k) {
            set.obj_single.emplace_back(obj_single.data.begin() + k * obj_single.cols(),
                                        obj_single.data.begin() + (k + 1) * obj_single.cols());
            set.cat_single.emplace_back(cat_single.data.begin() + k * cat_single.cols(),
                                        cat_single.data.begin() + (k + 1) * cat_single.cols());
        }
        set.obj_mv = emb.obj_mv.value().data;
        set.cat_mv = emb.cat_mv.value().data;

        // Leave-one-out multi-view prototypes for single-view recognition.
        // With a single view there is nothing to exclude; the prototype is
        // the full multi-view embedding.
        for (std::size_t k = 0; k < object.views.size(); ++k) {
            if (object.views.size() == 1) {
                set.obj_mv_loo.push_back(set.obj_mv);
                continue;
            }
            std::vector<std::vector<double>> rest;
            for (std::size_t j = 0; j < object.views.size(); ++j) {
                if (j != k) rest.push_back(object.views[j]);
            }
            Graph loo_graph;
            BoundEncoder loo_bound(loo_graph, encoder);
            DualEmbeddings loo = loo_bound.embed(rest, Mode::kEval, nullptr);
            set.obj_mv_loo.push_back(loo.obj_mv.value().data);
        }
        table.push_back(std::move(set));
    }
    return table;
}

namespace {

// Table indices sorted by object id; recognition ties resolve to the lowest id.
std::vector<std::size_t> by_object_id(const EmbeddingTable& table) {
    std::vector<std::size_t> order(table.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return table[a].object_id < table[b].object_id;
    });
    return order;
}

DistanceStats table_distances(const EmbeddingTable& table) {
    double intra_sum = 0.0, inter_sum = 0.0;
    std::size_t inter_count = 0;
    for (std::size_t i = 0; i < table.size(); ++i) {
        double intra = 0.0;
        for (const auto& s : table[i].obj_single) {
            intra = std::max(intra, euclidean(s, table[i].obj_mv));
        }
        intra_sum += intra;
        bool has = false;
        double inter = 0.0;
        for (std::size_t j = 0; j < table.size(); ++j) {
            if (j == i || table[j].category_id != table[i].category_id) continue;
            for (const auto& a : table[i].obj_single) {
                for (const auto& b : table[j].obj_single) {
                    double d = euclidean(a, b);
                    if (!has || d < inter) {
                        inter = d;
                        has = true;
                    }
                }
            }
        }
        if (has) {
            inter_sum += inter;
            ++inter_count;
        }
    }
    DistanceStats stats;
    stats.d_max_intra = intra_sum / static_cast<double>(table.size());
    stats.d_min_inter = inter_count ? inter_sum / static_cast<double>(inter_count) : 0.0;
    if (stats.d_max_intra > 0.0 && inter_count) {
        stats.rho = stats.d_min_inter / stats.d_max_intra;
    }
    return stats;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    unsigned threads = std::min<unsigned>(worker_thread_cap(), static_cast<unsigned>(n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    for (unsigned t = 0; t < threads; ++t) {
        workers.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += threads) fn(i);
        });
    }
    for (auto& w : workers) w.join();
}

}  // namespace

EvalReport evaluate_table(const EmbeddingTable& table, const Tensor& classifier_weight,
                          std::vector<PerQueryRecord>* per_query) {
    if (table.empty()) {
        throw std::invalid_argument("evaluate_table: empty embedding table");
    }
    EvalReport report;
    std::vector<std::size_t> id_order = by_object_id(table);

    // Category classification.
    std::size_t total_views = 0, sv_correct = 0, mv_correct = 0;
    for (const ObjectEmbeddingSet& object : table) {
        for (const auto& c : object.cat_single) {
            if (classify_category(c, classifier_weight) == object.category_id) ++sv_correct;
            ++total_views;
        }
        if (classify_category(object.cat_mv, classifier_weight) == object.category_id) {
            ++mv_correct;
        }
    }
    report.sv_cat_cls = static_cast<double>(sv_correct) / static_cast<double>(total_views);
    report.mv_cat_cls = static_cast<double>(mv_correct) / static_cast<double>(table.size());

    // Object recognition against multi-view prototypes. For a single-view
    // query the prototype of the query's own object excludes the query view.
    std::size_t sv_rec_correct = 0;
    for (std::size_t ti = 0; ti < table.size(); ++ti) {
        for (std::size_t k = 0; k < table[ti].obj_single.size(); ++k) {
            std::vector<GalleryEntry> prototypes;
            for (std::size_t oi : id_order) {
                GalleryEntry e;
                e.object_id = table[oi].object_id;
                e.category_id = table[oi].category_id;
                e.is_multiview = true;
                e.embedding = oi == ti ? table[ti].obj_mv_loo[k] : table[oi].obj_mv;
                prototypes.push_back(std::move(e));
            }
            std::size_t predicted = recognize_object(prototypes, table[ti].obj_single[k]);
            if (prototypes[predicted].object_id == table[ti].object_id) ++sv_rec_correct;
        }
    }
    report.sv_obj_rec = static_cast<double>(sv_rec_correct) / static_cast<double>(total_views);

    std::size_t mv_rec_correct = 0;
    {
        std::vector<GalleryEntry> prototypes;
        for (std::size_t oi : id_order) {
            GalleryEntry e;
            e.object_id = table[oi].object_id;
            e.category_id = table[oi].category_id;
            e.is_multiview = true;
            e.embedding = table[oi].obj_mv;
            prototypes.push_back(std::move(e));
        }
        for (const ObjectEmbeddingSet& object : table) {
            std::size_t predicted = recognize_object(prototypes, object.obj_mv);
            if (prototypes[predicted].object_id == object.object_id) ++mv_rec_correct;
        }
    }
    report.mv_obj_rec = static_cast<double>(mv_rec_correct) / static_cast<double>(table.size());

    // Retrieval galleries: every single view, in table order.
    auto build_gallery = [&](bool object_space) {
        std::vector<GalleryEntry> gallery;
        for (const ObjectEmbeddingSet& object : table) {
            const auto& singles = object_space ? object.obj_single : object.cat_single;
            for (std::size_t k = 0; k < singles.size(); ++k) {
                GalleryEntry e;
                e.object_id = object.object_id;
                e.category_id = object.category_id;
                e.view_index = static_cast<int>(k);
                e.embedding = singles[k];
                gallery.push_back(std::move(e));
            }
        }
        return gallery;
    };
    std::vector<GalleryEntry> obj_gallery = build_gallery(true);
    std::vector<GalleryEntry> cat_gallery = build_gallery(false);

    struct Query {
        const std::vector<double>* embedding;
        std::string object_id;
        int category_id;
        int exclude_entry;  // gallery index to drop, -1 for multi-view queries
        std::string query_id;
    };
    auto run_retrieval = [&](const std::vector<GalleryEntry>& gallery,
                             const std::vector<Query>& queries, bool relevance_by_object,
                             const std::string& task_name) {
        std::vector<double> ap(queries.size());
        parallel_for(queries.size(), [&](std::size_t qi) {
            const Query& q = queries[qi];
            std::vector<GalleryEntry> filtered;
            filtered.reserve(gallery.size());
            for (std::size_t gi = 0; gi < gallery.size(); ++gi) {
                if (static_cast<int>(gi) == q.exclude_entry) continue;
                filtered.push_back(gallery[gi]);
            }
            std::vector<std::size_t> order = rank_gallery(filtered, *q.embedding);
            std::vector<int> relevance(order.size());
            for (std::size_t r = 0; r < order.size(); ++r) {
                const GalleryEntry& e = filtered[order[r]];
                relevance[r] = relevance_by_object ? (e.object_id == q.object_id)
                                                   : (e.category_id == q.category_id);
            }
            ap[qi] = average_precision(relevance);
        });
        if (per_query != nullptr) {
            for (std::size_t qi = 0; qi < queries.size(); ++qi) {
                per_query->push_back({task_name, queries[qi].query_id, ap[qi]});
            }
        }
        return std::accumulate(ap.begin(), ap.end(), 0.0) / static_cast<double>(ap.size());
    };

    std::vector<Query> sv_obj_queries, sv_cat_queries, mv_obj_queries, mv_cat_queries;
    int entry_index = 0;
    for (const ObjectEmbeddingSet& object : table) {
        for (std::size_t k = 0; k < object.obj_single.size(); ++k) {
            std::string qid = object.object_id + "#" + std::to_string(k);
            sv_obj_queries.push_back({&object.obj_single[k], object.object_id,
                                      object.category_id, entry_index, qid});
            sv_cat_queries.push_back({&object.cat_single[k], object.object_id,
                                      object.category_id, entry_index, qid});
            ++entry_index;
        }
        mv_obj_queries.push_back(
            {&object.obj_mv, object.object_id, object.category_id, -1, object.object_id});
        mv_cat_queries.push_back(
            {&object.cat_mv, object.object_id, object.category_id, -1, object.object_id});
    }
    report.sv_obj_retr = run_retrieval(obj_gallery, sv_obj_queries, true, "sv_obj_retr");
    report.mv_obj_retr = run_retrieval(obj_gallery, mv_obj_queries, true, "mv_obj_retr");
    report.sv_cat_retr = run_retrieval(cat_gallery, sv_cat_queries, false, "sv_cat_retr");
    report.mv_cat_retr = run_retrieval(cat_gallery, mv_cat_queries, false, "mv_cat_retr");

    report.avg_classification =
        (report.sv_cat_cls + report.mv_cat_cls + report.sv_obj_rec + report.mv_obj_rec) / 4.0;
    report.avg_retrieval =
        (report.sv_cat_retr + report.mv_cat_retr + report.sv_obj_retr + report.mv_obj_retr) / 4.0;
    report.avg_category =
        (report.sv_cat_cls + report.mv_cat_cls + report.sv_cat_retr + report.mv_cat_retr) / 4.0;
    report.avg_object =
        (report.sv_obj_rec + report.mv_obj_rec + report.sv_obj_retr + report.mv_obj_retr) / 4.0;
    report.distances = table_distances(table);
    return report;
}

EvalReport evaluate_all(EncoderParams& encoder, const ClassifierParams& classifier,
                        const Dataset& dataset, Split split,
                        std::vector<PerQueryRecord>* per_query) {
    EmbeddingTable table = compute_embeddings(encoder, dataset, split);
    if (table.empty()) {
        throw std::invalid_argument("evaluate_all: empty split");
    }
    return evaluate_table(table, classifier.weight, per_query);
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    j["sv_cat_cls"] = sv_cat_cls;
    j["mv_cat_cls"] = mv_cat_cls;
    j["sv_obj_rec"] = sv_obj_rec;
    j["mv_obj_rec"] = mv_obj_rec;
    j["sv_cat_retr"] = sv_cat_retr;
    j["mv_cat_retr"] = mv_cat_retr;
    j["sv_obj_retr"] = sv_obj_retr;
    j["mv_obj_retr"] = mv_obj_retr;
    j["avg_classification"] = avg_classification;
    j["avg_retrieval"] = avg_retrieval;
    j["avg_category"] = avg_category;
    j["avg_object"] = avg_object;
    j["d_max_intra"] = distances.d_max_intra;
    j["d_min_inter"] = distances.d_min_inter;
    if (distances.rho.has_value()) {
        j["rho"] = *distances.rho;
    } else {
        j["rho"] = nullptr;
    }
    return j;
}

}  // namespace piro
