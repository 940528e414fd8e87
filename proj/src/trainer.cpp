#include "piro/trainer.hpp"

#include <cmath>
#include <stdexcept>

namespace piro {

NanLossError::NanLossError(std::size_t epoch_, std::string term_)
    : std::runtime_error("non-finite loss in epoch " + std::to_string(epoch_) +
                         ", term '" + term_ + "'"),
      epoch(epoch_),
      term(std::move(term_)) {}

double schedule_learning_rate(double base, std::size_t epoch, std::size_t halving_period) {
    std::size_t halvings = (epoch - 1) / halving_period;
    return base * std::pow(0.5, static_cast<double>(halvings));
}

void adam_step(EncoderParams& encoder, ClassifierParams& classifier,
               const std::map<std::string, Tensor>& gradients, AdamState& state,
               double learning_rate) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    ++state.step;
    double t = static_cast<double>(state.step);
    double correction1 = 1.0 - std::pow(kBeta1, t);
    double correction2 = 1.0 - std::pow(kBeta2, t);

    auto update = [&](const std::string& name, Tensor& param) {
        auto it = gradients.find(name);
        if (it == gradients.end()) return;
        const Tensor& grad = it->second;
        Tensor& m = state.first_moment.try_emplace(name, Tensor::zeros(param.shape)).first->second;
        Tensor& v = state.second_moment.try_emplace(name, Tensor::zeros(param.shape)).first->second;
        for (std::size_t i = 0; i < param.size(); ++i) {
            double gi = grad.data[i];
            m.data[i] = kBeta1 * m.data[i] + (1.0 - kBeta1) * gi;
            v.data[i] = kBeta2 * v.data[i] + (1.0 - kBeta2) * gi * gi;
            double mhat = m.data[i] / correction1;
            double vhat = v.data[i] / correction2;
            param.data[i] -= learning_rate * mhat / (std::sqrt(vhat) + kEps);
        }
    };
    encoder.visit([&](const std::string& name, Tensor& tensor) { update(name, tensor); });
    update("classifier.weight", classifier.weight);
}

TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  const EpochCallback& on_epoch) {
    dataset.validate();
    if (dataset.count(Split::kTrain) == 0) {
        throw std::invalid_argument("train: empty train split");
    }
    if (config.epochs == 0 || config.pairs_per_epoch == 0 || config.pairs_per_step == 0 ||
        config.views_per_sample == 0 || config.learning_rate <= 0.0 ||
        config.lr_halving_period_epochs == 0) {
        throw std::invalid_argument("train: invalid config (counts and rates must be positive)");
    }

    std::size_t min_views = dataset.objects.front().views.size();
    for (const ObjectRecord& o : dataset.objects) {
        min_views = std::min(min_views, o.views.size());
    }
    std::size_t views_per_sample = std::min(config.views_per_sample, min_views);

    TrainResult result;
    result.encoder = EncoderParams::init(config.encoder, config.seed);
    result.classifier = ClassifierParams::init(result.encoder.config.cat_dim,
                                               dataset.category_names.size(), config.seed + 1);

    std::mt19937_64 sampler_rng(config.seed + 2);
    std::mt19937_64 dropout_rng(config.seed + 3);
    double lambda = config.lambda_start;
    std::size_t steps_per_epoch =
        std::max<std::size_t>(1, config.pairs_per_epoch / config.pairs_per_step);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        double lr = schedule_learning_rate(config.learning_rate, epoch,
                                           config.lr_halving_period_epochs);
        TrainLogEntry entry;
        entry.epoch = epoch;
        entry.learning_rate = lr;

        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            std::vector<PairSample> batch =
                sample_pairs(dataset, views_per_sample, config.pairs_per_step, sampler_rng);

            Graph graph;
            BoundEncoder encoder(graph, result.encoder);
            Var classifier_weight = graph.input(result.classifier.weight, true);

            Margins margins = config.margins;
            margins.lambda_blend = lambda;
            std::vector<PairEmbeddings> pairs;
            for (const PairSample& sample : batch) {
                PairEmbeddings pair;
                pair.a = encoder.embed(gather_views(*sample.a, sample.views_a), Mode::kTrain,
                                       &dropout_rng);
                pair.b = encoder.embed(gather_views(*sample.b, sample.views_b), Mode::kTrain,
                                       &dropout_rng);
                pair.category_id = sample.a->category_id;
                pairs.push_back(std::move(pair));
            }
            LossBreakdown loss = total_loss(graph, pairs, classifier_weight, margins);

            for (auto [value, term] :
                 {std::pair<double, const char*>{loss.cat, "cat"},
                  {loss.picat, "picat"},
                  {loss.piobj_intra, "piobj_intra"},
                  {loss.piobj_inter, "piobj_inter"},
                  {loss.total.value().data[0], "total"}}) {
                if (!std::isfinite(value)) throw NanLossError(epoch, term);
            }

            graph.backward(loss.total);
            std::map<std::string, Tensor> gradients;
            for (const auto& [name, var] : encoder.leaves()) {
                gradients.emplace(name, var.grad());
            }
            gradients.emplace("classifier.weight", classifier_weight.grad());
            adam_step(result.encoder, result.classifier, gradients, result.optimizer, lr);

            entry.mean_total += loss.total.value().data[0];
            entry.mean_cat += loss.cat;
            entry.mean_picat += loss.picat;
            entry.mean_piobj_intra += loss.piobj_intra;
            entry.mean_piobj_inter += loss.piobj_inter;
            lambda *= config.lambda_decay;
        }

        double inv = 1.0 / static_cast<double>(steps_per_epoch);
        entry.mean_total *= inv;
        entry.mean_cat *= inv;
        entry.mean_picat *= inv;
        entry.mean_piobj_intra *= inv;
        entry.mean_piobj_inter *= inv;

        DistanceStats stats = track_distances(result.encoder, dataset, Split::kTrain);
        entry.d_max_intra = stats.d_max_intra;
        entry.d_min_inter = stats.d_min_inter;
        entry.rho = stats.rho;
        result.log.push_back(entry);
        if (on_epoch) on_epoch(result, entry);
    }
    return result;
}

DistanceStats track_distances(EncoderParams& encoder, const Dataset& dataset, Split split) {
    struct ObjectEmbedding {
        int category = -1;
        std::vector<std::vector<double>> singles;
        std::vector<double> multi;
    };
    std::vector<ObjectEmbedding> embeddings;
    for (const ObjectRecord& object : dataset.objects) {
        if (object.split != split) continue;
        Graph graph;
        BoundEncoder bound(graph, encoder);
        DualEmbeddings emb = bound.embed(object.views, Mode::kEval, nullptr);
        ObjectEmbedding oe;
        oe.category = object.category_id;
        const Tensor& singles = emb.obj_single.value();
        for (std::size_t k = 0; k < singles.rows(); ++k) {
            oe.singles.emplace_back(singles.data.begin() + k * singles.cols(),
                                    singles.data.begin() + (k + 1) * singles.cols());
        }
        oe.multi = emb.obj_mv.value().data;
        embeddings.push_back(std::move(oe));
    }
    if (embeddings.empty()) {
        throw std::invalid_argument("track_distances: empty split");
    }

    auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
        double sq = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            double d = a[i] - b[i];
            sq += d * d;
        }
        return std::sqrt(sq);
    };

    double intra_sum = 0.0;
    double inter_sum = 0.0;
    std::size_t inter_count = 0;
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        double intra = 0.0;
        for (const auto& single : embeddings[i].singles) {
            intra = std::max(intra, dist(single, embeddings[i].multi));
        }
        intra_sum += intra;

        bool has_inter = false;
        double inter = 0.0;
        for (std::size_t j = 0; j < embeddings.size(); ++j) {
            if (j == i || embeddings[j].category != embeddings[i].category) continue;
            for (const auto& mine : embeddings[i].singles) {
                for (const auto& theirs : embeddings[j].singles) {
                    double d = dist(mine, theirs);
                    if (!has_inter || d < inter) {
                        inter = d;
                        has_inter = true;
                    }
                }
            }
        }
        if (has_inter) {
            inter_sum += inter;
            ++inter_count;
        }
    }

    DistanceStats stats;
    stats.d_max_intra = intra_sum / static_cast<double>(embeddings.size());
    stats.d_min_inter =
        inter_count > 0 ? inter_sum / static_cast<double>(inter_count) : 0.0;
    if (stats.d_max_intra > 0.0 && inter_count > 0) {
        stats.rho = stats.d_min_inter / stats.d_max_intra;
    }
    return stats;
}

}  // namespace piro
