#include "piro/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace piro {

namespace {

Tensor gaussian_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                       double sigma) {
    std::normal_distribution<double> normal(0.0, sigma);
    Tensor t = Tensor::zeros({rows, cols});
    for (double& v : t.data) v = normal(rng);
    return t;
}

AffineParams init_affine(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    AffineParams p;
    p.weight = gaussian_matrix(in, out, rng, 1.0 / std::sqrt(static_cast<double>(in)));
    p.bias = Tensor::zeros({out});
    return p;
}

AttentionParams init_attention(std::size_t dim, std::mt19937_64& rng) {
    double sigma = 1.0 / std::sqrt(static_cast<double>(dim));
    AttentionParams p;
    p.query = gaussian_matrix(dim, dim, rng, sigma);
    p.key = gaussian_matrix(dim, dim, rng, sigma);
    p.value = gaussian_matrix(dim, dim, rng, sigma);
    p.output = gaussian_matrix(dim, dim, rng, sigma);
    return p;
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderConfig& config, std::uint64_t seed) {
    EncoderParams params;
    params.config = config;
    if (!config.dual_space) {
        params.config.cat_dim = config.obj_dim;
    }
    std::mt19937_64 rng(seed);
    std::size_t in = config.input_dim;
    for (std::size_t width : config.backbone_widths) {
        params.backbone.push_back(init_affine(in, width, rng));
        in = width;
    }
    params.obj_head = init_affine(in, params.config.obj_dim, rng);
    params.obj_attn = init_attention(params.config.obj_dim, rng);
    if (params.config.dual_space) {
        params.cat_head = init_affine(in, params.config.cat_dim, rng);
        params.cat_attn = init_attention(params.config.cat_dim, rng);
    }
    return params;
}

namespace {

template <typename Params, typename Fn>
void visit_impl(Params& params, const Fn& fn) {
    for (std::size_t i = 0; i < params.backbone.size(); ++i) {
        std::string base = "backbone." + std::to_string(i) + ".";
        fn(base + "weight", params.backbone[i].weight);
        fn(base + "bias", params.backbone[i].bias);
    }
    fn("obj_head.weight", params.obj_head.weight);
    fn("obj_head.bias", params.obj_head.bias);
    fn("obj_attn.query", params.obj_attn.query);
    fn("obj_attn.key", params.obj_attn.key);
    fn("obj_attn.value", params.obj_attn.value);
    fn("obj_attn.output", params.obj_attn.output);
    if (params.config.dual_space) {
        fn("cat_head.weight", params.cat_head.weight);
        fn("cat_head.bias", params.cat_head.bias);
        fn("cat_attn.query", params.cat_attn.query);
        fn("cat_attn.key", params.cat_attn.key);
        fn("cat_attn.value", params.cat_attn.value);
        fn("cat_attn.output", params.cat_attn.output);
    }
}

}  // namespace

void EncoderParams::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
    visit_impl(*this, fn);
}

void EncoderParams::visit(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
    visit_impl(*this, fn);
}

ClassifierParams ClassifierParams::init(std::size_t cat_dim, std::size_t num_categories,
                                        std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ClassifierParams params;
    params.weight =
        gaussian_matrix(cat_dim, num_categories, rng, 1.0 / std::sqrt(static_cast<double>(cat_dim)));
    return params;
}

BoundEncoder::BoundEncoder(Graph& graph, EncoderParams& params)
    : graph_(&graph), params_(&params) {
    auto bind = [&](const std::string& name, Tensor& t) {
        Var v = graph.input(t, /*requires_grad=*/true);
        leaves_.emplace_back(name, v);
        return v;
    };
    params.visit([&](const std::string& name, Tensor& t) { bind(name, t); });
    // The leaf order above matches visit order; rebuild the typed views.
    std::size_t idx = 0;
    auto next = [&] { return leaves_[idx++].second; };
    for (std::size_t i = 0; i < params.backbone.size(); ++i) {
        backbone_.push_back({next(), next()});
    }
    obj_head_ = {next(), next()};
    obj_attn_ = {next(), next(), next(), next()};
    if (params.config.dual_space) {
        cat_head_ = {next(), next()};
        cat_attn_ = {next(), next(), next(), next()};
    } else {
        cat_head_ = obj_head_;
        cat_attn_ = obj_attn_;
    }
}

std::pair<Var, Tensor> BoundEncoder::attend(const BoundAttention& attn, Var embeddings,
                                            std::size_t dim, Mode mode,
                                            std::mt19937_64* rng) {
    Graph& g = *graph_;
    Var q = matmul(g, embeddings, attn.query);
    Var k = matmul(g, embeddings, attn.key);
    Var v = matmul(g, embeddings, attn.value);
    Var scores = scale(g, matmul(g, q, transpose(g, k)),
                       1.0 / std::sqrt(static_cast<double>(dim)));
    Var weights = softmax_rows(g, scores);
    Tensor weight_values = weights.value();
    if (mode == Mode::kTrain && params_->config.dropout_rate > 0.0) {
        if (rng == nullptr) {
            throw std::invalid_argument("encoder: train mode with dropout needs an RNG");
        }
        weights = dropout(g, weights, params_->config.dropout_rate, *rng, true);
    }
    Var attended = matmul(g, matmul(g, weights, v), attn.output);
    return {mean_rows(g, attended), std::move(weight_values)};
}

DualEmbeddings BoundEncoder::embed(const std::vector<std::vector<double>>& views,
                                   Mode mode, std::mt19937_64* rng) {
    if (views.empty()) {
        throw std::invalid_argument("encoder: empty view set");
    }
    Graph& g = *graph_;
    std::size_t input_dim = params_->config.input_dim;
    std::vector<double> flat;
    flat.reserve(views.size() * input_dim);
    for (std::size_t k = 0; k < views.size(); ++k) {
        if (views[k].size() != input_dim) {
            throw std::invalid_argument("encoder: view " + std::to_string(k) +
                                        " has dimension " + std::to_string(views[k].size()) +
                                        ", expected " + std::to_string(input_dim));
        }
        flat.insert(flat.end(), views[k].begin(), views[k].end());
    }
    Var x = g.input(Tensor::matrix(views.size(), input_dim, std::move(flat)));
    for (const BoundAffine& layer : backbone_) {
        x = relu(g, add_rowvec(g, matmul(g, x, layer.weight), layer.bias));
    }
    DualEmbeddings out;
    out.obj_single = add_rowvec(g, matmul(g, x, obj_head_.weight), obj_head_.bias);
    out.cat_single = params_->config.dual_space
                         ? add_rowvec(g, matmul(g, x, cat_head_.weight), cat_head_.bias)
                         : out.obj_single;
    auto [obj_mv, obj_w] = attend(obj_attn_, out.obj_single, params_->config.obj_dim, mode, rng);
    out.obj_mv = obj_mv;
    out.obj_attention = std::move(obj_w);
    if (params_->config.dual_space) {
        auto [cat_mv, cat_w] =
            attend(cat_attn_, out.cat_single, params_->config.cat_dim, mode, rng);
        out.cat_mv = cat_mv;
        out.cat_attention = std::move(cat_w);
    } else {
        out.cat_mv = out.obj_mv;
        out.cat_attention = out.obj_attention;
    }
    return out;
}

std::pair<Tensor, Tensor> embed_single_views(EncoderParams& params,
                                             const MultiViewSet& mvset, Mode mode,
                                             std::mt19937_64* rng) {
    Graph g;
    BoundEncoder encoder(g, params);
    DualEmbeddings emb = encoder.embed(mvset.views, mode, rng);
    return {emb.obj_single.value(), emb.cat_single.value()};
}

std::pair<std::vector<double>, std::vector<double>> aggregate_multi_view(
    EncoderParams& params, const MultiViewSet& mvset, Mode mode, std::mt19937_64* rng) {
    Graph g;
    BoundEncoder encoder(g, params);
    DualEmbeddings emb = encoder.embed(mvset.views, mode, rng);
    return {emb.obj_mv.value().data, emb.cat_mv.value().data};
}

std::pair<Tensor, Tensor> attention_weights(EncoderParams& params,
                                            const std::vector<std::vector<double>>& views) {
    Graph g;
    BoundEncoder encoder(g, params);
    DualEmbeddings emb = encoder.embed(views, Mode::kEval, nullptr);
    return {emb.obj_attention, emb.cat_attention};
}

}  // namespace piro
