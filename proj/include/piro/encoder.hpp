#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "piro/autodiff.hpp"
#include "piro/dataset.hpp"

namespace piro {

enum class Mode { kTrain, kEval };

struct EncoderConfig {
    std::size_t input_dim = 32;
    std::vector<std::size_t> backbone_widths{64, 64};
    std::size_t obj_dim = 64;
    std::size_t cat_dim = 64;
    double dropout_rate = 0.25;
    // When false the object head and attention layer are shared by both loss
    // families (single embedding space ablation); cat_dim is forced to obj_dim.
    bool dual_space = true;
};

struct AffineParams {
    Tensor weight;  // in x out
    Tensor bias;    // out
};

struct AttentionParams {
    Tensor query, key, value, output;  // each dim x dim
};

// The dual encoder: shared MLP backbone, object/category heads, and one
// single-head self-attention layer per embedding space. The backbone is an
// MLP over feature vectors; a convolutional variant can slot in behind the
// same head/attention interface.
struct EncoderParams {
    EncoderConfig config;
    std::vector<AffineParams> backbone;
    AffineParams obj_head, cat_head;
    AttentionParams obj_attn, cat_attn;

    static EncoderParams init(const EncoderConfig& config, std::uint64_t seed);
    // Visits every learnable tensor in a fixed canonical order. Shared-space
    // encoders skip the category head and attention.
    void visit(const std::function<void(const std::string&, Tensor&)>& fn);
    void visit(const std::function<void(const std::string&, const Tensor&)>& fn) const;
};

struct ClassifierParams {
    Tensor weight;  // cat_dim x num_categories, no bias

    static ClassifierParams init(std::size_t cat_dim, std::size_t num_categories,
                                 std::uint64_t seed);
};

// Per-object single-view and multi-view embeddings in both spaces.
struct DualEmbeddings {
    Var obj_single;  // V x obj_dim
    Var cat_single;  // V x cat_dim
    Var obj_mv;      // obj_dim
    Var cat_mv;      // cat_dim
    Tensor obj_attention;  // V x V softmax weights (pre-dropout)
    Tensor cat_attention;
};

// Binds encoder parameters into a graph for one forward/backward pass. The
// leaf Vars appear in the same order as EncoderParams::visit so gradients can
// be read back by name.
class BoundEncoder {
public:
    BoundEncoder(Graph& graph, EncoderParams& params);

    DualEmbeddings embed(const std::vector<std::vector<double>>& views, Mode mode,
                         std::mt19937_64* rng);

    const std::vector<std::pair<std::string, Var>>& leaves() const { return leaves_; }

private:
    struct BoundAffine {
        Var weight, bias;
    };
    struct BoundAttention {
        Var query, key, value, output;
    };
    std::pair<Var, Tensor> attend(const BoundAttention& attn, Var embeddings,
                                  std::size_t dim, Mode mode, std::mt19937_64* rng);

    Graph* graph_;
    EncoderParams* params_;
    std::vector<BoundAffine> backbone_;
    BoundAffine obj_head_, cat_head_;
    BoundAttention obj_attn_, cat_attn_;
    std::vector<std::pair<std::string, Var>> leaves_;
};

// Value-level wrappers around BoundEncoder for inference and diagnostics.
std::pair<Tensor, Tensor> embed_single_views(EncoderParams& params,
                                             const MultiViewSet& mvset, Mode mode,
                                             std::mt19937_64* rng);
std::pair<std::vector<double>, std::vector<double>> aggregate_multi_view(
    EncoderParams& params, const MultiViewSet& mvset, Mode mode, std::mt19937_64* rng);
// Softmax attention weights per space, eval mode; row i is view i's weights
// over all views.
std::pair<Tensor, Tensor> attention_weights(EncoderParams& params,
                                            const std::vector<std::vector<double>>& views);

}  // namespace piro
