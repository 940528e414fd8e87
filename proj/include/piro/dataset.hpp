#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace piro {

enum class Split { kTrain, kTest };

// V feature vectors of one object together with its identity and category.
struct MultiViewSet {
    std::string object_id;
    int category_id = -1;
    std::vector<std::vector<double>> views;
};

struct ObjectRecord {
    std::string object_id;
    int category_id = -1;
    Split split = Split::kTrain;
    std::vector<std::vector<double>> views;
};

struct Dataset {
    std::vector<std::string> category_names;  // index = category id
    std::vector<ObjectRecord> objects;

    std::size_t input_dim() const;
    std::size_t count(Split split) const;
    // Throws std::runtime_error on an invariant violation (empty dataset,
    // duplicate ids, unreferenced categories, inconsistent view dims).
    void validate() const;
};

struct SyntheticConfig {
    std::size_t num_categories = 10;
    std::size_t objects_per_category = 8;
    std::size_t views_per_object = 8;
    std::size_t input_dim = 32;
    double noise_sigma = 0.01;
    std::uint64_t seed = 7;
    double train_fraction = 0.625;
    // Object signatures are scaled below the category prototypes so that
    // within-category separation stays smaller than across-category
    // separation in the latent space.
    double category_scale = 1.0;
    double object_scale = 0.2;
    // Prototype modes per category. With more than one mode a category is a
    // mixture of well-separated clusters, mimicking the large intra-class
    // variation of real object categories.
    std::size_t modes_per_category = 1;
    // Object signatures vary along a low-dimensional factor subspace shared
    // by all objects, so identity cues transfer from train to test objects.
    // Poses rotate only the complementary prototype subspace, leaving the
    // factor subspace fixed. 0 spreads signatures over the full input space
    // and rotates everything.
    std::size_t object_factor_dim = 6;
};

// View k of object j in category i is R_k * (p_i + s_ij) + noise, where p_i
// and s_ij are seeded Gaussians and R_k is a per-view-index orthogonal
// transform shared across all objects (the pose); R_k is block diagonal,
// rotating the prototype subspace and fixing the object factor subspace.
// Deterministic given seed.
Dataset generate_synthetic(const SyntheticConfig& config);

// Manifest layout on disk:
//   <dir>/manifest.tsv   one record per line:
//                        object_id <TAB> category_id <TAB> split <TAB>
//                        comma-separated view file paths (relative to dir)
//   <dir>/categories.json  maps category ids to names
//   <dir>/views/*.vec      flat little-endian float64 vectors with a 16-byte
//                          header (8-byte magic, 8-byte dim)
void save_manifest(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_manifest(const std::filesystem::path& manifest_file);

void write_vec_file(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<double> read_vec_file(const std::filesystem::path& path);

struct PairSample {
    const ObjectRecord* a = nullptr;
    const ObjectRecord* b = nullptr;
    std::vector<std::size_t> views_a, views_b;  // exactly V indices each
};

// Uniform category choice among train categories with >= 2 objects, then a
// uniform distinct-object pair, then V view indices per object (without
// replacement when the object has >= V views, with replacement otherwise).
std::vector<PairSample> sample_pairs(const Dataset& dataset, std::size_t num_views,
                                     std::size_t num_pairs, std::mt19937_64& rng);

std::vector<std::vector<double>> gather_views(const ObjectRecord& object,
                                              const std::vector<std::size_t>& indices);

}  // namespace piro
