#include "piro/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "piro/io.hpp"

namespace piro {

namespace fs = std::filesystem;

std::size_t Dataset::input_dim() const {
    if (objects.empty() || objects.front().views.empty()) return 0;
    return objects.front().views.front().size();
}

std::size_t Dataset::count(Split split) const {
    return static_cast<std::size_t>(
        std::count_if(objects.begin(), objects.end(),
                      [split](const ObjectRecord& o) { return o.split == split; }));
}

void Dataset::validate() const {
    if (objects.empty()) {
        throw std::runtime_error("dataset invalid: no objects");
    }
    std::set<std::string> ids;
    std::vector<bool> referenced(category_names.size(), false);
    std::size_t dim = input_dim();
    for (const ObjectRecord& o : objects) {
        if (!ids.insert(o.object_id).second) {
            throw std::runtime_error("dataset invalid: duplicate object id '" +
                                     o.object_id + "'");
        }
        if (o.category_id < 0 ||
            static_cast<std::size_t>(o.category_id) >= category_names.size()) {
            throw std::runtime_error("dataset invalid: object '" + o.object_id +
                                     "' references unknown category");
        }
        referenced[static_cast<std::size_t>(o.category_id)] = true;
        if (o.views.empty()) {
            throw std::runtime_error("dataset invalid: object '" + o.object_id +
                                     "' has no views");
        }
        for (const auto& v : o.views) {
            if (v.size() != dim) {
                throw std::runtime_error("dataset invalid: object '" + o.object_id +
                                         "' has inconsistent view dimension");
            }
        }
    }
    for (std::size_t c = 0; c < referenced.size(); ++c) {
        if (!referenced[c]) {
            throw std::runtime_error("dataset invalid: category '" +
                                     category_names[c] + "' has no objects");
        }
    }
}

namespace {

std::vector<double> gaussian_vec(std::size_t n, std::mt19937_64& rng, double sigma) {
    std::normal_distribution<double> normal(0.0, sigma);
    std::vector<double> v(n);
    for (double& x : v) x = normal(rng);
    return v;
}

// Random orthogonal matrix via modified Gram-Schmidt on a Gaussian matrix.
std::vector<std::vector<double>> random_orthogonal(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::vector<double>> q(n);
    for (std::size_t i = 0; i < n; ++i) {
        q[i] = gaussian_vec(n, rng, 1.0);
        for (std::size_t j = 0; j < i; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < n; ++k) dot += q[i][k] * q[j][k];
            for (std::size_t k = 0; k < n; ++k) q[i][k] -= dot * q[j][k];
        }
        double nrm = 0.0;
        for (double x : q[i]) nrm += x * x;
        nrm = std::sqrt(nrm);
        if (nrm < 1e-9) return random_orthogonal(n, rng);  // degenerate draw
        for (double& x : q[i]) x /= nrm;
    }
    return q;
}

std::vector<double> apply_matrix(const std::vector<std::vector<double>>& m,
                                 const std::vector<double>& x) {
    std::vector<double> out(m.size(), 0.0);
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) out[i] += m[i][j] * x[j];
    return out;
}

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& config) {
    if (config.num_categories < 2 || config.objects_per_category < 2 ||
        config.views_per_object < 2 || config.noise_sigma < 0.0 ||
        config.input_dim == 0) {
        throw std::invalid_argument(
            "generate_synthetic: need >= 2 categories, >= 2 objects per category, "
            ">= 2 views per object, non-negative noise");
    }
    std::mt19937_64 rng(config.seed);
    std::size_t dim = config.input_dim;

    std::size_t factor_dim = config.object_factor_dim;
    if (factor_dim >= dim) factor_dim = 0;
    std::size_t proto_dim = dim - factor_dim;
    // Orthonormal basis of the input space. The first factor_dim rows span the
    // object factor subspace; the rest span the prototype subspace the poses
    // rotate. With factor_dim 0 everything lives in the rotated subspace.
    std::vector<std::vector<double>> basis = random_orthogonal(dim, rng);
    double factor_sigma =
        factor_dim == 0 ? config.object_scale
                        : config.object_scale * std::sqrt(static_cast<double>(dim) /
                                                          static_cast<double>(factor_dim));
    double proto_sigma = config.category_scale *
                         std::sqrt(static_cast<double>(dim) / static_cast<double>(proto_dim));

    std::size_t modes = std::max<std::size_t>(1, config.modes_per_category);
    // Prototype coordinates in the rotated subspace, one mode per draw.
    std::vector<std::vector<std::vector<double>>> prototypes(config.num_categories);
    for (std::size_t c = 0; c < config.num_categories; ++c) {
        for (std::size_t m = 0; m < modes; ++m) {
            prototypes[c].push_back(gaussian_vec(proto_dim, rng, proto_sigma));
        }
    }
    // Each pose rotates the prototype subspace and leaves the factor subspace
    // fixed, so the full transform R_k is orthogonal and block diagonal in the
    // basis above.
    std::vector<std::vector<std::vector<double>>> poses;
    for (std::size_t k = 0; k < config.views_per_object; ++k) {
        poses.push_back(random_orthogonal(proto_dim, rng));
    }

    std::size_t train_per_category = static_cast<std::size_t>(
        std::round(config.train_fraction * static_cast<double>(config.objects_per_category)));
    train_per_category = std::clamp<std::size_t>(train_per_category, 1,
                                                 config.objects_per_category - 1);

    Dataset dataset;
    for (std::size_t c = 0; c < config.num_categories; ++c) {
        dataset.category_names.push_back("cat_" + std::to_string(c));
    }
    for (std::size_t c = 0; c < config.num_categories; ++c) {
        for (std::size_t j = 0; j < config.objects_per_category; ++j) {
            ObjectRecord object;
            object.object_id = "obj_" + std::to_string(c) + "_" + std::to_string(j);
            object.category_id = static_cast<int>(c);
            object.split = j < train_per_category ? Split::kTrain : Split::kTest;
            std::vector<double> weights = gaussian_vec(factor_dim, rng, factor_sigma);
            const std::vector<double>& mode = prototypes[c][j % modes];
            std::vector<double> latent = mode;
            if (factor_dim == 0) {
                // No factor subspace: the signature shares the rotated subspace.
                std::vector<double> sig = gaussian_vec(proto_dim, rng, factor_sigma);
                for (std::size_t i = 0; i < proto_dim; ++i) latent[i] += sig[i];
            }
            for (std::size_t k = 0; k < config.views_per_object; ++k) {
                std::vector<double> rotated = apply_matrix(poses[k], latent);
                std::vector<double> view(dim, 0.0);
                for (std::size_t f = 0; f < factor_dim; ++f) {
                    for (std::size_t i = 0; i < dim; ++i) {
                        view[i] += weights[f] * basis[f][i];
                    }
                }
                for (std::size_t p = 0; p < proto_dim; ++p) {
                    for (std::size_t i = 0; i < dim; ++i) {
                        view[i] += rotated[p] * basis[factor_dim + p][i];
                    }
                }
                if (config.noise_sigma > 0.0) {
                    std::vector<double> eps = gaussian_vec(dim, rng, config.noise_sigma);
                    for (std::size_t i = 0; i < dim; ++i) view[i] += eps[i];
                }
                object.views.push_back(std::move(view));
            }
            dataset.objects.push_back(std::move(object));
        }
    }
    dataset.validate();
    return dataset;
}

namespace {

constexpr char kVecMagic[8] = {'P', 'I', 'R', 'O', 'V', 'E', 'C', '1'};

void put_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64_le(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

}  // namespace

void write_vec_file(const fs::path& path, const std::vector<double>& values) {
    std::ostringstream buffer;
    buffer.write(kVecMagic, 8);
    put_u64_le(buffer, values.size());
    for (double v : values) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, 8);
        put_u64_le(buffer, bits);
    }
    atomic_write(path, buffer.str());
}

std::vector<double> read_vec_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open vector file: " + path.string());
    }
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kVecMagic, 8) != 0) {
        throw std::runtime_error("bad vector file magic: " + path.string());
    }
    std::uint64_t dim = get_u64_le(in);
    std::vector<double> values(dim);
    for (std::uint64_t i = 0; i < dim; ++i) {
        std::uint64_t bits = get_u64_le(in);
        std::memcpy(&values[i], &bits, 8);
    }
    if (!in) {
        throw std::runtime_error("truncated vector file: " + path.string());
    }
    return values;
}

void save_manifest(const Dataset& dataset, const fs::path& dir) {
    dataset.validate();
    fs::create_directories(dir / "views");

    nlohmann::json categories;
    for (std::size_t c = 0; c < dataset.category_names.size(); ++c) {
        categories[std::to_string(c)] = dataset.category_names[c];
    }
    atomic_write(dir / "categories.json", categories.dump(2) + "\n");

    std::ostringstream manifest;
    for (const ObjectRecord& object : dataset.objects) {
        manifest << object.object_id << '\t' << object.category_id << '\t'
                 << (object.split == Split::kTrain ? "train" : "test") << '\t';
        for (std::size_t k = 0; k < object.views.size(); ++k) {
            fs::path rel = fs::path("views") /
                           (object.object_id + "_" + std::to_string(k) + ".vec");
            write_vec_file(dir / rel, object.views[k]);
            if (k) manifest << ',';
            manifest << rel.generic_string();
        }
        manifest << '\n';
    }
    atomic_write(dir / "manifest.tsv", manifest.str());
}

namespace {

[[noreturn]] void manifest_error(std::size_t line, const std::string& message) {
    throw std::runtime_error("manifest line " + std::to_string(line) + ": " + message);
}

}  // namespace

Dataset load_manifest(const fs::path& manifest_file) {
    std::ifstream in(manifest_file);
    if (!in) {
        throw std::runtime_error("cannot open manifest: " + manifest_file.string());
    }
    fs::path dir = manifest_file.parent_path();

    Dataset dataset;
    {
        std::ifstream cats(dir / "categories.json");
        if (!cats) {
            throw std::runtime_error("missing categories.json next to manifest");
        }
        nlohmann::json j = nlohmann::json::parse(cats);
        dataset.category_names.resize(j.size());
        for (auto it = j.begin(); it != j.end(); ++it) {
            std::size_t id = std::stoul(it.key());
            if (id >= dataset.category_names.size()) {
                dataset.category_names.resize(id + 1);
            }
            dataset.category_names[id] = it.value().get<std::string>();
        }
    }

    std::string line;
    std::size_t line_no = 0;
    std::size_t dim = 0;
    std::set<std::string> seen_ids;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, '\t')) fields.push_back(field);
        if (fields.size() != 4) {
            manifest_error(line_no, "expected 4 tab-separated fields, got " +
                                        std::to_string(fields.size()));
        }
        ObjectRecord object;
        object.object_id = fields[0];
        if (!seen_ids.insert(object.object_id).second) {
            manifest_error(line_no, "duplicate object id '" + object.object_id + "'");
        }
        try {
            object.category_id = std::stoi(fields[1]);
        } catch (const std::exception&) {
            manifest_error(line_no, "bad category id '" + fields[1] + "'");
        }
        if (object.category_id < 0 ||
            static_cast<std::size_t>(object.category_id) >= dataset.category_names.size()) {
            manifest_error(line_no, "category id out of range: " + fields[1]);
        }
        if (fields[2] == "train") {
            object.split = Split::kTrain;
        } else if (fields[2] == "test") {
            object.split = Split::kTest;
        } else {
            manifest_error(line_no, "split must be 'train' or 'test', got '" + fields[2] + "'");
        }
        std::stringstream paths(fields[3]);
        std::string rel;
        while (std::getline(paths, rel, ',')) {
            fs::path view_path = dir / rel;
            if (!fs::exists(view_path)) {
                manifest_error(line_no, "dangling view path '" + rel + "'");
            }
            std::vector<double> values = read_vec_file(view_path);
            if (dim == 0) dim = values.size();
            if (values.size() != dim) {
                manifest_error(line_no, "view dimension " + std::to_string(values.size()) +
                                            " differs from expected " + std::to_string(dim));
            }
            object.views.push_back(std::move(values));
        }
        if (object.views.empty()) {
            manifest_error(line_no, "object has no views");
        }
        dataset.objects.push_back(std::move(object));
    }
    if (dataset.objects.empty()) {
        throw std::runtime_error("manifest invalid: no objects");
    }
    dataset.validate();
    return dataset;
}

std::vector<PairSample> sample_pairs(const Dataset& dataset, std::size_t num_views,
                                     std::size_t num_pairs, std::mt19937_64& rng) {
    if (num_views == 0) {
        throw std::invalid_argument("sample_pairs: need at least one view per object");
    }
    // Eligible categories hold >= 2 train objects.
    std::vector<std::vector<const ObjectRecord*>> by_category(dataset.category_names.size());
    for (const ObjectRecord& o : dataset.objects) {
        if (o.split == Split::kTrain) {
            by_category[static_cast<std::size_t>(o.category_id)].push_back(&o);
        }
    }
    std::vector<std::size_t> eligible;
    for (std::size_t c = 0; c < by_category.size(); ++c) {
        if (by_category[c].size() >= 2) eligible.push_back(c);
    }
    if (eligible.empty()) {
        throw std::runtime_error("sample_pairs: no category has >= 2 train objects");
    }

    static bool warned_replacement = false;
    auto sample_views = [&](const ObjectRecord& object) {
        std::vector<std::size_t> indices;
        if (object.views.size() >= num_views) {
            std::vector<std::size_t> all(object.views.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
            for (std::size_t i = 0; i < num_views; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
                std::swap(all[i], all[pick(rng)]);
                indices.push_back(all[i]);
            }
        } else {
            if (!warned_replacement) {
                std::cerr << "warning: object '" << object.object_id << "' has fewer than "
                          << num_views << " views; sampling with replacement\n";
                warned_replacement = true;
            }
            std::uniform_int_distribution<std::size_t> pick(0, object.views.size() - 1);
            for (std::size_t i = 0; i < num_views; ++i) indices.push_back(pick(rng));
        }
        return indices;
    };

    std::vector<PairSample> batch;
    std::uniform_int_distribution<std::size_t> pick_category(0, eligible.size() - 1);
    for (std::size_t p = 0; p < num_pairs; ++p) {
        const auto& members = by_category[eligible[pick_category(rng)]];
        std::uniform_int_distribution<std::size_t> pick_object(0, members.size() - 1);
        std::size_t ia = pick_object(rng);
        std::uniform_int_distribution<std::size_t> pick_other(0, members.size() - 2);
        std::size_t ib = pick_other(rng);
        if (ib >= ia) ++ib;
        PairSample sample;
        sample.a = members[ia];
        sample.b = members[ib];
        sample.views_a = sample_views(*sample.a);
        sample.views_b = sample_views(*sample.b);
        batch.push_back(std::move(sample));
    }
    return batch;
}

std::vector<std::vector<double>> gather_views(const ObjectRecord& object,
                                              const std::vector<std::size_t>& indices) {
    std::vector<std::vector<double>> views;
    views.reserve(indices.size());
    for (std::size_t i : indices) views.push_back(object.views.at(i));
    return views;
}

}  // namespace piro
