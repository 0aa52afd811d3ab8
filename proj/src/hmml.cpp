#include "mmagent/hmml.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "mmagent/errors.hpp"

namespace mmagent {

namespace {

std::string require_nonempty(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || !j.at(key).is_string()) {
        throw ValidationError(where + ": missing string field \"" + key + "\"");
    }
    auto value = j.at(key).get<std::string>();
    if (value.empty()) {
        throw ValidationError(where + ": field \"" + key + "\" must not be empty");
    }
    return value;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

MethodLibrary MethodLibrary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open method library: " + path.string());
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text, path.string());
}

MethodLibrary MethodLibrary::from_json_text(const std::string& text, const std::string& origin) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(origin + ": invalid JSON: " + e.what());
    }
    // A bare array of domains and an object wrapping one under "domains"
    // are both accepted.
    nlohmann::json domains;
    if (j.is_array()) {
        domains = std::move(j);
    } else if (j.is_object() && j.contains("domains") && j.at("domains").is_array()) {
        domains = j.at("domains");
    } else {
        throw ValidationError(origin + ": method library must be an array of domains");
    }

    MethodLibrary library;
    std::set<std::string> domain_names;
    for (const auto& dj : domains) {
        Domain domain;
        domain.name = require_nonempty(dj, "name", origin);
        if (!domain_names.insert(domain.name).second) {
            throw ValidationError(origin + ": duplicate domain name \"" + domain.name + "\"");
        }
        if (!dj.contains("subdomains") || !dj.at("subdomains").is_array() ||
            dj.at("subdomains").empty()) {
            throw ValidationError(origin + ": domain \"" + domain.name +
                                  "\" needs a non-empty subdomains array");
        }
        std::set<std::string> subdomain_names;
        for (const auto& sj : dj.at("subdomains")) {
            Subdomain subdomain;
            subdomain.name = require_nonempty(sj, "name", origin);
            if (!subdomain_names.insert(subdomain.name).second) {
                throw ValidationError(origin + ": duplicate subdomain name \"" + subdomain.name +
                                      "\" in domain \"" + domain.name + "\"");
            }
            if (!sj.contains("methods") || !sj.at("methods").is_array() ||
                sj.at("methods").empty()) {
                throw ValidationError(origin + ": subdomain \"" + subdomain.name +
                                      "\" needs a non-empty methods array");
            }
            std::set<std::string> method_names;
            for (const auto& mj : sj.at("methods")) {
                MethodNode node;
                node.method = require_nonempty(mj, "method", origin);
                node.core_idea = require_nonempty(mj, "core_idea", origin);
                node.application = require_nonempty(mj, "application", origin);
                if (!method_names.insert(node.method).second) {
                    throw ValidationError(origin + ": duplicate method \"" + node.method +
                                          "\" in subdomain \"" + subdomain.name + "\"");
                }
                subdomain.methods.push_back(std::move(node));
            }
            domain.subdomains.push_back(std::move(subdomain));
        }
        library.domains_.push_back(std::move(domain));
    }
    if (library.domains_.empty()) {
        throw ValidationError(origin + ": method library has no domains");
    }
    return library;
}

std::size_t MethodLibrary::subdomain_count() const {
    std::size_t count = 0;
    for (const auto& domain : domains_) count += domain.subdomains.size();
    return count;
}

std::size_t MethodLibrary::method_count() const {
    std::size_t count = 0;
    for (const auto& domain : domains_) {
        for (const auto& subdomain : domain.subdomains) count += subdomain.methods.size();
    }
    return count;
}

std::vector<MethodLibrary::FlatNode> MethodLibrary::flatten() const {
    std::vector<FlatNode> out;
    for (const auto& domain : domains_) {
        for (const auto& subdomain : domain.subdomains) {
            for (const auto& node : subdomain.methods) {
                out.push_back(FlatNode{&node, &subdomain, &domain});
            }
        }
    }
    return out;
}

HashEmbedder::HashEmbedder(std::size_t dimension) : dimension_(dimension) {
    if (dimension_ == 0) {
        throw ValidationError("embedder dimension must be positive");
    }
}

EmbeddingVector HashEmbedder::embed(const std::string& text) {
    EmbeddingVector v;
    v.components.resize(dimension_);
    const std::uint64_t seed = fnv1a(text);
    for (std::size_t i = 0; i < dimension_; ++i) {
        std::uint64_t h = splitmix64(seed + i);
        // Map the top 53 bits onto [-1, 1].
        double unit = static_cast<double>(h >> 11) / static_cast<double>(1ULL << 53);
        v.components[i] = 2.0 * unit - 1.0;
    }
    // An all-zero vector would make cosine similarity undefined; nudge one
    // component so the norm is never zero (astronomically unlikely anyway).
    bool all_zero = std::all_of(v.components.begin(), v.components.end(),
                                [](double c) { return c == 0.0; });
    if (all_zero) v.components[0] = 1.0;
    return v;
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dimension() != b.dimension()) {
        throw ValidationError("cosine similarity needs vectors of equal dimension");
    }
    if (a.dimension() == 0) {
        throw ValidationError("cosine similarity is undefined for empty vectors");
    }
    double dot = 0.0, norm_a = 0.0, norm_b = 0.0;
    for (std::size_t i = 0; i < a.dimension(); ++i) {
        dot += a.components[i] * b.components[i];
        norm_a += a.components[i] * a.components[i];
        norm_b += b.components[i] * b.components[i];
    }
    if (norm_a == 0.0 || norm_b == 0.0) {
        throw ValidationError("cosine similarity is undefined for zero vectors");
    }
    return dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
}

double score_node(double node_sim, double parent_sim, double omega) {
    if (omega < 0.0 || omega > 1.0) {
        throw ValidationError("omega must lie in [0, 1]");
    }
    return omega * node_sim + (1.0 - omega) * parent_sim;
}

RetrievalIndex::RetrievalIndex(const MethodLibrary& library, Embedder& embedder)
    : library_(&library), embedder_(&embedder) {
    for (const auto& flat : library.flatten()) {
        Entry entry;
        entry.flat = flat;
        entry.node_embedding = embedder.embed(flat.node->text());
        const std::string parent_text = flat.subdomain->name;
        auto it = parent_cache_.find(parent_text);
        if (it == parent_cache_.end()) {
            auto vec = std::make_unique<EmbeddingVector>(embedder.embed(parent_text));
            it = parent_cache_.emplace(parent_text, std::move(vec)).first;
        }
        entry.parent_embedding = it->second.get();
        nodes_.push_back(std::move(entry));
    }
}

std::vector<RetrievalHit> RetrievalIndex::retrieve(const std::string& query, int k,
                                                   double omega) const {
    if (k <= 0) {
        throw ValidationError("retrieval k must be positive");
    }
    if (query.empty()) {
        throw ValidationError("retrieval query must not be empty");
    }
    const EmbeddingVector query_embedding = embedder_->embed(query);

    struct Scored {
        std::size_t order;
        double score;
    };
    std::vector<Scored> scored;
    scored.reserve(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        double node_sim = cosine_similarity(query_embedding, nodes_[i].node_embedding);
        double parent_sim = cosine_similarity(query_embedding, *nodes_[i].parent_embedding);
        scored.push_back(Scored{i, score_node(node_sim, parent_sim, omega)});
    }
    // Score descending; equal scores keep library order.
    std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        return a.score > b.score;
    });

    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
    std::vector<RetrievalHit> hits;
    hits.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const Entry& entry = nodes_[scored[i].order];
        hits.push_back(RetrievalHit{entry.flat.node, entry.flat.subdomain, entry.flat.domain,
                                    scored[i].score});
    }
    return hits;
}

std::vector<RetrievalHit> retrieve(const Subtask& subtask, const MethodLibrary& library,
                                   Embedder& embedder, int k, double omega) {
    RetrievalIndex index(library, embedder);
    return index.retrieve(subtask.query_text(), k, omega);
}

}  // namespace mmagent
