#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmagent/problem.hpp"

namespace mmagent {

/// Leaf of the method library: a named method, the idea behind it, and a
/// typical application.
struct MethodNode {
    std::string method;
    std::string core_idea;
    std::string application;

    std::string text() const { return method + "\n" + core_idea + "\n" + application; }
};

struct Subdomain {
    std::string name;
    std::vector<MethodNode> methods;
};

struct Domain {
    std::string name;
    std::vector<Subdomain> subdomains;
};

/// Three-level method library: domains -> subdomains -> method nodes.
/// Sibling names must be unique; every subdomain holds at least one method.
class MethodLibrary {
public:
    static MethodLibrary load(const std::filesystem::path& path);
    static MethodLibrary from_json_text(const std::string& text,
                                        const std::string& origin = "<string>");

    const std::vector<Domain>& domains() const { return domains_; }
    std::size_t domain_count() const { return domains_.size(); }
    std::size_t subdomain_count() const;
    std::size_t method_count() const;

    struct FlatNode {
        const MethodNode* node;
        const Subdomain* subdomain;
        const Domain* domain;
    };
    /// Every method node exactly once, in depth-first library order.
    std::vector<FlatNode> flatten() const;

private:
    std::vector<Domain> domains_;
};

struct EmbeddingVector {
    std::vector<double> components;
    std::size_t dimension() const { return components.size(); }
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual EmbeddingVector embed(const std::string& text) = 0;
    virtual std::size_t dimension() const = 0;
};

/// Deterministic offline embedder: components are derived from a 64-bit hash
/// of (text, component index). Identical text always maps to the identical
/// vector; distinct texts essentially never collide on every component.
class HashEmbedder : public Embedder {
public:
    explicit HashEmbedder(std::size_t dimension = 64);
    EmbeddingVector embed(const std::string& text) override;
    std::size_t dimension() const override { return dimension_; }

private:
    std::size_t dimension_;
};

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Blend of a node's own similarity and its parent subdomain's similarity:
/// omega * node + (1 - omega) * parent.
double score_node(double node_sim, double parent_sim, double omega);

struct RetrievalHit {
    const MethodNode* node;
    const Subdomain* subdomain;
    const Domain* domain;
    double score;
};

/// Caches embeddings for one library load so repeated queries only pay for
/// the query embedding plus one scoring pass over the nodes.
class RetrievalIndex {
public:
    RetrievalIndex(const MethodLibrary& library, Embedder& embedder);

    std::vector<RetrievalHit> retrieve(const std::string& query, int k, double omega) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Entry {
        MethodLibrary::FlatNode flat;
        EmbeddingVector node_embedding;
        const EmbeddingVector* parent_embedding;
    };
    const MethodLibrary* library_;
    Embedder* embedder_;
    std::vector<Entry> nodes_;
    // Keyed by the embedded text so identical texts share one vector.
    std::unordered_map<std::string, std::unique_ptr<EmbeddingVector>> parent_cache_;
};

/// One-shot retrieval for a subtask; queries with the refined description
/// when available.
std::vector<RetrievalHit> retrieve(const Subtask& subtask, const MethodLibrary& library,
                                   Embedder& embedder, int k, double omega);

}  // namespace mmagent
