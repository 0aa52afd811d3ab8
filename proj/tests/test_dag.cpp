#include <doctest.h>

#include <algorithm>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mmagent/dag.hpp"
#include "mmagent/errors.hpp"

using mmagent::DependencyGraph;
using mmagent::normalize_task_id;
using mmagent::topo_order;
using mmagent::ValidationError;

namespace {

using Adjacency = std::map<std::string, std::vector<std::string>>;

// Reference cycle check: repeatedly peel off tasks whose prerequisites are
// all gone. Anything left at the end sits on a cycle. Deliberately a
// different algorithm from the library's DFS.
bool oracle_acyclic(const Adjacency& adjacency) {
    std::set<std::string> alive;
    for (const auto& [id, _] : adjacency) alive.insert(id);
    bool progressed = true;
    while (progressed && !alive.empty()) {
        progressed = false;
        for (auto it = alive.begin(); it != alive.end();) {
            const auto& prereqs = adjacency.at(*it);
            const bool free = std::none_of(prereqs.begin(), prereqs.end(),
                                           [&alive](const std::string& p) {
                                               return alive.count(p) > 0;
                                           });
            if (free) {
                it = alive.erase(it);
                progressed = true;
            } else {
                ++it;
            }
        }
    }
    return alive.empty();
}

Adjacency random_adjacency(std::mt19937& rng) {
    const int n = 1 + static_cast<int>(rng() % 8);
    Adjacency adjacency;
    for (int i = 1; i <= n; ++i) {
        std::vector<std::string> prereqs;
        for (int j = 1; j <= n; ++j) {
            if (i == j) continue;
            if (rng() % 100 < 30) prereqs.push_back(std::to_string(j));
        }
        adjacency[std::to_string(i)] = std::move(prereqs);
    }
    return adjacency;
}

}  // namespace

TEST_CASE("id normalization") {
    CHECK(normalize_task_id("1") == "1");
    CHECK(normalize_task_id(" 2 ") == "2");
    CHECK(normalize_task_id("01") == "1");
    CHECK(normalize_task_id("007") == "7");
    CHECK(normalize_task_id("000") == "0");
    CHECK(normalize_task_id("10") == "10");
    CHECK(normalize_task_id("  a1 ") == "a1");
}

TEST_CASE("diamond adjacency builds and orders deterministically") {
    Adjacency diamond{{"1", {}}, {"2", {"1"}}, {"3", {"1"}}, {"4", {"2", "3"}}};
    const DependencyGraph graph = DependencyGraph::from_adjacency(diamond);
    REQUIRE(graph.size() == 4);
    CHECK(graph.ids() == std::vector<std::string>{"1", "2", "3", "4"});
    CHECK(graph.prerequisites("4") == std::vector<std::string>{"2", "3"});
    CHECK(graph.prerequisites("1").empty());
    CHECK(graph.dependents("1") == std::vector<std::string>{"2", "3"});
    CHECK(graph.ancestors("4") == std::vector<std::string>{"1", "2", "3"});
    CHECK(graph.ancestors("1").empty());

    // Kahn with the numeric tie-break: both 2 and 3 become ready after 1;
    // the smaller id runs first.
    CHECK(topo_order(graph) == std::vector<std::string>{"1", "2", "3", "4"});
}

TEST_CASE("numeric ids order by value, not text") {
    Adjacency adjacency{{"1", {}}, {"2", {}}, {"10", {}}, {"9", {}}};
    const DependencyGraph graph = DependencyGraph::from_adjacency(adjacency);
    CHECK(graph.ids() == std::vector<std::string>{"1", "2", "9", "10"});
    CHECK(topo_order(graph) == std::vector<std::string>{"1", "2", "9", "10"});
}

TEST_CASE("adjacency ids are normalized before use") {
    Adjacency adjacency{{" 01", {}}, {"2", {"1 "}}};
    const DependencyGraph graph =
        DependencyGraph::from_adjacency(adjacency, {"1", "2"});
    CHECK(graph.ids() == std::vector<std::string>{"1", "2"});
    CHECK(graph.prerequisites("2") == std::vector<std::string>{"1"});
}

TEST_CASE("adjacency validation failures") {
    SUBCASE("two-node cycle") {
        Adjacency cyc{{"1", {"2"}}, {"2", {"1"}}};
        CHECK_THROWS_AS(DependencyGraph::from_adjacency(cyc), ValidationError);
    }
    SUBCASE("self loop") {
        Adjacency self{{"1", {"1"}}};
        CHECK_THROWS_AS(DependencyGraph::from_adjacency(self), ValidationError);
    }
    SUBCASE("unknown prerequisite") {
        Adjacency unknown{{"1", {"5"}}};
        CHECK_THROWS_AS(DependencyGraph::from_adjacency(unknown), ValidationError);
    }
    SUBCASE("duplicate prerequisite") {
        Adjacency dup{{"1", {}}, {"2", {"1", "1"}}};
        CHECK_THROWS_AS(DependencyGraph::from_adjacency(dup), ValidationError);
    }
    SUBCASE("missing entry for an expected id") {
        Adjacency partial{{"1", {}}};
        CHECK_THROWS_AS(DependencyGraph::from_adjacency(partial, {"1", "2"}), ValidationError);
    }
    SUBCASE("key outside the expected set") {
        Adjacency extra{{"1", {}}, {"2", {}}};
        CHECK_THROWS_AS(DependencyGraph::from_adjacency(extra, {"1"}), ValidationError);
    }
    SUBCASE("normalized key collision") {
        Adjacency collide{{"1", {}}, {"01", {}}};
        CHECK_THROWS_AS(DependencyGraph::from_adjacency(collide, {"1", "2"}), ValidationError);
    }
}

TEST_CASE("random adjacency accept/reject agrees with the peeling oracle") {
    std::mt19937 rng(4242);
    int accepted = 0, rejected = 0;
    for (int round = 0; round < 300; ++round) {
        const Adjacency adjacency = random_adjacency(rng);
        const bool should_accept = oracle_acyclic(adjacency);
        bool did_accept = true;
        DependencyGraph graph;
        try {
            graph = DependencyGraph::from_adjacency(adjacency);
        } catch (const ValidationError&) {
            did_accept = false;
        }
        REQUIRE(did_accept == should_accept);
        if (!did_accept) {
            ++rejected;
            continue;
        }
        ++accepted;

        // Every accepted graph's order is a permutation of the ids with each
        // prerequisite placed before its dependent.
        const auto order = topo_order(graph);
        REQUIRE(order.size() == graph.size());
        std::map<std::string, std::size_t> position;
        for (std::size_t i = 0; i < order.size(); ++i) position[order[i]] = i;
        REQUIRE(position.size() == graph.size());
        for (const auto& id : graph.ids()) {
            REQUIRE(position.count(id) == 1);
            for (const auto& prereq : graph.prerequisites(id)) {
                CHECK(position.at(prereq) < position.at(id));
            }
        }
    }
    // The generator must exercise both sides.
    CHECK(accepted > 20);
    CHECK(rejected > 20);
}

TEST_CASE("wire form round trips through json") {
    Adjacency diamond{{"1", {}}, {"2", {"1"}}, {"3", {"1"}}, {"4", {"2", "3"}}};
    const DependencyGraph graph = DependencyGraph::from_adjacency(diamond);
    const std::string text = graph.to_json_text();

    const auto parsed = nlohmann::json::parse(text);
    REQUIRE(parsed.is_object());
    Adjacency back;
    for (const auto& [key, value] : parsed.items()) {
        back[key] = value.get<std::vector<std::string>>();
    }
    CHECK(back == diamond);

    // Keys appear in ascending numeric order in the serialized text.
    CHECK(text.find("\"1\"") < text.find("\"2\""));
    CHECK(text.find("\"2\":") < text.find("\"3\":"));
    CHECK(text.find("\"3\":") < text.find("\"4\":"));
}

TEST_CASE("unknown id lookups throw") {
    Adjacency one{{"1", {}}};
    const DependencyGraph graph = DependencyGraph::from_adjacency(one);
    CHECK_THROWS_AS(graph.prerequisites("9"), ValidationError);
    CHECK_THROWS_AS(graph.dependents("9"), ValidationError);
    CHECK_THROWS_AS(graph.ancestors("9"), ValidationError);
}
