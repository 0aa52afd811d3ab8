#include "mmagent/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmagent/errors.hpp"

namespace mmagent {

namespace {

std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    std::size_t end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

int parse_score_int(const std::string& text) {
    const std::string t = trim(text);
    if (t.empty()) {
        throw ParseError("empty <score> tag");
    }
    std::size_t consumed = 0;
    int value = 0;
    try {
        value = std::stoi(t, &consumed);
    } catch (const std::exception&) {
        throw ParseError("non-integer score: \"" + t + "\"");
    }
    if (consumed != t.size()) {
        throw ParseError("non-integer score: \"" + t + "\"");
    }
    return value;
}

}  // namespace

const char* dimension_label(Dimension d) {
    switch (d) {
        case Dimension::AE: return "AE";
        case Dimension::MR: return "MR";
        case Dimension::PS: return "PS";
        case Dimension::RBA: return "RBA";
    }
    return "unknown";
}

const char* dimension_tag(Dimension d) {
    switch (d) {
        case Dimension::AE: return "judge_ae";
        case Dimension::MR: return "judge_mr";
        case Dimension::PS: return "judge_ps";
        case Dimension::RBA: return "judge_rba";
    }
    return "unknown";
}

std::array<std::string, 2> dimension_criteria(Dimension d) {
    switch (d) {
        case Dimension::AE: return {"1.1", "1.2"};
        case Dimension::MR: return {"2.1", "2.2"};
        case Dimension::PS: return {"3.1", "3.2"};
        case Dimension::RBA: return {"4.1", "4.2"};
    }
    return {"", ""};
}

std::vector<std::pair<std::string, int>> parse_scored_items(const std::string& reply) {
    struct Reason {
        std::string text;
        bool consumed = false;
    };
    std::vector<Reason> reasons;
    std::vector<std::pair<std::string, int>> out;

    std::size_t pos = 0;
    for (;;) {
        std::size_t reason_at = reply.find("<reason>", pos);
        std::size_t score_at = reply.find("<score>", pos);
        if (reason_at == std::string::npos && score_at == std::string::npos) break;

        if (reason_at < score_at) {
            std::size_t close = reply.find("</reason>", reason_at);
            if (close == std::string::npos) {
                throw ParseError("<reason> tag never closed");
            }
            reasons.push_back(
                Reason{trim(reply.substr(reason_at + 8, close - reason_at - 8)), false});
            pos = close + 9;
        } else {
            std::size_t close = reply.find("</score>", score_at);
            if (close == std::string::npos) {
                throw ParseError("<score> tag never closed");
            }
            int score = parse_score_int(reply.substr(score_at + 7, close - score_at - 7));
            auto it = std::find_if(reasons.rbegin(), reasons.rend(),
                                   [](const Reason& r) { return !r.consumed; });
            if (it == reasons.rend()) {
                throw ParseError("unpaired score: no preceding <reason>");
            }
            it->consumed = true;
            out.emplace_back(it->text, score);
            pos = close + 8;
        }
    }
    for (const auto& r : reasons) {
        if (!r.consumed) {
            throw ParseError("unpaired reason: no following <score>");
        }
    }
    return out;
}

double overall_score(const std::map<Dimension, double>& dimension_means,
                     const std::map<Dimension, double>* weights) {
    double weighted_sum = 0.0;
    double weight_total = 0.0;
    for (Dimension d : kDimensions) {
        auto it = dimension_means.find(d);
        if (it == dimension_means.end()) {
            throw ValidationError(std::string("missing dimension: ") + dimension_label(d));
        }
        double weight = 1.0;
        if (weights) {
            auto w = weights->find(d);
            if (w != weights->end()) weight = w->second;
            if (weight < 0.0) {
                throw ValidationError(std::string("negative weight for dimension ") +
                                      dimension_label(d));
            }
        }
        weighted_sum += weight * it->second;
        weight_total += weight;
    }
    if (weight_total == 0.0) {
        throw ValidationError("dimension weights sum to zero");
    }
    return weighted_sum / weight_total;
}

EvaluationReport aggregate(const std::map<Dimension, std::vector<ScoredItem>>& items,
                           const std::map<Dimension, double>* weights) {
    EvaluationReport report;
    std::map<Dimension, double> means;
    for (Dimension d : kDimensions) {
        auto it = items.find(d);
        if (it == items.end() || it->second.empty()) {
            throw ValidationError(std::string("missing dimension: ") + dimension_label(d));
        }
        double sum = 0.0;
        for (const auto& item : it->second) sum += item.score;
        const double mean = sum / static_cast<double>(it->second.size());
        means[d] = mean;
        report.dimension_scores[dimension_label(d)] = mean;
        report.items[dimension_label(d)] = it->second;
    }
    report.overall = overall_score(means, weights);
    return report;
}

std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&values](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        // positions i..j (0-based) share the mean of ranks i+1..j+1
        const double shared = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw ValidationError("pearson needs equal-length lists");
    }
    const std::size_t n = a.size();
    if (n < 2) {
        throw ValidationError("pearson needs at least two points");
    }
    const double mean_a = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
    const double mean_b = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - mean_a;
        const double db = b[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a == 0.0 || var_b == 0.0) {
        throw ValidationError("pearson is undefined for a constant list");
    }
    return cov / std::sqrt(var_a * var_b);
}

double rank_pearson(const std::vector<double>& a, const std::vector<double>& b) {
    return pearson(average_ranks(a), average_ranks(b));
}

Evaluator::Evaluator(LlmGateway& gateway, const TemplateRegistry& templates,
                     const PipelineConfig& config)
    : gateway_(gateway), templates_(templates), config_(config) {}

std::vector<ScoredItem> Evaluator::judge_dimension(Dimension dimension,
                                                   const std::string& report_text,
                                                   const Problem& problem) {
    LlmRequest request;
    request.tag = dimension_tag(dimension);
    request.user_text = templates_.render(request.tag, {{"background", problem.background},
                                                        {"requirements", problem.requirements},
                                                        {"all_task_analyses", report_text}});
    request.temperature = temperature_for_tag(request.tag, config_);

    const auto criteria = dimension_criteria(dimension);
    std::string last_error;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const std::string reply = gateway_.complete(request).text;
        try {
            const auto pairs = parse_scored_items(reply);
            if (pairs.size() != criteria.size()) {
                throw ParseError("expected " + std::to_string(criteria.size()) +
                                 " scored items, got " + std::to_string(pairs.size()));
            }
            std::vector<ScoredItem> items;
            for (std::size_t i = 0; i < pairs.size(); ++i) {
                if (pairs[i].second < 1 || pairs[i].second > 10) {
                    throw ParseError("score out of range 1..10: " +
                                     std::to_string(pairs[i].second));
                }
                if (pairs[i].first.empty()) {
                    throw ParseError("empty reason for criterion " + criteria[i]);
                }
                items.push_back(ScoredItem{criteria[i], pairs[i].first, pairs[i].second});
            }
            return items;
        } catch (const ParseError& e) {
            last_error = e.what();
        }
    }
    throw ParseError(std::string(dimension_label(dimension)) +
                     " judge reply unusable after one retry: " + last_error);
}

EvaluationReport Evaluator::evaluate(const std::string& report_text, const Problem& problem) {
    std::map<Dimension, std::vector<ScoredItem>> items;
    for (Dimension d : kDimensions) {
        items[d] = judge_dimension(d, report_text, problem);
    }
    return aggregate(items);
}

}  // namespace mmagent
