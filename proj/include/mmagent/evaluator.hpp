#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "mmagent/config.hpp"
#include "mmagent/gateway.hpp"
#include "mmagent/problem.hpp"
#include "mmagent/prompts.hpp"

namespace mmagent {

/// The four scoring dimensions, each judged through its own prompt:
/// analysis (AE), modeling rigor (MR), practicality/scientificity (PS), and
/// result/bias analysis (RBA).
enum class Dimension { AE, MR, PS, RBA };

constexpr std::array<Dimension, 4> kDimensions{Dimension::AE, Dimension::MR, Dimension::PS,
                                               Dimension::RBA};

const char* dimension_label(Dimension d);
const char* dimension_tag(Dimension d);
/// Criterion ids for a dimension, e.g. {"1.1", "1.2"} for AE.
std::array<std::string, 2> dimension_criteria(Dimension d);

struct ScoredItem {
    std::string criterion;
    std::string reason;
    int score = 0;
};

struct EvaluationReport {
    std::map<std::string, double> dimension_scores;  // keyed by label
    double overall = 0.0;
    std::map<std::string, std::vector<ScoredItem>> items;
};

/// Extracts (reason, score) pairs from a judge reply. Each <score> binds to
/// the nearest preceding unconsumed <reason>; unpaired tags or non-integer
/// scores throw ParseError.
std::vector<std::pair<std::string, int>> parse_scored_items(const std::string& reply);

/// Per-dimension mean and weighted overall. Weights default to equal; every
/// dimension must be present and hold at least one item.
EvaluationReport aggregate(const std::map<Dimension, std::vector<ScoredItem>>& items,
                           const std::map<Dimension, double>* weights = nullptr);

/// The overall rule on its own: weighted mean of the four dimension scores,
/// equal weights by default. All four dimensions must be present.
double overall_score(const std::map<Dimension, double>& dimension_means,
                     const std::map<Dimension, double>* weights = nullptr);

/// Pearson correlation between the average-rank vectors of a and b
/// (Spearman's rho with tie handling). Throws on length mismatch, fewer
/// than two points, or a constant vector.
double rank_pearson(const std::vector<double>& a, const std::vector<double>& b);

/// Average ranks (1-based); ties share the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& values);

double pearson(const std::vector<double>& a, const std::vector<double>& b);

/// Judges a report along the four dimensions via the evaluation prompts.
class Evaluator {
public:
    Evaluator(LlmGateway& gateway, const TemplateRegistry& templates,
              const PipelineConfig& config);

    std::vector<ScoredItem> judge_dimension(Dimension dimension, const std::string& report_text,
                                            const Problem& problem);
    EvaluationReport evaluate(const std::string& report_text, const Problem& problem);

private:
    LlmGateway& gateway_;
    const TemplateRegistry& templates_;
    PipelineConfig config_;
};

}  // namespace mmagent
