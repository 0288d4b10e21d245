#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "jointsel/geometry.hpp"
#include "jointsel/selection.hpp"

namespace jointsel {

/// How a class with several verbalizer tokens turns their dot products
/// into one logit.
enum class Aggregation { Max, Mean };

/// Softmax over `classes` of the aggregated dot products between the
/// instance vector and each class's verbalizer token vectors. Probabilities
/// are aligned with `classes`. Throws MissingClassToken.
std::vector<double> class_probabilities(std::span<const double> instance_vector, const VerbalizerSet& verbalizers,
                                        const SharedSpace& space, const std::vector<std::string>& classes,
                                        Aggregation aggregation = Aggregation::Max);

struct ClassTally {
  std::size_t support = 0;
  std::size_t correct = 0;
  std::size_t skipped = 0;
};

struct EvalReport {
  std::vector<std::string> label_space;
  double accuracy = 0.0;  // correct / n_evaluated
  std::map<std::string, ClassTally> per_class;
  std::vector<std::vector<std::size_t>> confusion;  // [gold][predicted], label_space order
  std::size_t n_evaluated = 0;
  std::size_t n_skipped = 0;  // gold class has no verbalizer token
  std::vector<std::string> covered_classes;
  bool empty_test_set = false;

  std::size_t correct() const noexcept;
  /// correct / (n_evaluated + n_skipped): skipped instances count as errors.
  double accuracy_over_all() const noexcept;
};

/// Projects each test row with the session's PCA model (never refit),
/// normalises it and predicts the argmax class (ties to label_space order).
/// Throws DimensionMismatch, UnknownGoldLabel, DegenerateRow.
EvalReport evaluate(const EmbeddingSet& test_instances, const std::map<std::string, std::string>& gold,
                    const VerbalizerSet& verbalizers, const SharedSpace& space,
                    const std::vector<std::string>& label_space, Aggregation aggregation = Aggregation::Max);

/// Same, for rows already in the shared space.
EvalReport evaluate_rows(const Matrix& unit_rows, const std::vector<std::string>& gold_labels,
                         const VerbalizerSet& verbalizers, const SharedSpace& space,
                         const std::vector<std::string>& label_space, Aggregation aggregation = Aggregation::Max);

/// Builds a verbalizer set from {class: [token ids]}. Throws UnknownClass
/// or IndexOutOfRange for tokens absent from the space.
VerbalizerSet manual_verbalizers(const std::map<std::string, std::vector<std::string>>& mapping,
                                 const SharedSpace& space, const std::vector<std::string>& label_space);

nlohmann::json report_to_json(const EvalReport& report);
/// Aligned table; accuracies as percentages with two decimals.
std::string report_to_text(const EvalReport& report);

}  // namespace jointsel
