#include "jointsel/verbalizer_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <nlohmann/json.hpp>

#include "jointsel/error.hpp"

namespace jointsel {

std::vector<double> class_probabilities(std::span<const double> instance_vector, const VerbalizerSet& verbalizers,
                                        const SharedSpace& space, const std::vector<std::string>& classes,
                                        Aggregation aggregation) {
  if (instance_vector.size() != space.reduced_dim) {
    throw Error(ErrorCode::DimensionMismatch, "instance vector has " + std::to_string(instance_vector.size()) +
                                                  " entries, space has " + std::to_string(space.reduced_dim));
  }
  std::vector<double> logits(classes.size());
  for (std::size_t c = 0; c < classes.size(); ++c) {
    double best = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& v : verbalizers.entries()) {
      if (v.label != classes[c]) continue;
      double d = dot(space.vector(v.token_index), instance_vector);
      best = std::max(best, d);
      sum += d;
      ++n;
    }
    if (n == 0) throw Error(ErrorCode::MissingClassToken, "class '" + classes[c] + "' has no verbalizer token");
    logits[c] = aggregation == Aggregation::Max ? best : sum / static_cast<double>(n);
  }
  double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& l : logits) {
    l = std::exp(l - top);
    z += l;
  }
  for (double& l : logits) l /= z;
  return logits;
}

std::size_t EvalReport::correct() const noexcept {
  std::size_t n = 0;
  for (const auto& [_, t] : per_class) n += t.correct;
  return n;
}

double EvalReport::accuracy_over_all() const noexcept {
  std::size_t total = n_evaluated + n_skipped;
  return total == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(total);
}

EvalReport evaluate_rows(const Matrix& unit_rows, const std::vector<std::string>& gold_labels,
                         const VerbalizerSet& verbalizers, const SharedSpace& space,
                         const std::vector<std::string>& label_space, Aggregation aggregation) {
  EvalReport report;
  report.label_space = label_space;
  report.confusion.assign(label_space.size(), std::vector<std::size_t>(label_space.size(), 0));
  for (const auto& name : label_space) report.per_class[name];
  for (const auto& name : label_space) {
    bool has = std::any_of(verbalizers.entries().begin(), verbalizers.entries().end(),
                           [&](const auto& v) { return v.label == name; });
    if (has) report.covered_classes.push_back(name);
  }

  for (std::size_t i = 0; i < unit_rows.rows; ++i) {
    const std::string& gold = gold_labels[i];
    auto gold_pos = std::find(label_space.begin(), label_space.end(), gold);
    if (gold_pos == label_space.end()) throw Error(ErrorCode::UnknownGoldLabel, "gold class '" + gold + "'");
    auto& tally = report.per_class[gold];
    if (std::find(report.covered_classes.begin(), report.covered_classes.end(), gold) ==
        report.covered_classes.end()) {
      ++tally.skipped;
      ++report.n_skipped;
      continue;
    }
    auto probs = class_probabilities(unit_rows.row(i), verbalizers, space, report.covered_classes, aggregation);
    // covered_classes follows label_space order, so the first maximum is the tie winner.
    std::size_t best = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    const std::string& predicted = report.covered_classes[best];
    auto pred_pos = std::find(label_space.begin(), label_space.end(), predicted);
    ++report.confusion[static_cast<std::size_t>(gold_pos - label_space.begin())]
                      [static_cast<std::size_t>(pred_pos - label_space.begin())];
    ++tally.support;
    if (predicted == gold) ++tally.correct;
    ++report.n_evaluated;
  }
  report.empty_test_set = report.n_evaluated == 0;
  report.accuracy =
      report.n_evaluated == 0 ? 0.0 : static_cast<double>(report.correct()) / static_cast<double>(report.n_evaluated);
  return report;
}

EvalReport evaluate(const EmbeddingSet& test_instances, const std::map<std::string, std::string>& gold,
                    const VerbalizerSet& verbalizers, const SharedSpace& space,
                    const std::vector<std::string>& label_space, Aggregation aggregation) {
  std::vector<std::string> gold_labels;
  gold_labels.reserve(test_instances.count());
  for (const auto& id : test_instances.ids) {
    auto it = gold.find(id);
    if (it == gold.end()) throw Error(ErrorCode::UnknownGoldLabel, "no gold label for '" + id + "'");
    gold_labels.push_back(canonical_label(it->second));
  }
  Matrix rows = test_instances.count() == 0 ? Matrix(0, space.reduced_dim) : project(space.pca, test_instances);
  return evaluate_rows(rows, gold_labels, verbalizers, space, label_space, aggregation);
}

VerbalizerSet manual_verbalizers(const std::map<std::string, std::vector<std::string>>& mapping,
                                 const SharedSpace& space, const std::vector<std::string>& label_space) {
  VerbalizerSet out;
  for (const auto& [cls, tokens] : mapping) {
    std::string canon = canonical_label(cls);
    if (std::find(label_space.begin(), label_space.end(), canon) == label_space.end()) {
      throw Error(ErrorCode::UnknownClass, "class '" + canon + "' is not in the label space");
    }
    for (const auto& token : tokens) {
      auto row = space.find(ItemKind::Token, token);
      if (!row) throw Error(ErrorCode::IndexOutOfRange, "token '" + token + "' is not in the vocabulary");
      out.add({token, *row, canon, 0});
    }
  }
  return out;
}

nlohmann::json report_to_json(const EvalReport& report) {
  using nlohmann::json;
  json per_class = json::object();
  for (const auto& [name, t] : report.per_class) {
    per_class[name] = {{"support", t.support}, {"correct", t.correct}, {"skipped", t.skipped}};
  }
  return {{"evaluator", "verbalizer dot-product proxy (no fine-tuning)"},
          {"label_space", report.label_space},
          {"accuracy", report.accuracy},
          {"accuracy_over_all", report.accuracy_over_all()},
          {"per_class", std::move(per_class)},
          {"confusion", report.confusion},
          {"n_evaluated", report.n_evaluated},
          {"n_skipped", report.n_skipped},
          {"covered_classes", report.covered_classes},
          {"warning_empty", report.empty_test_set}};
}

std::string report_to_text(const EvalReport& report) {
  std::size_t width = 5;
  for (const auto& name : report.label_space) width = std::max(width, name.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %8s %8s %8s %8s\n", static_cast<int>(width), "class", "support", "correct",
                "skipped", "acc(%)");
  out += buf;
  for (const auto& name : report.label_space) {
    const auto& t = report.per_class.at(name);
    double acc = t.support == 0 ? 0.0 : 100.0 * static_cast<double>(t.correct) / static_cast<double>(t.support);
    std::snprintf(buf, sizeof buf, "%-*s %8zu %8zu %8zu %8.2f\n", static_cast<int>(width), name.c_str(), t.support,
                  t.correct, t.skipped, acc);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%-*s %8zu %8zu %8zu %8.2f\n", static_cast<int>(width), "total", report.n_evaluated,
                report.correct(), report.n_skipped, 100.0 * report.accuracy);
  out += buf;
  if (report.empty_test_set) out += "warning: nothing was evaluated; accuracy reported as 0\n";
  out += "evaluator: verbalizer dot-product proxy (no fine-tuning)\n";
  return out;
}

}  // namespace jointsel
