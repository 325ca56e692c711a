#include "lhmc/data.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lhmc/error.hpp"

namespace lhmc {

DocumentTermMatrix::DocumentTermMatrix(std::size_t docs, std::size_t terms, std::vector<DtmEntry> entries)
    : docs_(docs), terms_(terms), entries_(std::move(entries)), totals_(docs, 0) {
  std::sort(entries_.begin(), entries_.end(),
            [](const DtmEntry& a, const DtmEntry& b) { return a.doc != b.doc ? a.doc < b.doc : a.term < b.term; });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const DtmEntry& e = entries_[i];
    if (e.doc >= docs_ || e.term >= terms_) {
      throw ContractViolation("document-term entry (" + std::to_string(e.doc) + "," + std::to_string(e.term) +
                              ") out of range for " + std::to_string(docs_) + "x" + std::to_string(terms_));
    }
    if (e.count < 1) throw ContractViolation("document-term entry with count < 1");
    if (i > 0 && entries_[i - 1].doc == e.doc && entries_[i - 1].term == e.term) {
      throw ContractViolation("duplicate document-term pair (" + std::to_string(e.doc) + "," +
                              std::to_string(e.term) + ")");
    }
    totals_[e.doc] += e.count;
    tokens_ += e.count;
  }
}

std::size_t DocumentTermMatrix::count(std::size_t d, std::size_t v) const {
  const auto it = std::lower_bound(entries_.begin(), entries_.end(), DtmEntry{d, v, 0},
                                   [](const DtmEntry& a, const DtmEntry& b) {
                                     return a.doc != b.doc ? a.doc < b.doc : a.term < b.term;
                                   });
  return (it != entries_.end() && it->doc == d && it->term == v) ? it->count : 0;
}

std::size_t CovariateSet::docs() const {
  if (topic.extent(1) > 0) return topic.extent(0);
  if (outcome.extent(1) > 0) return outcome.extent(0);
  return outcomes ? outcomes->size() : 0;
}

void CovariateSet::validate(std::size_t docs) const {
  auto check = [&](const Tensor& t, std::size_t names, const char* what) {
    if (t.rank() != 2) throw ContractViolation(std::string(what) + " covariates must be a matrix");
    if (t.extent(1) > 0 && t.extent(0) != docs) {
      throw ContractViolation(std::string(what) + " covariates have " + std::to_string(t.extent(0)) +
                              " rows, expected " + std::to_string(docs));
    }
    if (names != t.extent(1)) throw ContractViolation(std::string(what) + " covariate names do not match columns");
    for (double v : t.values())
      if (!std::isfinite(v)) throw ContractViolation(std::string(what) + " covariates contain a missing value");
  };
  check(topic, topic_names.size(), "topic");
  check(outcome, outcome_names.size(), "outcome");
  if (outcomes) {
    if (outcomes->size() != docs) {
      throw ContractViolation("outcomes have " + std::to_string(outcomes->size()) + " rows, expected " +
                              std::to_string(docs));
    }
    for (double v : *outcomes)
      if (!std::isfinite(v)) throw ContractViolation("outcomes contain a missing value");
  }
}

SurveyPanel::SurveyPanel(std::size_t periods, std::vector<std::size_t> categories, std::vector<std::size_t> respondent,
                         std::vector<std::size_t> period, std::vector<std::size_t> answers)
    : periods_(periods),
      categories_(std::move(categories)),
      respondent_(std::move(respondent)),
      period_(std::move(period)),
      answers_(std::move(answers)) {
  const std::size_t J = categories_.size();
  if (J == 0) throw ContractViolation("survey needs at least one question");
  if (respondent_.size() != period_.size() || answers_.size() != period_.size() * J) {
    throw ContractViolation("survey arrays have inconsistent lengths");
  }
  for (std::size_t L : categories_)
    if (L < 1) throw ContractViolation("survey question with no categories");
  std::vector<std::size_t> sizes(periods_, 0);
  for (std::size_t i = 0; i < period_.size(); ++i) {
    if (period_[i] >= periods_) {
      throw ContractViolation("response " + std::to_string(i) + " has period " + std::to_string(period_[i]) +
                              " outside 0.." + std::to_string(periods_ - 1));
    }
    ++sizes[period_[i]];
    for (std::size_t j = 0; j < J; ++j) {
      if (answers_[i * J + j] >= categories_[j]) {
        throw ContractViolation("response " + std::to_string(i) + " answers question " + std::to_string(j) +
                                " with code " + std::to_string(answers_[i * J + j]) + " >= " +
                                std::to_string(categories_[j]));
      }
    }
  }
  for (std::size_t t = 0; t < periods_; ++t)
    if (sizes[t] == 0) throw ContractViolation("survey period " + std::to_string(t) + " has no responses");
}

std::vector<std::size_t> SurveyPanel::period_sizes() const {
  std::vector<std::size_t> sizes(periods_, 0);
  for (std::size_t p : period_) ++sizes[p];
  return sizes;
}

}  // namespace lhmc
