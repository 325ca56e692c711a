#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "lhmc/tensor.hpp"

namespace lhmc {

struct DtmEntry {
  std::size_t doc = 0;
  std::size_t term = 0;
  std::size_t count = 0;
  friend bool operator==(const DtmEntry&, const DtmEntry&) = default;
};

/// Sparse document-term counts. Entries are kept sorted by (doc, term).
class DocumentTermMatrix {
 public:
  DocumentTermMatrix() = default;
  /// Validates ids, counts >= 1 and uniqueness of (doc, term) pairs.
  DocumentTermMatrix(std::size_t docs, std::size_t terms, std::vector<DtmEntry> entries);

  std::size_t docs() const noexcept { return docs_; }
  std::size_t terms() const noexcept { return terms_; }
  const std::vector<DtmEntry>& entries() const noexcept { return entries_; }
  std::size_t doc_total(std::size_t d) const { return totals_.at(d); }
  const std::vector<std::size_t>& doc_totals() const noexcept { return totals_; }
  std::size_t total_tokens() const noexcept { return tokens_; }
  /// Count of (d, v); zero when absent.
  std::size_t count(std::size_t d, std::size_t v) const;

  friend bool operator==(const DocumentTermMatrix&, const DocumentTermMatrix&) = default;

 private:
  std::size_t docs_ = 0;
  std::size_t terms_ = 0;
  std::vector<DtmEntry> entries_;
  std::vector<std::size_t> totals_;
  std::size_t tokens_ = 0;
};

/// Per-document regressors. Topic covariates g_d feed the topic-share prior,
/// outcome covariates q_d and outcomes y_d feed the supervised regression.
struct CovariateSet {
  std::vector<std::string> topic_names;
  Tensor topic = Tensor(Shape{0, 0});  // [D, M_g]
  std::vector<std::string> outcome_names;
  Tensor outcome = Tensor(Shape{0, 0});  // [D, M_q]
  std::optional<std::vector<double>> outcomes;

  std::size_t docs() const;
  /// Row counts agree, values are finite.
  void validate(std::size_t docs) const;
};

/// Ordinal survey responses grouped by period. Answers are stored row-major,
/// one row of J codes per response.
class SurveyPanel {
 public:
  SurveyPanel() = default;
  SurveyPanel(std::size_t periods, std::vector<std::size_t> categories, std::vector<std::size_t> respondent,
              std::vector<std::size_t> period, std::vector<std::size_t> answers);

  std::size_t periods() const noexcept { return periods_; }
  std::size_t questions() const noexcept { return categories_.size(); }
  const std::vector<std::size_t>& categories() const noexcept { return categories_; }
  std::size_t responses() const noexcept { return period_.size(); }
  std::size_t respondent(std::size_t i) const { return respondent_.at(i); }
  std::size_t period(std::size_t i) const { return period_.at(i); }
  std::size_t answer(std::size_t i, std::size_t j) const { return answers_[i * questions() + j]; }
  const std::vector<std::size_t>& respondents() const noexcept { return respondent_; }
  const std::vector<std::size_t>& period_index() const noexcept { return period_; }
  const std::vector<std::size_t>& answers() const noexcept { return answers_; }
  std::vector<std::size_t> period_sizes() const;

  friend bool operator==(const SurveyPanel&, const SurveyPanel&) = default;

 private:
  std::size_t periods_ = 0;
  std::vector<std::size_t> categories_;
  std::vector<std::size_t> respondent_;
  std::vector<std::size_t> period_;
  std::vector<std::size_t> answers_;
};

}  // namespace lhmc
