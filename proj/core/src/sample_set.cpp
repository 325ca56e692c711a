#include "lhmc/sample_set.hpp"

#include "lhmc/error.hpp"

namespace lhmc {

SampleSet::SampleSet(std::vector<ParameterInfo> parameters, std::size_t chains, std::size_t draws)
    : parameters_(std::move(parameters)), chains_(chains), draws_(draws) {
  for (const auto& p : parameters_) {
    offsets_.push_back(width_);
    width_ += shape_size(p.shape);
  }
  values_.assign(chains_ * draws_ * width_, 0.0);
}

bool SampleSet::contains(std::string_view name) const {
  for (const auto& p : parameters_)
    if (p.name == name) return true;
  return false;
}

const ParameterInfo& SampleSet::parameter(std::string_view name) const {
  for (const auto& p : parameters_)
    if (p.name == name) return p;
  throw ContractViolation("sample set has no parameter '" + std::string(name) + "'");
}

std::size_t SampleSet::offset(std::string_view name) const {
  for (std::size_t i = 0; i < parameters_.size(); ++i)
    if (parameters_[i].name == name) return offsets_[i];
  throw ContractViolation("sample set has no parameter '" + std::string(name) + "'");
}

std::vector<std::vector<double>> SampleSet::column(std::size_t col) const {
  std::vector<std::vector<double>> out(chains_, std::vector<double>(draws_));
  for (std::size_t c = 0; c < chains_; ++c)
    for (std::size_t s = 0; s < draws_; ++s) out[c][s] = (*this)(c, s, col);
  return out;
}

std::pair<std::string, std::size_t> SampleSet::column_name(std::size_t col) const {
  for (std::size_t i = parameters_.size(); i-- > 0;) {
    if (offsets_[i] <= col) return {parameters_[i].name, col - offsets_[i]};
  }
  throw ContractViolation("column out of range");
}

Tensor SampleSet::mean(std::string_view name) const {
  const ParameterInfo& p = parameter(name);
  const std::size_t off = offset(name);
  Tensor t(p.shape);
  for (std::size_t c = 0; c < chains_; ++c)
    for (std::size_t s = 0; s < draws_; ++s)
      for (std::size_t i = 0; i < t.size(); ++i) t[i] += (*this)(c, s, off + i);
  const double n = static_cast<double>(chains_ * draws_);
  for (double& v : t.values()) v /= n;
  return t;
}

Tensor SampleSet::value(std::string_view name, std::size_t chain, std::size_t draw) const {
  const ParameterInfo& p = parameter(name);
  const std::size_t off = offset(name);
  Tensor t(p.shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (*this)(chain, draw, off + i);
  return t;
}

SampleSet SampleSet::select(const std::vector<std::string>& names) const {
  std::vector<ParameterInfo> params;
  for (const auto& n : names) params.push_back(parameter(n));
  SampleSet out(params, chains_, draws_);
  out.metadata = metadata;
  out.statistics = statistics;
  for (std::size_t c = 0; c < chains_; ++c) {
    for (std::size_t s = 0; s < draws_; ++s) {
      std::size_t col = 0;
      for (const auto& n : names) {
        const std::size_t off = offset(n), len = shape_size(parameter(n).shape);
        for (std::size_t i = 0; i < len; ++i) out(c, s, col++) = (*this)(c, s, off + i);
      }
    }
  }
  return out;
}

bool operator==(const SampleSet& a, const SampleSet& b) {
  if (a.chains_ != b.chains_ || a.draws_ != b.draws_ || a.parameters_.size() != b.parameters_.size()) return false;
  for (std::size_t i = 0; i < a.parameters_.size(); ++i) {
    if (a.parameters_[i].name != b.parameters_[i].name || a.parameters_[i].shape != b.parameters_[i].shape) return false;
  }
  return a.values_ == b.values_;
}

}  // namespace lhmc
