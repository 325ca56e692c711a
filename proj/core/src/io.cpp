#include "lhmc/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>

#include <json.hpp>

#include "lhmc/error.hpp"

#ifndef LHMC_VERSION
#define LHMC_VERSION "0.0.0"
#endif

namespace lhmc::io {

namespace {

using json = nlohmann::ordered_json;

std::string fmt17(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

// Line-oriented CSV reader with 1-based line numbers for errors.
class CsvReader {
 public:
  explicit CsvReader(const fs::path& path) : path_(path.string()), text_(read_file(path)) {}

  bool next(std::vector<std::string_view>& fields) {
    while (pos_ < text_.size()) {
      std::size_t end = text_.find('\n', pos_);
      if (end == std::string::npos) end = text_.size();
      std::string_view line(text_.data() + pos_, end - pos_);
      pos_ = end + 1;
      ++line_;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (line.empty()) continue;
      fields.clear();
      std::size_t start = 0;
      for (;;) {
        const std::size_t comma = line.find(',', start);
        fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(path_, line_, msg); }

  void expect_header(const std::vector<std::string>& want, std::vector<std::string_view>& fields) {
    if (!next(fields)) fail("missing header");
    bool ok = fields.size() >= want.size();
    for (std::size_t i = 0; ok && i < want.size(); ++i) ok = fields[i] == want[i];
    if (!ok) {
      std::string w;
      for (const auto& s : want) w += (w.empty() ? "" : ",") + s;
      fail("missing header: expected columns starting with '" + w + "'");
    }
  }

  std::size_t to_index(std::string_view f, const char* what) const {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || p != f.data() + f.size() || f.empty()) {
      fail(std::string("non-numeric ") + what + " '" + std::string(f) + "'");
    }
    return v;
  }

  double to_real(std::string_view f, const char* what) const {
    double v = 0.0;
    auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || p != f.data() + f.size() || f.empty()) {
      // from_chars rejects a leading '+'; accept it for hand-written files.
      if (!f.empty() && f.front() == '+') return to_real(f.substr(1), what);
      fail(std::string("non-numeric ") + what + " '" + std::string(f) + "'");
    }
    return v;
  }

  std::size_t line() const { return line_; }

 private:
  std::string path_;
  std::string text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

json shape_json(const Shape& s) {
  json a = json::array();
  for (auto e : s) a.push_back(e);
  return a;
}

Shape shape_from(const json& j) {
  Shape s;
  for (const auto& e : j) s.push_back(e.get<std::size_t>());
  return s;
}

json parse_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 1, std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------

void atomic_write(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractViolation("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string version() { return LHMC_VERSION; }

// ---------------------------------------------------------------------------
// Document-term matrix

std::string format_dtm(const DocumentTermMatrix& dtm) {
  std::string out = "doc_id,term_id,count\n";
  for (const auto& e : dtm.entries()) {
    out += std::to_string(e.doc) + "," + std::to_string(e.term) + "," + std::to_string(e.count) + "\n";
  }
  return out;
}

DocumentTermMatrix load_dtm(const fs::path& path, std::optional<std::size_t> docs, std::optional<std::size_t> terms) {
  CsvReader r(path);
  std::vector<std::string_view> f;
  r.expect_header({"doc_id", "term_id", "count"}, f);
  std::vector<DtmEntry> entries;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::size_t max_doc = 0, max_term = 0;
  while (r.next(f)) {
    if (f.size() != 3) r.fail("expected 3 fields, found " + std::to_string(f.size()));
    DtmEntry e{r.to_index(f[0], "doc_id"), r.to_index(f[1], "term_id"), r.to_index(f[2], "count")};
    if (e.count < 1) r.fail("count < 1");
    if (docs && e.doc >= *docs) r.fail("doc_id " + std::to_string(e.doc) + " out of range");
    if (terms && e.term >= *terms) r.fail("term_id " + std::to_string(e.term) + " out of range");
    if (!seen.insert({e.doc, e.term}).second) {
      r.fail("duplicate (doc,term) pair (" + std::to_string(e.doc) + "," + std::to_string(e.term) + ")");
    }
    max_doc = std::max(max_doc, e.doc);
    max_term = std::max(max_term, e.term);
    entries.push_back(e);
  }
  const std::size_t D = docs.value_or(entries.empty() ? 0 : max_doc + 1);
  const std::size_t V = terms.value_or(entries.empty() ? 0 : max_term + 1);
  const std::size_t rows = entries.size();
  DocumentTermMatrix dtm(D, V, std::move(entries));
  if (dtm.entries().size() != rows) throw ParseError(path.string(), r.line(), "row count changed while loading");
  return dtm;
}

// ---------------------------------------------------------------------------
// Covariates

std::string format_covariates(const CovariateSet& cov) {
  const std::size_t D = cov.docs();
  std::string out = "doc_id";
  for (const auto& n : cov.topic_names) out += "," + n;
  for (const auto& n : cov.outcome_names) out += "," + n;
  if (cov.outcomes) out += ",y";
  out += "\n";
  for (std::size_t d = 0; d < D; ++d) {
    out += std::to_string(d);
    for (std::size_t c = 0; c < cov.topic_names.size(); ++c) out += "," + fmt17(cov.topic(d, c));
    for (std::size_t c = 0; c < cov.outcome_names.size(); ++c) out += "," + fmt17(cov.outcome(d, c));
    if (cov.outcomes) out += "," + fmt17((*cov.outcomes)[d]);
    out += "\n";
  }
  return out;
}

CovariateSet load_covariates(const fs::path& path) {
  CsvReader r(path);
  std::vector<std::string_view> f;
  r.expect_header({"doc_id"}, f);
  enum class Col { Topic, Outcome, Y };
  std::vector<Col> kinds;
  CovariateSet cov;
  for (std::size_t i = 1; i < f.size(); ++i) {
    const std::string name(f[i]);
    if (name == "y") {
      if (std::count(kinds.begin(), kinds.end(), Col::Y)) r.fail("duplicate column y");
      kinds.push_back(Col::Y);
    } else if (name.rfind("q_", 0) == 0) {
      kinds.push_back(Col::Outcome);
      cov.outcome_names.push_back(name);
    } else {
      kinds.push_back(Col::Topic);
      cov.topic_names.push_back(name);
    }
  }
  const bool has_y = std::count(kinds.begin(), kinds.end(), Col::Y) > 0;
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> ids;
  while (r.next(f)) {
    if (f.size() != kinds.size() + 1) {
      r.fail("expected " + std::to_string(kinds.size() + 1) + " fields, found " + std::to_string(f.size()));
    }
    ids.push_back(r.to_index(f[0], "doc_id"));
    std::vector<double> row;
    for (std::size_t i = 1; i < f.size(); ++i) {
      const double v = r.to_real(f[i], "covariate");
      if (!std::isfinite(v)) r.fail("missing or non-finite covariate value");
      row.push_back(v);
    }
    if (ids.back() != rows.size()) {
      r.fail("doc_id " + std::to_string(ids.back()) + " out of order; expected " + std::to_string(rows.size()));
    }
    rows.push_back(std::move(row));
  }
  const std::size_t D = rows.size();
  cov.topic = Tensor(Shape{D, cov.topic_names.size()});
  cov.outcome = Tensor(Shape{D, cov.outcome_names.size()});
  if (has_y) cov.outcomes = std::vector<double>(D);
  for (std::size_t d = 0; d < D; ++d) {
    std::size_t t = 0, o = 0;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      switch (kinds[i]) {
        case Col::Topic: cov.topic(d, t++) = rows[d][i]; break;
        case Col::Outcome: cov.outcome(d, o++) = rows[d][i]; break;
        case Col::Y: (*cov.outcomes)[d] = rows[d][i]; break;
      }
    }
  }
  return cov;
}

// ---------------------------------------------------------------------------
// Survey

std::string format_survey(const SurveyPanel& panel) {
  std::string out = "resp_id,period";
  for (std::size_t j = 0; j < panel.questions(); ++j) out += ",q" + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < panel.responses(); ++i) {
    out += std::to_string(panel.respondent(i)) + "," + std::to_string(panel.period(i));
    for (std::size_t j = 0; j < panel.questions(); ++j) out += "," + std::to_string(panel.answer(i, j));
    out += "\n";
  }
  return out;
}

std::string format_survey_meta(const SurveyMeta& meta) {
  json j;
  j["periods"] = meta.periods;
  j["categories"] = meta.categories;
  return j.dump(2) + "\n";
}

SurveyMeta load_survey_meta(const fs::path& path) {
  const json j = parse_json(path);
  SurveyMeta m;
  try {
    m.periods = j.at("periods").get<std::size_t>();
    m.categories = j.at("categories").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 1, std::string("bad survey metadata: ") + e.what());
  }
  return m;
}

SurveyPanel load_survey(const fs::path& path, const std::optional<SurveyMeta>& meta) {
  CsvReader r(path);
  std::vector<std::string_view> f;
  r.expect_header({"resp_id", "period"}, f);
  const std::size_t J = f.size() - 2;
  if (J == 0) r.fail("missing header: no question columns");
  for (std::size_t j = 0; j < J; ++j) {
    if (f[j + 2] != "q" + std::to_string(j)) r.fail("missing header: expected column q" + std::to_string(j));
  }
  if (meta && meta->categories.size() != J) {
    r.fail("survey has " + std::to_string(J) + " questions but metadata lists " +
           std::to_string(meta->categories.size()));
  }
  std::vector<std::size_t> resp, period, answers;
  std::vector<std::size_t> max_code(J, 0);
  std::size_t max_period = 0;
  std::size_t row = 0;
  while (r.next(f)) {
    ++row;
    if (f.size() != J + 2) r.fail("row " + std::to_string(row) + ": expected " + std::to_string(J + 2) + " fields");
    resp.push_back(r.to_index(f[0], "resp_id"));
    period.push_back(r.to_index(f[1], "period"));
    if (meta && period.back() >= meta->periods) {
      r.fail("row " + std::to_string(row) + ": period " + std::to_string(period.back()) + " out of range");
    }
    max_period = std::max(max_period, period.back());
    for (std::size_t j = 0; j < J; ++j) {
      const std::size_t code = r.to_index(f[j + 2], "answer code");
      if (meta && code >= meta->categories[j]) {
        r.fail("row " + std::to_string(row) + ": code " + std::to_string(code) + " for q" + std::to_string(j) +
               " is >= L_j = " + std::to_string(meta->categories[j]));
      }
      max_code[j] = std::max(max_code[j], code);
      answers.push_back(code);
    }
  }
  if (resp.empty()) r.fail("survey has no rows");
  std::vector<std::size_t> categories;
  std::size_t periods;
  if (meta) {
    categories = meta->categories;
    periods = meta->periods;
  } else {
    for (std::size_t m : max_code) categories.push_back(m + 1);
    periods = max_period + 1;
  }
  try {
    return SurveyPanel(periods, std::move(categories), std::move(resp), std::move(period), std::move(answers));
  } catch (const ContractViolation& e) {
    throw ParseError(path.string(), r.line(), e.what());
  }
}

// ---------------------------------------------------------------------------
// Samples and reports

std::string format_samples(const SampleSet& s) {
  std::string out = "chain,draw,name,index,value\n";
  out.reserve(out.size() + s.chains() * s.draws() * s.width() * 32);
  std::vector<std::pair<std::string, std::size_t>> labels;
  for (std::size_t col = 0; col < s.width(); ++col) labels.push_back(s.column_name(col));
  char buf[96];
  for (std::size_t c = 0; c < s.chains(); ++c) {
    for (std::size_t d = 0; d < s.draws(); ++d) {
      const auto row = s.row(c, d);
      for (std::size_t col = 0; col < s.width(); ++col) {
        const int n = std::snprintf(buf, sizeof buf, "%zu,%zu,", c, d);
        out.append(buf, static_cast<std::size_t>(n));
        out += labels[col].first;
        const int m = std::snprintf(buf, sizeof buf, ",%zu,%.17g\n", labels[col].second, row[col]);
        out.append(buf, static_cast<std::size_t>(m));
      }
    }
  }
  return out;
}

void write_samples(const fs::path& path, const SampleSet& samples) { atomic_write(path, format_samples(samples)); }

SampleSet load_samples(const fs::path& path, const std::map<std::string, Shape>& shapes) {
  CsvReader r(path);
  std::vector<std::string_view> f;
  r.expect_header({"chain", "draw", "name", "index", "value"}, f);
  struct Row {
    std::size_t chain, draw, param, index;
    double value;
  };
  std::vector<std::string> names;
  std::map<std::string, std::size_t, std::less<>> name_ids;
  std::vector<std::size_t> max_index;
  std::vector<Row> rows;
  std::size_t max_chain = 0, max_draw = 0;
  while (r.next(f)) {
    if (f.size() != 5) r.fail("expected 5 fields, found " + std::to_string(f.size()));
    Row row{r.to_index(f[0], "chain"), r.to_index(f[1], "draw"), 0, r.to_index(f[3], "index"),
            r.to_real(f[4], "value")};
    if (f[2].empty()) r.fail("empty parameter name");
    auto it = name_ids.find(f[2]);
    if (it == name_ids.end()) {
      it = name_ids.emplace(std::string(f[2]), names.size()).first;
      names.emplace_back(f[2]);
      max_index.push_back(0);
    }
    row.param = it->second;
    max_index[row.param] = std::max(max_index[row.param], row.index);
    max_chain = std::max(max_chain, row.chain);
    max_draw = std::max(max_draw, row.draw);
    rows.push_back(row);
  }
  if (rows.empty()) throw ParseError(path.string(), r.line(), "no samples");
  std::vector<ParameterInfo> params;
  for (std::size_t p = 0; p < names.size(); ++p) {
    auto it = shapes.find(names[p]);
    Shape shape = it != shapes.end() ? it->second : Shape{max_index[p] + 1};
    if (max_index[p] >= shape_size(shape)) {
      throw ParseError(path.string(), r.line(), "index out of range for parameter '" + names[p] + "'");
    }
    params.push_back({names[p], shape});
  }
  SampleSet out(params, max_chain + 1, max_draw + 1);
  std::vector<std::size_t> offsets;
  for (const auto& p : params) offsets.push_back(out.offset(p.name));
  std::vector<char> filled(out.chains() * out.draws() * out.width(), 0);
  for (const Row& row : rows) {
    const std::size_t col = offsets[row.param] + row.index;
    const std::size_t key = (row.chain * out.draws() + row.draw) * out.width() + col;
    if (filled[key]) throw ParseError(path.string(), r.line(), "duplicate sample for " + names[row.param]);
    filled[key] = 1;
    out(row.chain, row.draw, col) = row.value;
  }
  if (std::find(filled.begin(), filled.end(), 0) != filled.end()) {
    throw ParseError(path.string(), r.line(), "samples are incomplete: some (chain, draw, parameter) cells missing");
  }
  return out;
}

std::string format_report(const DiagnosticsReport& report) {
  const bool with_error =
      std::any_of(report.rows.begin(), report.rows.end(), [](const ParameterSummary& s) { return s.error.has_value(); });
  std::string out = "name,index,mean,sd,q025,q50,q975,ess,rhat";
  out += with_error ? ",error\n" : "\n";
  for (const auto& s : report.rows) {
    out += s.name + "," + std::to_string(s.index) + "," + fmt17(s.mean) + "," + fmt17(s.sd) + "," + fmt17(s.q025) +
           "," + fmt17(s.q50) + "," + fmt17(s.q975) + "," + fmt17(s.ess) + "," + fmt17(s.rhat);
    if (with_error) out += "," + (s.error ? fmt17(*s.error) : std::string());
    out += "\n";
  }
  return out;
}

void write_report(const fs::path& path, const DiagnosticsReport& report) { atomic_write(path, format_report(report)); }

// ---------------------------------------------------------------------------
// JSON documents

std::string format_truth(const SimTruth& truth) {
  json j;
  j["model"] = truth.model;
  j["seed"] = truth.seed;
  json params = json::object();
  for (const auto& [name, t] : truth.parameters) {
    params[name] = {{"shape", shape_json(t.shape())}, {"values", t.storage()}};
  }
  j["parameters"] = params;
  return j.dump(1) + "\n";
}

SimTruth load_truth(const fs::path& path) {
  const json j = parse_json(path);
  SimTruth t;
  try {
    t.model = j.at("model").get<std::string>();
    t.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [name, p] : j.at("parameters").items()) {
      t.parameters.emplace(name, Tensor(shape_from(p.at("shape")), p.at("values").get<std::vector<double>>()));
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 1, std::string("bad truth file: ") + e.what());
  } catch (const ContractViolation& e) {
    throw ParseError(path.string(), 1, std::string("bad truth file: ") + e.what());
  }
  return t;
}

std::string format_manifest(const RunManifest& m) {
  json j;
  j["family"] = m.family;
  j["sampler"] = m.sampler;
  j["seed"] = m.seed;
  j["chains"] = m.chains;
  j["draws"] = m.draws;
  j["warmup"] = m.warmup;
  j["thin"] = m.thin;
  j["ld_step_size"] = m.ld_step_size;
  json hp = json::object();
  for (const auto& [k, v] : m.hyperparameters) hp[k] = v;
  j["hyperparameters"] = hp;
  j["record"] = m.record;
  j["inputs"] = m.inputs;
  j["digests"] = m.digests;
  json params = json::object();
  for (const auto& [k, s] : m.parameters) params[k] = shape_json(s);
  j["parameters"] = params;
  j["wall_time"] = m.wall_time;
  j["version"] = m.version;
  return j.dump(2) + "\n";
}

RunManifest load_manifest(const fs::path& path) {
  const json j = parse_json(path);
  RunManifest m;
  try {
    m.family = j.at("family").get<std::string>();
    m.sampler = j.at("sampler").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.chains = j.at("chains").get<std::size_t>();
    m.draws = j.at("draws").get<std::size_t>();
    m.warmup = j.at("warmup").get<std::size_t>();
    m.thin = j.value("thin", std::size_t{1});
    m.ld_step_size = j.value("ld_step_size", 0.01);
    for (const auto& [k, v] : j.at("hyperparameters").items()) m.hyperparameters.emplace_back(k, v.get<double>());
    m.record = j.value("record", std::vector<std::string>{});
    m.inputs = j.value("inputs", std::map<std::string, std::string>{});
    m.digests = j.value("digests", std::map<std::string, std::string>{});
    if (j.contains("parameters"))
      for (const auto& [k, s] : j.at("parameters").items()) m.parameters.emplace(k, shape_from(s));
    m.wall_time = j.value("wall_time", 0.0);
    m.version = j.value("version", std::string());
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 1, std::string("bad manifest: ") + e.what());
  }
  return m;
}

}  // namespace lhmc::io
