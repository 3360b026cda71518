#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "calrank/calibration.hpp"
#include "calrank/components.hpp"
#include "calrank/corpus.hpp"
#include "calrank/decode.hpp"
#include "calrank/reranker.hpp"
#include "calrank/types.hpp"

namespace calrank {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;
inline constexpr int kFormatVersion = 1;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << content;
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

// Locale-independent shortest round-trip formatting, for the delimited text
// outputs. JSON doubles go through nlohmann's own writer.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// Schema file
// ---------------------------------------------------------------------------

inline Json schemas_to_json(const std::vector<DomainSchema>& schemas) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["domains"] = Json::array();
  for (const auto& s : schemas) {
    Json d;
    d["name"] = s.name;
    d["intents"] = s.intents;
    d["entity_types"] = s.entity_types;
    Json gaz = Json::object();
    for (const auto& [et, phrases] : s.gazetteer) gaz[et] = phrases;
    d["gazetteer"] = gaz;
    j["domains"].push_back(std::move(d));
  }
  return j;
}

inline std::vector<DomainSchema> schemas_from_json(const Json& j) {
  if (!j.contains("schema_version"))
    throw ConfigError("schema file is missing schema_version");
  if (j.at("schema_version").get<int>() != kSchemaVersion)
    throw ConfigError("unsupported schema_version");
  std::vector<DomainSchema> schemas;
  for (const auto& d : j.at("domains")) {
    DomainSchema s;
    s.name = d.at("name").get<std::string>();
    s.intents = d.at("intents").get<std::vector<std::string>>();
    s.entity_types = d.at("entity_types").get<std::vector<std::string>>();
    if (d.contains("gazetteer"))
      for (const auto& [et, phrases] : d.at("gazetteer").items())
        s.gazetteer[et] = phrases.get<std::vector<std::string>>();
    schemas.push_back(std::move(s));
  }
  validate_schemas(schemas);
  return schemas;
}

inline void save_schemas(const std::string& path, const std::vector<DomainSchema>& schemas) {
  write_file(path, schemas_to_json(schemas).dump(2) + "\n");
}

inline std::vector<DomainSchema> load_schemas(const std::string& path) {
  return schemas_from_json(Json::parse(read_file(path)));
}

// ---------------------------------------------------------------------------
// Corpus file: one record per utterance, stable field order
// ---------------------------------------------------------------------------

inline Json slot_to_json(const SlotChunk& slot) {
  Json j;
  j["type"] = slot.type;
  j["first"] = slot.first;
  j["last"] = slot.last;
  j["text"] = slot.text;
  return j;
}

inline SlotChunk slot_from_json(const Json& j) {
  SlotChunk s;
  s.type = j.at("type").get<std::string>();
  s.first = j.at("first").get<std::size_t>();
  s.last = j.at("last").get<std::size_t>();
  s.text = j.at("text").get<std::string>();
  return s;
}

inline Json utterance_to_json(const Utterance& u) {
  Json j;
  j["id"] = u.id;
  j["tokens"] = u.tokens;
  Json truth;
  truth["domain"] = u.truth.domain;
  truth["intent"] = u.truth.intent;
  truth["slots"] = Json::array();
  for (const auto& s : u.truth.slots) truth["slots"].push_back(slot_to_json(s));
  j["truth"] = std::move(truth);
  return j;
}

inline Utterance utterance_from_json(const Json& j) {
  Utterance u;
  u.id = j.at("id").get<std::string>();
  u.tokens = j.at("tokens").get<std::vector<std::string>>();
  const auto& truth = j.at("truth");
  u.truth.domain = truth.at("domain").get<std::string>();
  u.truth.intent = truth.at("intent").get<std::string>();
  for (const auto& s : truth.at("slots")) u.truth.slots.push_back(slot_from_json(s));
  validate_utterance(u);
  return u;
}

inline void save_corpus(const std::string& path, std::span<const Utterance> utterances) {
  std::string out;
  for (const auto& u : utterances) out += utterance_to_json(u).dump() + "\n";
  write_file(path, out);
}

inline std::vector<Utterance> load_corpus(const std::string& path) {
  std::vector<Utterance> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(utterance_from_json(Json::parse(line)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Component model file
// ---------------------------------------------------------------------------

inline Json maxent_to_json(const MaxEntModel& m) {
  Json j;
  j["labels"] = m.labels();
  j["features"] = m.feature_names();
  j["biases"] = m.biases();
  j["weights"] = m.weights();
  return j;
}

inline MaxEntModel maxent_from_json(const Json& j) {
  return MaxEntModel::from_parameters(
      j.at("labels").get<std::vector<std::string>>(),
      j.at("features").get<std::vector<std::string>>(),
      j.at("weights").get<std::vector<double>>(), j.at("biases").get<std::vector<double>>());
}

inline Json domain_models_to_json(const std::string& domain, const DomainModels& models) {
  Json j;
  j["domain"] = domain;
  j["dc"] = maxent_to_json(models.dc);
  j["ic"] = maxent_to_json(models.ic);
  j["ner"] = maxent_to_json(models.ner.model());
  return j;
}

inline DomainModels domain_models_from_json(const Json& j) {
  DomainModels m;
  m.dc = maxent_from_json(j.at("dc"));
  m.ic = maxent_from_json(j.at("ic"));
  m.ner = TokenTagger(maxent_from_json(j.at("ner")));
  return m;
}

// ---------------------------------------------------------------------------
// Re-ranker weight file
// ---------------------------------------------------------------------------

inline Json weights_to_json(const std::string& domain, const TrainResult& r,
                            std::uint64_t seed) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["domain"] = domain;
  j["scheme"] = scheme_name(r.scheme);
  j["w"] = std::vector<double>(r.w.w.begin(), r.w.w.end());
  if (r.w.bias)
    j["bias"] = *r.w.bias;
  else
    j["bias"] = nullptr;
  j["seed"] = seed;
  j["iterations"] = r.iterations;
  j["final_loss"] = r.final_loss;
  j["converged"] = r.converged;
  j["lambda1"] = r.lambda1;
  j["lambda2"] = r.lambda2;
  return j;
}

inline WeightVector weights_from_json(const Json& j) {
  if (j.at("format_version").get<int>() != kFormatVersion)
    throw ConfigError("unsupported weight file version");
  WeightVector w;
  const auto v = j.at("w").get<std::vector<double>>();
  if (v.size() != 3) throw ShapeError("weight vector must have 3 entries");
  std::copy(v.begin(), v.end(), w.w.begin());
  if (!j.at("bias").is_null()) w.bias = j.at("bias").get<double>();
  return w;
}

// ---------------------------------------------------------------------------
// Hypothesis dump and n-best output
// ---------------------------------------------------------------------------

inline Json hypothesis_to_json(const std::string& utterance_id, const Hypothesis& h,
                               bool with_score = true) {
  Json j;
  j["utt"] = utterance_id;
  j["domain"] = h.domain;
  j["intent"] = h.intent;
  j["slots"] = Json::array();
  for (const auto& s : h.slots) j["slots"].push_back(slot_to_json(s));
  j["l"] = std::vector<double>(h.l.begin(), h.l.end());
  if (with_score) j["s"] = h.s;
  return j;
}

inline Json nbest_to_json(const NBest& nb) {
  Json j;
  j["utt"] = nb.utterance_id;
  j["rejected"] = nb.rejected;
  j["entries"] = Json::array();
  for (const auto& e : nb.entries) {
    Json entry;
    entry["domain"] = e.hyp.domain;
    entry["intent"] = e.hyp.intent;
    entry["slots"] = Json::array();
    for (const auto& s : e.hyp.slots) entry["slots"].push_back(slot_to_json(s));
    entry["s"] = e.s;
    entry["r"] = e.r;
    j["entries"].push_back(std::move(entry));
  }
  return j;
}

// ---------------------------------------------------------------------------
// Evaluation report, reliability curves, comparison table
// ---------------------------------------------------------------------------

inline Json report_to_json(const std::string& scheme, const EvaluationReport& rep) {
  Json j;
  j["scheme"] = scheme;
  j["n_utterances"] = rep.n_utterances;
  j["n_rejected"] = rep.n_rejected;
  j["semer"] = rep.semer_mean;
  j["ie_rate"] = rep.ie_rate;
  Json domains = Json::object();
  for (const auto& [domain, b] : rep.per_domain) {
    Json d;
    d["count"] = b.count;
    d["semer"] = b.semer_mean;
    d["ie_rate"] = b.ie_rate;
    domains[domain] = std::move(d);
  }
  j["per_domain"] = std::move(domains);
  return j;
}

// Delimited curve data, one row per bin: bin_low, bin_high, count, mean_conf,
// frac_correct. Empty bins carry nan means.
inline std::string reliability_to_tsv(const ReliabilityReport& rep) {
  std::string out = "bin_low\tbin_high\tcount\tmean_conf\tfrac_correct\n";
  for (std::size_t k = 0; k < kReliabilityBins; ++k) {
    const auto& bin = rep.bins[k];
    out += format_double(ReliabilityReport::bin_low(k)) + "\t" +
           format_double(ReliabilityReport::bin_high(k)) + "\t" + std::to_string(bin.count) +
           "\t" + format_double(bin.mean_confidence) + "\t" + format_double(bin.frac_correct) +
           "\n";
  }
  return out;
}

inline Json comparison_to_json(const SchemeComparison& cmp) {
  Json j;
  j["rows"] = Json::array();
  for (const auto& row : cmp.rows) {
    Json r;
    r["scheme"] = row.scheme;
    r["semer"] = row.semer;
    r["ie_rate"] = row.ie_rate;
    r["ece"] = row.ece;
    j["rows"].push_back(std::move(r));
  }
  return j;
}

inline std::string comparison_to_text(const SchemeComparison& cmp) {
  char buf[128];
  std::string out = "scheme      semer     ie_rate   ece\n";
  for (const auto& row : cmp.rows) {
    std::snprintf(buf, sizeof(buf), "%-10s  %.6f  %.6f  %.6f\n", row.scheme.c_str(), row.semer,
                  row.ie_rate, row.ece);
    out += buf;
  }
  return out;
}

}  // namespace calrank
