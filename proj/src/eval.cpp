#include "methanol/eval.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "methanol/objective.hpp"

namespace methanol {

using nlohmann::json;

double thought_ppl(const ThinkingTransformer& model, const std::vector<RenderedSample>& set) {
  if (set.empty()) throw ConfigError("thought_ppl: empty evaluation set");
  NoGradGuard no_grad;
  double sum = 0.0;
  for (const auto& sample : set) {
    SupervisionMasks masks = build_masks(sample, {});
    ForwardResultT<float> fr = forward(model, sample.token_ids);
    sum += static_cast<double>(thinking_loss(fr.logits_k, sample, masks).item());
  }
  return std::exp(sum / static_cast<double>(set.size()));
}

namespace {
std::string trim_trailing(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\n' ||
                        s.back() == '\r')) {
    s.pop_back();
  }
  return s;
}
}  // namespace

EvalReport exact_match(const ThinkingTransformer& model, const std::vector<TripletSample>& set,
                       const GenerationParams& params, bool with_transcripts, bool with_ppl) {
  if (set.empty()) throw ConfigError("exact_match: empty evaluation set");
  if (params.sample) throw ConfigError("exact_match: evaluation requires greedy decoding");
  EvalReport report;
  report.n_samples = static_cast<long>(set.size());
  long answer_hits = 0, thought_hits = 0;
  for (const auto& sample : set) {
    try {
      GenerationOutput out = generate(model, sample.system_text, sample.query_text, params);
      if (trim_trailing(out.answer_text) == trim_trailing(sample.answer_text)) ++answer_hits;
      if (trim_trailing(out.thought_text) == trim_trailing(sample.thought_text)) ++thought_hits;
      if (with_transcripts) {
        report.transcripts.push_back(
            transcript_json(out, sample.system_text, sample.query_text));
      }
    } catch (const Error& e) {
      ++report.generation_errors;
      std::cerr << "generation failed for '" << sample.source_id << "': " << e.what() << "\n";
    }
  }
  report.answer_exact_match =
      static_cast<double>(answer_hits) / static_cast<double>(set.size());
  report.thought_exact_match =
      static_cast<double>(thought_hits) / static_cast<double>(set.size());
  if (with_ppl) {
    std::vector<RenderedSample> rendered;
    rendered.reserve(set.size());
    for (const auto& s : set) rendered.push_back(render_chat(s, model.config.max_seq_len));
    report.thought_ppl = thought_ppl(model, rendered);
  }
  return report;
}

std::string eval_report_json(const EvalReport& report) {
  json j{{"n_samples", report.n_samples},
         {"answer_exact_match", report.answer_exact_match},
         {"thought_exact_match", report.thought_exact_match},
         {"thought_ppl", report.thought_ppl},
         {"generation_errors", report.generation_errors}};
  if (!report.transcripts.empty()) {
    json ts = json::array();
    for (const auto& t : report.transcripts) ts.push_back(json::parse(t));
    j["transcripts"] = ts;
  }
  return j.dump(2);
}

void export_series(const std::vector<MetricsRecord>& records,
                   const std::filesystem::path& path) {
  if (records.empty()) throw ConfigError("export_series: empty metrics stream");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open series file " + path.string() + " for writing");
  out << "step,loss_total,loss_think,loss_speak,lr,thought_ppl\n";
  out.precision(17);
  for (const auto& r : records) {
    out << r.step << "," << r.loss_total << "," << r.loss_think << "," << r.loss_speak << ","
        << r.lr << "," << r.thought_ppl << "\n";
  }
  if (!out) throw Error("failed writing series file " + path.string());
}

std::vector<MetricsRecord> read_series_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open series file " + path.string());
  std::string header;
  std::getline(in, header);
  std::vector<MetricsRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    MetricsRecord r;
    char comma;
    ls >> r.step >> comma >> r.loss_total >> comma >> r.loss_think >> comma >> r.loss_speak >>
        comma >> r.lr >> comma >> r.thought_ppl;
    if (!ls) throw Error("malformed series row: " + line);
    records.push_back(r);
  }
  return records;
}

void write_metrics_jsonl(const std::filesystem::path& path,
                         const std::vector<MetricsRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open metrics file " + path.string() + " for writing");
  for (const auto& r : records) {
    json j{{"step", r.step},          {"loss_total", r.loss_total},
           {"loss_think", r.loss_think}, {"loss_speak", r.loss_speak},
           {"lr", r.lr},              {"thought_ppl", r.thought_ppl},
           {"wall_ms", r.wall_ms}};
    out << j.dump() << "\n";
  }
  if (!out) throw Error("failed writing metrics file " + path.string());
}

std::vector<MetricsRecord> read_metrics_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open metrics file " + path.string());
  std::vector<MetricsRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    MetricsRecord r;
    r.step = j.at("step").get<long>();
    r.loss_total = j.at("loss_total").get<double>();
    r.loss_think = j.at("loss_think").get<double>();
    r.loss_speak = j.at("loss_speak").get<double>();
    r.lr = j.at("lr").get<double>();
    r.thought_ppl = j.at("thought_ppl").get<double>();
    r.wall_ms = j.value("wall_ms", 0.0);
    records.push_back(r);
  }
  return records;
}

}  // namespace methanol
