#include "gidea/evalpipe.hpp"

#include <sstream>

#include "gidea/engine.hpp"
#include "gidea/errors.hpp"
#include "gidea/metrics.hpp"

namespace gidea {

namespace fs = std::filesystem;

namespace {

std::string substitute(std::string text, const std::string& slot, const std::string& value) {
  const auto pos = text.find(slot);
  if (pos != std::string::npos) text.replace(pos, slot.size(), value);
  return text;
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

}  // namespace

std::string render_research_questions(const std::vector<std::string>& rqs) {
  if (rqs.size() == 1) return rqs.front();
  std::string out;
  for (std::size_t i = 0; i < rqs.size(); ++i) out += "\nRQ" + std::to_string(i + 1) + ": " + rqs[i];
  return out;
}

ChatRequest summary_request(const FindingsDoc& doc, const std::vector<std::string>& rqs) {
  std::string prompt = substitute(kSummaryTemplate, "[Research Questions]", render_research_questions(rqs));
  prompt = substitute(prompt, "[Activities and Conversations]", doc.raw_text);
  ChatRequest req;
  req.temperature = kAnalysisTemperature;
  req.request_tag = "summarize/" + doc.study_id + "/rq" + std::to_string(doc.rq_index) + "/" + to_string(doc.source);
  req.messages = {{ChatRole::system, kAnalysisSystem}, {ChatRole::user, prompt}};
  return req;
}

ChatRequest revision_request(const std::string& summary, const std::string& tag) {
  ChatRequest req;
  req.temperature = kAnalysisTemperature;
  req.request_tag = tag;
  req.messages = {{ChatRole::system, kAnalysisSystem}, {ChatRole::user, substitute(kRevisionTemplate, "[Summary]", summary)}};
  return req;
}

std::string summarize_for_rq(FindingsDoc& doc, const std::vector<std::string>& rqs, const ModelHandle& model) {
  if (blank(doc.raw_text)) throw PreconditionError("findings text for " + doc.study_id + " rq" + std::to_string(doc.rq_index) + " is empty");
  if (rqs.empty()) throw PreconditionError("summarization needs at least one research question");
  doc.summary = model.call(summary_request(doc, rqs)).text;
  doc.revised_summary.reset();
  return *doc.summary;
}

std::string revise_summary(const std::string& summary, const ModelHandle& model, const std::string& tag) {
  if (blank(summary)) throw PreconditionError("cannot revise an empty summary");
  return model.call(revision_request(summary, tag)).text;
}

void summarize_and_revise(FindingsDoc& doc, const std::vector<std::string>& rqs, const ModelHandle& model) {
  summarize_for_rq(doc, rqs, model);
  doc.revised_summary = revise_summary(
      *doc.summary, model, "revise/" + doc.study_id + "/rq" + std::to_string(doc.rq_index) + "/" + to_string(doc.source));
}

double text_similarity(const std::string& a, const std::string& b, Embedder& embedder, const RetryPolicy& retry,
                       const Sleeper& sleep) {
  if (blank(a) || blank(b)) throw PreconditionError("similarity needs two non-empty texts");
  const auto vecs = embed(embedder, {a, b}, retry, sleep);
  return cosine_similarity(vecs.at(0), vecs.at(1));
}

RQResult score_rq(const StudyConfig& study, int rq_index, const std::string& original_revised,
                  const std::string& simulated_revised, Embedder& embedder, const RetryPolicy& retry,
                  const Sleeper& sleep) {
  if (rq_index < 1 || rq_index > static_cast<int>(study.research_questions.size())) {
    throw PreconditionError("study " + study.study_id + " has no rq" + std::to_string(rq_index));
  }
  RQResult r;
  r.study_id = study.study_id;
  r.rq_index = rq_index;
  r.theme = study.theme;
  r.mode = study.mode;
  r.similarity = text_similarity(original_revised, simulated_revised, embedder, retry, sleep);
  return r;
}

std::map<std::string, double> aggregate(const std::vector<RQResult>& results, GroupBy group_by) {
  if (results.empty()) throw PreconditionError("nothing to aggregate");
  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : results) {
    std::string key;
    switch (group_by) {
      case GroupBy::study:
        key = r.study_id;
        break;
      case GroupBy::theme:
        key = to_string(r.theme);
        break;
      case GroupBy::mode:
        key = to_string(r.mode);
        break;
      case GroupBy::all:
        key = "all";
        break;
    }
    groups[key].push_back(r.similarity);
  }
  std::map<std::string, double> out;
  for (const auto& [k, v] : groups) out[k] = mean(v);
  return out;
}

std::string similarity_csv(const std::vector<RQResult>& results) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : results) {
    rows.push_back({r.study_id, std::to_string(r.rq_index), to_string(r.theme), to_string(r.mode),
                    format_real(r.similarity)});
  }
  return to_csv({"study_id", "rq_index", "theme", "mode", "similarity"}, rows);
}

std::vector<RQResult> parse_similarity_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("similarity CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "study_id,rq_index,theme,mode,similarity") throw ParseError("unexpected similarity CSV header '" + line + "'");
  std::vector<RQResult> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    const std::string where = "similarity CSV line " + std::to_string(line_no);
    if (f.size() != 5) throw ParseError(where + ": expected 5 fields");
    RQResult r;
    r.study_id = f[0];
    const auto theme = detail::enum_from_name<Theme>(f[2], kThemeNames);
    const auto mode = detail::enum_from_name<Mode>(f[3], kModeNames);
    if (!theme || !mode) throw ParseError(where + ": unknown theme or mode");
    r.theme = *theme;
    r.mode = *mode;
    try {
      std::size_t used = 0;
      r.rq_index = std::stoi(f[1], &used);
      if (used != f[1].size()) throw std::invalid_argument(f[1]);
      r.similarity = std::stod(f[4], &used);
      if (used != f[4].size()) throw std::invalid_argument(f[4]);
    } catch (const std::exception&) {
      throw ParseError(where + ": malformed number");
    }
    if (r.similarity < -1.0 || r.similarity > 1.0) throw ParseError(where + ": similarity outside [-1, 1]");
    out.push_back(std::move(r));
  }
  return out;
}

std::string simulated_log_text(const LoadedRun& run) {
  std::ostringstream out;
  for (const auto& [subject, info] : run.manifest.subjects) {
    out << "Participant " << subject << "\n";
    std::map<int, std::vector<Turn>> by_round;
    for (const auto& e : run.stream(subject, "transcript")) {
      Turn t = Turn::from_json(e.payload);
      by_round[t.round].push_back(std::move(t));
    }
    int round = 0;
    for (const auto& e : run.stream(subject, "schedule")) {
      ++round;
      const auto& p = e.payload;
      out << "\n[" << p.value("start_time", "") << " - " << p.value("end_time", "") << "] Activity: "
          << p.value("activity", "") << "\n";
      for (const auto& t : by_round[round]) {
        out << (t.speaker == Speaker::assistant ? "Assistant: " : "Participant: ") << t.text;
        if (t.decision != Decision::none) out << " (" << to_string(t.decision) << ")";
        out << "\n";
      }
    }
    auto iv = run.interviews.find(subject);
    if (iv != run.interviews.end()) {
      for (const char* phase : {"pre", "mid", "post"}) {
        if (!iv->second.contains(phase)) continue;
        out << "\nInterview (" << phase << "):\n";
        for (const auto& a : iv->second[phase]) {
          out << "Q: " << a.value("question", "") << "\nA: " << a.value("answer", "") << "\n";
        }
      }
    }
    out << "\n";
  }
  return out.str();
}

std::vector<FindingsDoc> load_original_findings(const fs::path& findings_root, const StudyConfig& study) {
  std::vector<FindingsDoc> docs;
  for (std::size_t k = 1; k <= study.research_questions.size(); ++k) {
    const fs::path p = findings_root / study.study_id / ("rq" + std::to_string(k) + ".original.txt");
    if (!fs::exists(p)) throw IoError("missing findings file " + p.string());
    FindingsDoc d;
    d.study_id = study.study_id;
    d.rq_index = static_cast<int>(k);
    d.source = FindingsSource::original;
    d.raw_text = read_file(p);
    docs.push_back(std::move(d));
  }
  return docs;
}

fs::path findings_artifact(const fs::path& run_dir, int rq_index, FindingsSource source, const std::string& stage) {
  return run_dir / "analysis" / "findings" / ("rq" + std::to_string(rq_index) + "." + to_string(source) + "." + stage + ".txt");
}

}  // namespace gidea
