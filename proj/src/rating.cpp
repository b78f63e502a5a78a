#include "forge/rating.hpp"

#include "forge/error.hpp"

namespace forge::review {

std::string_view to_string(Purpose p) { return p == Purpose::curation_verify ? "curation_verify" : "likert_eval"; }

Purpose purpose_from_string(std::string_view s) {
  if (s == "curation_verify") return Purpose::curation_verify;
  if (s == "likert_eval") return Purpose::likert_eval;
  throw Error("BadRequest", "purpose " + std::string(s));
}

std::string_view to_string(Verdict v) { return v == Verdict::approve ? "approve" : "edit"; }

Verdict verdict_from_string(std::string_view s) {
  if (s == "approve") return Verdict::approve;
  if (s == "edit") return Verdict::edit;
  throw Error("BadRequest", "verdict " + std::string(s));
}

json rating_to_json(const RatingEvent& e) {
  json j{{"event_id", e.event_id},   {"session_id", e.session_id}, {"item_id", e.item_id},
         {"rater_id", e.rater_id},   {"rationale", e.rationale},   {"submitted_at", e.submitted_at},
         {"supersedes", e.supersedes}};
  if (e.scores) {
    j["scores"] = {{"correctness", e.scores->correctness},
                   {"completeness", e.scores->completeness},
                   {"conciseness", e.scores->conciseness}};
  }
  if (e.verdict) {
    j["verdict"] = std::string(to_string(*e.verdict));
    j["edited_explanation"] = e.edited_explanation;
  }
  return j;
}

RatingEvent rating_from_json(const json& j) {
  RatingEvent e;
  e.event_id = j.value("event_id", "");
  e.session_id = j.at("session_id").get<std::string>();
  e.item_id = j.at("item_id").get<std::string>();
  e.rater_id = j.at("rater_id").get<std::string>();
  if (j.contains("scores") && !j["scores"].is_null()) {
    const auto& s = j["scores"];
    for (const char* k : {"correctness", "completeness", "conciseness"}) {
      if (!s.contains(k) || !s[k].is_number_integer()) throw Error("BadRequest", std::string("scores.") + k);
    }
    e.scores = LikertScores{s["correctness"].get<int>(), s["completeness"].get<int>(), s["conciseness"].get<int>()};
  }
  if (j.contains("verdict") && !j["verdict"].is_null()) {
    e.verdict = verdict_from_string(j["verdict"].get<std::string>());
    e.edited_explanation = j.value("edited_explanation", "");
  }
  e.rationale = j.value("rationale", "");
  e.submitted_at = j.value("submitted_at", "");
  e.supersedes = j.value("supersedes", "");
  return e;
}

}  // namespace forge::review
