#include "nist/event_log.hpp"

#include "nist/digest.hpp"

namespace nist {

using nlohmann::json;

json event_to_json(const EventRecord& r) {
  return {{"t", r.t},       {"seq", r.seq},         {"actor", r.actor},
          {"action", r.action}, {"subject", r.subject}, {"outcome", r.outcome},
          {"detail", r.detail}};
}

EventRecord event_from_json(const json& j) {
  EventRecord r;
  r.t = j.at("t").get<LogicalTime>();
  r.seq = j.at("seq").get<std::uint64_t>();
  r.actor = j.at("actor").get<std::string>();
  r.action = j.at("action").get<std::string>();
  r.subject = j.at("subject").get<std::string>();
  r.outcome = j.at("outcome").get<std::string>();
  r.detail = j.at("detail");
  return r;
}

std::string error_outcome(ErrorCode code) {
  return std::string("error:") + error_code_name(code);
}

EventLog::EventLog(std::filesystem::path file) {
  if (file.empty()) return;
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  out_.open(file, std::ios::trunc);
  if (!out_) {
    throw NistError(ErrorCode::InvalidState, "cannot open event log at " + file.string());
  }
}

const EventRecord& EventLog::emit(LogicalTime t, std::string actor, std::string action,
                                  std::string subject, std::string outcome,
                                  nlohmann::json detail) {
  if (t < last_t_) {
    throw NistError(ErrorCode::OrderViolation,
                    "event time " + std::to_string(t) + " precedes last record at " +
                        std::to_string(last_t_));
  }
  EventRecord r;
  r.t = t;
  r.seq = next_seq_++;
  r.actor = std::move(actor);
  r.action = std::move(action);
  r.subject = std::move(subject);
  r.outcome = std::move(outcome);
  r.detail = std::move(detail);
  last_t_ = t;
  records_.push_back(std::move(r));
  if (out_.is_open()) {
    out_ << canonical_dump(event_to_json(records_.back())) << "\n";
    out_.flush();
  }
  return records_.back();
}

std::vector<EventRecord> EventLog::read_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw NistError(ErrorCode::ParseError, "cannot read event log at " + file.string());
  }
  std::vector<EventRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(event_from_json(json::parse(line)));
  }
  return out;
}

}  // namespace nist
