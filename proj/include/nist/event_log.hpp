#pragma once

// Append-only event log, the system's primary observable. One JSON object per
// line, sorted keys, LF endings, flushed on every append, so a log file can be
// compared byte for byte against a golden copy and replayed losslessly.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nist/common.hpp"

namespace nist {

// Actor names follow the stratum's functional blocks: NIO, CSOI, PolicyIC,
// ConflictResolver, PolicyManager, NIFManager, NIFCManager, Pipeline, Sender,
// and "NIF:<name>" for in-sim functions.
struct EventRecord {
  LogicalTime t = 0;
  std::uint64_t seq = 0;
  std::string actor;
  std::string action;
  std::string subject;
  std::string outcome;  // "ok" | "denied" | "delayed" | "error:<code>"
  nlohmann::json detail = nlohmann::json::object();

  bool operator==(const EventRecord&) const = default;
};

nlohmann::json event_to_json(const EventRecord& r);
EventRecord event_from_json(const nlohmann::json& j);

std::string error_outcome(ErrorCode code);  // "error:<name>"

class EventLog {
 public:
  // With a path the log is mirrored to disk line by line; without one it is
  // memory-only (unit tests).
  explicit EventLog(std::filesystem::path file = {});

  // Appends with the next sequence number. Time must not run backwards.
  const EventRecord& emit(LogicalTime t, std::string actor, std::string action,
                          std::string subject, std::string outcome,
                          nlohmann::json detail = nlohmann::json::object());
  // throws OrderViolation

  const std::vector<EventRecord>& records() const { return records_; }

  static std::vector<EventRecord> read_file(const std::filesystem::path& file);

 private:
  std::vector<EventRecord> records_;
  std::ofstream out_;
  LogicalTime last_t_ = 0;
  std::uint64_t next_seq_ = 1;
};

}  // namespace nist
