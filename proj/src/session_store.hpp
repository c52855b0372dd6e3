#pragma once

// Persistent experiment sessions.
//
// Layout under the data directory:
//   courses/<course_id>.json           course documents
//   sessions/<id>/events.jsonl         append-only event log (source of truth)
//   sessions/<id>/state.json           derived snapshot, rewritten after each event
//   sessions/<id>/set_NN.frames.jsonl  authoritative (replayed) frame log
//   sessions/<id>/set_NN.submitted.jsonl  frame log as submitted by the client

#include "protocol.hpp"
#include "table.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace delaylab {

struct RatingRecord {
    int set_index = 0;
    int q1_control = 0; ///< "under your control", 0..100
    int q2_desired = 0; ///< "as you desired", 0..100
    std::string timestamp;
};

struct SetResult {
    std::optional<double> score;
    int mismatches = 0; ///< submitted records differing from the replay
    std::string frames_at;
    std::optional<RatingRecord> rating;

    bool complete() const { return score.has_value() && rating.has_value(); }
};

struct SessionInfo {
    std::string session_id;
    std::string study;
    std::string created_at;
    SessionPlan plan;
    std::vector<SetResult> results; ///< one per plan set
};

struct CreateRequest {
    std::string study = "default";
    std::string participant_id;
    int participant_index = 0;
    std::uint64_t seed = 0;
};

struct NextSet {
    bool complete = false;
    std::optional<SetSpec> set;
};

class SessionStore {
  public:
    /// Creates the directory tree and writes the default course documents
    /// unless course files already exist. Throws Error(io) when the
    /// directory is not writable.
    explicit SessionStore(std::filesystem::path root);

    const std::filesystem::path &root() const { return root_; }

    /// Idempotent for identical requests: returns the existing session.
    SessionInfo create(const CreateRequest &request);
    SessionInfo get(const std::string &session_id);
    std::vector<std::string> list_sessions();

    NextSet next_set(const std::string &session_id);
    const Course &course(const std::string &course_id) const;

    /// Validates the log, replays its raw inputs with the set's channel seed
    /// and stores the replay; the returned score is computed from the replay.
    /// Resubmitting an identical log for an already scored active set is a no-op.
    double record_frames(const std::string &session_id, int set_index, std::string_view jsonl);
    /// Integer ratings in [0, 100], only after the frames of that set.
    RatingRecord record_rating(const std::string &session_id, int set_index, int q1, int q2);
    /// Frames then rating.
    double record_set(const std::string &session_id, int set_index, std::string_view jsonl, int q1, int q2);

    std::vector<FrameRecord> stored_frames(const std::string &session_id, int set_index);

    /// Per-set rows of completed sets; practice and nondelayed rows are kept
    /// and flagged through `excluded`. Throws Error(domain) when there is no
    /// measured row.
    Table export_session(const std::string &session_id);
    Table export_study(const std::string &study);

    static const std::vector<std::string> &export_columns();

  private:
    struct Entry {
        std::mutex mutex;
        SessionInfo info;
    };

    std::shared_ptr<Entry> entry(const std::string &session_id);
    std::shared_ptr<Entry> load(const std::string &session_id);
    void append_event(const SessionInfo &info, const nlohmann::json &event);
    void write_snapshot(const SessionInfo &info);
    void export_rows(const SessionInfo &info, Table &out);

    std::filesystem::path root_;
    std::map<std::string, Course> courses_;
    std::mutex map_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

/// Session id derived from the creation request; stable across restarts.
std::string session_id_for(const CreateRequest &request);

/// Labels must be 1-64 characters of [A-Za-z0-9_.-].
bool valid_label(std::string_view label);

} // namespace delaylab
