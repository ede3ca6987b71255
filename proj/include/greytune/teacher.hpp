#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "greytune/common.hpp"
#include "greytune/corpus.hpp"

namespace greytune {

enum class PromptKind { Facts, Qa, KeyTopic, Grading };
enum class TeacherMode { Live, Replay, Record };

/// The student answers being graded were generated elsewhere under this
/// new-token cap; kept as metadata so evaluation settings stay traceable.
inline constexpr int kStudentAnswerMaxNewTokens = 50;
inline constexpr int kGradingMaxNewTokens = 50;
inline constexpr int kGenerationMaxNewTokens = 4096;
inline constexpr int kParallelHint = 128;
inline constexpr int kEvalIndexCount = 20;

struct ChatExchange {
  std::string system;
  std::string user;
  int max_new_tokens = kGenerationMaxNewTokens;
  int parallel_hint = kParallelHint;

  bool operator==(const ChatExchange&) const = default;
};

struct GradeResult {
  int rating = 0;
  std::string justification;

  bool operator==(const GradeResult&) const = default;
};

struct TeacherEndpoint {
  std::string base_url;
  std::string auth_token;
  TeacherMode mode = TeacherMode::Replay;
  std::filesystem::path fixture_path;
  int max_in_flight = 8;
  int retries = 2;
};

struct PromptTemplate {
  std::string system;
  std::string user;
  std::vector<std::string> placeholders;
};

/// The raw template for one prompt kind, placeholders unexpanded.
const PromptTemplate& prompt_template(PromptKind kind);

/// Instantiates a template. Bindings must supply exactly the template's
/// placeholder set: a missing binding raises DataError naming the
/// placeholder, an unrecognized binding key raises DataError too.
ChatExchange render_prompt(PromptKind kind,
                           const std::map<std::string, std::string>& bindings);

json chat_request(const ChatExchange& exchange);

std::uint64_t chat_request_hash(const ChatExchange& exchange);

/// Chat-completion client. Replay mode answers from the fixture file and
/// never touches the network; record mode forwards to the live endpoint
/// and appends request/response fixtures in submission order.
class TeacherClient {
 public:
  explicit TeacherClient(TeacherEndpoint endpoint);
  ~TeacherClient();

  TeacherClient(const TeacherClient&) = delete;
  TeacherClient& operator=(const TeacherClient&) = delete;

  std::string complete(const ChatExchange& exchange);
  std::vector<std::string> complete_batch(
      const std::vector<ChatExchange>& batch);

  const TeacherEndpoint& endpoint() const { return endpoint_; }

  /// Reads TEACHER_BASE_URL and TEACHER_API_TOKEN; live and record modes
  /// require the base URL.
  static TeacherEndpoint endpoint_from_env(
      TeacherMode mode, const std::filesystem::path& fixture_path = {});

 private:
  std::string complete_live(const ChatExchange& exchange);
  std::string complete_replay(const ChatExchange& exchange);

  TeacherEndpoint endpoint_;
  std::map<std::uint64_t, std::deque<json>> fixtures_;
  std::mutex record_mutex_;
  std::ofstream record_out_;
};

/// Writes a fixture file mapping each exchange to a canned wire response.
void write_fixture_file(const std::filesystem::path& path,
                        const std::vector<std::pair<ChatExchange, json>>& entries);

/// Wraps plain content as the wire-format chat response.
json make_chat_response(const std::string& content);

std::vector<std::string> extract_facts(const std::string& fragment,
                                       const std::string& key_topic,
                                       TeacherClient& client);

/// nullopt means the teacher skipped the fact as too broad. Returned pairs
/// carry an empty fact_id; callers assign identifiers.
std::optional<std::vector<QaPair>> generate_qa(const std::string& fact,
                                               const std::string& key_topic,
                                               const std::string& title,
                                               TeacherClient& client);

std::string fetch_key_topic(const std::string& paper_summary,
                            TeacherClient& client);

GradeResult grade(const std::string& question, const std::string& sample_answer,
                  const std::string& gen_answer, const std::string& key_topic,
                  TeacherClient& client);

/// The fixed evaluation subset for one (dataset, split, seed) triple:
/// min(20, n) indices chosen by seeded shuffle.
std::vector<std::size_t> select_eval_indices(const std::string& dataset_id,
                                             const std::string& split_name,
                                             std::size_t split_size,
                                             std::uint64_t eval_seed);

/// Grades the generated answers on the fixed evaluation subset of the
/// chosen split and returns mean rating.
double evaluate_answers(const QaDataset& dataset, const std::string& split_name,
                        const std::map<std::string, std::string>& answers,
                        TeacherClient& client, std::uint64_t eval_seed);

struct GenerateStats {
  int fragments = 0;
  int facts_total = 0;
  int facts_skipped = 0;
};

/// Full document-to-dataset pipeline: fragments the document, asks the
/// teacher for the key topic (from the leading fragment), extracts facts
/// per fragment, generates 12 QA pairs per non-skipped fact, and splits
/// each fact's pairs 10/1/1 with a generator forked from `seed`. Fact ids
/// are assigned in acceptance order.
QaDataset generate_qa_dataset(const std::string& document,
                              const std::string& dataset_id,
                              const std::string& title, TeacherClient& client,
                              std::uint64_t seed,
                              GenerateStats* stats = nullptr);

}  // namespace greytune
