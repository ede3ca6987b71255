#include "greytune/teacher.hpp"

#include <atomic>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <thread>

#include <httplib.h>

#include "greytune/jsonl.hpp"

namespace greytune {
namespace {

// Right single quote (U+2019); the templates reproduce it verbatim.
#define RSQ "\xe2\x80\x99"

const PromptTemplate kFactsTemplate = {
    "You are an AI assistant who knows about current artificial intelligence. "
    "Be precise but concise in your answer.",
    "Please break down the following snippet from an article about "
    "{key_topic} into atomic facts.\\nGoal 1: The atomic facts should be as "
    "simple as possible, if it" RSQ "s a compound sentence, break down one "
    "more time.\\nGoal 2: For clarity, avoid using pronouns like " RSQ
    "it" RSQ ", " RSQ "he" RSQ ", " RSQ "she" RSQ ", " RSQ "this" RSQ ", " RSQ
    "that" RSQ " etc., and instead use the full names or titles.\\nGoal 3: "
    "Output in the format: 1.fact_1\\n\\n{passage}\\n\\n1.",
    {"key_topic", "passage"}};

const PromptTemplate kQaTemplate = {
    "You are an AI assistant who knows about factual information about the "
    "paper with the title: {paper title}. Be precise but concise in your "
    "answer.",
    "Write 12 pairs of questions and answers probing the facts and "
    "statistics the given fact {fact} about {key_topic}.\\nConsider first "
    "generating questions and answers that are very relevant and explicit "
    "to the fact, then paraphrase those questions and answers to reach the "
    "desired 12 Q&A pairs. If the fact is too broad or not specific enough "
    "to {theme}, you may reply with only with 'SKIP' and be "
    "done.\\nEXAMPLE:\\nFACT: 14 million viewers tuned in to the opening "
    "game of the series.\\n1. Q: How many viewers watched the first game? "
    "A: 14 million people watched the first game of the "
    "series.\\n\\nEXAMPLE:\\nFACT: The rose is red.\\nSKIP\\n\\nFACT: "
    "{fact['fact']}\\n1. ",
    {"paper title", "fact", "key_topic"}};

const PromptTemplate kKeyTopicTemplate = {
    "You are given a summary of the scientific paper. Return the key topic "
    "of this paper an nothing else",
    "{paper summary}",
    {"paper summary"}};

const PromptTemplate kGradingTemplate = {
    "You are a high school teacher grading student" RSQ "s responses for "
    "questions about {key_topic}. These responses are either correct or "
    "incorrect.",
    "Please evaluate the correctness of a sentence in answering the "
    "question: \"{question}\".\\nThe correct answer is: "
    "\"{sample_answer}\"\\nThe student response is: "
    "\"{gen_answer}\".\\nYour grading is binary. Give 0 if the sentence is "
    "incorrect, give 1 if the sentence is correct, based on the given "
    "correct answer and the question.\\n\"Please note that your output is "
    "either 0 or 1, with the corresponding justification as python dict in "
    "the following format and nothing else:\\n r\"{'rating': <rating>, "
    "'justification': <justification>}",
    {"key_topic", "question", "sample_answer", "gen_answer"}};

#undef RSQ

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/// Single-pass placeholder expansion: only names from the template's
/// placeholder list are substituted; any other brace group stays verbatim.
std::string expand(const std::string& tmpl,
                   const std::vector<std::string>& names,
                   const std::map<std::string, std::string>& bindings) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] != '{') {
      out += tmpl[i++];
      continue;
    }
    const std::size_t close = tmpl.find('}', i + 1);
    if (close == std::string::npos) {
      out += tmpl.substr(i);
      break;
    }
    const std::string name = tmpl.substr(i + 1, close - i - 1);
    if (std::find(names.begin(), names.end(), name) != names.end()) {
      out += bindings.at(name);
    } else {
      out += tmpl.substr(i, close - i + 1);
    }
    i = close + 1;
  }
  return out;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

json extract_wire_content_json(const json& response) {
  try {
    return response.at("choices").at(0).at("message").at("content");
  } catch (const json::exception&) {
    throw TeacherError("malformed chat response: " + response.dump());
  }
}

std::string extract_content(const json& response) {
  const json content = extract_wire_content_json(response);
  if (!content.is_string()) {
    throw TeacherError("chat response content is not a string: " +
                       response.dump());
  }
  return content.get<std::string>();
}

struct NumberedItem {
  std::string text;
};

/// Parses "1. ...\n2. ..." responses; unnumbered continuation lines join
/// their item with a space. A leading unnumbered line is a parse failure.
std::vector<std::string> parse_numbered_list(const std::string& response) {
  std::vector<std::string> items;
  bool have_item = false;
  std::size_t pos = 0;
  while (pos <= response.size()) {
    const std::size_t eol = response.find('\n', pos);
    const std::string line = trim(
        response.substr(pos, eol == std::string::npos ? eol : eol - pos));
    pos = eol == std::string::npos ? response.size() + 1 : eol + 1;
    if (line.empty()) continue;
    std::size_t j = 0;
    while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) {
      ++j;
    }
    if (j > 0 && j < line.size() && line[j] == '.') {
      items.push_back(trim(line.substr(j + 1)));
      have_item = true;
    } else if (have_item) {
      items.back() += (items.back().empty() ? "" : " ") + line;
    } else {
      throw TeacherError("cannot parse numbered list in teacher response: " +
                         response);
    }
  }
  std::erase_if(items, [](const std::string& s) { return s.empty(); });
  if (items.empty()) {
    throw TeacherError("teacher response contains no list items: " + response);
  }
  return items;
}

std::optional<GradeResult> try_parse_grade(const std::string& response) {
  const std::size_t rpos = response.find("rating");
  if (rpos == std::string::npos) return std::nullopt;
  std::size_t i = rpos + 6;
  while (i < response.size() &&
         (std::isspace(static_cast<unsigned char>(response[i])) ||
          response[i] == '\'' || response[i] == '"' || response[i] == ':')) {
    ++i;
  }
  std::size_t j = i;
  if (j < response.size() && response[j] == '-') ++j;
  while (j < response.size() &&
         std::isdigit(static_cast<unsigned char>(response[j]))) {
    ++j;
  }
  if (j == i || (response[i] == '-' && j == i + 1)) return std::nullopt;
  const long r = std::strtol(response.substr(i, j - i).c_str(), nullptr, 10);

  GradeResult result;
  result.rating = r != 0 ? 1 : 0;
  const std::size_t jpos = response.find("justification", j);
  if (jpos != std::string::npos) {
    std::size_t k = jpos + 13;
    while (k < response.size() &&
           (std::isspace(static_cast<unsigned char>(response[k])) ||
            response[k] == '\'' || response[k] == '"' || response[k] == ':')) {
      ++k;
    }
    std::string value = response.substr(k);
    while (!value.empty() &&
           (std::isspace(static_cast<unsigned char>(value.back())) ||
            value.back() == '}' || value.back() == '\'' ||
            value.back() == '"')) {
      value.pop_back();
    }
    result.justification = value;
  }
  return result;
}

}  // namespace

const PromptTemplate& prompt_template(PromptKind kind) {
  switch (kind) {
    case PromptKind::Facts:
      return kFactsTemplate;
    case PromptKind::Qa:
      return kQaTemplate;
    case PromptKind::KeyTopic:
      return kKeyTopicTemplate;
    case PromptKind::Grading:
      return kGradingTemplate;
  }
  throw DataError("unknown prompt kind");
}

ChatExchange render_prompt(PromptKind kind,
                           const std::map<std::string, std::string>& bindings) {
  const PromptTemplate& tmpl = prompt_template(kind);
  for (const std::string& name : tmpl.placeholders) {
    if (!bindings.contains(name)) {
      throw DataError("missing binding for placeholder \"" + name + "\"");
    }
  }
  for (const auto& [key, value] : bindings) {
    (void)value;
    if (std::find(tmpl.placeholders.begin(), tmpl.placeholders.end(), key) ==
        tmpl.placeholders.end()) {
      throw DataError("unknown placeholder \"" + key + "\"");
    }
  }
  ChatExchange ex;
  ex.system = expand(tmpl.system, tmpl.placeholders, bindings);
  ex.user = expand(tmpl.user, tmpl.placeholders, bindings);
  ex.max_new_tokens = kind == PromptKind::Grading ? kGradingMaxNewTokens
                                                  : kGenerationMaxNewTokens;
  ex.parallel_hint = kParallelHint;
  if (ex.system.empty() || ex.user.empty()) {
    throw DataError("rendered prompt must have non-empty system and user text");
  }
  return ex;
}

json chat_request(const ChatExchange& exchange) {
  return {{"messages",
           json::array({json{{"role", "system"}, {"content", exchange.system}},
                        json{{"role", "user"}, {"content", exchange.user}}})},
          {"max_tokens", exchange.max_new_tokens}};
}

std::uint64_t chat_request_hash(const ChatExchange& exchange) {
  return fnv1a64(chat_request(exchange).dump());
}

TeacherClient::TeacherClient(TeacherEndpoint endpoint)
    : endpoint_(std::move(endpoint)) {
  switch (endpoint_.mode) {
    case TeacherMode::Replay: {
      if (endpoint_.fixture_path.empty()) {
        throw TeacherError("replay mode requires a fixture file");
      }
      for_each_jsonl(endpoint_.fixture_path, [&](const json& rec, int lineno) {
        const std::string where = endpoint_.fixture_path.string() + ":" +
                                  std::to_string(lineno);
        if (!rec.contains("request_hash") || !rec.contains("response")) {
          throw TeacherError(where + ": fixture record needs request_hash and response");
        }
        const std::string hex = rec.at("request_hash").get<std::string>();
        const std::uint64_t h = std::strtoull(hex.c_str(), nullptr, 16);
        if (rec.contains("request") &&
            fnv1a64(rec.at("request").dump()) != h) {
          throw TeacherError(where + ": request_hash does not match request");
        }
        fixtures_[h].push_back(rec.at("response"));
      });
      break;
    }
    case TeacherMode::Record: {
      if (endpoint_.base_url.empty()) {
        throw TeacherError("record mode requires a base URL");
      }
      if (endpoint_.fixture_path.empty()) {
        throw TeacherError("record mode requires a fixture file");
      }
      record_out_.open(endpoint_.fixture_path, std::ios::app);
      if (!record_out_) {
        throw TeacherError("cannot open fixture file for append: " +
                           endpoint_.fixture_path.string());
      }
      break;
    }
    case TeacherMode::Live:
      if (endpoint_.base_url.empty()) {
        throw TeacherError("live mode requires a base URL");
      }
      break;
  }
}

TeacherClient::~TeacherClient() = default;

namespace {

json post_chat(const TeacherEndpoint& endpoint, const ChatExchange& exchange) {
  const std::string body = chat_request(exchange).dump();
  std::string last_error;
  for (int attempt = 0; attempt <= endpoint.retries; ++attempt) {
    httplib::Client cli(endpoint.base_url);
    cli.set_read_timeout(600, 0);
    httplib::Headers headers;
    if (!endpoint.auth_token.empty()) {
      headers.emplace("Authorization", "Bearer " + endpoint.auth_token);
    }
    auto res = cli.Post("/v1/chat/completions", headers, body,
                        "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "status " + std::to_string(res->status);
      continue;
    }
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      last_error = std::string("invalid JSON body: ") + e.what();
    }
  }
  throw TeacherError("teacher endpoint failed after " +
                     std::to_string(endpoint.retries + 1) + " attempts (" +
                     last_error + ")");
}

}  // namespace

std::string TeacherClient::complete_replay(const ChatExchange& exchange) {
  const std::uint64_t h = chat_request_hash(exchange);
  const auto it = fixtures_.find(h);
  if (it == fixtures_.end() || it->second.empty()) {
    throw TeacherError("no fixture for request (hash " + hash_hex(h) + ")");
  }
  // The final fixture for a request is sticky so repeated asks replay it.
  json response = it->second.front();
  if (it->second.size() > 1) it->second.pop_front();
  return extract_content(response);
}

std::string TeacherClient::complete_live(const ChatExchange& exchange) {
  const json response = post_chat(endpoint_, exchange);
  const std::string content = extract_content(response);
  if (endpoint_.mode == TeacherMode::Record) {
    const std::scoped_lock lock(record_mutex_);
    const json line = {{"request_hash", hash_hex(chat_request_hash(exchange))},
                       {"request", chat_request(exchange)},
                       {"response", response}};
    record_out_ << line.dump() << '\n';
    record_out_.flush();
  }
  return content;
}

std::string TeacherClient::complete(const ChatExchange& exchange) {
  return endpoint_.mode == TeacherMode::Replay ? complete_replay(exchange)
                                               : complete_live(exchange);
}

std::vector<std::string> TeacherClient::complete_batch(
    const std::vector<ChatExchange>& batch) {
  std::vector<std::string> results(batch.size());
  if (endpoint_.mode == TeacherMode::Replay) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      results[i] = complete_replay(batch[i]);
    }
    return results;
  }
  const std::size_t workers = std::min<std::size_t>(
      std::max(1, endpoint_.max_in_flight), batch.size());
  std::vector<json> responses(batch.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr error;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      std::size_t i;
      while ((i = next.fetch_add(1)) < batch.size()) {
        try {
          responses[i] = post_chat(endpoint_, batch[i]);
          results[i] = extract_content(responses[i]);
        } catch (...) {
          const std::scoped_lock lock(err_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  if (endpoint_.mode == TeacherMode::Record) {
    const std::scoped_lock lock(record_mutex_);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const json line = {
          {"request_hash", hash_hex(chat_request_hash(batch[i]))},
          {"request", chat_request(batch[i])},
          {"response", responses[i]}};
      record_out_ << line.dump() << '\n';
    }
    record_out_.flush();
  }
  return results;
}

TeacherEndpoint TeacherClient::endpoint_from_env(
    TeacherMode mode, const std::filesystem::path& fixture_path) {
  TeacherEndpoint ep;
  ep.mode = mode;
  ep.fixture_path = fixture_path;
  if (const char* url = std::getenv("TEACHER_BASE_URL")) ep.base_url = url;
  if (const char* tok = std::getenv("TEACHER_API_TOKEN")) ep.auth_token = tok;
  if (mode != TeacherMode::Replay && ep.base_url.empty()) {
    throw TeacherError("TEACHER_BASE_URL is not set");
  }
  return ep;
}

void write_fixture_file(
    const std::filesystem::path& path,
    const std::vector<std::pair<ChatExchange, json>>& entries) {
  std::vector<json> lines;
  for (const auto& [exchange, response] : entries) {
    lines.push_back({{"request_hash", hash_hex(chat_request_hash(exchange))},
                     {"request", chat_request(exchange)},
                     {"response", response}});
  }
  write_jsonl(path, lines);
}

json make_chat_response(const std::string& content) {
  return {{"choices", json::array({json{
              {"message", json{{"content", content}}}}})}};
}

std::vector<std::string> extract_facts(const std::string& fragment,
                                       const std::string& key_topic,
                                       TeacherClient& client) {
  if (fragment.empty()) throw DataError("fragment must be non-empty");
  const ChatExchange ex = render_prompt(
      PromptKind::Facts, {{"key_topic", key_topic}, {"passage", fragment}});
  return parse_numbered_list(client.complete(ex));
}

std::optional<std::vector<QaPair>> generate_qa(const std::string& fact,
                                               const std::string& key_topic,
                                               const std::string& title,
                                               TeacherClient& client) {
  if (fact.empty()) throw DataError("fact must be non-empty");
  const ChatExchange ex =
      render_prompt(PromptKind::Qa, {{"fact", fact},
                                     {"key_topic", key_topic},
                                     {"paper title", title}});
  const std::string response = client.complete(ex);
  if (trim(response) == "SKIP") return std::nullopt;
  const std::vector<std::string> items = parse_numbered_list(response);
  if (items.size() != static_cast<std::size_t>(kPairsPerFact)) {
    throw TeacherError("expected " + std::to_string(kPairsPerFact) +
                       " QA pairs, got " + std::to_string(items.size()));
  }
  std::vector<QaPair> pairs;
  for (const std::string& item : items) {
    if (item.rfind("Q:", 0) != 0) {
      throw TeacherError("QA item does not start with Q: " + item);
    }
    std::size_t a = item.find("A:", 2);
    while (a != std::string::npos && a > 0 &&
           !std::isspace(static_cast<unsigned char>(item[a - 1]))) {
      a = item.find("A:", a + 2);
    }
    if (a == std::string::npos) {
      throw TeacherError("QA item has no answer: " + item);
    }
    QaPair p;
    p.question = trim(item.substr(2, a - 2));
    p.answer = trim(item.substr(a + 2));
    if (p.question.empty() || p.answer.empty()) {
      throw TeacherError("QA item has empty question or answer: " + item);
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::string fetch_key_topic(const std::string& paper_summary,
                            TeacherClient& client) {
  if (paper_summary.empty()) throw DataError("paper summary must be non-empty");
  const ChatExchange ex =
      render_prompt(PromptKind::KeyTopic, {{"paper summary", paper_summary}});
  const std::string topic = trim(client.complete(ex));
  if (topic.empty()) throw TeacherError("teacher returned an empty key topic");
  return topic;
}

GradeResult grade(const std::string& question, const std::string& sample_answer,
                  const std::string& gen_answer, const std::string& key_topic,
                  TeacherClient& client) {
  if (question.empty() || sample_answer.empty() || gen_answer.empty() ||
      key_topic.empty()) {
    throw DataError("grade requires non-empty question, answers, and topic");
  }
  const ChatExchange ex = render_prompt(PromptKind::Grading,
                                        {{"key_topic", key_topic},
                                         {"question", question},
                                         {"sample_answer", sample_answer},
                                         {"gen_answer", gen_answer}});
  for (int attempt = 0; attempt < 2; ++attempt) {
    const std::string response = client.complete(ex);
    if (const auto result = try_parse_grade(response)) return *result;
  }
  std::fprintf(stderr,
               "warning: unparseable grade response twice, scoring 0 "
               "(question: %.60s)\n",
               question.c_str());
  return GradeResult{0, "PARSE_FAILURE"};
}

std::vector<std::size_t> select_eval_indices(const std::string& dataset_id,
                                             const std::string& split_name,
                                             std::size_t split_size,
                                             std::uint64_t eval_seed) {
  if (split_size == 0) return {};
  const std::uint64_t seed = fnv1a64(dataset_id + "\x1f" + split_name + "\x1f" +
                                     std::to_string(eval_seed));
  Rng rng(seed);
  std::vector<std::size_t> order(split_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  order.resize(std::min<std::size_t>(kEvalIndexCount, split_size));
  return order;
}

double evaluate_answers(const QaDataset& dataset, const std::string& split_name,
                        const std::map<std::string, std::string>& answers,
                        TeacherClient& client, std::uint64_t eval_seed) {
  const std::vector<QaPair>* split = nullptr;
  if (split_name == "val") {
    split = &dataset.val;
  } else if (split_name == "test") {
    split = &dataset.test;
  } else {
    throw DataError("split must be \"val\" or \"test\", got \"" + split_name +
                    "\"");
  }
  if (split->empty()) throw DataError("selected split is empty");
  const auto indices =
      select_eval_indices(dataset.dataset_id, split_name, split->size(),
                          eval_seed);
  double sum = 0.0;
  for (const std::size_t i : indices) {
    const QaPair& pair = (*split)[i];
    const auto it = answers.find(pair.question);
    if (it == answers.end()) {
      throw DataError("missing answer for question: " + pair.question);
    }
    sum += grade(pair.question, pair.answer, it->second, dataset.key_topic,
                 client).rating;
  }
  return sum / static_cast<double>(indices.size());
}

QaDataset generate_qa_dataset(const std::string& document,
                              const std::string& dataset_id,
                              const std::string& title, TeacherClient& client,
                              std::uint64_t seed, GenerateStats* stats) {
  if (document.empty()) throw DataError("document is empty");
  if (dataset_id.empty()) throw DataError("dataset_id is empty");
  if (title.empty()) throw DataError("title is empty");

  QaDataset ds;
  ds.dataset_id = dataset_id;
  ds.title = title;

  const std::vector<std::string> fragments = chunk_text(document);
  ds.key_topic = fetch_key_topic(fragments.front(), client);

  Rng split_rng = Rng(seed).fork("split");
  GenerateStats counts;
  counts.fragments = static_cast<int>(fragments.size());
  int accepted = 0;
  for (const std::string& fragment : fragments) {
    for (const std::string& fact :
         extract_facts(fragment, ds.key_topic, client)) {
      ++counts.facts_total;
      auto pairs = generate_qa(fact, ds.key_topic, ds.title, client);
      if (!pairs) {
        ++counts.facts_skipped;
        continue;
      }
      const std::string fact_id = "fact_" + std::to_string(++accepted);
      for (QaPair& p : *pairs) p.fact_id = fact_id;
      SplitPairs split = split_pairs(*pairs, split_rng);
      ds.train.insert(ds.train.end(), split.train.begin(), split.train.end());
      ds.val.insert(ds.val.end(), split.val.begin(), split.val.end());
      ds.test.insert(ds.test.end(), split.test.begin(), split.test.end());
    }
  }
  if (accepted == 0) throw DataError("every extracted fact was skipped");
  if (const auto violations = validate_dataset(ds); !violations.empty()) {
    throw DataError("generated dataset is invalid: " + violations.front());
  }
  if (stats) *stats = counts;
  return ds;
}

}  // namespace greytune
