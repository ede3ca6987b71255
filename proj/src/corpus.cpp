#include "greytune/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "greytune/jsonl.hpp"
#include "greytune/searchspace.hpp"

namespace greytune {
namespace {

/// Byte length of the whitespace character starting at i, or 0. Covers
/// ASCII whitespace plus the common Unicode space separators.
std::size_t whitespace_len(std::string_view s, std::size_t i) {
  const unsigned char c = s[i];
  if (c < 0x80) return std::isspace(c) ? 1 : 0;
  const auto rest = s.size() - i;
  if (c == 0xC2 && rest >= 2 && static_cast<unsigned char>(s[i + 1]) == 0xA0) {
    return 2;  // no-break space
  }
  if (c == 0xE2 && rest >= 3) {
    const unsigned char b1 = s[i + 1];
    const unsigned char b2 = s[i + 2];
    if (b1 == 0x80 &&
        ((b2 >= 0x80 && b2 <= 0x8A) || b2 == 0xA8 || b2 == 0xA9 || b2 == 0xAF)) {
      return 3;  // en quad .. hair space, line/para separator, narrow nbsp
    }
    if (b1 == 0x81 && b2 == 0x9F) return 3;  // medium mathematical space
  }
  if (c == 0xE3 && rest >= 3 && static_cast<unsigned char>(s[i + 1]) == 0x80 &&
      static_cast<unsigned char>(s[i + 2]) == 0x80) {
    return 3;  // ideographic space
  }
  return 0;
}

/// Byte length of the punctuation character starting at i, or 0.
std::size_t punct_len(std::string_view s, std::size_t i) {
  const unsigned char c = s[i];
  if (c < 0x80) return std::ispunct(c) ? 1 : 0;
  if (c == 0xE2 && s.size() - i >= 3 &&
      static_cast<unsigned char>(s[i + 1]) == 0x80) {
    const unsigned char b2 = s[i + 2];
    if (b2 == 0x98 || b2 == 0x99 || b2 == 0x9C || b2 == 0x9D || b2 == 0x93 ||
        b2 == 0x94 || b2 == 0xA6) {
      return 3;  // curly quotes, dashes, ellipsis
    }
  }
  return 0;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::ostringstream os;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) os << sep;
    os << parts[i];
  }
  return os.str();
}

std::string get_string(const json& rec, const char* key, int lineno,
                       const std::filesystem::path& path) {
  if (!rec.contains(key) || !rec.at(key).is_string()) {
    throw DataError(path.string() + ":" + std::to_string(lineno) +
                    ": missing or non-string field \"" + key + "\"");
  }
  return rec.at(key).get<std::string>();
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    if (const std::size_t w = whitespace_len(text, i)) {
      if (!current.empty()) {
        tokens.push_back(std::move(current));
        current.clear();
      }
      i += w;
    } else if (const std::size_t p = punct_len(text, i)) {
      i += p;
    } else {
      const unsigned char c = text[i];
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c))
                                 : static_cast<char>(c));
      ++i;
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::int64_t count_tokens(std::string_view text) {
  std::int64_t n = 0;
  bool in_token = false;
  std::size_t i = 0;
  while (i < text.size()) {
    if (const std::size_t w = whitespace_len(text, i)) {
      if (in_token) ++n;
      in_token = false;
      i += w;
    } else if (const std::size_t p = punct_len(text, i)) {
      i += p;
    } else {
      in_token = true;
      ++i;
    }
  }
  if (in_token) ++n;
  return n;
}

std::vector<std::string> chunk_text(std::string_view doc,
                                    std::int64_t target_tokens) {
  if (target_tokens <= 0) throw DataError("target_tokens must be positive");
  if (doc.empty()) return {};

  // One scan collects token end positions (just after the run that holds
  // the token) plus paragraph and sentence cut candidates. All candidates
  // sit next to whitespace, so token counts distribute over the cuts.
  std::vector<std::int64_t> token_ends;
  std::vector<std::int64_t> para_cuts;
  std::vector<std::int64_t> sent_cuts;
  {
    bool in_token = false;
    std::size_t i = 0;
    while (i < doc.size()) {
      if (whitespace_len(doc, i)) {
        if (in_token) token_ends.push_back(static_cast<std::int64_t>(i));
        in_token = false;
        const std::size_t run_start = i;
        int newlines = 0;
        while (i < doc.size()) {
          const std::size_t w = whitespace_len(doc, i);
          if (!w) break;
          if (doc[i] == '\n') ++newlines;
          i += w;
        }
        (void)run_start;
        if (newlines >= 2) para_cuts.push_back(static_cast<std::int64_t>(i));
      } else {
        const char c = doc[i];
        if ((c == '.' || c == '!' || c == '?') && i + 1 < doc.size() &&
            whitespace_len(doc, i + 1)) {
          sent_cuts.push_back(static_cast<std::int64_t>(i + 1));
        }
        if (!punct_len(doc, i)) in_token = true;
        ++i;
      }
    }
    if (in_token) token_ends.push_back(static_cast<std::int64_t>(doc.size()));
  }

  const auto tokens_through = [&](std::int64_t pos) {
    return static_cast<std::int64_t>(
        std::upper_bound(token_ends.begin(), token_ends.end(), pos) -
        token_ends.begin());
  };
  const std::int64_t limit = target_tokens * 12 / 10;
  const std::int64_t total_end = static_cast<std::int64_t>(doc.size());

  const auto best_cut = [&](const std::vector<std::int64_t>& cuts,
                            std::int64_t start) {
    std::int64_t best = -1;
    std::int64_t best_diff = std::numeric_limits<std::int64_t>::max();
    const std::int64_t base = tokens_through(start);
    auto it = std::upper_bound(cuts.begin(), cuts.end(), start);
    for (; it != cuts.end() && *it < total_end; ++it) {
      const std::int64_t head = tokens_through(*it) - base;
      if (head <= 0) continue;
      if (head > limit) break;
      const std::int64_t diff = std::abs(head - target_tokens);
      if (diff < best_diff) {
        best_diff = diff;
        best = *it;
      }
    }
    return best;
  };

  std::vector<std::string> fragments;
  std::int64_t start = 0;
  while (true) {
    const std::int64_t remaining = tokens_through(total_end) - tokens_through(start);
    if (remaining <= limit) {
      fragments.emplace_back(doc.substr(start));
      break;
    }
    std::int64_t cut = best_cut(para_cuts, start);
    if (cut < 0) cut = best_cut(sent_cuts, start);
    if (cut < 0) {
      const std::int64_t idx = tokens_through(start) + target_tokens - 1;
      cut = token_ends[static_cast<std::size_t>(idx)];
    }
    fragments.emplace_back(doc.substr(start, cut - start));
    start = cut;
  }
  return fragments;
}

SplitPairs split_pairs(const std::vector<QaPair>& pairs, Rng& rng) {
  if (pairs.size() != static_cast<std::size_t>(kPairsPerFact)) {
    throw DataError("fact must yield 12 pairs");
  }
  for (const QaPair& p : pairs) {
    if (p.fact_id != pairs.front().fact_id) {
      throw DataError("pairs must share one fact_id");
    }
  }
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  SplitPairs out;
  for (int i = 0; i < kTrainPerFact; ++i) out.train.push_back(pairs[order[i]]);
  out.val.push_back(pairs[order[kTrainPerFact]]);
  out.test.push_back(pairs[order[kTrainPerFact + 1]]);
  return out;
}

MetaFeatures compute_meta_features(const QaDataset& dataset) {
  if (dataset.train.empty()) {
    throw DataError("meta-features require a non-empty train split");
  }
  std::int64_t q_tokens = 0;
  std::int64_t a_tokens = 0;
  std::set<std::string> vocab;
  for (const QaPair& p : dataset.train) {
    for (auto& t : tokenize(p.question)) {
      ++q_tokens;
      vocab.insert(std::move(t));
    }
    for (auto& t : tokenize(p.answer)) {
      ++a_tokens;
      vocab.insert(std::move(t));
    }
  }
  if (a_tokens == 0) {
    throw DataError("train split has no answer tokens");
  }
  MetaFeatures mf;
  mf.token_size = q_tokens + a_tokens;
  mf.sample_length = static_cast<double>(mf.token_size) /
                     static_cast<double>(dataset.train.size());
  mf.qa_length_ratio =
      static_cast<double>(q_tokens) / static_cast<double>(a_tokens);
  mf.vocab_size =
      (static_cast<std::int64_t>(vocab.size()) + 5) / 10 * 10;
  return mf;
}

std::int64_t augmentation_count(std::int64_t ltrain, int batch,
                                int grad_accum) {
  if (ltrain < 0) throw DataError("ltrain must be non-negative");
  if (batch <= 0 || grad_accum <= 0) {
    throw DataError("batch and grad_accum must be positive");
  }
  const std::int64_t bg =
      static_cast<std::int64_t>(batch) * static_cast<std::int64_t>(grad_accum);
  return (ltrain + bg - 1) / bg * bg - ltrain;
}

TrainBatchSpec make_train_batch_spec(std::int64_t ltrain, int batch,
                                     int grad_accum) {
  TrainBatchSpec spec;
  spec.ltrain = ltrain;
  spec.batch = batch;
  spec.grad_accum = grad_accum;
  spec.bg = static_cast<std::int64_t>(batch) * grad_accum;
  spec.asc = augmentation_count(ltrain, batch, grad_accum);
  return spec;
}

std::vector<std::string> validate_dataset(const QaDataset& dataset) {
  std::vector<std::string> violations;
  struct Counts {
    int train = 0, val = 0, test = 0;
  };
  std::map<std::string, Counts> by_fact;
  std::set<std::string> seen;
  const auto visit = [&](const std::vector<QaPair>& split, const char* name,
                         int Counts::*slot) {
    for (const QaPair& p : split) {
      by_fact[p.fact_id].*slot += 1;
      if (p.question.empty() || p.answer.empty()) {
        violations.push_back("empty question or answer for fact " + p.fact_id);
      }
      const std::string key = p.fact_id + "\x1f" + p.question + "\x1f" + p.answer;
      if (!seen.insert(key).second) {
        violations.push_back("duplicate pair across splits for fact " +
                             p.fact_id + " (" + name + ")");
      }
    }
  };
  visit(dataset.train, "train", &Counts::train);
  visit(dataset.val, "val", &Counts::val);
  visit(dataset.test, "test", &Counts::test);
  for (const auto& [fact, c] : by_fact) {
    if (c.train != kTrainPerFact || c.val != 1 || c.test != 1) {
      violations.push_back("fact " + fact + " split counts (" +
                           std::to_string(c.train) + "," + std::to_string(c.val) +
                           "," + std::to_string(c.test) + ") != (10,1,1)");
    }
  }
  return violations;
}

void save_dataset(const std::filesystem::path& path, const QaDataset& dataset) {
  std::vector<json> records;
  records.push_back({{"dataset_id", dataset.dataset_id},
                     {"key_topic", dataset.key_topic},
                     {"title", dataset.title},
                     {"tokenizer_id", dataset.tokenizer_id}});
  const auto emit = [&](const std::vector<QaPair>& split, const char* name) {
    for (const QaPair& p : split) {
      records.push_back({{"dataset_id", dataset.dataset_id},
                         {"split", name},
                         {"fact_id", p.fact_id},
                         {"question", p.question},
                         {"answer", p.answer}});
    }
  };
  emit(dataset.train, "train");
  emit(dataset.val, "val");
  emit(dataset.test, "test");
  write_jsonl(path, records);
}

QaDataset load_dataset(const std::filesystem::path& path) {
  QaDataset ds;
  bool have_header = false;
  for_each_jsonl(path, [&](const json& rec, int lineno) {
    if (!have_header) {
      if (!rec.contains("tokenizer_id")) {
        throw DataError(path.string() + ":" + std::to_string(lineno) +
                        ": first record must be the dataset header");
      }
      ds.dataset_id = get_string(rec, "dataset_id", lineno, path);
      ds.key_topic = get_string(rec, "key_topic", lineno, path);
      ds.title = get_string(rec, "title", lineno, path);
      ds.tokenizer_id = get_string(rec, "tokenizer_id", lineno, path);
      have_header = true;
      return;
    }
    const std::string id = get_string(rec, "dataset_id", lineno, path);
    if (id != ds.dataset_id) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": dataset_id \"" + id + "\" does not match header");
    }
    QaPair p;
    p.fact_id = get_string(rec, "fact_id", lineno, path);
    p.question = get_string(rec, "question", lineno, path);
    p.answer = get_string(rec, "answer", lineno, path);
    if (p.question.empty() || p.answer.empty()) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": empty question or answer");
    }
    const std::string split = get_string(rec, "split", lineno, path);
    if (split == "train") {
      ds.train.push_back(std::move(p));
    } else if (split == "val") {
      ds.val.push_back(std::move(p));
    } else if (split == "test") {
      ds.test.push_back(std::move(p));
    } else {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": unknown split \"" + split + "\"");
    }
  });
  if (!have_header) {
    throw DataError(path.string() + ": empty dataset file");
  }
  const auto violations = validate_dataset(ds);
  if (!violations.empty()) {
    throw DataError(path.string() + ": " + join(violations, "; "));
  }
  return ds;
}

json meta_features_to_json(const std::string& dataset_id,
                           const MetaFeatures& mf) {
  return {{"dataset_id", dataset_id},
          {"token_size", mf.token_size},
          {"sample_length", mf.sample_length},
          {"qa_length_ratio", mf.qa_length_ratio},
          {"vocab_size", mf.vocab_size}};
}

void save_meta_features(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, MetaFeatures>>& rows) {
  std::vector<json> records;
  records.push_back({{"tokenizer_id", kTokenizerId},
                     {"qa_length_ratio_convention", kQaRatioConvention}});
  for (const auto& [id, mf] : rows) records.push_back(meta_features_to_json(id, mf));
  write_jsonl(path, records);
}

std::vector<std::pair<std::string, MetaFeatures>> load_meta_features(
    const std::filesystem::path& path) {
  std::vector<std::pair<std::string, MetaFeatures>> rows;
  std::set<std::string> ids;
  for_each_jsonl(path, [&](const json& rec, int lineno) {
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (!rec.contains("dataset_id")) {
      if (rec.contains("qa_length_ratio_convention") &&
          rec.at("qa_length_ratio_convention") != kQaRatioConvention) {
        throw DataError(where + ": unsupported qa_length_ratio convention");
      }
      return;  // header record
    }
    const std::string id = get_string(rec, "dataset_id", lineno, path);
    if (!ids.insert(id).second) {
      throw DataError(where + ": duplicate dataset_id \"" + id + "\"");
    }
    MetaFeatures mf;
    try {
      mf.token_size = rec.at("token_size").get<std::int64_t>();
      mf.sample_length = rec.at("sample_length").get<double>();
      mf.qa_length_ratio = rec.at("qa_length_ratio").get<double>();
      mf.vocab_size = rec.at("vocab_size").get<std::int64_t>();
    } catch (const json::exception& e) {
      throw DataError(where + ": bad meta-feature record: " + e.what());
    }
    if (mf.token_size < 0) throw DataError(where + ": token_size must be >= 0");
    if (!(mf.sample_length > 0)) {
      throw DataError(where + ": sample_length must be > 0");
    }
    if (!(mf.qa_length_ratio > 0)) {
      throw DataError(where + ": qa_length_ratio must be > 0");
    }
    if (mf.vocab_size < 0 || mf.vocab_size % 10 != 0) {
      throw DataError(where + ": vocab_size must be a non-negative multiple of 10");
    }
    rows.emplace_back(id, mf);
  });
  return rows;
}

}  // namespace greytune
