#include "synthdial/metrics.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <unordered_map>
#include <unordered_set>

#include "synthdial/error.hpp"
#include "synthdial/text.hpp"

namespace synthdial::metrics {
namespace {

using NgramCounts = std::unordered_map<std::string, int>;

NgramCounts ngram_counts(const Tokens& tokens, int n) {
  NgramCounts counts;
  const auto un = static_cast<std::size_t>(n);
  if (tokens.size() < un) return counts;
  std::string key;
  for (std::size_t i = 0; i + un <= tokens.size(); ++i) {
    key.clear();
    for (std::size_t k = 0; k < un; ++k) {
      if (k) key.push_back('\x1f');
      key += tokens[i + k];
    }
    ++counts[key];
  }
  return counts;
}

double ngram_total(const Tokens& tokens, int n) {
  const auto un = static_cast<std::size_t>(n);
  return tokens.size() >= un ? static_cast<double>(tokens.size() - un + 1) : 0.0;
}

// LCS positions in `ref`, backtracking diagonal first and preferring to drop
// a reference token on ties.
std::vector<std::size_t> lcs_positions(const Tokens& ref, const Tokens& cand) {
  const std::size_t m = ref.size();
  const std::size_t n = cand.size();
  std::vector<std::vector<std::uint32_t>> t(m + 1,
                                            std::vector<std::uint32_t>(n + 1, 0));
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      t[i][j] = ref[i - 1] == cand[j - 1] ? t[i - 1][j - 1] + 1
                                          : std::max(t[i - 1][j], t[i][j - 1]);
    }
  }
  std::vector<std::size_t> pos;
  std::size_t i = m;
  std::size_t j = n;
  while (i > 0 && j > 0) {
    if (ref[i - 1] == cand[j - 1]) {
      pos.push_back(i - 1);
      --i;
      --j;
    } else if (t[i][j - 1] > t[i - 1][j]) {
      --j;
    } else {
      --i;
    }
  }
  std::reverse(pos.begin(), pos.end());
  return pos;
}

struct PairScores {
  ScoreTriple r1, r2, rl, rlsum;
  BleuStats bleu{4};
  double concept_recall = 0;
  std::size_t utterances = 0;
};

std::size_t count_utterances(const std::string& text) {
  try {
    return parse_dialogue_text(text).utterances.size();
  } catch (const Error&) {
    return 0;
  }
}

PairScores score_pair(const std::string& gen, const std::string& ref,
                      const Lexicon& lexicon, const EvalOptions& options) {
  PairScores s;
  const Tokens g = tokenize(gen);
  const Tokens r = tokenize(ref);
  s.r1 = rouge_n(g, r, 1);
  s.r2 = rouge_n(g, r, 2);
  s.rl = rouge_l(g, r);
  s.rlsum = rouge_lsum(gen, ref);
  s.bleu = bleu_stats(g, {&r}, options.bleu_max_n);
  s.concept_recall = concept_recall(gen, ref, lexicon);
  s.utterances = count_utterances(gen);
  return s;
}

// Pairs in generated order; throws on duplicate or unmatched ids.
std::vector<std::pair<const IdText*, const IdText*>> pair_by_id(
    const std::vector<IdText>& generated, const std::vector<IdText>& references) {
  std::unordered_map<std::string, const IdText*> refs;
  for (const auto& r : references) {
    if (!refs.emplace(r.id, &r).second) throw IdError(Errc::DuplicateId, r.id);
  }
  std::unordered_set<std::string> seen;
  std::vector<std::pair<const IdText*, const IdText*>> pairs;
  for (const auto& g : generated) {
    if (!seen.insert(g.id).second) throw IdError(Errc::DuplicateId, g.id);
    const auto it = refs.find(g.id);
    if (it == refs.end()) throw IdError(Errc::MissingReference, g.id);
    pairs.emplace_back(&g, it->second);
  }
  return pairs;
}

ScoreTriple mean(const std::vector<PairScores>& scores,
                 ScoreTriple PairScores::*field) {
  ScoreTriple m;
  if (scores.empty()) return m;
  for (const auto& s : scores) {
    m.precision += (s.*field).precision;
    m.recall += (s.*field).recall;
    m.f1 += (s.*field).f1;
  }
  const double n = static_cast<double>(scores.size());
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  return m;
}

EvalReport reduce(const std::vector<PairScores>& scores,
                  const std::vector<Tokens>& generated_tokens,
                  const EvalOptions& options, bool parallel) {
  EvalReport report;
  report.n_pairs = scores.size();
  report.rouge1 = mean(scores, &PairScores::r1);
  report.rouge2 = mean(scores, &PairScores::r2);
  report.rougeL = mean(scores, &PairScores::rl);
  report.rougeLsum = mean(scores, &PairScores::rlsum);
  if (scores.empty()) return report;

  BleuStats total(options.bleu_max_n);
  std::vector<std::size_t> counts;
  double recall_sum = 0;
  for (const auto& s : scores) {
    total += s.bleu;
    recall_sum += s.concept_recall;
    counts.push_back(s.utterances);
  }
  report.bleu = bleu_from_stats(total, options.bleu_smoothing);
  report.concept_recall = recall_sum / static_cast<double>(scores.size());
  report.avg_utterances = avg_utterances(counts);
  if (generated_tokens.size() >= 2) {
    report.self_bleu =
        parallel ? self_bleu(generated_tokens, options.self_bleu_max_n,
                             options.self_bleu_smoothing)
                 : self_bleu_serial(generated_tokens, options.self_bleu_max_n,
                                    options.self_bleu_smoothing);
  }
  return report;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  for (char c : text) {
    if (text::is_alnum(c)) {
      cur.push_back(text::to_lower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    const std::string_view s = text::trim(text.substr(start, end - start));
    if (!s.empty()) out.emplace_back(s);
    start = end;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      emit(i);
      start = i + 1;
    } else if ((c == '.' || c == '!' || c == '?') && i + 1 < text.size() &&
               text::is_space(text[i + 1])) {
      emit(i + 1);
    }
  }
  emit(text.size());
  return out;
}

ScoreTriple ScoreTriple::from_counts(double match, double cand_total,
                                     double ref_total) {
  ScoreTriple s;
  s.precision = cand_total > 0 ? match / cand_total : 0.0;
  s.recall = ref_total > 0 ? match / ref_total : 0.0;
  s.f1 = s.precision + s.recall > 0
             ? 2 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

ScoreTriple rouge_n(const Tokens& candidate, const Tokens& reference, int n) {
  if (n < 1) throw Error(Errc::ConfigError, "rouge_n needs n >= 1");
  const NgramCounts cand = ngram_counts(candidate, n);
  const NgramCounts ref = ngram_counts(reference, n);
  double match = 0;
  for (const auto& [gram, c] : cand) {
    const auto it = ref.find(gram);
    if (it != ref.end()) match += std::min(c, it->second);
  }
  return ScoreTriple::from_counts(match, ngram_total(candidate, n),
                                  ngram_total(reference, n));
}

ScoreTriple rouge_n(std::string_view candidate, std::string_view reference,
                    int n) {
  return rouge_n(tokenize(candidate), tokenize(reference), n);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

ScoreTriple rouge_l(const Tokens& candidate, const Tokens& reference) {
  const double l = static_cast<double>(lcs_length(candidate, reference));
  return ScoreTriple::from_counts(l, static_cast<double>(candidate.size()),
                                  static_cast<double>(reference.size()));
}

ScoreTriple rouge_l(std::string_view candidate, std::string_view reference) {
  return rouge_l(tokenize(candidate), tokenize(reference));
}

ScoreTriple rouge_lsum(const std::vector<Tokens>& candidate_sentences,
                       const std::vector<Tokens>& reference_sentences) {
  std::unordered_map<std::string, int> cand_left;
  std::unordered_map<std::string, int> ref_left;
  double cand_total = 0;
  double ref_total = 0;
  for (const auto& s : candidate_sentences) {
    for (const auto& t : s) ++cand_left[t];
    cand_total += static_cast<double>(s.size());
  }
  for (const auto& s : reference_sentences) {
    for (const auto& t : s) ++ref_left[t];
    ref_total += static_cast<double>(s.size());
  }

  double hits = 0;
  for (const auto& ref : reference_sentences) {
    std::vector<bool> in_union(ref.size(), false);
    for (const auto& cand : candidate_sentences) {
      for (std::size_t p : lcs_positions(ref, cand)) in_union[p] = true;
    }
    // Each token is credited at most as often as it occurs on both sides.
    for (std::size_t p = 0; p < ref.size(); ++p) {
      if (!in_union[p]) continue;
      int& c = cand_left[ref[p]];
      int& r = ref_left[ref[p]];
      if (c > 0 && r > 0) {
        ++hits;
        --c;
        --r;
      }
    }
  }
  return ScoreTriple::from_counts(hits, cand_total, ref_total);
}

ScoreTriple rouge_lsum(std::string_view candidate, std::string_view reference) {
  std::vector<Tokens> cand;
  std::vector<Tokens> ref;
  for (const auto& s : split_sentences(candidate)) {
    if (auto t = tokenize(s); !t.empty()) cand.push_back(std::move(t));
  }
  for (const auto& s : split_sentences(reference)) {
    if (auto t = tokenize(s); !t.empty()) ref.push_back(std::move(t));
  }
  return rouge_lsum(cand, ref);
}

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (std::size_t i = 0; i < matches.size() && i < o.matches.size(); ++i) {
    matches[i] += o.matches[i];
    totals[i] += o.totals[i];
  }
  cand_len += o.cand_len;
  ref_len += o.ref_len;
  return *this;
}

BleuStats bleu_stats(const Tokens& candidate,
                     const std::vector<const Tokens*>& references, int max_n) {
  if (max_n < 1) throw Error(Errc::ConfigError, "BLEU needs max_n >= 1");
  BleuStats stats(max_n);
  stats.cand_len = static_cast<double>(candidate.size());

  std::size_t best = 0;
  bool have = false;
  for (const Tokens* r : references) {
    const std::size_t len = r->size();
    const auto diff = [&](std::size_t l) {
      return l > candidate.size() ? l - candidate.size() : candidate.size() - l;
    };
    if (!have || diff(len) < diff(best) || (diff(len) == diff(best) && len < best)) {
      best = len;
      have = true;
    }
  }
  stats.ref_len = static_cast<double>(best);

  for (int n = 1; n <= max_n; ++n) {
    const NgramCounts cand = ngram_counts(candidate, n);
    NgramCounts max_ref;
    for (const Tokens* r : references) {
      for (const auto& [gram, c] : ngram_counts(*r, n)) {
        int& slot = max_ref[gram];
        slot = std::max(slot, c);
      }
    }
    double match = 0;
    for (const auto& [gram, c] : cand) {
      const auto it = max_ref.find(gram);
      if (it != max_ref.end()) match += std::min(c, it->second);
    }
    stats.matches[static_cast<std::size_t>(n - 1)] = match;
    stats.totals[static_cast<std::size_t>(n - 1)] = ngram_total(candidate, n);
  }
  return stats;
}

double bleu_from_stats(const BleuStats& stats, Smoothing smoothing) {
  if (stats.cand_len <= 0) return 0.0;
  const std::size_t orders = stats.matches.size();
  double log_sum = 0;
  for (std::size_t i = 0; i < orders; ++i) {
    double p;
    if (stats.matches[i] > 0) {
      p = stats.matches[i] / stats.totals[i];
    } else if (smoothing.kind == Smoothing::Kind::None) {
      return 0.0;
    } else {
      p = smoothing.epsilon / std::max(stats.totals[i], 1.0);
    }
    log_sum += std::log(p);
  }
  const double bp = stats.cand_len < stats.ref_len
                        ? std::exp(1.0 - stats.ref_len / stats.cand_len)
                        : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(orders));
}

double corpus_bleu(const std::vector<Tokens>& candidates,
                   const std::vector<std::vector<Tokens>>& references,
                   int max_n, Smoothing smoothing) {
  if (candidates.size() != references.size()) {
    throw Error(Errc::LengthMismatch,
                std::to_string(candidates.size()) + " candidates vs " +
                    std::to_string(references.size()) + " reference sets");
  }
  BleuStats total(max_n);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    std::vector<const Tokens*> refs;
    for (const auto& r : references[i]) refs.push_back(&r);
    total += bleu_stats(candidates[i], refs, max_n);
  }
  return bleu_from_stats(total, smoothing);
}

double corpus_bleu(const std::vector<std::string>& candidates,
                   const std::vector<std::vector<std::string>>& references,
                   int max_n, Smoothing smoothing) {
  std::vector<Tokens> cand;
  std::vector<std::vector<Tokens>> refs;
  for (const auto& c : candidates) cand.push_back(tokenize(c));
  for (const auto& set : references) {
    auto& out = refs.emplace_back();
    for (const auto& r : set) out.push_back(tokenize(r));
  }
  return corpus_bleu(cand, refs, max_n, smoothing);
}

double self_bleu(const std::vector<Tokens>& corpus, int max_n,
                 Smoothing smoothing) {
  if (corpus.size() < 2) {
    throw Error(Errc::CorpusTooSmall, "self-BLEU needs at least 2 documents");
  }
  if (max_n < 1) throw Error(Errc::ConfigError, "BLEU needs max_n >= 1");
  const std::size_t docs = corpus.size();
  const auto orders = static_cast<std::size_t>(max_n);

  // Per-document n-gram counts, built once and shared by every row.
  std::vector<std::vector<NgramCounts>> counts(docs);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t d = 0; d < static_cast<std::ptrdiff_t>(docs); ++d) {
    auto& per_order = counts[static_cast<std::size_t>(d)];
    per_order.reserve(orders);
    for (int n = 1; n <= max_n; ++n) {
      per_order.push_back(ngram_counts(corpus[static_cast<std::size_t>(d)], n));
    }
  }

  std::vector<double> scores(docs, 0.0);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t di = 0; di < static_cast<std::ptrdiff_t>(docs); ++di) {
    const auto i = static_cast<std::size_t>(di);
    const Tokens& cand = corpus[i];
    BleuStats stats(max_n);
    stats.cand_len = static_cast<double>(cand.size());

    std::size_t best = 0;
    bool have = false;
    for (std::size_t j = 0; j < docs; ++j) {
      if (j == i) continue;
      const std::size_t len = corpus[j].size();
      const auto diff = [&](std::size_t l) {
        return l > cand.size() ? l - cand.size() : cand.size() - l;
      };
      if (!have || diff(len) < diff(best) ||
          (diff(len) == diff(best) && len < best)) {
        best = len;
        have = true;
      }
    }
    stats.ref_len = static_cast<double>(best);

    for (std::size_t o = 0; o < orders; ++o) {
      double match = 0;
      for (const auto& [gram, c] : counts[i][o]) {
        int clip = 0;
        for (std::size_t j = 0; j < docs && clip < c; ++j) {
          if (j == i) continue;
          const auto it = counts[j][o].find(gram);
          if (it != counts[j][o].end()) clip = std::max(clip, it->second);
        }
        match += std::min(c, clip);
      }
      stats.matches[o] = match;
      stats.totals[o] = ngram_total(cand, static_cast<int>(o + 1));
    }
    scores[i] = bleu_from_stats(stats, smoothing);
  }

  double sum = 0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(docs);
}

double self_bleu(const std::vector<std::string>& corpus, int max_n,
                 Smoothing smoothing) {
  std::vector<Tokens> tokens;
  tokens.reserve(corpus.size());
  for (const auto& d : corpus) tokens.push_back(tokenize(d));
  return self_bleu(tokens, max_n, smoothing);
}

double self_bleu_serial(const std::vector<Tokens>& corpus, int max_n,
                        Smoothing smoothing) {
  if (corpus.size() < 2) {
    throw Error(Errc::CorpusTooSmall, "self-BLEU needs at least 2 documents");
  }
  double sum = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::vector<const Tokens*> refs;
    for (std::size_t j = 0; j < corpus.size(); ++j) {
      if (j != i) refs.push_back(&corpus[j]);
    }
    sum += bleu_from_stats(bleu_stats(corpus[i], refs, max_n), smoothing);
  }
  return sum / static_cast<double>(corpus.size());
}

double avg_utterances(const std::vector<std::size_t>& counts) {
  if (counts.empty()) throw Error(Errc::EmptyList, "no dialogues to average");
  double sum = 0;
  for (std::size_t c : counts) sum += static_cast<double>(c);
  return sum / static_cast<double>(counts.size());
}

double avg_utterances(const std::vector<Dialogue>& dialogues) {
  std::vector<std::size_t> counts;
  counts.reserve(dialogues.size());
  for (const auto& d : dialogues) counts.push_back(d.size());
  return avg_utterances(counts);
}

EvalReport evaluate_run(const std::vector<IdText>& generated,
                        const std::vector<IdText>& references,
                        const Lexicon& lexicon, const EvalOptions& options) {
  const auto pairs = pair_by_id(generated, references);
  std::vector<PairScores> scores(pairs.size());
  std::vector<Tokens> gen_tokens(pairs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(pairs.size()); ++i) {
    const auto k = static_cast<std::size_t>(i);
    scores[k] = score_pair(pairs[k].first->text, pairs[k].second->text, lexicon,
                           options);
    gen_tokens[k] = tokenize(pairs[k].first->text);
  }
  return reduce(scores, gen_tokens, options, true);
}

EvalReport evaluate_run_serial(const std::vector<IdText>& generated,
                               const std::vector<IdText>& references,
                               const Lexicon& lexicon,
                               const EvalOptions& options) {
  const auto pairs = pair_by_id(generated, references);
  std::vector<PairScores> scores;
  std::vector<Tokens> gen_tokens;
  for (const auto& [g, r] : pairs) {
    scores.push_back(score_pair(g->text, r->text, lexicon, options));
    gen_tokens.push_back(tokenize(g->text));
  }
  return reduce(scores, gen_tokens, options, false);
}

nlohmann::json to_json(const EvalReport& r) {
  auto triple = [](const ScoreTriple& t) {
    return nlohmann::json{
        {"precision", t.precision}, {"recall", t.recall}, {"f1", t.f1}};
  };
  nlohmann::json j = {{"rouge1", triple(r.rouge1)},
                      {"rouge2", triple(r.rouge2)},
                      {"rougeL", triple(r.rougeL)},
                      {"rougeLsum", triple(r.rougeLsum)},
                      {"bleu", r.bleu},
                      {"self_bleu", nullptr},
                      {"concept_recall", r.concept_recall},
                      {"avg_utterances", r.avg_utterances},
                      {"n_pairs", r.n_pairs}};
  if (r.self_bleu) j["self_bleu"] = *r.self_bleu;
  return j;
}

std::string render_table(const EvalReport& r) {
  const std::vector<std::pair<std::string, std::string>> cols = {
      {"R-1", fmt("%.2f", r.rouge1.f1 * 100)},
      {"R-2", fmt("%.2f", r.rouge2.f1 * 100)},
      {"R-L", fmt("%.2f", r.rougeL.f1 * 100)},
      {"R-L-Sum", fmt("%.2f", r.rougeLsum.f1 * 100)},
      {"C-R", fmt("%.2f", r.concept_recall * 100)},
      {"BLEU", fmt("%.2f", r.bleu * 100)},
      {"SBLEU", r.self_bleu ? fmt("%.3f", *r.self_bleu) : std::string("-")},
      {"Len", fmt("%.1f", r.avg_utterances)},
  };
  std::string head;
  std::string row;
  for (const auto& [name, value] : cols) {
    const std::size_t w = std::max(name.size(), value.size()) + 2;
    head += name + std::string(w - name.size(), ' ');
    row += value + std::string(w - value.size(), ' ');
  }
  while (!head.empty() && head.back() == ' ') head.pop_back();
  while (!row.empty() && row.back() == ' ') row.pop_back();
  return head + "\n" + row + "\n";
}

std::vector<IdText> read_id_texts(std::istream& in) {
  std::vector<IdText> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      IdText item{j.at("id").get<std::string>(), {}};
      if (j.contains("text")) {
        item.text = j.at("text").get<std::string>();
      } else {
        std::vector<Utterance> turns;
        for (const auto& t : j.at("dialogue")) {
          const std::string who = text::lower(t.at("speaker").get<std::string>());
          turns.push_back({who == "patient" ? Speaker::Patient : Speaker::Doctor,
                           t.at("text").get<std::string>(),
                           {}});
        }
        item.text = render_dialogue(turns);
      }
      out.push_back(std::move(item));
    } catch (const nlohmann::json::exception& e) {
      throw LineError(Errc::MalformedLine, line_no, e.what());
    }
  }
  return out;
}

}  // namespace synthdial::metrics
