#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "synthdial/concepts.hpp"
#include "synthdial/dialogue.hpp"

namespace synthdial::metrics {

using Tokens = std::vector<std::string>;

// Lowercased maximal runs of ASCII alphanumerics.
Tokens tokenize(std::string_view text);

// Newlines, and '.', '!' or '?' followed by whitespace, end a sentence.
std::vector<std::string> split_sentences(std::string_view text);

struct ScoreTriple {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  static ScoreTriple from_counts(double match, double cand_total,
                                 double ref_total);
};

ScoreTriple rouge_n(const Tokens& candidate, const Tokens& reference, int n);
ScoreTriple rouge_n(std::string_view candidate, std::string_view reference,
                    int n);

std::size_t lcs_length(const Tokens& a, const Tokens& b);

ScoreTriple rouge_l(const Tokens& candidate, const Tokens& reference);
ScoreTriple rouge_l(std::string_view candidate, std::string_view reference);

ScoreTriple rouge_lsum(const std::vector<Tokens>& candidate_sentences,
                       const std::vector<Tokens>& reference_sentences);
ScoreTriple rouge_lsum(std::string_view candidate, std::string_view reference);

struct Smoothing {
  enum class Kind { None, AddEpsilon } kind = Kind::None;
  double epsilon = 0.1;

  static Smoothing none() { return {}; }
  static Smoothing add_epsilon(double eps = 0.1) {
    return {Kind::AddEpsilon, eps};
  }
};

struct BleuStats {
  std::vector<double> matches;  // per order
  std::vector<double> totals;
  double cand_len = 0;
  double ref_len = 0;

  explicit BleuStats(int max_n = 4)
      : matches(static_cast<std::size_t>(max_n), 0.0),
        totals(static_cast<std::size_t>(max_n), 0.0) {}
  BleuStats& operator+=(const BleuStats& o);
};

// Clipped counts for one candidate against its reference set; closest
// reference length, ties to the shorter one.
BleuStats bleu_stats(const Tokens& candidate,
                     const std::vector<const Tokens*>& references, int max_n);

double bleu_from_stats(const BleuStats& stats, Smoothing smoothing);

double corpus_bleu(const std::vector<std::string>& candidates,
                   const std::vector<std::vector<std::string>>& references,
                   int max_n = 4, Smoothing smoothing = Smoothing::none());
double corpus_bleu(const std::vector<Tokens>& candidates,
                   const std::vector<std::vector<Tokens>>& references,
                   int max_n = 4, Smoothing smoothing = Smoothing::none());

// Mean BLEU of each document against all the others (OpenMP over documents).
double self_bleu(const std::vector<std::string>& corpus, int max_n = 4,
                 Smoothing smoothing = Smoothing::add_epsilon());
double self_bleu(const std::vector<Tokens>& corpus, int max_n,
                 Smoothing smoothing);
// Single-threaded reference kept for tests and benchmarks.
double self_bleu_serial(const std::vector<Tokens>& corpus, int max_n,
                        Smoothing smoothing);

double avg_utterances(const std::vector<Dialogue>& dialogues);
double avg_utterances(const std::vector<std::size_t>& counts);

struct EvalReport {
  ScoreTriple rouge1, rouge2, rougeL, rougeLsum;
  double bleu = 0.0;
  std::optional<double> self_bleu;  // needs at least two generated texts
  double concept_recall = 0.0;
  double avg_utterances = 0.0;
  std::size_t n_pairs = 0;
};

struct IdText {
  std::string id;
  std::string text;
};

struct EvalOptions {
  int bleu_max_n = 4;
  Smoothing bleu_smoothing = Smoothing::none();
  int self_bleu_max_n = 4;
  Smoothing self_bleu_smoothing = Smoothing::add_epsilon();
};

// Pairs generated texts with references by id, in generated order.
// Per-pair scoring runs under OpenMP; reduction order is fixed.
EvalReport evaluate_run(const std::vector<IdText>& generated,
                        const std::vector<IdText>& references,
                        const Lexicon& lexicon, const EvalOptions& options = {});
EvalReport evaluate_run_serial(const std::vector<IdText>& generated,
                               const std::vector<IdText>& references,
                               const Lexicon& lexicon,
                               const EvalOptions& options = {});

nlohmann::json to_json(const EvalReport& report);

// One header row and one value row, columns R-1 R-2 R-L R-L-Sum C-R BLEU
// SBLEU Len; scores x100 (F1 for ROUGE).
std::string render_table(const EvalReport& report);

// Reads {"id","text"} lines; {"id","dialogue":[{"speaker","text"}]} lines
// are rendered to "Doctor:/Patient:" text.
std::vector<IdText> read_id_texts(std::istream& in);

}  // namespace synthdial::metrics
