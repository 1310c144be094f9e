#pragma once

// Command implementations behind the `sinkalign` executable. Each command
// takes a fully resolved options struct; flag parsing lives in sinkalign.cpp.

#include "sinkalign/embed_io.hpp"
#include "sinkalign/eval.hpp"
#include "sinkalign/transfer.hpp"
#include "sinkalign/wgan_init.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace sinkalign::cli {

enum ExitCode : int {
  kOk = 0,
  kInputError = 1,
  kDiverged = 2,
  kNothingToEvaluate = 3,
};

/// How marginal weights are assigned to a loaded embedding file.
struct WeightOptions {
  double zipf_s = 1.0;
  bool uniform = false;
  std::string counts;  ///< optional "word count" file
};

struct EmbeddingInput {
  std::string path;
  WeightOptions weights;
};

struct TrainOptions {
  EmbeddingInput src;
  EmbeddingInput tgt;
  std::string out_dir;
  std::string init = "identity";  ///< identity | wgan
  std::optional<Index> max_vocab;
  TrainConfig train;
  WganConfig wgan;
  bool wgan_back_translation = true;
};

struct EvalOptions {
  std::string map;
  EmbeddingInput src;
  EmbeddingInput tgt;
  std::string gold;  ///< lexicon or similarity dataset
  Index k = 1;
  std::optional<Index> max_vocab;
  std::optional<Index> candidates;
  std::string out;  ///< empty: stdout
};

struct InduceOptions {
  std::string map;
  EmbeddingInput src;
  EmbeddingInput tgt;
  std::string queries;
  Index k = 1;
  std::optional<Index> max_vocab;
  std::optional<Index> candidates;
  std::string out;
};

struct SynthOptions {
  Index n = 2000;
  Index d = 50;
  double noise = 0.01;
  std::uint64_t seed = 0;
  std::string out_dir;
};

/// Raised for a failed command; carries the exit code and a short kind tag.
class CommandError : public std::runtime_error {
 public:
  CommandError(int code, std::string kind, const std::string& what)
      : std::runtime_error(what), code_(code), kind_(std::move(kind)) {}
  int code() const noexcept { return code_; }
  const std::string& kind() const noexcept { return kind_; }

 private:
  int code_;
  std::string kind_;
};

/// Hex SHA-256 of a file's bytes.
inline std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseError::Kind::kIo, 0, "cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

/// Loads, weights and normalizes one embedding file.
inline EmbeddingSet load_input(const EmbeddingInput& in, std::optional<Index> max_vocab) {
  const double s = in.weights.uniform ? 0.0 : in.weights.zipf_s;
  EmbeddingSet e = load_embeddings(in.path, max_vocab, s);
  if (!in.weights.counts.empty()) e = e.with_weights(load_count_weights(in.weights.counts, e));
  return l2_normalize(e);
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(ParseError::Kind::kIo, 0, "cannot write " + path);
  return out;
}

/// Flat key=value lines appended after the resolved flags.
struct ManifestExtras {
  std::vector<std::pair<std::string, std::string>> entries;

  void add(const std::string& key, const std::string& value) { entries.emplace_back(key, value); }
  void add_digest(const std::string& key, const std::string& path) {
    if (!path.empty()) add("sha256_" + key, "\"" + file_sha256(path) + "\"");
  }
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

/// Writes the manifest: `resolved` (the command's flags in config-file
/// syntax, replayable with --config) followed by digests and timings.
inline void write_manifest(const std::string& path, const std::string& resolved, const ManifestExtras& extras) {
  auto out = open_output(path);
  out << resolved;
  if (!resolved.empty() && resolved.back() != '\n') out << '\n';
  for (const auto& [k, v] : extras.entries) out << k << '=' << v << '\n';
}

inline void write_loss_tsv(const TrainReport& rep, std::ostream& out) {
  out << "step\ttotal\tsinkhorn_g\tsinkhorn_f\tback_translation\n";
  for (std::size_t i = 0; i < rep.records.size(); ++i) {
    const auto& r = rep.records[i];
    out << i << '\t' << detail::format_double(r.total) << '\t' << detail::format_double(r.sinkhorn_g) << '\t'
        << detail::format_double(r.sinkhorn_f) << '\t' << detail::format_double(r.back_translation) << '\n';
  }
}

inline void write_wgan_tsv(const WganReport& rep, std::ostream& out) {
  out << "step\tgap_y\tgap_x\tmap_loss\n";
  for (std::size_t i = 0; i < rep.records.size(); ++i) {
    const auto& r = rep.records[i];
    out << i << '\t' << detail::format_double(r.gap_y) << '\t' << detail::format_double(r.gap_x) << '\t'
        << detail::format_double(r.map_loss) << '\n';
  }
}

/// Optional pretraining then the Sinkhorn phase. Writes G.ckpt, F.ckpt,
/// best_G.ckpt, best_F.ckpt, loss.tsv (and wgan.tsv plus critic checkpoints
/// with --init wgan).
inline int cmd_train(const TrainOptions& opt, const std::string& resolved_flags) {
  const auto started = std::chrono::steady_clock::now();
  const std::string started_at = utc_timestamp();
  if (opt.init != "identity" && opt.init != "wgan")
    throw CommandError(kInputError, "usage", "--init must be identity or wgan");
  const auto src = load_input(opt.src, opt.max_vocab);
  const auto tgt = load_input(opt.tgt, opt.max_vocab);
  if (src.dim() != tgt.dim()) throw CommandError(kInputError, "parse", "source and target dimensions differ");
  std::filesystem::create_directories(opt.out_dir);
  const auto path = [&](const char* name) { return (std::filesystem::path(opt.out_dir) / name).string(); };

  std::pair<LinearMap, LinearMap> init{LinearMap::identity(src.dim()), LinearMap::identity(src.dim())};
  double wgan_seconds = 0.0;
  if (opt.init == "wgan") {
    WganConfig wc = opt.wgan;
    if (!opt.wgan_back_translation) wc.beta = 0.0;
    const auto t0 = std::chrono::steady_clock::now();
    WganReport wr;
    try {
      wr = pretrain(src, tgt, wc);
    } catch (const DivergenceError& e) {
      throw CommandError(kDiverged, "diverged", std::string("pretrain ") + e.what());
    }
    wgan_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    init = {wr.g, wr.f};
    auto wout = open_output(path("wgan.tsv"));
    write_wgan_tsv(wr, wout);
    if (wc.steps > 0) {
      auto cy = open_output(path("critic_y.ckpt"));
      write_critic(wr.critic_y, cy);
      auto cx = open_output(path("critic_x.ckpt"));
      write_critic(wr.critic_x, cx);
    }
  }

  TrainReport rep;
  try {
    rep = train(src, tgt, opt.train, init);
  } catch (const DivergenceError& e) {
    throw CommandError(kDiverged, "diverged", std::string("train ") + e.what());
  }
  save_map(rep.g, path("G.ckpt"));
  save_map(rep.f, path("F.ckpt"));
  save_map(rep.best_g, path("best_G.ckpt"));
  save_map(rep.best_f, path("best_F.ckpt"));
  auto loss = open_output(path("loss.tsv"));
  write_loss_tsv(rep, loss);

  ManifestExtras extras;
  extras.add_digest("src", opt.src.path);
  extras.add_digest("tgt", opt.tgt.path);
  extras.add_digest("src_counts", opt.src.weights.counts);
  extras.add_digest("tgt_counts", opt.tgt.weights.counts);
  extras.add("vocab_src", std::to_string(src.size()));
  extras.add("vocab_tgt", std::to_string(tgt.size()));
  extras.add("best_step", std::to_string(rep.best_step));
  extras.add("started_at", "\"" + started_at + "\"");
  extras.add("seconds_wgan", detail::format_double(wgan_seconds));
  extras.add("seconds_train", detail::format_double(rep.seconds));
  extras.add("seconds_total",
             detail::format_double(std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()));
  write_manifest(path("manifest.txt"), resolved_flags, extras);
  return kOk;
}

namespace detail {

inline void emit(const std::string& out_path, const std::function<void(std::ostream&)>& body) {
  if (out_path.empty()) {
    body(std::cout);
    std::cout.flush();
    return;
  }
  auto out = open_output(out_path);
  body(out);
}

inline void write_eval_manifest(const EvalOptions& opt, const std::string& resolved, const std::string& started_at,
                                std::chrono::steady_clock::time_point started) {
  if (opt.out.empty()) return;
  ManifestExtras extras;
  extras.add_digest("map", opt.map);
  extras.add_digest("src", opt.src.path);
  extras.add_digest("tgt", opt.tgt.path);
  extras.add_digest("gold", opt.gold);
  extras.add("started_at", "\"" + started_at + "\"");
  extras.add("seconds_total", ::sinkalign::detail::format_double(
                                  std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()));
  write_manifest(opt.out + ".manifest", resolved, extras);
}

inline LinearMap load_checked_map(const std::string& path, Index dim) {
  LinearMap g = load_map(path);
  if (g.dim() != dim) throw CommandError(kInputError, "parse", "map dimension does not match the embeddings");
  return g;
}

}  // namespace detail

inline int cmd_eval_bli(const EvalOptions& opt, const std::string& resolved_flags) {
  const auto started = std::chrono::steady_clock::now();
  const auto started_at = utc_timestamp();
  const auto src = load_input(opt.src, opt.max_vocab);
  const auto tgt = load_input(opt.tgt, opt.max_vocab);
  const auto g = detail::load_checked_map(opt.map, src.dim());
  const auto lex = load_lexicon(opt.gold);
  BliResult r;
  try {
    r = accuracy_at_k(g, src, tgt, lex, opt.k, opt.candidates);
  } catch (const EmptyEvaluationError& e) {
    throw CommandError(kNothingToEvaluate, "empty", e.what());
  } catch (const std::out_of_range& e) {
    throw CommandError(kInputError, "usage", e.what());
  }
  detail::emit(opt.out, [&](std::ostream& out) { write_report(bli_report(r), out); });
  detail::write_eval_manifest(opt, resolved_flags, started_at, started);
  return kOk;
}

inline int cmd_eval_sim(const EvalOptions& opt, const std::string& resolved_flags) {
  const auto started = std::chrono::steady_clock::now();
  const auto started_at = utc_timestamp();
  const auto src = load_input(opt.src, opt.max_vocab);
  const auto tgt = load_input(opt.tgt, opt.max_vocab);
  const auto g = detail::load_checked_map(opt.map, src.dim());
  const auto ds = load_sim_dataset(opt.gold);
  SimResult r;
  try {
    r = word_similarity_eval(g, src, tgt, ds);
  } catch (const EmptyEvaluationError& e) {
    throw CommandError(kNothingToEvaluate, "empty", e.what());
  } catch (const std::domain_error& e) {
    throw CommandError(kNothingToEvaluate, "empty", e.what());
  }
  detail::emit(opt.out, [&](std::ostream& out) { write_report(sim_report(r), out); });
  detail::write_eval_manifest(opt, resolved_flags, started_at, started);
  return kOk;
}

/// One line per (query, rank): query, rank, candidate, cosine. Unknown
/// queries get a single row with rank "OOV".
inline int cmd_induce(const InduceOptions& opt, const std::string& resolved_flags) {
  const auto started = std::chrono::steady_clock::now();
  const auto started_at = utc_timestamp();
  const auto src = load_input(opt.src, opt.max_vocab);
  const auto tgt = load_input(opt.tgt, opt.max_vocab);
  const auto g = detail::load_checked_map(opt.map, src.dim());
  const Index n_tgt = opt.candidates ? std::min(*opt.candidates, tgt.size()) : tgt.size();
  if (opt.k < 1 || opt.k > n_tgt) throw CommandError(kInputError, "usage", "--k out of range");

  std::vector<std::string> queries;
  {
    auto in = ::sinkalign::detail::open_input(opt.queries);
    std::string raw;
    while (std::getline(in, raw)) {
      const auto line = ::sinkalign::detail::trim_cr(raw);
      if (!line.empty()) queries.emplace_back(line);
    }
  }
  detail::emit(opt.out, [&](std::ostream& out) {
    out << "query\trank\tcandidate\tcosine\n";
    for (const auto& q : queries) {
      const auto row = src.find(q);
      if (!row) {
        out << q << "\tOOV\t\t\n";
        continue;
      }
      const Vector mapped = g.weight() * src.vectors().row(*row).transpose();
      const auto top = topk_by_cosine(mapped, tgt, opt.k, opt.candidates);
      for (std::size_t rank = 0; rank < top.size(); ++rank) {
        const Index j = top[rank];
        out << q << '\t' << rank + 1 << '\t' << tgt.words()[static_cast<std::size_t>(j)] << '\t'
            << ::sinkalign::detail::format_double(cosine(mapped, tgt.vectors().row(j).transpose())) << '\n';
      }
    }
  });
  if (!opt.out.empty()) {
    ManifestExtras extras;
    extras.add_digest("map", opt.map);
    extras.add_digest("src", opt.src.path);
    extras.add_digest("tgt", opt.tgt.path);
    extras.add_digest("queries", opt.queries);
    extras.add("started_at", "\"" + started_at + "\"");
    extras.add("seconds_total", ::sinkalign::detail::format_double(
                                    std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()));
    write_manifest(opt.out + ".manifest", resolved_flags, extras);
  }
  return kOk;
}

/// Writes src.vec, tgt.vec, lexicon.tsv and the gold map gold.ckpt.
inline int cmd_synth(const SynthOptions& opt, const std::string& resolved_flags) {
  const auto started = std::chrono::steady_clock::now();
  const auto started_at = utc_timestamp();
  SynthPair sp;
  try {
    sp = synth_pair(opt.n, opt.d, opt.noise, opt.seed);
  } catch (const std::invalid_argument& e) {
    throw CommandError(kInputError, "usage", e.what());
  }
  std::filesystem::create_directories(opt.out_dir);
  const auto path = [&](const char* name) { return (std::filesystem::path(opt.out_dir) / name).string(); };
  save_embeddings(sp.src, path("src.vec"));
  save_embeddings(sp.tgt, path("tgt.vec"));
  save_map(LinearMap(sp.rotation), path("gold.ckpt"));
  {
    auto lex = open_output(path("lexicon.tsv"));
    for (const auto& [s, t] : sp.lexicon.pairs) lex << s << '\t' << t << '\n';
  }
  ManifestExtras extras;
  extras.add("started_at", "\"" + started_at + "\"");
  extras.add("seconds_total", ::sinkalign::detail::format_double(
                                  std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()));
  write_manifest(path("manifest.txt"), resolved_flags, extras);
  return kOk;
}

/// Runs a command, mapping failures to exit codes and a single
/// tab-separated "error<TAB>kind<TAB>message" line on `err`.
template <typename Fn>
int run_guarded(Fn&& fn, std::ostream& err = std::cerr) {
  const auto report = [&](int code, const std::string& kind, std::string msg) {
    for (auto& ch : msg) {
      if (ch == '\n' || ch == '\t') ch = ' ';
    }
    err << "error\t" << kind << '\t' << msg << '\n';
    return code;
  };
  try {
    return fn();
  } catch (const CommandError& e) {
    return report(e.code(), e.kind(), e.what());
  } catch (const DivergenceError& e) {
    return report(kDiverged, "diverged", e.what());
  } catch (const ParseError& e) {
    return report(kInputError, e.kind() == ParseError::Kind::kIo ? "io" : "parse", e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return report(kInputError, "io", e.what());
  } catch (const DegenerateVectorError& e) {
    return report(kInputError, "parse", e.what());
  } catch (const std::invalid_argument& e) {
    return report(kInputError, "usage", e.what());
  } catch (const std::exception& e) {
    return report(kInputError, "internal", e.what());
  }
}

}  // namespace sinkalign::cli
