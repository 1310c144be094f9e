// sinkalign: unsupervised linear alignment of two embedding spaces.
//
//   sinkalign synth    --out-dir DIR [--n --d --noise --seed]
//   sinkalign train    --src A.vec --tgt B.vec --out-dir DIR [--init wgan|identity] ...
//   sinkalign eval-bli --map G.ckpt --src A.vec --tgt B.vec --lexicon L.tsv [--k 1]
//   sinkalign eval-sim --map G.ckpt --src A.vec --tgt B.vec --dataset S.tsv
//   sinkalign induce   --map G.ckpt --src A.vec --tgt B.vec --queries Q.txt [--k 1]
//
// `sinkalign --config manifest.txt train --out-dir DIR` replays a previous
// run from its manifest; flags given on the command line take precedence.

#include "commands.hpp"

#include <CLI11.hpp>

namespace {

using namespace sinkalign;
using namespace sinkalign::cli;

// Stores paths in absolute form so a manifest replays from any directory.
const CLI::Validator kAbsolutePath(
    [](std::string& path) {
      if (!path.empty()) path = std::filesystem::absolute(path).lexically_normal().string();
      return std::string();
    },
    "", "absolute");

void add_embedding_flags(CLI::App* cmd, EmbeddingInput& src, EmbeddingInput& tgt, Index& max_vocab) {
  cmd->add_option("--src", src.path, "Source embeddings (word2vec text format)")->required()->transform(kAbsolutePath);
  cmd->add_option("--tgt", tgt.path, "Target embeddings (word2vec text format)")->required()->transform(kAbsolutePath);
  cmd->add_option("--max-vocab", max_vocab, "Read at most this many rows per file (0: all)")->capture_default_str();
  cmd->add_option("--zipf-s", src.weights.zipf_s, "Zipf exponent for frequency weights")->capture_default_str();
  cmd->add_flag("--uniform-weights", src.weights.uniform, "Uniform word weights instead of Zipf");
  cmd->add_option("--src-counts", src.weights.counts, "Source 'word count' file overriding Zipf weights")
      ->transform(kAbsolutePath);
  cmd->add_option("--tgt-counts", tgt.weights.counts, "Target 'word count' file overriding Zipf weights")
      ->transform(kAbsolutePath);
}

std::optional<Index> positive_or_none(Index v) {
  if (v <= 0) return std::nullopt;
  return v;
}

// Target weighting follows the shared --zipf-s / --uniform-weights flags.
void share_weight_flags(EmbeddingInput& src, EmbeddingInput& tgt) {
  tgt.weights.zipf_s = src.weights.zipf_s;
  tgt.weights.uniform = src.weights.uniform;
}

// The command's flags as a config-file section, defaults included.
std::string resolved(const CLI::App* cmd) { return "[" + cmd->get_name() + "]\n" + cmd->config_to_str(true, false); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised embedding alignment with Sinkhorn distances"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");

  // synth
  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a rotated synthetic embedding pair");
  synth_cmd->add_option("--n", synth.n, "Vocabulary size")->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--d", synth.d, "Dimension")->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--noise", synth.noise, "Gaussian noise sigma")->capture_default_str()->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  synth_cmd->add_option("--out-dir", synth.out_dir, "Output directory")->required()->transform(kAbsolutePath);

  // train
  TrainOptions train;
  Index train_max_vocab = 0;
  Index train_vocab = *train.train.train_vocab;
  bool full_vocab = false;
  bool envelope = false;
  bool no_wgan_bt = false;
  auto* train_cmd = app.add_subcommand("train", "Learn the maps G (source to target) and F (target to source)");
  add_embedding_flags(train_cmd, train.src, train.tgt, train_max_vocab);
  train_cmd->add_option("--out-dir", train.out_dir, "Output directory")->required()->transform(kAbsolutePath);
  train_cmd->add_option("--init", train.init, "Initialization: wgan or identity")
      ->capture_default_str()
      ->check(CLI::IsMember({"wgan", "identity"}));
  train_cmd->add_option("--seed", train.train.seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--beta", train.train.beta, "Back-translation weight")->capture_default_str();
  train_cmd->add_option("--lambda", train.train.sinkhorn.lambda, "Sinkhorn entropic parameter")->capture_default_str();
  train_cmd->add_option("--iterations", train.train.sinkhorn.iterations, "Sinkhorn scaling iterations")
      ->capture_default_str();
  train_cmd->add_option("--steps", train.train.steps, "Sinkhorn-phase steps")->capture_default_str();
  train_cmd->add_option("--batch-size", train.train.batch_size, "Sinkhorn-phase batch size")->capture_default_str();
  train_cmd->add_option("--lr", train.train.learning_rate, "Sinkhorn-phase Adam learning rate")->capture_default_str();
  train_cmd->add_option("--adam-beta1", train.train.adam_beta1)->capture_default_str();
  train_cmd->add_option("--adam-beta2", train.train.adam_beta2)->capture_default_str();
  train_cmd->add_option("--adam-eps", train.train.adam_eps)->capture_default_str();
  train_cmd->add_option("--train-vocab", train_vocab, "Most frequent words used for training")->capture_default_str();
  train_cmd->add_flag("--full-vocab", full_vocab, "Train on the full loaded vocabulary");
  train_cmd->add_flag("--frequency-marginals", train.train.frequency_marginals,
                      "Renormalized word weights as in-batch marginals");
  train_cmd->add_flag("--envelope-gradient", envelope, "Approximate gradient treating the plan as constant");
  train_cmd->add_option("--smoothing-window", train.train.smoothing_window, "Window for best-checkpoint selection")
      ->capture_default_str();
  train_cmd->add_option("--wgan-steps", train.wgan.steps, "Pretraining map updates")->capture_default_str();
  train_cmd->add_option("--critic-steps", train.wgan.critic_steps, "Critic updates per map update")
      ->capture_default_str();
  train_cmd->add_option("--gp", train.wgan.gp, "Gradient penalty weight")->capture_default_str();
  train_cmd->add_option("--wgan-lr", train.wgan.learning_rate)->capture_default_str();
  train_cmd->add_option("--wgan-beta1", train.wgan.adam_beta1)->capture_default_str();
  train_cmd->add_option("--wgan-beta2", train.wgan.adam_beta2)->capture_default_str();
  train_cmd->add_option("--wgan-batch-size", train.wgan.batch_size)->capture_default_str();
  train_cmd->add_option("--critic-hidden", train.wgan.hidden, "Critic hidden width")->capture_default_str();
  train_cmd->add_flag("--no-wgan-back-translation", no_wgan_bt, "Drop the back-translation term while pretraining");

  // eval-bli / eval-sim
  EvalOptions bli;
  Index bli_max_vocab = 0;
  Index bli_candidates = 0;
  auto* bli_cmd = app.add_subcommand("eval-bli", "Bilingual lexicon induction accuracy@k");
  bli_cmd->add_option("--map", bli.map, "Map checkpoint")->required()->transform(kAbsolutePath);
  add_embedding_flags(bli_cmd, bli.src, bli.tgt, bli_max_vocab);
  bli_cmd->add_option("--lexicon", bli.gold, "Gold lexicon TSV")->required()->transform(kAbsolutePath);
  bli_cmd->add_option("--k", bli.k, "Neighbours considered")->capture_default_str();
  bli_cmd->add_option("--candidates", bli_candidates, "Restrict retrieval to the most frequent targets (0: all)")
      ->capture_default_str();
  bli_cmd->add_option("--out", bli.out, "Report path (default stdout)")->transform(kAbsolutePath);

  EvalOptions sim;
  Index sim_max_vocab = 0;
  auto* sim_cmd = app.add_subcommand("eval-sim", "Cross-lingual word similarity (Pearson)");
  sim_cmd->add_option("--map", sim.map, "Map checkpoint")->required()->transform(kAbsolutePath);
  add_embedding_flags(sim_cmd, sim.src, sim.tgt, sim_max_vocab);
  sim_cmd->add_option("--dataset", sim.gold, "Similarity TSV: source, target, score")
      ->required()
      ->transform(kAbsolutePath);
  sim_cmd->add_option("--out", sim.out, "Report path (default stdout)")->transform(kAbsolutePath);

  // induce
  InduceOptions ind;
  Index ind_max_vocab = 0;
  Index ind_candidates = 0;
  auto* ind_cmd = app.add_subcommand("induce", "Translate query words by nearest neighbour");
  ind_cmd->add_option("--map", ind.map, "Map checkpoint")->required()->transform(kAbsolutePath);
  add_embedding_flags(ind_cmd, ind.src, ind.tgt, ind_max_vocab);
  ind_cmd->add_option("--queries", ind.queries, "Query words, one per line")->required()->transform(kAbsolutePath);
  ind_cmd->add_option("--k", ind.k, "Translations per query")->capture_default_str();
  ind_cmd->add_option("--candidates", ind_candidates, "Restrict retrieval to the most frequent targets (0: all)")
      ->capture_default_str();
  ind_cmd->add_option("--out", ind.out, "Output path (default stdout)")->transform(kAbsolutePath);

  app.set_config("--config", "", "Replay flags from a manifest or config file");
  app.allow_config_extras(CLI::config_extras_mode::ignore);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error\tusage\t" << e.what() << '\n';
    return kInputError;
  }

  if (*synth_cmd) return run_guarded([&] { return cmd_synth(synth, resolved(synth_cmd)); });

  if (*train_cmd) {
    share_weight_flags(train.src, train.tgt);
    train.max_vocab = positive_or_none(train_max_vocab);
    train.train.train_vocab = full_vocab ? std::nullopt : positive_or_none(train_vocab);
    train.train.gradient = envelope ? SinkhornGradient::kEnvelope : SinkhornGradient::kUnrolled;
    train.wgan.seed = train.train.seed;
    train.wgan.train_vocab = train.train.train_vocab;
    train.wgan.beta = train.train.beta;
    train.wgan_back_translation = !no_wgan_bt;
    return run_guarded([&] {
      train.train.validate();
      if (train.init == "wgan") train.wgan.validate();
      return cmd_train(train, resolved(train_cmd));
    });
  }

  if (*bli_cmd) {
    share_weight_flags(bli.src, bli.tgt);
    bli.max_vocab = positive_or_none(bli_max_vocab);
    bli.candidates = positive_or_none(bli_candidates);
    return run_guarded([&] { return cmd_eval_bli(bli, resolved(bli_cmd)); });
  }

  if (*sim_cmd) {
    share_weight_flags(sim.src, sim.tgt);
    sim.max_vocab = positive_or_none(sim_max_vocab);
    return run_guarded([&] { return cmd_eval_sim(sim, resolved(sim_cmd)); });
  }

  share_weight_flags(ind.src, ind.tgt);
  ind.max_vocab = positive_or_none(ind_max_vocab);
  ind.candidates = positive_or_none(ind_candidates);
  return run_guarded([&] { return cmd_induce(ind, resolved(ind_cmd)); });
}
