// Copyright 2026 The rnnt-oov Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// rnnt-oov: command-line front end for the OOV fine-tuning recipe.
//
// Exit codes: 0 success, 2 I/O or file format, 3 configuration or argument,
// 4 numeric abort.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rnnt_oov/pipeline.hpp"

namespace fs = std::filesystem;
using namespace rnnt_oov;

namespace {

constexpr int kExitIo = 2;
constexpr int kExitConfig = 3;
constexpr int kExitNumeric = 4;

struct Globals {
  std::string config;
  uint64_t seed = 1;
  std::string out = ".";
};

void note(const std::string &msg) { std::cerr << "rnnt-oov: " << msg << '\n'; }

Manifest load_manifest_arg(const std::string &path) { return Manifest::load(path); }

/// Feature dimension of the first utterance in a manifest.
size_t feature_dim_of(const Manifest &m) {
  if (m.empty()) throw ArgumentError("empty manifest");
  return load_features(m, m[0]).cols();
}

void make_out_dir(const fs::path &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void log_progress(const LogRow &r, size_t steps) {
  if (r.step % 100 == 0 || r.step == steps) {
    std::ostringstream s;
    s << "step " << r.step << "/" << steps << " loss " << std::setprecision(5) << r.loss;
    if (r.penalty != 0.0) s << " penalty " << r.penalty;
    note(s.str());
  }
}

// ---------------------------------------------------------------------------
// Shared training options
// ---------------------------------------------------------------------------

struct TrainArgs {
  size_t steps = 0;  // 0: command default
  size_t batch_size = 8;
  double lr = 1e-3;
  bool lr_decay = false;
  std::string optimizer = "adam";
  double clip_norm = 5.0;
  size_t checkpoint_every = 0;

  void add(CLI::App *app) {
    app->add_option("--steps", steps, "optimizer steps");
    app->add_option("--batch-size", batch_size, "utterances per step");
    app->add_option("--lr", lr, "learning rate");
    app->add_flag("--lr-decay", lr_decay, "decay the learning rate linearly to zero");
    app->add_option("--optimizer", optimizer, "adam or sgd");
    app->add_option("--clip-norm", clip_norm, "global gradient norm limit (<= 0 disables)");
    app->add_option("--checkpoint-every", checkpoint_every, "intermediate checkpoint interval (0: none)");
  }

  TrainConfig config(uint64_t seed, size_t default_steps) const {
    TrainConfig c;
    c.steps = steps ? steps : default_steps;
    c.batch_size = batch_size;
    c.learning_rate = lr;
    c.lr_decay = lr_decay;
    c.optimizer = parse_optimizer(optimizer);
    c.clip_norm = clip_norm;
    c.checkpoint_every = checkpoint_every;
    c.seed = seed;
    return c;
  }
};

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct GendataArgs {
  CorpusConfig c;

  void add(CLI::App *app) {
    app->add_option("--known-words", c.known_words, "in-vocabulary word count");
    app->add_option("--oov-words", c.oov_words, "held-out word count");
    app->add_option("--train-utterances", c.train_utterances);
    app->add_option("--dev-utterances", c.dev_utterances);
    app->add_option("--eval-utterances", c.eval_utterances);
    app->add_option("--dev-oov-min", c.dev_oov_min, "dev occurrences of the rarest held-out word");
    app->add_option("--dev-oov-max", c.dev_oov_max, "dev occurrences of the most frequent held-out word");
    app->add_option("--eval-oov-count", c.eval_oov_count, "eval occurrences of each held-out word");
    app->add_option("--dev-sub", c.dev_sub, "DevSub size");
    app->add_option("--eval-sub", c.eval_sub, "EvalSub size");
    app->add_option("--real-speakers", c.voices.real_speakers);
    app->add_option("--tts-angle", c.voices.tts_angle, "rotation of the synthetic voice");
    app->add_option("--tts-noise", c.voices.tts_noise_std, "noise std of the synthetic voice");
  }

  int run(const Globals &g) {
    c.seed = g.seed;
    const DataDir d = generate_data(c, g.out);
    note("wrote corpus to " + d.root.string());
    return 0;
  }
};

struct ExtractArgs {
  std::string train, probe, out_file;
  size_t min_count = 3;

  void add(CLI::App *app) {
    app->add_option("--train", train, "training manifest")->required();
    app->add_option("--probe", probe, "manifest searched for new words")->required();
    app->add_option("--min-count", min_count, "minimum occurrences in the probe set");
    app->add_option("--file", out_file, "output file (default <out>/oov.txt)");
  }

  int run(const Globals &g) {
    const OovList oov = extract_oov(load_manifest_arg(train).texts(), load_manifest_arg(probe).texts(), min_count);
    const fs::path path = out_file.empty() ? fs::path(g.out) / "oov.txt" : fs::path(out_file);
    if (path.has_parent_path()) make_out_dir(path.parent_path());
    oov.save(path);
    if (oov.words.empty()) note("warning: no OOV words found");
    note(std::to_string(oov.words.size()) + " OOV words written to " + path.string());
    return 0;
  }
};

struct SubsetArgs {
  std::string data, train, dev, eval, oov;
  size_t dev_sub = 0, eval_sub = 0;
  size_t min_count = 3;

  void add(CLI::App *app) {
    app->add_option("--data", data, "gendata directory (supplies the manifests and sizes)");
    app->add_option("--train", train, "training manifest");
    app->add_option("--dev", dev, "dev manifest");
    app->add_option("--eval", eval, "eval manifest");
    app->add_option("--oov", oov, "OOV list (default: extracted from train and dev)");
    app->add_option("--dev-sub", dev_sub, "DevSub size");
    app->add_option("--eval-sub", eval_sub, "EvalSub size");
    app->add_option("--min-count", min_count, "minimum dev occurrences for extraction");
  }

  int run(const Globals &g) {
    if (!data.empty()) {
      const DataDir d{data};
      const CorpusConfig c = CorpusConfig::from_json(read_json_file(d.config()));
      if (train.empty()) train = d.train().string();
      if (dev.empty()) dev = d.dev().string();
      if (eval.empty()) eval = d.eval().string();
      if (!dev_sub) dev_sub = c.dev_sub;
      if (!eval_sub) eval_sub = c.eval_sub;
    }
    if (train.empty() || dev.empty() || eval.empty()) throw ConfigError("subset: need --data or --train/--dev/--eval");
    const Manifest tr = load_manifest_arg(train), dv = load_manifest_arg(dev), ev = load_manifest_arg(eval);
    Subsets s = make_subsets(tr, dv, ev, dev_sub, eval_sub, g.seed, min_count);
    if (!oov.empty()) {
      s.oov = OovList::load(oov, min_count);
      s.dev_oov = select_oov_utterances(dv, s.oov);
      s.eval_oov = select_oov_utterances(ev, s.oov);
      s.eval_sub_non_oov = complement(s.eval_sub, select_oov_utterances(s.eval_sub, s.oov));
    }
    if (s.oov.words.empty()) note("warning: no OOV words found");
    save_subsets(s, g.out);
    const auto sizes = [](const std::string &name, size_t a, size_t b, size_t total) {
      note(name + ": " + std::to_string(a) + " + complement " + std::to_string(b) + " = " + std::to_string(total));
    };
    sizes("dev_oov", s.dev_oov.size(), dv.size() - s.dev_oov.size(), dv.size());
    sizes("eval_oov", s.eval_oov.size(), ev.size() - s.eval_oov.size(), ev.size());
    sizes("eval_sub_non_oov", s.eval_sub_non_oov.size(), s.eval_sub.size() - s.eval_sub_non_oov.size(),
          s.eval_sub.size());
    return 0;
  }
};

struct SynthArgs {
  std::string data, manifest, name = "synth";

  void add(CLI::App *app) {
    app->add_option("--data", data, "gendata directory (voice settings and vocabulary)")->required();
    app->add_option("--manifest", manifest, "texts to render")->required();
    app->add_option("--name", name, "output manifest and feature prefix");
  }

  int run(const Globals &g) {
    const DataDir d{data};
    const CorpusConfig c = CorpusConfig::from_json(read_json_file(d.config()));
    const Vocab vocab = Vocab::load(d.vocab());
    make_out_dir(g.out);
    const Manifest m = synthesize(load_manifest_arg(manifest), vocab, c, g.out, name);
    m.save(fs::path(g.out) / (name + ".tsv"));
    note("rendered " + std::to_string(m.size()) + " utterances");
    return 0;
  }
};

struct TrainCmd {
  std::string train, vocab, resume;
  ModelConfig mc;
  TrainArgs ta;

  void add(CLI::App *app) {
    app->add_option("--train", train, "training manifest")->required();
    app->add_option("--vocab", vocab, "vocabulary file")->required();
    app->add_option("--resume", resume, "continue from an intermediate checkpoint");
    app->add_option("--encoder-layers", mc.encoder_layers);
    app->add_option("--encoder-width", mc.encoder_width);
    app->add_option("--decoder-layers", mc.decoder_layers);
    app->add_option("--decoder-width", mc.decoder_width);
    app->add_option("--joint-width", mc.joint_width);
    ta.add(app);
  }

  int run(const Globals &g) {
    const Manifest m = load_manifest_arg(train);
    const Vocab v = Vocab::load(vocab);
    const TrainConfig c = ta.config(g.seed, 3000);
    TrainOutput out{g.out, [&](const LogRow &r) { log_progress(r, c.steps); }};
    if (!resume.empty()) {
      resume_training(load_checkpoint(resume), c, {&m}, out);
    } else {
      mc.feature_dim = feature_dim_of(m);
      mc.vocab_size = v.label_count();
      train_baseline(c, mc, v, m, out);
    }
    note("wrote " + (fs::path(g.out) / "final.bin").string());
    return 0;
  }
};

struct FinetuneCmd {
  std::string base, real, synth, fisher_source, weights = "90,10", freeze = "none", ewc_scope = "none";
  double lambda = 0.0;
  bool ewc_l2 = false;
  size_t fisher_samples = 200;
  TrainArgs ta;

  void add(CLI::App *app) {
    app->add_option("--base", base, "baseline checkpoint")->required();
    app->add_option("--real", real, "real-audio source manifest")->required();
    app->add_option("--synth", synth, "synthetic-audio source manifest")->required();
    app->add_option("--weights", weights, "real,synthetic sampling shares");
    app->add_option("--freeze", freeze, "components to freeze: none, all or a list such as encoder");
    app->add_option("--ewc-scope", ewc_scope, "components under EWC: none, all or a list");
    app->add_option("--lambda", lambda, "EWC strength");
    app->add_flag("--ewc-l2", ewc_l2, "unit Fisher (plain L2 anchor)");
    app->add_option("--fisher-source", fisher_source, "manifest for the Fisher estimate (default --real)");
    app->add_option("--fisher-samples", fisher_samples);
    ta.add(app);
  }

  int run(const Globals &g) {
    const Checkpoint b = load_checkpoint(base);
    const Manifest r = load_manifest_arg(real), s = load_manifest_arg(synth);
    TrainConfig c = ta.config(g.seed, 600);
    c.weights = SamplingWeights::parse(weights).values();
    try {
      c.freeze.frozen = ComponentSet::parse(freeze);
      c.ewc.scope = ComponentSet::parse(ewc_scope);
    } catch (const ArgumentError &e) {
      throw ConfigError(e.what());
    }
    c.ewc.enabled = !c.ewc.scope.empty();
    c.ewc.lambda = lambda;
    c.ewc.l2 = ewc_l2;
    c.ewc.fisher_samples = fisher_samples;
    if (!c.ewc.enabled && lambda != 0.0) note("warning: --lambda given without --ewc-scope; EWC is off");
    std::optional<Manifest> fs_manifest;
    if (!fisher_source.empty()) fs_manifest = load_manifest_arg(fisher_source);
    TrainOutput out{g.out, [&](const LogRow &row) { log_progress(row, c.steps); }};
    finetune(b, c, {&r, &s}, fs_manifest ? &*fs_manifest : &r, nullptr, out);
    note("wrote " + (fs::path(g.out) / "final.bin").string());
    return 0;
  }
};

/// "name=path" pairs.
std::vector<std::pair<std::string, std::string>> named_paths(const std::vector<std::string> &items,
                                                             const std::string &flag) {
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::string> seen;
  for (const auto &it : items) {
    const auto eq = it.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == it.size()) {
      throw ConfigError(flag + " expects name=path, got '" + it + "'");
    }
    if (!seen.insert(it.substr(0, eq)).second) throw ConfigError(flag + ": duplicate name " + it.substr(0, eq));
    out.emplace_back(it.substr(0, eq), it.substr(eq + 1));
  }
  return out;
}

struct EvalCmd {
  std::string checkpoint, normalizer_from;
  std::vector<std::string> sets;
  std::optional<double> normalizer;

  void add(CLI::App *app) {
    app->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    app->add_option("--set", sets, "name=manifest, repeatable")->required()->take_all();
    app->add_option("--normalizer", normalizer, "baseline WER used for NWER");
    app->add_option("--normalizer-from", normalizer_from, "eval report whose WER is the NWER normalizer");
  }

  int run(const Globals &g) {
    const auto pairs = named_paths(sets, "--set");
    if (normalizer && !normalizer_from.empty()) throw ConfigError("give --normalizer or --normalizer-from, not both");
    std::optional<double> norm = normalizer;
    if (!normalizer_from.empty()) norm = WerReport::from_json(read_json_file(normalizer_from)).wer();
    const Checkpoint ck = load_checkpoint(checkpoint);
    const RnntModel model = ck.model();
    const fs::path out(g.out);
    make_out_dir(out);
    std::string table = summary_header();
    for (const auto &[name, path] : pairs) {
      const WerReport r = evaluate(model, ck.vocab, load_manifest_arg(path), norm);
      write_text_file(out / (name + ".json"), r.to_json().dump(1) + "\n");
      table += summary_line(name, r);
    }
    write_text_file(out / "summary.tsv", table);
    return 0;
  }
};

struct ReportCmd {
  std::vector<std::string> runs;
  std::string oov, finetune_text;
  double tolerance = 0.05;

  void add(CLI::App *app) {
    app->add_option("--run", runs, "name=eval_dir, repeatable; the first is the baseline")->required()->take_all();
    app->add_option("--oov", oov, "OOV list for the per-word analysis")->required();
    app->add_option("--finetune-text", finetune_text, "fine-tuning manifest whose word counts form the buckets")
        ->required();
    app->add_option("--tolerance", tolerance, "relative non-OOV WER tolerance when picking the best run");
  }

  int run(const Globals &g) {
    const auto pairs = named_paths(runs, "--run");
    if (pairs.size() < 2) throw ConfigError("report: need the baseline and at least one other run");
    auto load = [](const fs::path &dir, const std::string &set) {
      return WerReport::from_json(read_json_file(dir / (set + ".json")));
    };
    GridResult gr;
    for (const auto &[name, dir] : pairs) {
      gr.rows.push_back({name, load(dir, "dev_oov"), load(dir, "eval_oov"), load(dir, "eval_sub_non_oov"),
                         load(dir, "dev_sub")});
    }
    gr.normalizer = gr.rows.front().dev_sub.wer();
    if (!(gr.normalizer > 0.0)) throw NumericError("baseline WER on dev_sub is zero; NWER undefined");
    for (auto &r : gr.rows) {
      for (WerReport *w : {&r.dev_oov, &r.oov, &r.non_oov, &r.dev_sub}) w->normalizer = gr.normalizer;
    }
    gr.best = pick_best(gr, tolerance);
    const OovList words = OovList::load(oov);
    const Manifest ft = load_manifest_arg(finetune_text);
    for (const auto &r : gr.rows) {
      if (r.name == gr.best) gr.words = per_word_analysis(gr.rows.front().oov, r.oov, words, ft.texts());
    }
    make_out_dir(g.out);
    const fs::path out(g.out);
    write_text_file(out / "report.tsv", report_table(gr));
    write_text_file(out / "per_word.tsv", word_analysis_tsv(gr.words));
    write_text_file(out / "report.json", grid_json(gr).dump(1) + "\n");
    note("best configuration: " + gr.best);
    return 0;
  }
};

struct GridCmd {
  std::string data, base, grid_file;
  double lambda = 100.0;
  size_t fisher_samples = 200;
  TrainArgs ta;

  void add(CLI::App *app) {
    app->add_option("--data", data, "gendata directory")->required();
    app->add_option("--base", base, "baseline checkpoint")->required();
    app->add_option("--grid", grid_file, "JSON list of grid entries (default: the ablation tables)");
    app->add_option("--lambda", lambda, "EWC strength for the default grid");
    app->add_option("--fisher-samples", fisher_samples);
    ta.lr_decay = true;
    ta.add(app);
    app->add_flag("--no-lr-decay{false}", ta.lr_decay, "constant learning rate");
  }

  int run(const Globals &g) {
    const DataDir d{data};
    const CorpusConfig c = CorpusConfig::from_json(read_json_file(d.config()));
    const Manifest train = Manifest::load(d.train()), dev = Manifest::load(d.dev()), eval = Manifest::load(d.eval());
    const Manifest synth = Manifest::load(d.synth());
    const Subsets s = make_subsets(train, dev, eval, c.dev_sub, c.eval_sub, c.seed);
    GridConfig gc;
    if (grid_file.empty()) {
      gc.entries = default_grid(lambda);
    } else {
      const auto j = read_json_file(grid_file);
      if (!j.is_array()) throw ConfigError("grid file must hold a JSON array");
      std::set<std::string> names;
      for (const auto &e : j) {
        gc.entries.push_back(GridEntry::from_json(e));
        if (!names.insert(gc.entries.back().name).second) {
          throw ConfigError("grid: duplicate entry name " + gc.entries.back().name);
        }
      }
    }
    gc.finetune = ta.config(g.seed, 600);
    gc.fisher_samples = fisher_samples;
    const GridResult r = run_grid(load_checkpoint(base), gc, train, synth, s, g.out, note);
    note("best configuration: " + r.best);
    return 0;
  }
};

// ---------------------------------------------------------------------------
// Config file handling
// ---------------------------------------------------------------------------

/// Value of --config in argv, if any.
std::string find_config(int argc, char **argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return {};
}

/// argv with the config file's keys inserted as --key=value right after the
/// subcommand name, so options given on the command line take precedence.
std::vector<std::string> expand_args(int argc, char **argv, CLI::App &app) {
  std::vector<std::string> args(argv + 1, argv + argc);
  const std::string config = find_config(argc, argv);
  if (config.empty()) return args;
  size_t pos = args.size();
  CLI::App *sub = nullptr;
  for (size_t i = 0; i < args.size(); ++i) {
    if (auto *s = app.get_subcommand_no_throw(args[i])) {
      pos = i + 1;
      sub = s;
      break;
    }
  }
  std::vector<std::string> injected;
  for (const auto &[key, value] : read_config_file(config)) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    const bool known = (sub && sub->get_option_no_throw(flag)) || app.get_option_no_throw(flag);
    if (!known) {
      note("config: ignoring key '" + key + "' not used by this command");
      continue;
    }
    injected.push_back(flag + "=" + value);
  }
  args.insert(args.begin() + static_cast<long>(sub ? pos : 0), injected.begin(), injected.end());
  return args;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"RNN-T OOV fine-tuning recipe"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "file of key = value defaults");
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--out", g.out, "output directory");

  auto sub = [&](const std::string &name, const std::string &desc) {
    CLI::App *s = app.add_subcommand(name, desc);
    s->fallthrough();
    return s;
  };
  GendataArgs gendata;
  ExtractArgs extract;
  SubsetArgs subset;
  SynthArgs synth;
  TrainCmd train;
  FinetuneCmd finetune_cmd;
  EvalCmd eval;
  ReportCmd report;
  GridCmd grid;
  std::vector<std::pair<CLI::App *, std::function<int()>>> commands = {
      {sub("gendata", "generate the toy corpus"), [&] { return gendata.run(g); }},
      {sub("extract-oov", "list words absent from train and frequent in a probe set"), [&] { return extract.run(g); }},
      {sub("subset", "build the OOV and sampled evaluation subsets"), [&] { return subset.run(g); }},
      {sub("synth", "render a manifest's texts with the synthetic voice"), [&] { return synth.run(g); }},
      {sub("train", "train the baseline model"), [&] { return train.run(g); }},
      {sub("finetune", "fine-tune on a weighted real/synthetic mix"), [&] { return finetune_cmd.run(g); }},
      {sub("eval", "decode and score manifests"), [&] { return eval.run(g); }},
      {sub("report", "aggregate eval outputs into tables and per-word buckets"), [&] { return report.run(g); }},
      {sub("grid", "fine-tune and evaluate the whole ablation grid"), [&] { return grid.run(g); }}};
  gendata.add(commands[0].first);
  extract.add(commands[1].first);
  subset.add(commands[2].first);
  synth.add(commands[3].first);
  train.add(commands[4].first);
  finetune_cmd.add(commands[5].first);
  eval.add(commands[6].first);
  report.add(commands[7].first);
  grid.add(commands[8].first);

  try {
    std::vector<std::string> args = expand_args(argc, argv, app);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  } catch (const IoError &e) {
    note(e.what());
    return kExitIo;
  } catch (const ConfigError &e) {
    note(e.what());
    return kExitConfig;
  }

  try {
    for (auto &[cmd, run] : commands) {
      if (cmd->parsed()) return run();
    }
  } catch (const IoError &e) {
    note(e.what());
    return kExitIo;
  } catch (const FormatError &e) {
    note(e.what());
    return kExitIo;
  } catch (const NumericError &e) {
    note(e.what());
    return kExitNumeric;
  } catch (const ConfigError &e) {
    note(e.what());
    return kExitConfig;
  } catch (const std::invalid_argument &e) {
    note(e.what());
    return kExitConfig;
  }
  return kExitConfig;
}
