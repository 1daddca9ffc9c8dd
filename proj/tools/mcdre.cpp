// mcdre: train, evaluate and apply multi-aspect entity taggers.
//
// Exit codes: 0 ok, 1 usage, 2 data, 3 config.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mcdre/checkpoint.hpp"
#include "mcdre/config.hpp"
#include "mcdre/data.hpp"
#include "mcdre/metrics.hpp"
#include "mcdre/pipeline.hpp"
#include "mcdre/sweep.hpp"
#include "mcdre/synth.hpp"
#include "mcdre/trainer.hpp"

namespace fs = std::filesystem;
using namespace mcdre;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kConfig = 3 };

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    write_text_atomic(out_path, text);
  }
}

RunConfig read_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig c = path.empty() ? RunConfig{} : load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(c, detail::trim(std::string_view(kv).substr(0, eq)), detail::trim(std::string_view(kv).substr(eq + 1)));
  }
  c.validate();
  return c;
}

std::optional<EmbeddingFile> external_for(const RunConfig& c) {
  if (!c.external_embedding()) return std::nullopt;
  return load_embeddings(c.embedding_path());
}

std::string epoch_log(const TrainResult& r) {
  std::ostringstream os;
  os << "epoch\tloss\tdev_strict_f\tbest\n";
  char buf[128];
  for (const auto& e : r.log) {
    std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%s\t%s\n", e.epoch, e.loss,
                  e.dev_f ? std::to_string(*e.dev_f).c_str() : "-", e.improved ? "*" : "");
    os << buf;
  }
  return os.str();
}

struct TrainArgs {
  std::string config, train, dev, out;
  std::vector<std::string> set;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  const RunConfig c = read_run_config(a.config, a.set);
  const auto external = external_for(c);
  const Dataset train = load_columnar(a.train, c.scheme);
  const Dataset dev = a.dev.empty() ? Dataset{} : load_columnar(a.dev, c.scheme);
  require_columns(train, c.active_aspects, a.train);
  if (train.empty()) throw DataError(a.train + ": no sentences");
  auto t = Tagger::create(c, build_vocabularies(c, train, external ? &*external : nullptr), external ? &*external : nullptr);
  fs::create_directories(a.out);
  const auto r = train_tagger(t, train, dev, [&](const EpochLog& e) {
    if (!a.quiet) {
      std::fprintf(stderr, "epoch %zu loss %.5f", e.epoch, e.loss);
      if (e.dev_f) std::fprintf(stderr, " dev strict F %.4f%s", *e.dev_f, e.improved ? " *" : "");
      std::fprintf(stderr, "\n");
    }
    return true;
  });
  save_checkpoint(fs::path(a.out) / "model.ckpt", t);
  write_text_atomic(fs::path(a.out) / "epochs.tsv", epoch_log(r));
  write_text_atomic(fs::path(a.out) / "config.txt", c.to_text());
  if (!a.quiet) std::fprintf(stderr, "best epoch %zu, wrote %s\n", r.best_epoch, (fs::path(a.out) / "model.ckpt").c_str());
  return kOk;
}

struct EvalArgs {
  std::string model, data, match = "strict", out;
  bool table = false;
};

int cmd_eval(const EvalArgs& a) {
  const auto mode = parse_match_mode(a.match);
  const Tagger t = load_checkpoint(a.model);
  const Dataset data = load_columnar(a.data, t.config.scheme);
  const auto report = t.evaluate(data, mode);
  emit(a.out, a.table ? format_table(report) : format_tsv(report));
  return kOk;
}

struct TagArgs {
  std::string model, input, out;
};

// Input: one whitespace-tokenised sentence per line.
int cmd_tag(const TagArgs& a) {
  const Tagger t = load_checkpoint(a.model);
  auto in = detail::open_in(a.input);
  Dataset out;
  std::string line;
  while (std::getline(in, line)) {
    detail::strip_cr(line);
    const auto words = detail::split_ws(line);
    if (words.empty()) continue;
    SentenceRecord r;
    r.id = "s" + std::to_string(out.size());
    for (auto w : words) r.tokens.emplace_back(w);
    const auto cols = t.predict_all(r);
    r.entity = cols[index(Aspect::Semantic)];
    r.pos = cols[index(Aspect::Syntactic)];
    r.medner = cols[index(Aspect::Domain)];
    out.push_back(std::move(r));
  }
  std::ostringstream os;
  write_columnar(os, out);
  emit(a.out, os.str());
  return kOk;
}

struct ScoreArgs {
  std::string gold, pred, match = "strict", scheme = "biohd", out;
  bool table = false;
};

int cmd_score(const ScoreArgs& a) {
  const auto mode = parse_match_mode(a.match);
  const auto scheme = parse_scheme(a.scheme);
  const Dataset gold = load_columnar(a.gold, scheme);
  const Dataset pred = load_columnar(a.pred, scheme);
  if (gold.size() != pred.size()) {
    throw DataError(a.pred + ": " + std::to_string(pred.size()) + " sentences, gold has " + std::to_string(gold.size()));
  }
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != pred[i].size()) {
      throw DataError(a.pred + ": sentence " + std::to_string(i) + " ('" + pred[i].id + "') has " +
                      std::to_string(pred[i].size()) + " tokens, gold has " + std::to_string(gold[i].size()));
    }
  }
  const auto report = breakdown_report(gold_mentions(gold, scheme), gold_mentions(pred, scheme), mode);
  emit(a.out, a.table ? format_table(report) : format_tsv(report));
  return kOk;
}

struct CodecArgs {
  std::string data, mentions, scheme = "biohd", out;
};

// Replaces the entity column of each sentence with the tags of its mentions.
int cmd_encode_tags(const CodecArgs& a) {
  const auto scheme = parse_scheme(a.scheme);
  Dataset data = load_columnar(a.data, Scheme::BIOHD);
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!by_id.emplace(data[i].id, i).second) throw DataError(a.data + ": duplicate sentence id '" + data[i].id + "'");
  }
  std::vector<std::vector<Mention>> mentions(data.size());
  for (const auto& ml : load_mention_lines(a.mentions)) {
    auto it = by_id.find(ml.doc);
    if (it == by_id.end()) throw DataError(a.mentions + ": no sentence with id '" + ml.doc + "' in " + a.data);
    mentions[it->second].push_back(ml.mention);
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    try {
      data[i].entity = encode(mentions[i], data[i].size(), scheme);
    } catch (const Error& e) {
      throw DataError("sentence '" + data[i].id + "': " + e.what());
    }
  }
  std::ostringstream os;
  write_columnar(os, data);
  emit(a.out, os.str());
  return kOk;
}

int cmd_decode_tags(const CodecArgs& a) {
  const auto scheme = parse_scheme(a.scheme);
  const Dataset data = load_columnar(a.data, scheme);
  std::string text;
  for (const auto& r : data)
    for (const auto& m : decode(r.entity, scheme)) text += format_mention_line(r.id, m) + "\n";
  emit(a.out, text);
  return kOk;
}

struct SweepArgs {
  std::string config, train, dev, test, out;
  std::vector<std::string> set, modes{"none", "kv", "attention", "feedforward"}, aspects{"se", "se,sy", "se,sy,do"};
  std::vector<std::uint64_t> seeds{1};
};

int cmd_sweep(const SweepArgs& a) {
  const RunConfig base = read_run_config(a.config, a.set);
  SweepGrid grid;
  for (const auto& m : a.modes) grid.modes.push_back(parse_cross_mode(m));
  for (const auto& s : a.aspects) grid.aspect_sets.push_back(AspectSet::parse(s));
  grid.seeds = a.seeds;
  const auto external = external_for(base);
  const Dataset train = load_columnar(a.train, base.scheme);
  const Dataset dev = load_columnar(a.dev, base.scheme);
  const Dataset test = a.test.empty() ? Dataset{} : load_columnar(a.test, base.scheme);
  fs::create_directories(a.out);
  const auto cells = run_sweep(base, grid, train, dev, test, external ? &*external : nullptr,
                               [](const SweepCell& c, const SweepRun& r) {
                                 std::fprintf(stderr, "%s %s seed %llu: strict F %.4f\n",
                                              std::string(cross_mode_name(c.mode)).c_str(), c.aspects.str().c_str(),
                                              static_cast<unsigned long long>(r.seed), r.strict.all.micro.f());
                               });
  for (const auto& c : cells) write_text_atomic(fs::path(a.out) / c.file_name(), format_cell(c));
  const auto summary = format_summary(cells);
  write_text_atomic(fs::path(a.out) / "summary.tsv", summary);
  std::cout << summary;
  return kOk;
}

struct SynthArgs {
  std::uint64_t seed = 1;
  std::size_t sentences = 400, dev_sentences = 0;
  std::string out, dev_out;
};

int cmd_gen_synth(const SynthArgs& a) {
  if (a.dev_sentences > 0 && a.dev_out.empty()) throw ConfigError("--dev-sentences needs --dev-out");
  const auto c = generate_synthetic({a.seed, a.sentences, a.dev_sentences});
  std::ostringstream train;
  write_columnar(train, c.train);
  emit(a.out, train.str());
  if (!a.dev_out.empty()) {
    std::ostringstream dev;
    write_columnar(dev, c.dev);
    write_text_atomic(a.dev_out, dev.str());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-aspect cross-integration entity tagger"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write model.ckpt, epochs.tsv and config.txt");
  train_cmd->add_option("--config", train.config, "Run configuration file")->check(CLI::ExistingFile);
  train_cmd->add_option("--train", train.train, "Training data (columnar)")->required();
  train_cmd->add_option("--dev", train.dev, "Dev data for early stopping");
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--set", train.set, "Override a config key (key=value)");
  train_cmd->add_flag("--quiet", train.quiet, "No per-epoch progress");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on gold data");
  eval_cmd->add_option("--model", eval.model, "Checkpoint")->required();
  eval_cmd->add_option("--data", eval.data, "Gold data (columnar)")->required();
  eval_cmd->add_option("--match", eval.match, "strict or lenient")->check(CLI::IsMember({"strict", "lenient"}));
  eval_cmd->add_option("--out", eval.out, "Report file (default stdout)");
  eval_cmd->add_flag("--table", eval.table, "Aligned table instead of TSV");

  TagArgs tag;
  auto* tag_cmd = app.add_subcommand("tag", "Tag plain sentences, one per line");
  tag_cmd->add_option("--model", tag.model, "Checkpoint")->required();
  tag_cmd->add_option("--input", tag.input, "Token file")->required();
  tag_cmd->add_option("--out", tag.out, "Columnar output (default stdout)");

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Score predicted against gold columnar files");
  score_cmd->add_option("--gold", score.gold, "Gold data")->required();
  score_cmd->add_option("--pred", score.pred, "Predicted data")->required();
  score_cmd->add_option("--match", score.match, "strict or lenient")->check(CLI::IsMember({"strict", "lenient"}));
  score_cmd->add_option("--scheme", score.scheme, "bio or biohd");
  score_cmd->add_option("--out", score.out, "Report file (default stdout)");
  score_cmd->add_flag("--table", score.table, "Aligned table instead of TSV");

  CodecArgs enc;
  auto* enc_cmd = app.add_subcommand("encode-tags", "Write entity tags for mention lines into a columnar file");
  enc_cmd->add_option("--data", enc.data, "Columnar file whose sentence ids match the mention doc ids")->required();
  enc_cmd->add_option("--mentions", enc.mentions, "Mention lines")->required();
  enc_cmd->add_option("--scheme", enc.scheme, "bio or biohd");
  enc_cmd->add_option("--out", enc.out, "Columnar output (default stdout)");

  CodecArgs dec;
  auto* dec_cmd = app.add_subcommand("decode-tags", "List the mentions of a columnar file as mention lines");
  dec_cmd->add_option("--data", dec.data, "Columnar file")->required();
  dec_cmd->add_option("--scheme", dec.scheme, "bio or biohd");
  dec_cmd->add_option("--out", dec.out, "Output (default stdout)");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train a grid of cross modes x aspect sets x seeds");
  sweep_cmd->add_option("--config", sweep.config, "Base run configuration")->check(CLI::ExistingFile);
  sweep_cmd->add_option("--train", sweep.train, "Training data")->required();
  sweep_cmd->add_option("--dev", sweep.dev, "Dev data for early stopping")->required();
  sweep_cmd->add_option("--test", sweep.test, "Scored data (default: dev)");
  sweep_cmd->add_option("--out", sweep.out, "Output directory")->required();
  sweep_cmd->add_option("--set", sweep.set, "Override a config key (key=value)");
  sweep_cmd->add_option("--modes", sweep.modes, "Cross modes")->capture_default_str();
  sweep_cmd->add_option("--aspects", sweep.aspects, "Aspect sets such as se se,sy se,sy,do")->capture_default_str();
  sweep_cmd->add_option("--seeds", sweep.seeds, "Seeds")->capture_default_str();

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("gen-synth", "Write a seeded synthetic corpus");
  synth_cmd->add_option("--seed", synth.seed, "Seed")->capture_default_str();
  synth_cmd->add_option("--sentences", synth.sentences, "Training sentences")->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "Training output (default stdout)");
  synth_cmd->add_option("--dev-sentences", synth.dev_sentences, "Dev sentences")->capture_default_str();
  synth_cmd->add_option("--dev-out", synth.dev_out, "Dev output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train);
    if (*eval_cmd) return cmd_eval(eval);
    if (*tag_cmd) return cmd_tag(tag);
    if (*score_cmd) return cmd_score(score);
    if (*enc_cmd) return cmd_encode_tags(enc);
    if (*dec_cmd) return cmd_decode_tags(dec);
    if (*sweep_cmd) return cmd_sweep(sweep);
    if (*synth_cmd) return cmd_gen_synth(synth);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const WiringError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
