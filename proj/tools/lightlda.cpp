// lightlda command-line driver: prep, train, eval, bench, plot, serve.

#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lightlda/corpus/reader.hpp"
#include "lightlda/corpus/synthetic.hpp"
#include "lightlda/engine/pipeline.hpp"
#include "lightlda/eval/report.hpp"
#include "lightlda/pserver/wire.hpp"

namespace fs = std::filesystem;
using namespace lightlda;

namespace {

/// Reads `key = value` lines ('#' comments) into `--key=value` arguments.
std::vector<std::string> config_file_args(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::vector<std::string> args;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    for (auto& c : key) {
      if (c == '_') c = '-';
    }
    args.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
  }
  return args;
}

/// Splices config-file arguments in front of the command-line ones so that
/// flags given explicitly win.
std::vector<std::string> expand_args(int argc, char** argv) {
  std::vector<std::string> in(argv + 1, argv + argc);
  std::vector<std::string> from_file;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] == "--config" && i + 1 < in.size()) {
      from_file = config_file_args(in[++i]);
    } else if (in[i].rfind("--config=", 0) == 0) {
      from_file = config_file_args(in[i].substr(9));
    } else {
      rest.push_back(in[i]);
    }
  }
  if (from_file.empty() || rest.empty()) return rest;
  std::vector<std::string> out{rest[0]};
  out.insert(out.end(), from_file.begin(), from_file.end());
  out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

void add_run_flags(CLI::App* cmd, engine::RunConfig& cfg, std::string& sampler) {
  cmd->add_option("--topics", cfg.topics, "number of topics K")->required();
  cmd->add_option("--alpha", cfg.alpha, "doc-topic prior (default 50/K)");
  cmd->add_option("--beta", cfg.beta, "word-topic prior");
  cmd->add_option("--sampler", sampler, "gibbs|sparse|alias|light|light-word-only|light-doc-only");
  cmd->add_option("--mh-steps", cfg.sampler.mh_steps, "MH steps per token");
  cmd->add_option("--iters", cfg.iterations, "iterations");
  cmd->add_option("--threads", cfg.threads, "sampling threads per worker");
  cmd->add_option("--slices", cfg.num_slices, "model slices");
  cmd->add_option("--blocks", cfg.num_blocks, "data blocks (taken from prep when omitted)");
  cmd->add_option("--workers", cfg.workers, "workers");
  cmd->add_option("--staleness", cfg.staleness, "SSP staleness bound s");
  cmd->add_option("--hot-fraction", cfg.hot_fraction, "fraction of words with dense rows");
  cmd->add_option("--memory-budget", cfg.memory_budget, "model memory budget in bytes");
  cmd->add_option("--prefetch-depth", cfg.prefetch_depth, "slices fetched ahead");
  cmd->add_option("--seed", cfg.seed, "random seed");
  cmd->add_option("--eval-every", cfg.eval_every, "likelihood every N iterations (0: last only)");
  cmd->add_option("--checkpoint-every", cfg.checkpoint_every, "checkpoint every N iterations");
  cmd->add_flag("--direct-model", cfg.direct_model, "bypass the parameter server");
  cmd->add_flag("--out-of-core", cfg.out_of_core, "stream blocks from disk");
  cmd->add_option("--server", cfg.server, "host:port of a running 'serve'");
  cmd->add_option("--worker-id", cfg.worker_id, "worker id when using --server");
  cmd->add_option("--warm-start", cfg.warm_start, "checkpoint directory to resume from");
}

void finish_config(engine::RunConfig& cfg, const std::string& sampler) {
  if (!sampler.empty()) cfg.sampler.kind = samplers::parse_sampler_kind(sampler);
  cfg.sampler.seed = cfg.seed;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void print_report(const engine::IterationReport& r) {
  std::cout << "iter " << r.iteration + 1 << "  " << r.seconds << " s  "
            << static_cast<std::uint64_t>(r.tokens_per_sec()) << " tok/s";
  if (r.has_likelihood) std::cout << "  ll " << r.total_loglik;
  std::cout << std::endl;
}

/// Trains one configuration into cfg.run_dir. Returns the reports.
std::vector<engine::IterationReport> train(engine::RunConfig cfg, std::uint32_t stop_after,
                                           bool verbose) {
  fs::create_directories(cfg.run_dir);
  write_text(cfg.run_dir / "config.json", engine::to_json(cfg).dump(2) + "\n");
  auto trainer = engine::make_trainer(cfg);
  trainer->initialize();
  if (!cfg.warm_start.empty()) cfg.warm_start = engine::resolve_checkpoint(cfg.warm_start);
  if (!cfg.warm_start.empty() && fs::exists(cfg.warm_start / "model.dump") && !trainer->is_remote()) {
    engine::verify_against_dump(*trainer, cfg.warm_start / "model.dump");
  }
  const bool append = !cfg.warm_start.empty();
  const bool lead = cfg.server.empty() || cfg.worker_id == 0;
  if (append && lead) eval::truncate_metrics(cfg.run_dir / "metrics.csv", trainer->next_iteration());
  std::unique_ptr<eval::MetricsWriter> metrics;
  if (lead) metrics = std::make_unique<eval::MetricsWriter>(cfg.run_dir / "metrics.csv", append);
  std::vector<engine::IterationReport> out;
  const std::uint32_t end = stop_after > 0 ? std::min(stop_after, cfg.iterations) : cfg.iterations;
  while (trainer->next_iteration() < end) {
    const std::uint32_t it = trainer->next_iteration();
    const bool eval = cfg.eval_every > 0 ? ((it + 1) % cfg.eval_every == 0 || it + 1 == end)
                                         : it + 1 == end;
    out.push_back(trainer->step(eval && lead));
    if (metrics) metrics->write(out.back());
    if (verbose) print_report(out.back());
    if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) {
      trainer->checkpoint(cfg.run_dir / "checkpoint");
    }
  }
  trainer->checkpoint(cfg.run_dir / "checkpoint");
  if (!trainer->is_remote()) {
    corpus::write_file_atomic(cfg.run_dir / "model.dump", tables::serialize_model(trainer->dump()));
    write_text(cfg.run_dir / "state_hash.txt", trainer->state_hash() + "\n");
  }
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"LightLDA topic model trainer"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  // prep
  auto* prep = app.add_subcommand("prep", "tokenize a corpus and write slice-sorted blocks");
  std::string input, format = "text", vocab_file;
  fs::path prep_out;
  std::uint64_t min_count = 1;
  engine::PrepOptions popt;
  corpus::SyntheticSpec synth;
  bool synthetic = false;
  prep->add_option("--input", input, "corpus file");
  prep->add_option("--format", format, "text|docword")->check(CLI::IsMember({"text", "docword"}));
  prep->add_option("--vocab", vocab_file, "vocabulary file for docword input");
  prep->add_option("--min-count", min_count, "drop words rarer than this");
  prep->add_option("--topics", popt.topics, "number of topics K")->required();
  prep->add_option("--blocks", popt.num_blocks, "data blocks");
  prep->add_option("--slices", popt.num_slices, "model slices");
  prep->add_option("--seed", popt.seed, "random seed");
  prep->add_option("--out", prep_out, "output directory")->required();
  prep->add_flag("--synthetic", synthetic, "generate a synthetic corpus instead of reading one");
  prep->add_option("--synthetic-docs", synth.docs);
  prep->add_option("--synthetic-vocab", synth.vocab);
  prep->add_option("--synthetic-doc-len", synth.mean_doc_len);
  prep->add_option("--synthetic-zipf", synth.zipf_exponent);
  prep->add_option("--synthetic-topics", synth.true_topics);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  engine::RunConfig tcfg;
  std::string tsampler;
  std::uint32_t stop_after = 0;
  bool quiet = false;
  add_run_flags(train_cmd, tcfg, tsampler);
  train_cmd->add_option("--data", tcfg.prep_dir, "directory written by prep")->required();
  train_cmd->add_option("--out", tcfg.run_dir, "run directory")->required();
  train_cmd->add_option("--stop-after", stop_after, "stop (and checkpoint) after this iteration");
  train_cmd->add_flag("--quiet", quiet);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "likelihood of a checkpoint");
  engine::RunConfig ecfg;
  fs::path checkpoint;
  eval_cmd->add_option("--data", ecfg.prep_dir, "directory written by prep")->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  eval_cmd->add_option("--topics", ecfg.topics)->required();
  eval_cmd->add_option("--alpha", ecfg.alpha);
  eval_cmd->add_option("--beta", ecfg.beta);
  eval_cmd->add_option("--slices", ecfg.num_slices);

  // bench
  auto* bench = app.add_subcommand("bench", "compare sampler kinds on the same blocks and seeds");
  engine::RunConfig bcfg;
  std::string bsampler, bench_samplers = "sparse,alias,light,light-word-only,light-doc-only",
                        bench_seeds = "1";
  add_run_flags(bench, bcfg, bsampler);
  bench->add_option("--data", bcfg.prep_dir)->required();
  bench->add_option("--out", bcfg.run_dir)->required();
  bench->add_option("--kinds", bench_samplers, "comma-separated sampler kinds");
  bench->add_option("--seeds", bench_seeds, "comma-separated seeds");

  // plot
  auto* plot = app.add_subcommand("plot", "render metrics CSVs to SVG");
  std::vector<std::string> plot_inputs;
  fs::path plot_out;
  plot->add_option("inputs", plot_inputs, "metrics CSV files (label=path or path)")->required();
  plot->add_option("--out", plot_out, "output directory")->required();

  // serve
  auto* serve = app.add_subcommand("serve", "host the parameter server on loopback");
  engine::RunConfig scfg;
  std::uint16_t port = 0;
  serve->add_option("--data", scfg.prep_dir)->required();
  serve->add_option("--topics", scfg.topics)->required();
  serve->add_option("--slices", scfg.num_slices);
  serve->add_option("--workers", scfg.workers);
  serve->add_option("--staleness", scfg.staleness);
  serve->add_option("--hot-fraction", scfg.hot_fraction);
  serve->add_option("--memory-budget", scfg.memory_budget);
  serve->add_option("--port", port, "0 picks a free port");
  serve->add_option("--out", scfg.run_dir, "where to write model.dump on shutdown");

  const auto args = expand_args(argc, argv);
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  if (*prep) {
    corpus::Corpus c;
    if (synthetic) {
      synth.seed = popt.seed;
      c = corpus::synthetic_corpus(synth, popt.seed);
    } else if (input.empty()) {
      throw ConfigError("prep needs --input or --synthetic");
    } else if (format == "docword") {
      c = corpus::read_docword_corpus(input, vocab_file, min_count, popt.seed);
    } else {
      c = corpus::read_text_corpus(input, min_count, popt.seed);
    }
    const auto r = engine::prepare(std::move(c), popt);
    engine::write_prepared(r, popt, prep_out);
    std::cout << "prepared " << r.tokens << " tokens, V=" << r.vocab.size() << ", "
              << r.blocks.size() << " blocks, " << popt.num_slices << " slices -> " << prep_out
              << std::endl;
    return 0;
  }

  if (*train_cmd) {
    finish_config(tcfg, tsampler);
    tcfg.validate();
    train(tcfg, stop_after, !quiet);
    return 0;
  }

  if (*eval_cmd) {
    checkpoint = engine::resolve_checkpoint(checkpoint);
    ecfg.warm_start = checkpoint;
    ecfg.direct_model = true;
    ecfg.iterations = 1;
    ecfg.validate();
    auto trainer = engine::make_trainer(ecfg);
    trainer->initialize();
    if (fs::exists(checkpoint / "model.dump")) {
      engine::verify_against_dump(*trainer, checkpoint / "model.dump");
    }
    const auto r = trainer->likelihood();
    nlohmann::json j{{"doc_loglik", r.doc_loglik},
                     {"word_loglik", r.word_loglik},
                     {"total_loglik", r.total_loglik},
                     {"nonzeros", r.nonzeros}};
    std::cout << j.dump(2) << std::endl;
    return 0;
  }

  if (*bench) {
    finish_config(bcfg, bsampler);
    const fs::path root = bcfg.run_dir;
    fs::create_directories(root);
    std::ofstream csv(root / "bench.csv");
    csv << "sampler,seed," << eval::kMetricsHeader << '\n';
    for (const auto& kind : split_list(bench_samplers)) {
      for (const auto& seed : split_list(bench_seeds)) {
        engine::RunConfig cfg = bcfg;
        cfg.sampler.kind = samplers::parse_sampler_kind(kind);
        cfg.seed = std::stoull(seed);
        cfg.sampler.seed = cfg.seed;
        cfg.run_dir = root / (kind + "_seed" + seed);
        cfg.validate();
        std::cout << "== " << kind << " seed " << seed << std::endl;
        for (const auto& r : train(cfg, 0, true)) {
          csv << kind << ',' << seed << ',' << eval::format_csv_row(r) << '\n';
        }
        csv.flush();
      }
    }
    return 0;
  }

  if (*plot) {
    std::vector<eval::Series> vs_time, vs_iter;
    for (const auto& spec : plot_inputs) {
      const auto eq = spec.find('=');
      const std::string label = eq == std::string::npos ? fs::path(spec).parent_path().filename().string()
                                                         : spec.substr(0, eq);
      const fs::path path = eq == std::string::npos ? fs::path(spec) : fs::path(spec.substr(eq + 1));
      const auto t = eval::read_metrics(path);
      const auto ll = t.column("total_ll");
      const auto secs = t.column("seconds");
      const auto iter = t.column("iteration");
      eval::Series a{label, {}, ll}, b{label, {}, ll};
      double elapsed = 0;
      for (std::size_t i = 0; i < secs.size(); ++i) {
        elapsed += secs[i];
        a.x.push_back(elapsed);
        b.x.push_back(iter[i] + 1);
      }
      vs_time.push_back(std::move(a));
      vs_iter.push_back(std::move(b));
    }
    fs::create_directories(plot_out);
    write_text(plot_out / "loglik_vs_time.svg",
               eval::render_svg(vs_time, "Log-likelihood vs time", "seconds", "log-likelihood"));
    write_text(plot_out / "loglik_vs_iteration.svg",
               eval::render_svg(vs_iter, "Log-likelihood vs iteration", "iteration",
                                "log-likelihood"));
    return 0;
  }

  if (*serve) {
    scfg.validate();
    const auto vocab = corpus::read_vocabulary(scfg.prep_dir / "vocab.tsv");
    auto plan = corpus::SlicePlan::from_order(vocab.slice_order(), scfg.num_slices);
    auto layout = engine::make_layout(vocab.frequencies(), scfg.topics, scfg.hot_fraction,
                                      scfg.memory_budget);
    pserver::ParameterServer server(layout, plan, scfg.workers, scfg.staleness);
    pserver::wire::LoopbackHost host(server, port);
    std::cout << "listening on 127.0.0.1:" << host.port() << std::endl;
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    int sig = 0;
    sigwait(&set, &sig);
    host.stop();
    if (!scfg.run_dir.empty()) {
      fs::create_directories(scfg.run_dir);
      corpus::write_file_atomic(scfg.run_dir / "model.dump", tables::serialize_model(server.dump()));
    }
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return static_cast<int>(ExitCode::kData);
  }
}
