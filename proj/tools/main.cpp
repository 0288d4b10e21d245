#include <csignal>
#include <cstdio>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "jointsel/error.hpp"
#include "jointsel/pipeline.hpp"
#include "jointsel/service.hpp"
#include "jointsel/session_io.hpp"

using namespace jointsel;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

std::vector<std::string> label_space_for_serve(const PipelineConfig& cfg) {
  if (!cfg.label_space.empty()) return cfg.label_space;
  if (cfg.gold.empty()) throw Error(ErrorCode::Usage, "serve needs label_space or a gold file to derive it from");
  std::set<std::string> seen;
  for (const auto& [_, label] : load_label_file(cfg.gold)) seen.insert(canonical_label(label));
  return {seen.begin(), seen.end()};
}

int serve(const PipelineConfig& cfg) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  auto load = [&] {
    Prepared prepared = load_prepared(cfg.output_dir);
    std::map<std::string, std::string> texts;
    if (!cfg.texts.empty()) {
      for (auto& t : load_instance_texts(cfg.texts)) texts[t.id] = std::move(t.text);
    }
    SessionConfig session = session_config(cfg, label_space_for_serve(cfg));
    auto service = std::make_unique<SessionService>(std::move(prepared), session, std::move(texts),
                                                    cfg.session_path());
    std::cerr << "session ready (state_version " << service->state_version() << ")\n";
    return service;
  };
  serve_http(
      cfg.host, cfg.port, load,
      [&](int port) { std::cerr << "listening on http://" << cfg.host << ":" << port << "\n"; }, &g_stop);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"jointsel: joint instance and verbalizer selection for cold-start prompt learning"};
  app.set_config("--config", "", "flat key = value file; keys are the option names below; flags win");
  app.require_subcommand(1);
  app.fallthrough();

  PipelineConfig cfg;
  std::string strategy = "coldselect", ablation = "cohesion,separation,impurity";
  std::string separation_mode = "literal", impurity_denominator = "all-instances";
  std::vector<std::string> strategies{"coldselect", "random", "random-g"};
  bool no_timing = false;

  app.add_option("--vocab", cfg.vocab, "vocabulary .cseb");
  app.add_option("--instances", cfg.instances, "instance .cseb");
  app.add_option("--texts", cfg.texts, "instance texts .jsonl");
  app.add_option("--gold", cfg.gold, "oracle labels .jsonl");
  app.add_option("--output_dir", cfg.output_dir, "artifact directory")->capture_default_str();
  app.add_option("--session", cfg.session, "session export (default output_dir/session.json)");
  app.add_option("--test_instances", cfg.test_instances, "test instance .cseb");
  app.add_option("--test_gold", cfg.test_gold, "test labels .jsonl");
  app.add_option("--verbalizers", cfg.verbalizers, "manual {class: [token ids]} JSON for eval");

  app.add_option("--reduced_dim", cfg.reduced_dim)->capture_default_str();
  app.add_option("--k", cfg.k)->capture_default_str();
  app.add_option("--seed", cfg.seed)->capture_default_str();
  app.add_option("--refine_iterations", cfg.refine_iterations)->capture_default_str();
  app.add_option("--kmeans_restarts", cfg.kmeans_restarts)->capture_default_str();

  app.add_option("--budget", cfg.budget)->capture_default_str();
  app.add_option("--label_space", cfg.label_space, "class names (default: sorted labels of the gold file)")
      ->delimiter(',');
  app.add_option("--strategy", strategy)->check(CLI::IsMember({"coldselect", "random", "random-g"}))
      ->capture_default_str();
  app.add_option("--ablation", ablation, "enabled score terms")->capture_default_str();
  app.add_option("--separation_mode", separation_mode)->check(CLI::IsMember({"literal", "negated"}))
      ->capture_default_str();
  app.add_option("--impurity_denominator", impurity_denominator)->check(CLI::IsMember({"all-instances", "labeled-only"}))
      ->capture_default_str();
  app.add_flag("--eq16_literal", cfg.eq16_literal, "argmax-of-min rule for labeled clusters");

  app.add_option("--n_classes", cfg.mixture.n_classes)->capture_default_str();
  app.add_option("--instances_per_class", cfg.mixture.instances_per_class)->capture_default_str();
  app.add_option("--test_instances_per_class", cfg.mixture.test_instances_per_class)->capture_default_str();
  app.add_option("--tokens_per_class", cfg.mixture.tokens_per_class)->capture_default_str();
  app.add_option("--outlier_tokens", cfg.mixture.outlier_tokens)->capture_default_str();
  app.add_option("--dim", cfg.mixture.dim)->capture_default_str();
  app.add_option("--class_separation", cfg.mixture.class_separation)->capture_default_str();
  app.add_option("--token_spread", cfg.mixture.token_spread)->capture_default_str();
  app.add_option("--budgets", cfg.budgets)->delimiter(',')->capture_default_str();
  app.add_option("--strategies", strategies)->delimiter(',')->capture_default_str();
  app.add_option("--n_seeds", cfg.n_seeds)->capture_default_str();
  app.add_option("--threads", cfg.threads)->capture_default_str();
  app.add_flag("--no_timing", no_timing, "write wall_ms as 0 so the CSV is byte-reproducible");

  app.add_option("--host", cfg.host)->capture_default_str();
  app.add_option("--port", cfg.port)->capture_default_str();

  auto* prepare = app.add_subcommand("prepare", "PCA, clustering and refinement; writes artifacts + manifest");
  auto* select = app.add_subcommand("select", "oracle-mode session; writes the session export");
  auto* eval = app.add_subcommand("eval", "scores a session's verbalizers on the test set");
  auto* simulate = app.add_subcommand("simulate", "strategy x budget x seed comparison on synthetic corpora");
  auto* serve_cmd = app.add_subcommand("serve", "JSON-over-HTTP annotation session");
  auto* gen = app.add_subcommand("generate", "writes a synthetic corpus into output_dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    cfg.strategy = parse_strategy(strategy);
    cfg.ablation = parse_ablation(ablation);
    cfg.separation_mode = parse_separation_mode(separation_mode);
    cfg.impurity_denominator = parse_impurity_denominator(impurity_denominator);
    cfg.strategies.clear();
    for (const auto& s : strategies) cfg.strategies.push_back(parse_strategy(s));
    cfg.timing = !no_timing;

    if (prepare->parsed()) {
      nlohmann::json manifest = cmd_prepare(cfg);
      std::cout << manifest.dump(2) << "\n";
    } else if (select->parsed()) {
      SessionState state = cmd_select(cfg);
      std::cout << state.events.size() << " events, " << state.verbalizers.size() << " verbalizers -> "
                << cfg.session_path().string() << "\n";
    } else if (eval->parsed()) {
      EvalReport report = cmd_eval(cfg);
      std::cout << report_to_text(report);
    } else if (simulate->parsed()) {
      std::string csv = simulate_csv(cmd_simulate(cfg));
      std::filesystem::create_directories(cfg.output_dir);
      write_text_file(csv, cfg.output_dir / "simulate.csv");
      std::cout << csv;
    } else if (serve_cmd->parsed()) {
      return serve(cfg);
    } else if (gen->parsed()) {
      cfg.mixture.seed = cfg.seed;
      write_corpus(generate(cfg.mixture), cfg.output_dir);
      std::cout << "corpus written to " << cfg.output_dir.string() << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
