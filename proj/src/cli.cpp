#include "forge/cli.hpp"

#include <cstdlib>
#include <optional>

#include "CLI11.hpp"
#include "forge/error.hpp"
#include "forge/evalharness.hpp"
#include "forge/pipeline.hpp"
#include "forge/review_server.hpp"
#include "forge/training.hpp"

namespace forge::cli {

namespace fs = std::filesystem;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

json parse_override(const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error("ConfigInvalid", "--set expects key=value, got " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;
  }
  return {{key, parsed}};
}

std::vector<std::vector<std::string>> sequences(const fs::path& corpus) {
  if (!fs::exists(corpus)) throw Error("MissingInput", "ngram: " + corpus.string());
  return fs::is_directory(corpus) ? pipeline::contract_sequences(corpus) : pipeline::text_sequences(corpus);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"forge: smart-contract vulnerability dataset pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string work_dir;
  bool dry_run = false;
  app.add_option("--config", config_path, "pipeline config (JSON)");
  app.add_option("--work-dir", work_dir, "override paths.work_dir");
  app.add_flag("--dry-run", dry_run, "print the plan without running");

  std::map<std::string, CLI::App*> stage_cmds;
  for (const auto& name : pipeline::stage_names()) {
    stage_cmds[name] = app.add_subcommand(name, "run the " + name + " stage");
  }
  auto* run_cmd = app.add_subcommand("run", "run every stage in order");

  auto* ngram_cmd = stage_cmds["ngram"];
  ngram_cmd->require_subcommand(0, 1);
  std::string ngram_corpus, ngram_out, ngram_model;
  int ngram_order = 2;
  double ngram_k = 0.01;
  auto* ngram_train = ngram_cmd->add_subcommand("train", "train an n-gram model on a corpus");
  ngram_train->add_option("--corpus", ngram_corpus, "directory of .sol files or a text file")->required();
  ngram_train->add_option("--order", ngram_order);
  ngram_train->add_option("--k", ngram_k, "add-k smoothing");
  ngram_train->add_option("--out", ngram_out, "model JSON path")->required();
  auto* ngram_loss = ngram_cmd->add_subcommand("loss", "average per-token loss of a model on a corpus");
  ngram_loss->add_option("--model", ngram_model)->required();
  ngram_loss->add_option("--corpus", ngram_corpus)->required();

  std::string manifest_stage;
  std::vector<std::string> manifest_sets;
  stage_cmds["manifest"]->add_option("--stage", manifest_stage, "print the cpt or sft manifest");
  stage_cmds["manifest"]->add_option("--set", manifest_sets, "override key=value");

  std::string eval_records;
  stage_cmds["eval"]->add_option("--records", eval_records, "score an EvalRecord JSONL file instead");

  auto* serve_cmd = app.add_subcommand("serve", "run the review service");
  std::string data_dir, bind_addr, static_dir;
  serve_cmd->add_option("--data-dir", data_dir, "defaults to $FORGE_DATA_DIR");
  serve_cmd->add_option("--bind", bind_addr, "host:port, defaults to $FORGE_BIND_ADDR or 127.0.0.1:8080");
  serve_cmd->add_option("--static-dir", static_dir, "reviewer UI bundle served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  auto load = [&]() {
    if (config_path.empty()) throw Error("ConfigInvalid", "--config is required for this subcommand");
    auto cfg = pipeline::load_config(config_path);
    if (!work_dir.empty()) cfg.paths.work_dir = fs::absolute(work_dir);
    return cfg;
  };

  try {
    if (ngram_train->parsed()) {
      auto model = training::train_ngram(sequences(ngram_corpus), ngram_order, ngram_k);
      write_file_atomic(ngram_out, training::ngram_to_json(model).dump() + "\n");
      out << "trained order-" << ngram_order << " model, vocabulary " << model.vocab.size() << " -> " << ngram_out
          << "\n";
      return kOk;
    }
    if (ngram_loss->parsed()) {
      if (!fs::exists(ngram_model)) throw Error("MissingInput", "ngram: " + ngram_model);
      auto model = training::ngram_from_json(json::parse(read_file(ngram_model)));
      auto loss = training::corpus_loss(model, sequences(ngram_corpus));
      out << json{{"total", loss.total}, {"positions", loss.positions}, {"average", loss.average()}}.dump() << "\n";
      return kOk;
    }
    if (stage_cmds["manifest"]->parsed() && !manifest_stage.empty()) {
      json overrides = json::object();
      for (const auto& s : manifest_sets) overrides.update(parse_override(s));
      auto m = training::emit_train_manifest(training::stage_from_string(manifest_stage), overrides);
      out << training::manifest_to_json(m).dump(2) << "\n";
      return kOk;
    }
    if (stage_cmds["eval"]->parsed() && !eval_records.empty()) {
      if (!fs::exists(eval_records)) throw Error("MissingInput", "eval: " + eval_records);
      std::vector<eval::EvalRecord> records;
      for (const auto& row : read_jsonl(eval_records)) records.push_back(eval::record_from_json(row));
      out << eval::metrics_table(records).text;
      return kOk;
    }
    if (serve_cmd->parsed()) {
      if (data_dir.empty()) data_dir = env_or("FORGE_DATA_DIR", "");
      if (data_dir.empty() && !config_path.empty()) data_dir = (load().paths.work_dir / "review").string();
      if (data_dir.empty()) throw Error("ConfigInvalid", "set --data-dir or FORGE_DATA_DIR");
      if (bind_addr.empty()) bind_addr = env_or("FORGE_BIND_ADDR", "127.0.0.1:8080");
      review::ServerOptions opts = review::parse_bind_addr(bind_addr);
      opts.static_dir = static_dir;
      review::ReviewStore store(data_dir);
      review::ReviewServer server(store, opts);
      out << "serving review API on " << opts.host << ":" << opts.port << " (data " << data_dir << ")\n";
      out.flush();
      server.run();
      return kOk;
    }

    pipeline::Pipeline p(load(), out);
    if (run_cmd->parsed()) {
      p.run_all(dry_run);
      return kOk;
    }
    for (const auto& [name, cmd] : stage_cmds) {
      if (cmd->parsed()) {
        p.run_stage(name, dry_run);
        return kOk;
      }
    }
    throw Error("ConfigInvalid", "no subcommand");
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.kind() == "ConfigInvalid" ? kConfigError : kStageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kStageError;
  }
}

}  // namespace forge::cli
