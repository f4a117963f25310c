// treeview: staged pipeline driver.
//
//   treeview train     --config cfg.json --artifact out/run.json
//   treeview factorize --artifact out/run.json
//   treeview surrogate --artifact out/run.json
//   treeview evaluate  --artifact out/run.json [--split test]
//   treeview explain   --artifact out/run.json --sample 17 --format svg --output 17.svg

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "treeview/pipeline.hpp"

namespace fs = std::filesystem;
using namespace treeview;

namespace {

struct Options {
  std::string config;
  std::string artifact = "artifact.json";
  std::optional<std::uint64_t> seed;
  std::string format = "svg";
  std::vector<std::string> samples;
  std::string features;
  std::string output;
  std::string layout;
  std::string split = "test";
};

std::optional<PipelineConfig> override_config(const Options& o, const PipelineArtifact* current) {
  if (o.config.empty() && !o.seed) return std::nullopt;
  PipelineConfig cfg = o.config.empty() ? current->config : PipelineConfig::load(o.config);
  if (o.seed) cfg.seed = *o.seed;
  return cfg;
}

std::string render(const TreeViewLayout& layout, const std::string& format, const RenderConfig& cfg) {
  if (format == "svg") return render_svg(layout, cfg);
  if (format == "text") return render_text(layout);
  return layout_to_json(layout).dump(2) + "\n";
}

void write_output(const std::string& content, const fs::path& path) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << content;
}

std::string sanitize(const std::string& id) {
  std::string s = id;
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s;
}

int cmd_explain(const Options& o) {
  if (!o.layout.empty()) {
    std::ifstream in(o.layout);
    if (!in) throw ValidationError("cannot open layout: " + o.layout);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("layout " + o.layout + " is not valid JSON: " + e.what());
    }
    RenderConfig cfg;
    if (fs::exists(o.artifact)) cfg = PipelineArtifact::load(o.artifact).config.render;
    write_output(render(layout_from_json(j), o.format, cfg), o.output);
    return 0;
  }

  const PipelineArtifact a = PipelineArtifact::load(o.artifact);
  if (a.stage < 3) throw ValidationError("artifact is at stage " + std::to_string(a.stage) + "; run surrogate first");
  std::vector<TreeViewLayout> layouts;
  if (!o.features.empty()) {
    std::vector<double> row;
    for (const auto& cell : split_line(o.features, ',')) {
      double v = 0.0;
      if (!parse_double(trim(cell), v)) throw ValidationError("--features: '" + cell + "' is not a number");
      row.push_back(v);
    }
    layouts.push_back(explain_features(a, row));
  }
  if (!o.samples.empty()) {
    const Dataset raw = load_pipeline_dataset(a);
    for (const auto& id : o.samples) layouts.push_back(explain_sample(a, raw, id));
  }
  if (layouts.empty()) throw ValidationError("explain needs --sample, --features or --layout");

  if (layouts.size() == 1) {
    write_output(render(layouts.front(), o.format, a.config.render), o.output);
    return 0;
  }
  const std::string ext = o.format == "text" ? ".txt" : "." + o.format;
  for (const auto& l : layouts) {
    const std::string content = render(l, o.format, a.config.render);
    if (o.output.empty()) {
      std::cout << content;
    } else {
      write_output(content, fs::path(o.output) / (sanitize(l.sample_id) + ext));
    }
  }
  return 0;
}

int cmd_evaluate(const Options& o) {
  const PipelineArtifact a = PipelineArtifact::load(o.artifact);
  if (a.stage < 3) throw ValidationError("artifact is at stage " + std::to_string(a.stage) + "; run surrogate first");
  const SplitPart part = o.split == "train" ? SplitPart::Train : o.split == "all" ? SplitPart::All : SplitPart::Test;
  const Dataset raw = load_pipeline_dataset(a);
  write_output(evaluation_report(a, raw, part).dump(2) + "\n", o.output);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TreeView: explain a feed-forward classifier through factorized hidden activations"};
  app.require_subcommand(1);
  Options o;

  auto* train_cmd = app.add_subcommand("train", "split, standardize and train the network (stage 1)");
  train_cmd->add_option("--config", o.config, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--artifact", o.artifact, "artifact to write")->capture_default_str();
  train_cmd->add_option("--seed", o.seed, "override the config seed");

  auto* fact_cmd = app.add_subcommand("factorize", "factors, meta-features and factor predictors (stage 2)");
  auto* surr_cmd = app.add_subcommand("surrogate", "fit the surrogate tree and evaluate it (stage 3)");
  for (auto* cmd : {fact_cmd, surr_cmd}) {
    cmd->add_option("--artifact", o.artifact, "artifact to update")->required();
    cmd->add_option("--config", o.config, "replace the embedded config")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "override the config seed");
  }

  auto* eval_cmd = app.add_subcommand("evaluate", "print the evaluation report as JSON");
  eval_cmd->add_option("--artifact", o.artifact, "complete artifact")->required();
  eval_cmd->add_option("--split", o.split, "train, test or all")
      ->check(CLI::IsMember({"train", "test", "all"}))
      ->capture_default_str();
  eval_cmd->add_option("--output", o.output, "write the report here instead of stdout");

  auto* explain_cmd = app.add_subcommand("explain", "render TreeView explanations");
  explain_cmd->add_option("--artifact", o.artifact, "complete artifact");
  explain_cmd->add_option("--sample", o.samples, "sample id (repeatable)");
  explain_cmd->add_option("--features", o.features, "comma-separated raw feature vector");
  explain_cmd->add_option("--layout", o.layout, "re-render a saved JSON layout")->check(CLI::ExistingFile);
  explain_cmd->add_option("--format", o.format, "svg, text or json")
      ->check(CLI::IsMember({"svg", "text", "json"}))
      ->capture_default_str();
  explain_cmd->add_option("--output", o.output, "output file (directory when several samples)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (train_cmd->parsed()) {
      PipelineConfig cfg = PipelineConfig::load(o.config);
      if (o.seed) cfg.seed = *o.seed;
      run_train(cfg, o.artifact, std::cout);
    } else if (fact_cmd->parsed()) {
      std::optional<PipelineConfig> cfg;
      if (!o.config.empty() || o.seed) {
        const PipelineArtifact current = PipelineArtifact::load(o.artifact);
        cfg = override_config(o, &current);
      }
      run_factorize(o.artifact, cfg, std::cout);
    } else if (surr_cmd->parsed()) {
      std::optional<PipelineConfig> cfg;
      if (!o.config.empty() || o.seed) {
        const PipelineArtifact current = PipelineArtifact::load(o.artifact);
        cfg = override_config(o, &current);
      }
      run_surrogate(o.artifact, cfg, std::cout);
    } else if (eval_cmd->parsed()) {
      return cmd_evaluate(o);
    } else if (explain_cmd->parsed()) {
      return cmd_explain(o);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
