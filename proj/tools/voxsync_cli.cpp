// Command-line front end. Every subcommand prints a JSON report on stdout (or
// writes it to --report) and, on failure, an error JSON on stderr with a
// nonzero exit code taken from the error family.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "voxsync/binary_io.hpp"
#include "voxsync/error.hpp"
#include "voxsync/pipeline.hpp"

using nlohmann::json;
namespace cd = voxsync;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string report;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "JSON config file");
  sub->add_option("--set", c.overrides, "override a config key, e.g. --set training.steps.c=300");
  sub->add_option("--report", c.report, "write the JSON report here instead of stdout");
}

void emit(const json& j, const Common& c) {
  const std::string text = j.dump(2) + "\n";
  if (c.report.empty()) {
    std::cout << text;
  } else {
    cd::write_text_file(c.report, text);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distill 2D features into sparse 3D grids and query them"};
  app.require_subcommand(1);
  Common common;
  std::string out, corpus, scene, index, model, grids, pairs, fmap;
  std::string mode = "kp", protocol = "both";
  int view = -1, held_out = -1;

  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic scene corpus");
  add_common(gen, common);
  gen->add_option("--out", out, "corpus file")->required();

  auto* sample = app.add_subcommand("sample-grid", "sample one scene into a sparse grid");
  add_common(sample, common);
  sample->add_option("--corpus", corpus)->required();
  sample->add_option("--scene", scene, "scene id, e.g. scene_0003")->required();
  sample->add_option("--out", out)->required();

  auto* train = app.add_subcommand("train", "run the four-stage bootstrap over a corpus");
  add_common(train, common);
  train->add_option("--corpus", corpus)->required();
  train->add_option("--out", out, "output directory")->required();

  auto* build = app.add_subcommand("build-index", "build the retrieval index from trained grids");
  add_common(build, common);
  build->add_option("--grids", grids, "directory of .cdgf grids")->required();
  build->add_option("--model", model)->required();
  build->add_option("--out", out)->required();

  auto* query = app.add_subcommand("query", "rank indexed scenes for one image");
  add_common(query, common);
  query->add_option("--index", index)->required();
  query->add_option("--model", model)->required();
  query->add_option("--corpus", corpus);
  query->add_option("--scene", scene);
  query->add_option("--view", view, "training camera of the scene");
  query->add_option("--held-out", held_out, "held-out query camera of the scene");
  query->add_option("--feature-map", fmap, "external .cdfm feature map");
  query->add_option("--mode", mode)->check(CLI::IsMember({"global", "kp", "kp_count"}));

  auto* exportv = app.add_subcommand("export-view", "write a scene view as a .cdfm feature map");
  add_common(exportv, common);
  exportv->add_option("--corpus", corpus)->required();
  exportv->add_option("--scene", scene)->required();
  exportv->add_option("--view", view);
  exportv->add_option("--held-out", held_out);
  exportv->add_option("--out", out)->required();

  auto* dup = app.add_subcommand("dup-detect", "classify scene pairs as duplicates");
  add_common(dup, common);
  dup->add_option("--index", index)->required();
  dup->add_option("--pairs", pairs, "JSON array of {a, b, label?}")->required();
  dup->add_option("--mode", mode)->check(CLI::IsMember({"global", "kp"}));

  auto* eval = app.add_subcommand("eval", "retrieval and duplicate-detection metrics");
  add_common(eval, common);
  eval->add_option("--corpus", corpus)->required();
  eval->add_option("--index", index)->required();
  eval->add_option("--model", model)->required();
  eval->add_option("--protocol", protocol)->check(CLI::IsMember({"retrieval", "dup", "both"}));

  auto* grad = app.add_subcommand("grad-check", "finite-difference gradient audit");
  add_common(grad, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    if (rc != 0) std::cerr << cd::error_json(cd::ErrorCode::kInput, e.what()).dump() << "\n";
    return rc == 0 ? 0 : static_cast<int>(cd::ErrorCode::kInput);
  }

  auto query_spec = [&] {
    cd::QuerySpec q;
    if (!corpus.empty()) q.corpus = corpus;
    q.scene = scene;
    if (view >= 0) q.view = view;
    if (held_out >= 0) q.held_out = held_out;
    if (!fmap.empty()) q.feature_map = fmap;
    return q;
  };

  try {
    const cd::Config config = cd::load_config(common.config_path, common.overrides);
    json report;
    if (*gen) {
      report = cd::cmd_gen_corpus(config, out);
    } else if (*sample) {
      report = cd::cmd_sample_grid(corpus, scene, config, out);
    } else if (*train) {
      report = cd::cmd_train(corpus, config, out);
    } else if (*build) {
      report = cd::cmd_build_index(grids, model, config, out);
    } else if (*query) {
      report = cd::cmd_query(index, model, query_spec(), cd::parse_retrieval_mode(mode), config);
    } else if (*exportv) {
      report = cd::cmd_export_view(query_spec(), config, out);
    } else if (*dup) {
      report = cd::cmd_dup_detect(index, pairs, cd::parse_retrieval_mode(mode), config);
    } else if (*eval) {
      report = cd::cmd_eval(corpus, index, model, cd::parse_eval_protocol(protocol), config);
    } else if (*grad) {
      report = cd::cmd_grad_check(config);
      emit(report, common);
      return report.at("all_passed").get<bool>() ? 0 : 1;
    }
    emit(report, common);
    return 0;
  } catch (const cd::Error& e) {
    std::cerr << cd::error_json(e.code(), e.what()).dump() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << cd::error_json(cd::ErrorCode::kIo, e.what()).dump() << "\n";
    return static_cast<int>(cd::ErrorCode::kIo);
  }
}
