// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// In-process CLI runs over small on-disk corpora. Shared by the CLI tests and
// the acceptance runner.

#pragma once

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "worthiness/ingest.hpp"
#include "worthiness/ranking.hpp"
#include "worthiness/synthetic.hpp"

namespace worthiness::testing {

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliRun run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"worthiness"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

struct CliCorpora {
  std::filesystem::path gmad;
  std::filesystem::path selection;
  std::filesystem::path loop;
  std::filesystem::path matrix;
  std::filesystem::path checkpoint;
};

// Knobs that keep failure-net training to a fraction of a second.
inline std::vector<std::string> quick_failnet_args() {
  return {"--channels", "8", "--epochs", "2", "--pairs-per-epoch", "400", "--batch", "50"};
}

inline CliCorpora write_cli_corpora(const std::filesystem::path& dir) {
  CliCorpora c{dir / "gmad", dir / "selection", dir / "loop", dir / "matrix.csv", dir / "ckpt/failnet.json"};
  synthetic::write_corpus(synthetic::make_gmad_corpus({4, 300, 3}), c.gmad);

  synthetic::SelectionCorpusOptions sel;
  sel.images = 300;
  sel.stage_widths = {4, 4, 4, 4};
  sel.logit_width = 8;
  sel.seed = 3;
  synthetic::write_corpus(synthetic::make_selection_corpus(sel), c.selection);

  synthetic::LoopCorpusOptions loop;
  loop.images = 400;
  loop.holdout = 100;
  loop.labeled_a = 40;
  loop.labeled_b = 6;
  loop.seed = 3;
  synthetic::write_corpus(synthetic::make_loop_corpus(loop), c.loop);

  ranking::ComparisonMatrix m({"m1", "m2", "m3", "m4"});
  const std::uint64_t counts[] = {0, 5, 2, 9, 1, 0, 4, 3, 6, 2, 0, 0, 1, 7, 8, 0};
  m.counts.assign(std::begin(counts), std::end(counts));
  write_text_file(c.matrix, ranking::format_matrix_csv(m));

  std::vector<std::string> train{"train-failnet", "--manifest", (c.selection / "manifest.json").string(),
                                 "--features", (c.selection / "features.jsonl").string(),
                                 "--scores", (c.selection / "scores.csv").string(),
                                 "--mos", (c.selection / "mos.csv").string(),
                                 "--out", c.checkpoint.parent_path().string()};
  for (const auto& a : quick_failnet_args()) train.push_back(a);
  if (run_cli(train).code != cli::kExitOk) throw Error(ErrorKind::kIo, "could not train the test checkpoint");
  return c;
}

struct CliCommand {
  std::string name;
  std::vector<std::string> args;  // without --out
};

// One invocation per command (several for select), all with --seed and --jobs 1.
inline std::vector<CliCommand> determinism_commands(const CliCorpora& c) {
  const auto s = [](const std::filesystem::path& p) { return p.string(); };
  const auto sel = [&](const char* f) { return s(c.selection / f); };
  std::vector<CliCommand> cmds{
      {"validate", {"validate", "--manifest", sel("manifest.json"), "--scores", sel("scores.csv"), "--mos",
                    sel("mos.csv"), "--features", sel("features.jsonl"), "--ensemble", sel("committee.csv")}},
      {"gmad", {"gmad", "--scores", s(c.gmad / "scores.csv"), "--Q", "3", "--K", "2"}},
      {"rank", {"rank", "--matrix", s(c.matrix)}},
      {"top-difficult", {"top-difficult", "--scores", sel("scores.csv"), "--mos", sel("mos.csv"), "--n", "25"}},
      {"dropout-ensemble", {"dropout-ensemble", "--manifest", sel("manifest.json"), "--features",
                            sel("features.jsonl"), "--head", sel("dropout_head.json"), "--members", "7"}},
      {"select-worthiness", {"select", "--selector", "worthiness", "--manifest", sel("manifest.json"),
                             "--features", sel("features.jsonl"), "--checkpoint", s(c.checkpoint),
                             "--budget", "20", "--lambda", "0.01"}},
      {"select-random", {"select", "--selector", "random", "--manifest", sel("manifest.json"), "--budget", "20"}},
      {"select-committee", {"select", "--selector", "committee", "--manifest", sel("manifest.json"),
                            "--ensemble", sel("committee.csv"), "--budget", "20"}},
      {"select-mc-dropout", {"select", "--selector", "mc-dropout", "--manifest", sel("manifest.json"),
                             "--features", sel("features.jsonl"), "--dropout-head", sel("dropout_head.json"),
                             "--budget", "20"}},
      {"select-coreset", {"select", "--selector", "coreset", "--manifest", sel("manifest.json"), "--features",
                          sel("features.jsonl"), "--budget", "20"}},
      {"select-rd", {"select", "--selector", "rd", "--manifest", sel("manifest.json"), "--features",
                     sel("features.jsonl"), "--budget", "20"}},
      {"select-uncertainty", {"select", "--selector", "uncertainty", "--manifest", sel("manifest.json"),
                              "--scores", sel("scores.csv"), "--budget", "20"}},
      {"train-failnet", {"train-failnet", "--manifest", sel("manifest.json"), "--features", sel("features.jsonl"),
                         "--scores", sel("scores.csv"), "--mos", sel("mos.csv"), "--eval-partition", "unlabeled"}},
      {"loop", {"loop", "--manifest", s(c.loop / "manifest.json"), "--features", s(c.loop / "features.jsonl"),
                "--mos", s(c.loop / "mos.csv"), "--T", "2", "--budget", "15"}},
      {"eval", {"eval", "--selection", s(c.checkpoint.parent_path() / "../eval_selection.csv"), "--manifest",
                sel("manifest.json"), "--scores", sel("scores.csv"), "--mos", sel("mos.csv")}},
  };
  for (auto& cmd : cmds) {
    if (cmd.name == "train-failnet" || cmd.name == "loop") {
      for (const auto& a : quick_failnet_args()) cmd.args.push_back(a);
    }
    for (const char* a : {"--seed", "7", "--jobs", "1"}) cmd.args.push_back(a);
  }
  // eval reads a selection file; write one from a random selection.
  const auto eval_sel = c.checkpoint.parent_path().parent_path() / "eval_selection.csv";
  if (!std::filesystem::exists(eval_sel)) {
    const auto tmp = c.checkpoint.parent_path().parent_path() / "eval_src";
    run_cli({"select", "--selector", "random", "--manifest", sel("manifest.json"), "--budget", "30", "--seed",
             "1", "--out", s(tmp)});
    std::filesystem::copy_file(tmp / "selection.csv", eval_sel);
  }
  return cmds;
}

struct CommandOutputs {
  int code = 0;
  std::string err;
  // Relative path -> bytes. Loop run directories carry a wall-clock stamp in
  // their name, which is normalized to "run".
  std::map<std::string, std::string> files;
};

inline CommandOutputs run_into(const CliCommand& command, const std::filesystem::path& base) {
  const auto out = base / command.name;
  std::filesystem::remove_all(out);
  auto args = command.args;
  args.push_back("--out");
  args.push_back(out.string());
  const auto r = run_cli(args);
  CommandOutputs result{r.code, r.err, {}};
  if (!std::filesystem::exists(out)) return result;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(out)) {
    if (!entry.is_regular_file()) continue;
    auto rel = std::filesystem::relative(entry.path(), out).generic_string();
    if (rel.rfind("run-seed", 0) == 0) rel = "run" + rel.substr(rel.find('/'));
    result.files[rel] = read_text_file(entry.path());
  }
  return result;
}

}  // namespace worthiness::testing
