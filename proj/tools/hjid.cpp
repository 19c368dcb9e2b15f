#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hjid/checks.hpp"
#include "hjid/error.hpp"
#include "hjid/evaluation.hpp"
#include "hjid/probe.hpp"
#include "hjid/training.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::string g_command_line;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw hjid::DataError("cannot write " + path.string());
  out << text;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw hjid::DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

struct SynthArgs {
  std::size_t users = 100, users_x = 0, users_y = 0, overlap = 50, items = 80, items_x = 0, items_y = 0;
  std::size_t d_shared = 4, d_variant = 2, min_edges = 3;
  std::string map_family = "affine";
  double map_scale = 2.0, map_shift = 0.0, map_bend = 0.0;
  double correlation = 0.8, temperature = 1.0, logit_offset = -3.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  hjid::SyntheticConfig c;
  c.users_x = a.users_x ? a.users_x : a.users;
  c.users_y = a.users_y ? a.users_y : a.users;
  c.overlap = a.overlap;
  c.items_x = a.items_x ? a.items_x : a.items;
  c.items_y = a.items_y ? a.items_y : a.items;
  c.d_shared = a.d_shared;
  c.d_variant = a.d_variant;
  c.map = {hjid::map_family_from_string(a.map_family), a.map_scale, a.map_shift, a.map_bend};
  c.correlation = a.correlation;
  c.temperature = a.temperature;
  c.logit_offset = a.logit_offset;
  c.min_user_edges = a.min_edges;
  hjid::validate(c);

  auto ds = hjid::generate_synthetic(c, a.seed);
  const fs::path dir(a.out);
  ensure_dir(dir);
  hjid::write_interactions(dir / "x.tsv", ds.x);
  hjid::write_interactions(dir / "y.tsv", ds.y);
  hjid::write_ground_truth(dir / "ground_truth.json", ds.truth, g_command_line, a.seed);
  ordered_json m;
  m["format"] = "hjid-synth";
  m["version"] = 1;
  m["command"] = g_command_line;
  m["seed"] = a.seed;
  m["files"] = {"x.tsv", "y.tsv", "ground_truth.json"};
  m["x"] = {{"users", ds.x.num_users()}, {"items", ds.x.num_items()}, {"edges", ds.x.edges().size()}};
  m["y"] = {{"users", ds.y.num_users()}, {"items", ds.y.num_items()}, {"edges", ds.y.edges().size()}};
  write_text(dir / "manifest.json", m.dump(2) + "\n");
  std::cout << "synth: X " << ds.x.num_users() << " users / " << ds.x.edges().size() << " edges, Y "
            << ds.y.num_users() << " users / " << ds.y.edges().size() << " edges -> " << dir.string() << "\n";
  return kOk;
}

struct PrepareArgs {
  std::string x, y, out;
  std::uint64_t seed = 0;
  bool non_overlap = false;
  std::size_t negatives = 999;
  double train = 0.6, test = 0.2, validation = 0.2;
};

int cmd_prepare(const PrepareArgs& a) {
  auto sx = hjid::load_interactions(a.x, hjid::DomainId::X);
  auto sy = hjid::load_interactions(a.y, hjid::DomainId::Y);
  hjid::SplitOptions o;
  o.ratios = {a.train, a.test, a.validation};
  o.seed = a.seed;
  o.scenario = a.non_overlap ? hjid::Scenario::non_overlapped : hjid::Scenario::overlapped;
  o.num_negatives = a.negatives;
  auto split = hjid::split_overlapped(sx, sy, o);
  hjid::write_split_manifest(a.out, split, g_command_line);
  std::cout << "prepare: " << split.overlap.size() << " overlapped users (" << split.train_users.size() << " train, "
            << split.test_users.size() << " test, " << split.validation_users.size() << " validation), scenario "
            << hjid::to_string(split.scenario) << " -> " << a.out << "\n";
  return kOk;
}

struct TrainArgs {
  std::string config, split, out;
  std::string variant, direction;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::vector<std::string> overrides;
};

hjid::TrainConfig resolve_config(const TrainArgs& a) {
  hjid::TrainConfig c = a.config.empty() ? hjid::TrainConfig{} : hjid::load_config(a.config);
  for (const auto& kv : a.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw hjid::ArgumentError("--set expects key=value, got '" + kv + "'");
    hjid::set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!a.variant.empty()) c.variant = hjid::variant_from_string(a.variant);
  if (!a.direction.empty()) c.direction = hjid::direction_from_string(a.direction);
  if (a.seed) c.seed = *a.seed;
  if (a.epochs) c.epochs = *a.epochs;
  hjid::validate(c);
  return c;
}

int cmd_train(const TrainArgs& a) {
  hjid::TrainConfig c = resolve_config(a);
  auto split = hjid::read_split_manifest(a.split);
  const fs::path dir(a.out);
  ensure_dir(dir);
  std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
  if (!log) throw hjid::DataError("cannot write training log");
  hjid::FitOptions fo;
  fo.on_epoch = [&](const hjid::EpochRecord& r) {
    log << hjid::epoch_record_json(r) << "\n";
    log.flush();
    std::cout << "epoch " << r.epoch << " total " << r.loss.total << " val_MRR " << r.val_mrr << "\n";
  };
  auto result = hjid::fit(c, split, fo);
  hjid::save_checkpoint(result.checkpoint, dir / "checkpoint.bin");
  c.scenario = split.scenario;
  ordered_json run;
  run["format"] = "hjid-train";
  run["version"] = 1;
  run["command"] = g_command_line;
  run["seed"] = c.seed;
  run["config"] = hjid::format_config(c);
  run["epochs_run"] = result.checkpoint.epoch;
  run["best_epoch"] = result.checkpoint.best_epoch;
  run["leakage_audit"] = {{"edges_checked", result.audit.edges_checked},
                          {"held_out_hits", result.audit.held_out_hits},
                          {"overlapped_user_hits", result.audit.overlapped_user_hits}};
  run["files"] = {"checkpoint.bin", "train_log.jsonl"};
  write_text(dir / "run.json", run.dump(2) + "\n");
  if (!result.audit.clean()) throw hjid::DataError("leakage audit failed; see run.json");
  std::cout << "train: best epoch " << result.checkpoint.best_epoch << " of " << result.checkpoint.epoch << " -> "
            << dir.string() << "\n";
  return kOk;
}

struct EvalArgs {
  std::string checkpoint, split, out, query_set = "test", domain;
};

int cmd_eval(const EvalArgs& a) {
  auto cp = hjid::load_checkpoint(a.checkpoint);
  auto split = hjid::read_split_manifest(a.split);
  if (cp.dataset_fingerprint != hjid::dataset_fingerprint(split))
    throw hjid::DataError("checkpoint was trained on a different split");
  if (a.query_set != "test" && a.query_set != "validation")
    throw hjid::ArgumentError("--set must be test or validation");
  std::optional<hjid::DomainId> dom;
  if (!a.domain.empty()) dom = hjid::domain_from_string(a.domain);
  auto report = hjid::evaluate(cp.model, split, a.query_set == "test" ? hjid::QuerySet::test : hjid::QuerySet::validation,
                               dom);
  hjid::write_metrics_report(a.out, report, g_command_line);
  std::cout << "eval: " << report.queries << " queries, MRR " << report.mrr << ", HR@10 " << report.hr_at(10)
            << " -> " << a.out << "\n";
  return kOk;
}

struct CheckArgs {
  std::string only, fault;
};

int cmd_check(const CheckArgs& a) {
  hjid::CheckOptions o;
  if (!a.only.empty()) o.only = a.only;
  if (!a.fault.empty()) o.inject_fault = a.fault;
  auto results = hjid::run_checks(o);
  std::size_t failed = 0;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.family << "/" << r.name;
    if (!r.passed) std::cout << ": " << r.detail;
    std::cout << "\n";
    if (!r.passed) ++failed;
  }
  std::cout << results.size() - failed << "/" << results.size() << " checks passed\n";
  if (failed) {
    std::cerr << "failed checks:";
    for (const auto& r : results)
      if (!r.passed) std::cerr << " " << r.family << "/" << r.name;
    std::cerr << "\n";
    return kNumeric;
  }
  return kOk;
}

struct ProbeArgs {
  std::string checkpoint, split, truth, out;
  std::uint64_t seed = 0;
  std::string alt_family = "affine";
  double alt_scale = 1.0, alt_shift = 0.0, alt_bend = 0.0;
};

int cmd_probe(const ProbeArgs& a) {
  auto cp = hjid::load_checkpoint(a.checkpoint);
  auto split = hjid::read_split_manifest(a.split);
  auto truth = hjid::read_ground_truth(a.truth);
  hjid::ProbeOptions po;
  po.seed = a.seed;
  po.alternative = {hjid::map_family_from_string(a.alt_family), a.alt_scale, a.alt_shift, a.alt_bend};
  auto d = hjid::identifiability_probe(cp.model, split, truth, po);
  write_text(a.out, hjid::probe_json(d, g_command_line));
  std::cout << "probe: canonical correlation " << d.canonical_correlation << " (control "
            << d.shuffled_correlation << "), flow fit error " << d.flow_fit_error << " (alternative "
            << d.alternative_fit_error << ", no flow " << d.unflowed_fit_error << "), injectivity "
            << d.injectivity_fraction << " -> " << a.out << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) g_command_line += (i ? " " : "") + std::string(argv[i]);
  g_command_line = "hjid" + g_command_line.substr(g_command_line.find(' ') == std::string::npos
                                                       ? g_command_line.size()
                                                       : g_command_line.find(' '));

  CLI::App app{"Cross-domain recommendation with shallow/deep decoupling and flow-based disentanglement"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-domain dataset with ground truth");
  synth->add_option("--users", sa.users, "Users per domain")->capture_default_str();
  synth->add_option("--users-x", sa.users_x, "Users in X (overrides --users)");
  synth->add_option("--users-y", sa.users_y, "Users in Y (overrides --users)");
  synth->add_option("--overlap", sa.overlap, "Users present in both domains")->capture_default_str();
  synth->add_option("--items", sa.items, "Items per domain")->capture_default_str();
  synth->add_option("--items-x", sa.items_x, "Items in X (overrides --items)");
  synth->add_option("--items-y", sa.items_y, "Items in Y (overrides --items)");
  synth->add_option("--d-shared", sa.d_shared, "Shared latent width")->capture_default_str();
  synth->add_option("--d-variant", sa.d_variant, "Variant latent width")->capture_default_str();
  synth->add_option("--map", sa.map_family, "True map family: affine or monotone")->capture_default_str();
  synth->add_option("--map-scale", sa.map_scale, "True map scale")->capture_default_str();
  synth->add_option("--map-shift", sa.map_shift, "True map shift")->capture_default_str();
  synth->add_option("--map-bend", sa.map_bend, "Cubic term of the monotone map")->capture_default_str();
  synth->add_option("--correlation", sa.correlation, "Weight of the shared block in [0,1]")->capture_default_str();
  synth->add_option("--temperature", sa.temperature, "Logit temperature")->capture_default_str();
  synth->add_option("--logit-offset", sa.logit_offset, "Interaction density offset")->capture_default_str();
  synth->add_option("--min-edges", sa.min_edges, "Minimum edges per user")->capture_default_str();
  synth->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
  synth->add_option("-o,--out", sa.out, "Output directory")->required();

  PrepareArgs pa;
  auto* prepare = app.add_subcommand("prepare", "Split two interaction files into train/test/validation");
  prepare->add_option("--x", pa.x, "Interaction file of domain X")->required();
  prepare->add_option("--y", pa.y, "Interaction file of domain Y")->required();
  prepare->add_option("--seed", pa.seed, "Random seed")->capture_default_str();
  prepare->add_flag("--non-overlap", pa.non_overlap, "Remove overlapped users from training");
  prepare->add_option("--negatives", pa.negatives, "Negatives per query")->capture_default_str();
  prepare->add_option("--train", pa.train, "Share of overlapped users for training")->capture_default_str();
  prepare->add_option("--test", pa.test, "Share for testing")->capture_default_str();
  prepare->add_option("--validation", pa.validation, "Share for validation")->capture_default_str();
  prepare->add_option("-o,--out", pa.out, "Split manifest path")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train one transfer direction");
  train->add_option("--config", ta.config, "key = value config file");
  train->add_option("--split", ta.split, "Split manifest")->required();
  train->add_option("--variant", ta.variant, "full, A, B, C or D")
      ->check(CLI::IsMember({"full", "A", "B", "C", "D"}));
  train->add_option("--direction", ta.direction, "xy or yx")->check(CLI::IsMember({"xy", "yx"}));
  train->add_option("--seed", ta.seed, "Random seed (overrides the config)");
  train->add_option("--epochs", ta.epochs, "Epochs (overrides the config)");
  train->add_option("--set", ta.overrides, "Config override key=value (repeatable)");
  train->add_option("-o,--out", ta.out, "Output directory")->required();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Rank held-out positives against sampled negatives");
  eval->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
  eval->add_option("--split", ea.split, "Split manifest")->required();
  eval->add_option("--queries", ea.query_set, "test or validation")->capture_default_str();
  eval->add_option("--domain", ea.domain, "Domain to evaluate (default: the target)");
  eval->add_option("-o,--out", ea.out, "Metrics report path")->required();

  CheckArgs ca;
  auto* check = app.add_subcommand("check", "Run the invariant suite");
  check->add_option("--only", ca.only, "Run a single family")->check(CLI::IsMember(hjid::check_families()));
  check->add_option("--inject-fault", ca.fault, "Deliberately break one check")
      ->check(CLI::IsMember(hjid::fault_names()));

  ProbeArgs pra;
  auto* probe = app.add_subcommand("probe", "Identifiability diagnostics against synthetic ground truth");
  probe->add_option("--checkpoint", pra.checkpoint, "Checkpoint file")->required();
  probe->add_option("--split", pra.split, "Split manifest")->required();
  probe->add_option("--truth", pra.truth, "ground_truth.json from synth")->required();
  probe->add_option("--seed", pra.seed, "Probe sampling seed")->capture_default_str();
  probe->add_option("--alt-map", pra.alt_family, "Alternative map family")->capture_default_str();
  probe->add_option("--alt-scale", pra.alt_scale, "Alternative map scale")->capture_default_str();
  probe->add_option("--alt-shift", pra.alt_shift, "Alternative map shift")->capture_default_str();
  probe->add_option("--alt-bend", pra.alt_bend, "Alternative map cubic term")->capture_default_str();
  probe->add_option("-o,--out", pra.out, "Diagnostics path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return cmd_synth(sa);
    if (*prepare) return cmd_prepare(pa);
    if (*train) return cmd_train(ta);
    if (*eval) return cmd_eval(ea);
    if (*check) return cmd_check(ca);
    if (*probe) return cmd_probe(pra);
  } catch (const hjid::ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const hjid::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const hjid::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
