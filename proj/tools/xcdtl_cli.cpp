// Command-line front end: generate, features, classify, rank, transfer, report.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xcdtl/xcdtl.hpp"

namespace fs = std::filesystem;
using namespace xcdtl;

namespace {

void log(const std::string& msg) { std::fprintf(stderr, "xcdtl: %s\n", msg.c_str()); }

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> out;
  for (const auto& s : csv::split(list)) {
    if (s.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw UsageError("bad seed '" + s + "'");
    }
  }
  if (out.empty()) throw UsageError("no seeds given");
  return out;
}

std::map<Domain, FeatureMatrix> load_domain_features(const fs::path& dir) {
  std::map<Domain, FeatureMatrix> out;
  std::string missing;
  for (Domain d : kAllDomains) {
    const auto path = dir / (std::string(to_string(d)) + ".csv");
    if (!fs::exists(path)) {
      missing += " " + path.string();
      continue;
    }
    FeatureMatrix fm = load_features(path);
    for (Domain got : fm.domains)
      if (got != d) throw DataError(path.string() + ": contains rows of domain " + std::string(to_string(got)));
    out[d] = std::move(fm);
  }
  if (!missing.empty()) throw DataError("missing feature files:" + missing);
  return out;
}

struct Options {
  // generate
  std::string domain;
  std::size_t count = 500;
  std::uint64_t seed = 1;
  std::size_t min_nodes = 0, max_nodes = 0;
  // shared
  std::string in, out, features_dir, borda, config, feature_mode, pairs, results, iit_dir, seeds = "1,24,42";
  std::size_t jobs = 0;
};

int run_generate(const Options& o) {
  const Domain d = parse_domain(o.domain);
  SizeRange range = default_size_range(d);
  if (o.min_nodes) range.min = o.min_nodes;
  if (o.max_nodes) range.max = o.max_nodes;
  const auto e = generate_ensemble(d, o.count, o.seed, range, o.jobs);
  save_ensemble(e, o.out);
  log("wrote " + std::to_string(e.size()) + " " + std::string(to_string(d)) + " graphs to " + o.out);
  return 0;
}

int run_features(const Options& o) {
  const auto e = load_ensemble(o.in);
  const auto fm = compute_feature_matrix(e, o.jobs);
  save_features(fm, o.out);
  log("wrote descriptors for " + std::to_string(fm.size()) + " graphs to " + o.out);
  return 0;
}

int run_classify(const Options& o) {
  const auto domains = load_domain_features(o.features_dir);
  FeatureMatrix all;
  for (const auto& [d, fm] : domains) all = all.size() == 0 ? fm : concat(all, fm);
  const auto seeds = parse_seeds(o.seeds);
  ClassifierOptions opt;
  opt.threads = o.jobs;
  const auto runs = run_domain_classification(all, seeds, opt);
  const fs::path out(o.out);
  csv::write_file(out / "metrics.csv", metrics_csv(runs));
  csv::write_file(out / "confusion.csv", confusion_csv(runs));
  csv::write_file(out / "ranks.csv", ranks_csv(runs));
  const auto records = rank_records(runs);
  csv::write_file(out / "borda.csv", borda_csv(borda_scores(records)));
  for (const auto& r : runs) {
    char line[160];
    std::snprintf(line, sizeof line, "%s seed %llu: accuracy %.4f, macro-F1 %.4f, ROC-AUC %.4f",
                  std::string(to_string(r.kind)).c_str(), static_cast<unsigned long long>(r.seed), r.metrics.accuracy,
                  r.metrics.f1_macro, r.metrics.roc_auc);
    log(line);
  }
  return 0;
}

int run_rank(const Options& o) {
  const auto domains = load_domain_features(o.features_dir);
  const BordaScore b = load_borda(o.borda);
  const auto tables = iit_tables(domains, b, o.jobs);
  const auto global = global_consensus(tables);
  const fs::path out(o.out);
  csv::write_file(out / "iit.csv", iit_csv(tables));
  csv::write_file(out / "global.csv", global_csv(global));
  std::string anchors;
  for (std::size_t a : global.anchors) anchors += (anchors.empty() ? "" : ", ") + std::string(kFeatureNames[a]);
  log("global anchors: " + anchors);
  return 0;
}

int run_transfer(const Options& o) {
  GridConfig cfg = o.config.empty() ? GridConfig{} : load_grid_config(o.config);
  if (!o.feature_mode.empty()) cfg.feature_mode = parse_feature_mode(o.feature_mode);
  if (!o.pairs.empty()) {
    cfg.pairs.clear();
    for (const auto& p : csv::split(o.pairs))
      if (!p.empty()) cfg.pairs.push_back(parse_pair(p));
  }
  if (!o.iit_dir.empty()) cfg.iit_dir = o.iit_dir;
  if (!o.features_dir.empty()) cfg.features_dir = o.features_dir;
  cfg.validate();
  log("preparing master pools and anchors");
  const GridData data = prepare_grid(cfg, o.jobs);
  const fs::path out(o.out);
  write_grid_inputs(cfg, data, out);
  log("running " + std::to_string(grid_cells(cfg).size()) + " cells on " + std::to_string(thread_count(o.jobs)) +
      " threads");
  const auto s = run_grid(cfg, data, out, o.jobs);
  log("computed " + std::to_string(s.computed) + ", skipped " + std::to_string(s.skipped) + ", failed " +
      std::to_string(s.failed));
  return 0;
}

int run_report(const Options& o) {
  emit_report(o.results, o.out);
  log("report written to " + o.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain structural anchor transfer for graph anomaly detection"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("generate", "Generate a synthetic graph ensemble (JSON lines)");
  gen->add_option("--domain", o.domain, "Social, Molecular, Proteins or Linguistic")->required();
  gen->add_option("--count", o.count, "Number of graphs")->check(CLI::PositiveNumber);
  gen->add_option("--seed", o.seed, "Ensemble seed");
  gen->add_option("--min-nodes", o.min_nodes, "Override the minimum node count");
  gen->add_option("--max-nodes", o.max_nodes, "Override the maximum node count");
  gen->add_option("--out", o.out, "Output file")->required();

  auto* feat = app.add_subcommand("features", "Compute the 12 descriptors of an ensemble");
  feat->add_option("--in", o.in, "Ensemble file from `generate`")->required();
  feat->add_option("--out", o.out, "Output CSV")->required();

  auto* cls = app.add_subcommand("classify", "Domain classification with RF, GB and LR; writes Borda scores");
  cls->add_option("--features", o.features_dir, "Directory with <Domain>.csv descriptor files")->required();
  cls->add_option("--seeds", o.seeds, "Comma-separated split/model seeds");
  cls->add_option("--out", o.out, "Output directory")->required();

  auto* rank = app.add_subcommand("rank", "IIT tables for all directed pairs and the global consensus");
  rank->add_option("--features", o.features_dir, "Directory with <Domain>.csv descriptor files")->required();
  rank->add_option("--borda", o.borda, "borda.csv from `classify`")->required();
  rank->add_option("--out", o.out, "Output directory")->required();

  auto* tr = app.add_subcommand("transfer", "Run the NT/T stress-test grid");
  tr->add_option("--config", o.config, "Grid configuration JSON (defaults when omitted)");
  tr->add_option("--out", o.out, "Output directory")->required();
  tr->add_option("--features", o.feature_mode, "anchors8 or all12");
  tr->add_option("--pairs", o.pairs, "Comma-separated SRC:TGT pairs");
  tr->add_option("--iit", o.iit_dir, "Directory with iit.csv from `rank` (computed internally otherwise)");
  tr->add_option("--features-dir", o.features_dir, "Directory with <Domain>.csv master descriptors");

  auto* rep = app.add_subcommand("report", "Tables, statistics and digest from a transfer run");
  rep->add_option("--results", o.results, "Output directory of `transfer`")->required();
  rep->add_option("--out", o.out, "Report directory")->required();

  for (auto* sub : {gen, feat, cls, rank, tr, rep})
    sub->add_option("--jobs", o.jobs, "Worker threads (0 = all cores; XCDTL_THREADS caps)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  try {
    if (*gen) return run_generate(o);
    if (*feat) return run_features(o);
    if (*cls) return run_classify(o);
    if (*rank) return run_rank(o);
    if (*tr) return run_transfer(o);
    if (*rep) return run_report(o);
  } catch (const Error& e) {
    std::fprintf(stderr, "xcdtl: error: %s\n", e.what());
    return static_cast<int>(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "xcdtl: error: %s\n", e.what());
    return static_cast<int>(ExitCode::data);
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "xcdtl: error: %s\n", e.what());
    return static_cast<int>(ExitCode::data);
  }
  return static_cast<int>(ExitCode::usage);
}
