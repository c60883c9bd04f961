// Command-line front end: synth, pretrain, embed, eval-classify, eval-cluster,
// gradcheck. Every failure maps onto a typed exit code (2 usage, 3 data,
// 4 numerical, 5 config).

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "s3cl/s3cl.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace s3cl;

namespace {

// ---------------------------------------------------------------------------
// Shared plumbing

std::string hyphenate(std::string s) {
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

/// Config overrides collected from --<field> flags, applied on top of
/// --config (if any) and the built-in defaults.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> raw;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "JSON file with TrainConfig fields");
#define S3CL_FLAG(f) app.add_option("--" + hyphenate(#f), raw[#f], #f);
    S3CL_CONFIG_COUNTS(S3CL_FLAG)
    S3CL_CONFIG_REALS(S3CL_FLAG)
    S3CL_CONFIG_BOOLS(S3CL_FLAG)
#undef S3CL_FLAG
    app.add_option("--seed", raw["seed"], "run seed");
  }

  TrainConfig resolve(TrainConfig base = {}) const {
    if (!config_path.empty()) base = load_config(config_path, base);
    json j = json::object();
    auto count = [&](const std::string& key, const std::string& v) {
      std::size_t pos = 0;
      unsigned long long x = 0;
      try {
        x = std::stoull(v, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != v.size() || v.empty() || v[0] == '-') {
        throw UsageError("--" + hyphenate(key) + " expects a non-negative integer, got '" + v + "'");
      }
      j[key] = x;
    };
    auto real = [&](const std::string& key, const std::string& v) {
      if (v == "inf") {
        j[key] = "inf";
        return;
      }
      std::size_t pos = 0;
      double x = 0.0;
      try {
        x = std::stod(v, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != v.size() || v.empty()) throw UsageError("--" + hyphenate(key) + " expects a number, got '" + v + "'");
      j[key] = x;
    };
    auto boolean = [&](const std::string& key, const std::string& v) {
      if (v == "true" || v == "1") j[key] = true;
      else if (v == "false" || v == "0") j[key] = false;
      else throw UsageError("--" + hyphenate(key) + " expects true or false, got '" + v + "'");
    };
    auto value = [&](const char* key) -> const std::string* {
      auto it = raw.find(key);
      return it == raw.end() || it->second.empty() ? nullptr : &it->second;
    };
#define S3CL_COUNT(f) if (auto v = value(#f)) count(#f, *v);
#define S3CL_REAL(f) if (auto v = value(#f)) real(#f, *v);
#define S3CL_BOOL(f) if (auto v = value(#f)) boolean(#f, *v);
    S3CL_CONFIG_COUNTS(S3CL_COUNT)
    S3CL_CONFIG_REALS(S3CL_REAL)
    S3CL_CONFIG_BOOLS(S3CL_BOOL)
#undef S3CL_COUNT
#undef S3CL_REAL
#undef S3CL_BOOL
    if (auto v = value("seed")) count("seed", *v);
    TrainConfig c = config_from_json(j, base);
    c.validate();
    return c;
  }
};

/// --graph names either a directory holding edges.tsv / features.tsv
/// [/ labels.tsv] or an edge file, in which case --features is required.
struct GraphFlags {
  std::string graph;
  std::string features;
  std::string labels;

  void attach(CLI::App& app) {
    app.add_option("--graph", graph, "graph directory or edge file")->required();
    app.add_option("--features", features, "feature matrix (when --graph is an edge file)");
    app.add_option("--labels", labels, "optional label file");
  }

  AttributedGraph load() const {
    fs::path edges = graph, feats = features, labs = labels;
    if (fs::is_directory(graph)) {
      edges = fs::path(graph) / "edges.tsv";
      if (feats.empty()) feats = fs::path(graph) / "features.tsv";
      if (labs.empty() && fs::exists(fs::path(graph) / "labels.tsv")) labs = fs::path(graph) / "labels.tsv";
    }
    if (feats.empty()) throw UsageError("--features is required when --graph is an edge file");
    return load_graph(edges, feats, labs.empty() ? std::nullopt : std::optional<fs::path>(labs));
  }
};

void write_json(const std::string& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed for " + path);
}

/// Worker threads for evaluation runs: S3CL_THREADS, default 1.
std::size_t worker_threads() {
  const char* env = std::getenv("S3CL_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ConfigError("S3CL_THREADS must be a positive integer");
  return static_cast<std::size_t>(v);
}

/// Runs fn(0..runs-1) on up to `threads` workers. Results land in their own
/// slot, so the reduction order never depends on scheduling.
template <typename T, typename Fn>
std::vector<T> run_indexed(std::size_t runs, std::size_t threads, Fn fn) {
  std::vector<T> out(runs);
  std::vector<std::exception_ptr> errors(runs);
  auto work = [&](std::size_t first) {
    for (std::size_t r = first; r < runs; r += threads) {
      try {
        out[r] = fn(r);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, runs));
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

json summary_json(const std::vector<double>& xs) {
  const Summary s = summarize(xs);
  return {{"mean", s.mean}, {"std", s.stddev}, {"runs", xs}};
}

std::vector<int> require_labels(const std::string& path, std::size_t n) {
  std::vector<int> y = read_labels(path);
  if (y.size() != n) {
    throw DataError("label file has " + std::to_string(y.size()) + " entries, embeddings have " +
                    std::to_string(n) + " rows");
  }
  return y;
}

// ---------------------------------------------------------------------------
// Subcommands

struct SynthArgs {
  std::string out;
  SbmSpec spec;
};

int cmd_synth(const SynthArgs& a) {
  const AttributedGraph g = generate_sbm(a.spec);
  fs::create_directories(a.out);
  write_edges(fs::path(a.out) / "edges.tsv", g.edges);
  write_dense_matrix(fs::path(a.out) / "features.tsv", g.features);
  write_labels(fs::path(a.out) / "labels.tsv", *g.labels);
  std::cerr << "wrote " << g.num_nodes << " nodes, " << g.edges.size() << " edges to " << a.out << '\n';
  return 0;
}

struct PretrainArgs {
  GraphFlags graph;
  ConfigFlags config;
  std::string out = "model.ckpt";
  std::string report;
  std::string resume;
  std::string prototypes;
  std::size_t checkpoint_every = 0;
  bool timing = false;
  bool quiet = false;
};

int cmd_pretrain(const PretrainArgs& a) {
  const AttributedGraph g = a.graph.load();
  TrainConfig cfg;
  TrainState state;
  if (!a.resume.empty()) {
    Checkpoint ck = load_checkpoint(a.resume);
    // Flags override the stored config (typically to extend `epochs`).
    cfg = a.config.resolve(ck.config);
    state = std::move(ck.state);
  } else {
    cfg = a.config.resolve();
    state = initial_state(g, cfg);
  }

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r, const TrainState& s) {
    if (!a.quiet) {
      std::cerr << "epoch " << r.epoch << (r.warmup ? " [warmup]" : "") << " loss " << r.loss.total
                << " (str " << r.loss.structural << ", sem " << r.loss.semantic << ") K " << r.prototypes
                << '\n';
    }
    if (a.checkpoint_every > 0 && s.epoch % a.checkpoint_every == 0) save_checkpoint(a.out, cfg, s);
  };

  TrainReport report;
  try {
    report = train(g, cfg, state, hooks);
  } catch (const NumericalError&) {
    // train() leaves `state` at the last completed epoch.
    const std::string last = a.out + ".lastgood";
    save_checkpoint(last, cfg, state);
    std::cerr << "last good state (epoch " << state.epoch << ") written to " << last << '\n';
    throw;
  }
  save_checkpoint(a.out, cfg, state);
  if (!a.prototypes.empty() && state.prototypes) write_prototypes(a.prototypes, *state.prototypes);
  json j = report_to_json(report, a.timing);
  j["config"] = to_json(cfg);
  j["final_epoch"] = state.epoch;
  j["final_prototypes"] = state.prototypes ? state.prototypes->count() : 0;
  if (!a.report.empty()) write_json(a.report, j);
  std::cerr << "checkpoint written to " << a.out << '\n';
  return 0;
}

struct EmbedArgs {
  GraphFlags graph;
  std::string checkpoint;
  std::string out = "embeddings.tsv";
  bool binary = false;
};

int cmd_embed(const EmbedArgs& a) {
  const AttributedGraph g = a.graph.load();
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Matrix h = embed(ck.state.params, g, ck.config);
  if (a.binary) write_embedding_binary(a.out, h);
  else write_dense_matrix(a.out, h);
  return 0;
}

struct ClassifyArgs {
  std::string embeddings;
  std::string labels;
  std::string out;
  std::size_t runs = 10;
  std::uint64_t seed = 0;
  SplitOptions split;
  ProbeOptions probe;
};

int cmd_eval_classify(const ClassifyArgs& a) {
  const Matrix h = read_embeddings(a.embeddings);
  const std::vector<int> y = require_labels(a.labels, static_cast<std::size_t>(h.rows()));
  if (a.runs < 1) throw ConfigError("--runs must be >= 1");
  const Rng root(a.seed);
  const auto results = run_indexed<ProbeResult>(a.runs, worker_threads(), [&](std::size_t r) {
    Rng rng = root.split(r);
    const SplitSpec split = random_split(y, a.split, rng);
    return linear_probe(h, y, split, a.probe);
  });
  std::vector<double> test, val;
  std::vector<int> unseen;
  for (const ProbeResult& r : results) {
    test.push_back(r.test_accuracy);
    val.push_back(r.validation_accuracy);
    unseen.insert(unseen.end(), r.unseen_test_classes.begin(), r.unseen_test_classes.end());
  }
  std::sort(unseen.begin(), unseen.end());
  unseen.erase(std::unique(unseen.begin(), unseen.end()), unseen.end());
  if (!unseen.empty()) std::cerr << "warning: " << unseen.size() << " test classes never seen in training\n";
  write_json(a.out, {{"metric", "linear_probe"}, {"test_accuracy", summary_json(test)},
                     {"validation_accuracy", summary_json(val)}, {"unseen_test_classes", unseen}});
  return 0;
}

struct ClusterArgs {
  std::string embeddings;
  std::string labels;
  std::string out;
  std::size_t k = 0;
  std::size_t runs = 10;
  std::size_t restarts = 10;
  std::uint64_t seed = 0;
};

int cmd_eval_cluster(const ClusterArgs& a) {
  const Matrix h = read_embeddings(a.embeddings);
  const std::vector<int> y = require_labels(a.labels, static_cast<std::size_t>(h.rows()));
  std::size_t k = a.k;
  if (k == 0) {
    std::vector<int> ids = y;
    std::sort(ids.begin(), ids.end());
    k = static_cast<std::size_t>(std::unique(ids.begin(), ids.end()) - ids.begin());
  }
  if (a.runs < 1) throw ConfigError("--runs must be >= 1");
  const Rng root(a.seed);
  const auto results = run_indexed<ClusterMetrics>(a.runs, worker_threads(), [&](std::size_t r) {
    const KMeansResult km = kmeans(h, k, a.restarts, root.split(r).engine()());
    return clustering_metrics(km.labels, y);
  });
  std::vector<double> acc, nmi, ari;
  for (const ClusterMetrics& m : results) {
    acc.push_back(m.acc);
    nmi.push_back(m.nmi);
    ari.push_back(m.ari);
  }
  write_json(a.out, {{"metric", "kmeans"}, {"k", k}, {"acc", summary_json(acc)}, {"nmi", summary_json(nmi)},
                     {"ari", summary_json(ari)}});
  return 0;
}

struct GradcheckArgs {
  std::string graph;
  std::size_t nodes = 12;
  std::size_t views = 3;
  std::size_t negatives = 4;
  std::size_t prototypes = 3;
  std::uint64_t seed = 0;
  double gamma = 0.5;
  double tau1 = 0.5;
  double tau2 = 0.5;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::size_t samples = 0;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  if (a.nodes < 2 || a.views < 1 || a.negatives < 1 || a.prototypes < 1) {
    throw ConfigError("gradcheck needs nodes >= 2 and views, negatives, prototypes >= 1");
  }
  Rng rng(a.seed);
  AttributedGraph g;
  if (!a.graph.empty()) {
    GraphFlags f;
    f.graph = a.graph;
    g = f.load();
  } else {
    SbmSpec spec;
    spec.blocks = std::min<std::size_t>(a.prototypes, a.nodes);
    spec.nodes_per_block = (a.nodes + spec.blocks - 1) / spec.blocks;
    spec.p_in = 0.5;
    spec.p_out = 0.1;
    spec.feature_dim = std::max<std::size_t>(4, spec.blocks);
    spec.seed = a.seed;
    g = generate_sbm(spec);
  }
  const std::size_t n = g.num_nodes;
  const PropagatedViews views = propagate(normalized_adjacency(g), g.features, a.views);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % a.prototypes);
  const std::size_t m = std::min(a.negatives, (n - 1) * a.views);
  const NegativeBatch negatives = sample_negative_batch(n, std::span<const int>(labels), m, a.views, rng);

  // Redraw weights until every ReLU pre-activation is at least 1e-3 from the
  // kink, so the central differences are meaningful.
  const LayerSizes sizes{g.feature_dim(), 5, 6, 4};
  Weights w;
  double margin = 0.0;
  for (int attempt = 0; attempt < 1000 && margin < 1e-3; ++attempt) {
    w = init_params(sizes, rng).live;
    w.b1 = Matrix::NullaryExpr(1, 6, [&] { return rng.normal(0.0, 0.3); });
    w.b2 = Matrix::NullaryExpr(1, 4, [&] { return rng.normal(0.0, 0.3); });
    margin = std::numeric_limits<double>::infinity();
    auto probe = [&](const Matrix& x) {
      const EncoderOutput e = encoder_forward(w.encoder, x);
      const ProjectorCache c = projector_forward(w, e.out, true);
      margin = std::min({margin, e.pre.cwiseAbs().minCoeff(), c.hidden_pre.cwiseAbs().minCoeff(),
                         e.out.rowwise().norm().minCoeff()});
    };
    for (const Matrix& x : views.views) probe(x);
    probe(views.mixed);
  }
  if (margin < 1e-3) std::cerr << "warning: no ReLU-safe point found (margin " << margin << ")\n";

  PrototypeState protos = recompute_prototypes(encoder_forward(w.encoder, views.mixed).out, labels, a.prototypes);
  const ObjectiveSettings settings{a.gamma, a.tau1, a.tau2, true};
  json out;
  out["nodes"] = n;
  out["views"] = a.views;
  out["negatives"] = m;
  out["relu_margin"] = margin;
  bool ok = true;
  struct Term {
    const char* name;
    double gamma;
    bool semantic;
  };
  for (const Term t : {Term{"structural", 1.0, false}, Term{"semantic", 0.0, true}, Term{"joint", a.gamma, true}}) {
    ObjectiveSettings s = settings;
    s.gamma = t.gamma;
    const PrototypeState* p = t.semantic ? &protos : nullptr;
    const ObjectiveResult r = joint_objective(w, views, negatives, p, s);
    auto loss = [&](const Weights& x) { return joint_objective(x, views, negatives, p, s).loss.total; };
    Rng pick = rng.split(1);
    const GradCheckResult res = finite_diff_check(loss, w, r.grads, {a.step, a.samples, 1e-6}, pick);
    const bool pass = res.max_relative_error <= a.tolerance;
    ok = ok && pass;
    out[t.name] = {{"max_relative_error", res.max_relative_error},
                   {"checked", res.checked},
                   {"worst_tensor", Weights::kNames[res.worst_tensor]},
                   {"pass", pass}};
    std::cout << t.name << " max relative error " << res.max_relative_error << (pass ? " ok" : " FAIL") << '\n';
  }
  out["pass"] = ok;
  std::cout << out.dump(2) << '\n';
  return ok ? 0 : static_cast<int>(ExitCode::failure);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"s3cl: self-supervised node representation learning"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "write a planted-partition graph");
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--blocks", synth.spec.blocks);
  s->add_option("--nodes-per-block", synth.spec.nodes_per_block);
  s->add_option("--p-in", synth.spec.p_in);
  s->add_option("--p-out", synth.spec.p_out);
  s->add_option("--dim", synth.spec.feature_dim);
  s->add_option("--separation", synth.spec.separation, "distance between block means in noise units");
  s->add_option("--noise", synth.spec.noise);
  s->add_option("--seed", synth.spec.seed);

  PretrainArgs pre;
  auto* p = app.add_subcommand("pretrain", "train an encoder");
  pre.graph.attach(*p);
  pre.config.attach(*p);
  p->add_option("--out", pre.out, "checkpoint path");
  p->add_option("--report", pre.report, "training report (JSON)");
  p->add_option("--resume", pre.resume, "continue from a checkpoint");
  p->add_option("--prototypes-out", pre.prototypes, "final prototypes and pseudo-labels");
  p->add_option("--checkpoint-every", pre.checkpoint_every, "also checkpoint every N epochs");
  p->add_flag("--timing", pre.timing, "include wall-clock seconds in the report");
  p->add_flag("--quiet", pre.quiet);

  EmbedArgs emb;
  auto* e = app.add_subcommand("embed", "export representations");
  emb.graph.attach(*e);
  e->add_option("--checkpoint", emb.checkpoint)->required();
  e->add_option("--out", emb.out);
  e->add_flag("--binary", emb.binary, "write the binary layout");

  ClassifyArgs cls;
  auto* c = app.add_subcommand("eval-classify", "linear-probe node classification");
  c->add_option("--embeddings", cls.embeddings)->required();
  c->add_option("--labels", cls.labels)->required();
  c->add_option("--out", cls.out, "JSON output (default stdout)");
  c->add_option("--runs", cls.runs);
  c->add_option("--seed", cls.seed);
  c->add_option("--train-per-class", cls.split.train_per_class);
  c->add_option("--validation", cls.split.validation);
  c->add_option("--test", cls.split.test);
  c->add_option("--label-rate", cls.split.label_rate);
  c->add_option("--lambda", cls.probe.lambda);
  c->add_option("--epochs", cls.probe.epochs);
  c->add_option("--lr", cls.probe.lr);

  ClusterArgs clu;
  auto* k = app.add_subcommand("eval-cluster", "k-means clustering metrics");
  k->add_option("--embeddings", clu.embeddings)->required();
  k->add_option("--labels", clu.labels)->required();
  k->add_option("--out", clu.out, "JSON output (default stdout)");
  k->add_option("--k", clu.k, "clusters (default: number of classes)");
  k->add_option("--runs", clu.runs);
  k->add_option("--restarts", clu.restarts);
  k->add_option("--seed", clu.seed);

  GradcheckArgs gc;
  auto* gcmd = app.add_subcommand("gradcheck", "finite-difference check of every loss");
  gcmd->add_option("--graph", gc.graph, "graph directory (default: built-in 12-node fixture)");
  gcmd->add_option("--nodes", gc.nodes);
  gcmd->add_option("--prop-steps", gc.views);
  gcmd->add_option("--negatives", gc.negatives);
  gcmd->add_option("--prototypes", gc.prototypes);
  gcmd->add_option("--gamma", gc.gamma);
  gcmd->add_option("--tau1", gc.tau1);
  gcmd->add_option("--tau2", gc.tau2);
  gcmd->add_option("--step", gc.step);
  gcmd->add_option("--tolerance", gc.tolerance);
  gcmd->add_option("--samples", gc.samples, "coordinates to probe (0 = all)");
  gcmd->add_option("--seed", gc.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return static_cast<int>(ExitCode::usage);
  }

  try {
    if (*s) return cmd_synth(synth);
    if (*p) return cmd_pretrain(pre);
    if (*e) return cmd_embed(emb);
    if (*c) return cmd_eval_classify(cls);
    if (*k) return cmd_eval_cluster(clu);
    if (*gcmd) return cmd_gradcheck(gc);
  } catch (const Error& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return ex.exit_code();
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return static_cast<int>(ExitCode::failure);
  }
  return static_cast<int>(ExitCode::usage);
}
