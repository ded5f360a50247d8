// SPDX-License-Identifier: Apache-2.0

#include "gremc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string_view>
#include <utility>

#include "json.hpp"

#include "gremc/rng.hpp"

namespace fs = std::filesystem;

namespace gremc {
namespace {

using nlohmann::json;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// Strict config parsing: a typo in a key should abort the run, not silently
// fall back to a default.
void expect_keys(const json& j, std::initializer_list<const char*> allowed, const char* scope) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    require(known, std::string("unknown config key '") + scope + "." + it.key() + "'");
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

json retrieval_to_json(const RetrievalConfig& r) {
  return json{{"k", r.k},
              {"t", r.t},
              {"kn", r.k_hop},
              {"anchor_modality", r.anchor_modality},
              {"max_anchors", r.max_anchors}};
}

void retrieval_from_json(RetrievalConfig& r, const json& j) {
  expect_keys(j, {"k", "t", "kn", "anchor_modality", "max_anchors"}, "retrieval");
  get_if(j, "k", r.k);
  get_if(j, "t", r.t);
  get_if(j, "kn", r.k_hop);
  get_if(j, "anchor_modality", r.anchor_modality);
  get_if(j, "max_anchors", r.max_anchors);
}

json model_to_json(const ModelConfig& m) {
  return json{{"d", m.d},
              {"pe_k", m.pe_k},
              {"layers", m.layers},
              {"heads", m.heads},
              {"codebook_size", m.codebook_size},
              {"top_p", m.top_p},
              {"tau", m.tau},
              {"noise_scale", m.noise_scale},
              {"dropout", m.dropout},
              {"lambda_usage", m.lambda_usage},
              {"lambda_load", m.lambda_load},
              {"learning_rate", m.learning_rate},
              {"l2", m.l2},
              {"batch", m.batch},
              {"epochs", m.epochs},
              {"val_fraction", m.val_fraction},
              {"patience", m.patience},
              {"seed", m.seed}};
}

void model_from_json(ModelConfig& m, const json& j) {
  expect_keys(j,
              {"d", "pe_k", "layers", "heads", "codebook_size", "top_p", "tau", "noise_scale",
               "dropout", "lambda_usage", "lambda_load", "learning_rate", "l2", "batch", "epochs",
               "val_fraction", "patience", "seed"},
              "model");
  get_if(j, "d", m.d);
  get_if(j, "pe_k", m.pe_k);
  get_if(j, "layers", m.layers);
  get_if(j, "heads", m.heads);
  get_if(j, "codebook_size", m.codebook_size);
  get_if(j, "top_p", m.top_p);
  get_if(j, "tau", m.tau);
  get_if(j, "noise_scale", m.noise_scale);
  get_if(j, "dropout", m.dropout);
  get_if(j, "lambda_usage", m.lambda_usage);
  get_if(j, "lambda_load", m.lambda_load);
  get_if(j, "learning_rate", m.learning_rate);
  get_if(j, "l2", m.l2);
  get_if(j, "batch", m.batch);
  get_if(j, "epochs", m.epochs);
  get_if(j, "val_fraction", m.val_fraction);
  get_if(j, "patience", m.patience);
  get_if(j, "seed", m.seed);
}

json synth_to_json(const SyntheticSpec& s) {
  return json{{"n_clusters", s.n_clusters},
              {"items_per_cluster", s.items_per_cluster},
              {"dims", s.dims},
              {"intra_corr", s.intra_corr},
              {"cross_noise_sd", s.cross_noise_sd},
              {"p_intra", s.p_intra},
              {"p_inter", s.p_inter},
              {"seed", s.seed}};
}

void synth_from_json(SyntheticSpec& s, const json& j) {
  expect_keys(j,
              {"n_clusters", "items_per_cluster", "dims", "intra_corr", "cross_noise_sd",
               "p_intra", "p_inter", "seed"},
              "synthetic_spec");
  get_if(j, "n_clusters", s.n_clusters);
  get_if(j, "items_per_cluster", s.items_per_cluster);
  get_if(j, "dims", s.dims);
  get_if(j, "intra_corr", s.intra_corr);
  get_if(j, "cross_noise_sd", s.cross_noise_sd);
  get_if(j, "p_intra", s.p_intra);
  get_if(j, "p_inter", s.p_inter);
  get_if(j, "seed", s.seed);
}

json run_config_to_json(const RunConfig& cfg) {
  json feats = json::object();
  for (const auto& [m, path] : cfg.features) feats[std::to_string(m)] = path;
  return json{{"interactions", cfg.interactions},
              {"features", feats},
              {"mask", cfg.mask_path},
              {"out", cfg.out_dir},
              {"rate", cfg.rate},
              {"seed", cfg.seed},
              {"min_degree", cfg.min_degree},
              {"threads", cfg.threads},
              {"synthetic", cfg.synthetic},
              {"sample", cfg.sample},
              {"retrieval", retrieval_to_json(cfg.retrieval)},
              {"model", model_to_json(cfg.model)},
              {"synthetic_spec", synth_to_json(cfg.synth)}};
}

void run_config_from_json(RunConfig& cfg, const json& j) {
  require(j.is_object(), "config root must be a JSON object");
  expect_keys(j,
              {"interactions", "features", "mask", "out", "rate", "seed", "min_degree", "threads",
               "synthetic", "sample", "retrieval", "model", "synthetic_spec"},
              "config");
  get_if(j, "interactions", cfg.interactions);
  if (j.contains("features")) {
    const json& f = j.at("features");
    require(f.is_object(), "config 'features' must map modality index to file path");
    cfg.features.clear();
    for (auto it = f.begin(); it != f.end(); ++it) {
      size_t used = 0;
      unsigned m = 0;
      try {
        m = static_cast<unsigned>(std::stoul(it.key(), &used));
      } catch (const std::exception&) {
        used = 0;
      }
      require(used == it.key().size(), "feature modality key must be a non-negative integer: '" +
                                           it.key() + "'");
      cfg.features.emplace_back(m, it.value().get<std::string>());
    }
    std::sort(cfg.features.begin(), cfg.features.end());
  }
  get_if(j, "mask", cfg.mask_path);
  get_if(j, "out", cfg.out_dir);
  get_if(j, "rate", cfg.rate);
  get_if(j, "seed", cfg.seed);
  get_if(j, "min_degree", cfg.min_degree);
  get_if(j, "threads", cfg.threads);
  get_if(j, "synthetic", cfg.synthetic);
  get_if(j, "sample", cfg.sample);
  if (j.contains("retrieval")) retrieval_from_json(cfg.retrieval, j.at("retrieval"));
  if (j.contains("model")) model_from_json(cfg.model, j.at("model"));
  if (j.contains("synthetic_spec")) synth_from_json(cfg.synth, j.at("synthetic_spec"));
}

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  require(!ec, "cannot create output directory '" + cfg.out_dir + "': " + ec.message());
}

std::string file_hash_hex(const std::string& path) { return hex64(hash_file(path)); }

using InputList = std::vector<std::pair<std::string, std::string>>;

void write_manifest(const RunConfig& cfg, const std::string& command, const InputList& inputs,
                    std::vector<std::string> outputs) {
  json in = json::object();
  for (const auto& [path, hash] : inputs) in[path] = hash;
  std::sort(outputs.begin(), outputs.end());
  json j{{"command", command},
         {"seed", cfg.seed},
         {"config", run_config_to_json(cfg)},
         {"inputs", in},
         {"outputs", outputs}};
  write_text_file(artifact_path(cfg, "manifest_" + command + ".json"), j.dump(2) + "\n");
}

// Data loaded either from staged artifacts (with provenance hashes) or
// regenerated in memory for --synthetic runs. Synthetic mode never reads
// artifacts: the whole world is a function of (synthetic_spec.seed, --seed),
// which keeps reruns byte-identical regardless of directory state.
struct Bundle {
  ItemGraph graph;
  ModalityStore store;
  ModalityMask mask;
  InputList inputs;
};

ItemGraph load_required_graph(const RunConfig& cfg, InputList& inputs) {
  std::string path = artifact_path(cfg, "graph.ggr1");
  require(fs::exists(path), "missing " + path + "; run build-graph first");
  inputs.emplace_back(path, file_hash_hex(path));
  return load_graph(path);
}

ModalityStore load_required_features(const RunConfig& cfg, InputList& inputs) {
  require(!cfg.features.empty(), "no --features given; pass one <modality>=<path> per modality");
  std::vector<std::pair<unsigned, std::string>> feats = cfg.features;
  std::sort(feats.begin(), feats.end());
  ModalityStore store;
  for (size_t m = 0; m < feats.size(); ++m) {
    require(feats[m].first == m, "feature modalities must cover 0..M-1 without gaps or repeats");
    const std::string& path = feats[m].second;
    require(fs::exists(path), "missing features file " + path);
    inputs.emplace_back(path, file_hash_hex(path));
    store.modalities.push_back(load_features(path, static_cast<uint32_t>(m)));
  }
  store.validate();
  return store;
}

ModalityMask load_required_mask(const RunConfig& cfg, InputList& inputs, size_t n_items,
                                size_t n_modalities) {
  std::string path = mask_artifact_path(cfg);
  require(fs::exists(path), "missing " + path + "; run mask first");
  inputs.emplace_back(path, file_hash_hex(path));
  ModalityMask mask = load_mask_csv(path);
  require(mask.n_items == n_items && mask.n_modalities == n_modalities,
          "mask shape " + std::to_string(mask.n_items) + "x" + std::to_string(mask.n_modalities) +
              " does not match data " + std::to_string(n_items) + "x" +
              std::to_string(n_modalities));
  return mask;
}

Bundle load_bundle(const RunConfig& cfg) {
  Bundle b;
  if (cfg.synthetic) {
    SyntheticData data = generate_synthetic(cfg.synth);
    b.graph = std::move(data.graph);
    b.store = std::move(data.store);
    b.mask = apply_masking(b.store.n_items(), b.store.n_modalities(), cfg.rate, cfg.seed);
    return b;
  }
  b.graph = load_required_graph(cfg, b.inputs);
  b.store = load_required_features(cfg, b.inputs);
  require(b.store.n_items() == b.graph.n,
          "feature rows (" + std::to_string(b.store.n_items()) + ") do not match graph nodes (" +
              std::to_string(b.graph.n) +
              "); feature files must be ordered by the dense ids in id_map_items.csv");
  b.mask = load_required_mask(cfg, b.inputs, b.graph.n, b.store.n_modalities());
  return b;
}

// Deterministic query subsampling: its stream is independent of masking and
// training, so --sample changes which queries run but nothing else.
std::vector<uint32_t> sample_queries(std::vector<uint32_t> q, const RunConfig& cfg) {
  if (cfg.sample >= 0 && static_cast<size_t>(cfg.sample) < q.size()) {
    Rng rng = derive_stream(cfg.seed, "queries");
    rng.shuffle(q);
    q.resize(static_cast<size_t>(cfg.sample));
    std::sort(q.begin(), q.end());
  }
  return q;
}

std::vector<uint32_t> items_with_observation(const ModalityMask& mask) {
  std::vector<uint32_t> out;
  for (uint32_t i = 0; i < mask.n_items; ++i)
    if (mask.observed_count(i) > 0) out.push_back(i);
  return out;
}

std::vector<uint32_t> items_with_missing(const ModalityMask& mask) {
  std::vector<uint32_t> out;
  for (uint32_t i = 0; i < mask.n_items; ++i)
    if (mask.observed_count(i) > 0 && mask.observed_count(i) < mask.n_modalities)
      out.push_back(i);
  return out;
}

std::string join_ids(std::span<const uint32_t> ids) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(';');
    out += std::to_string(ids[i]);
  }
  return out;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "epoch,recon,usage,load,total,val_recon\n";
  for (const EpochLog& e : log) {
    os << e.epoch << ',' << format_double(e.recon) << ',' << format_double(e.usage) << ','
       << format_double(e.load) << ',' << format_double(e.total) << ','
       << format_double(e.val_recon) << '\n';
  }
  return os.str();
}

// Trains on the bundle (synthetic mode) or loads a previously trained
// checkpoint. Synthetic training persists its artifacts so complete/evaluate
// leave the same files behind as an explicit train invocation.
ModelParams obtain_model(const RunConfig& cfg, const Bundle& b, InputList& inputs,
                         std::vector<std::string>& outputs) {
  std::string path = artifact_path(cfg, "model.gmp1");
  if (cfg.synthetic) {
    ModelConfig mc = cfg.model;
    mc.seed = cfg.seed;
    TrainResult tr = train_model(b.graph, b.store, b.mask, mc, cfg.retrieval, cfg.threads);
    save_params(tr.params, path);
    write_text_file(artifact_path(cfg, "training_log.csv"), training_log_csv(tr.log));
    outputs.push_back("model.gmp1");
    outputs.push_back("training_log.csv");
    return std::move(tr.params);
  }
  require(fs::exists(path), "missing " + path + "; run train first");
  inputs.emplace_back(path, file_hash_hex(path));
  return load_params(path);
}

void write_id_map(const std::string& path, std::span<const uint64_t> external) {
  std::ostringstream os;
  os << "external_id,dense_id\n";
  for (size_t i = 0; i < external.size(); ++i) os << external[i] << ',' << i << '\n';
  write_text_file(path, os.str());
}

}  // namespace

RunConfig load_config_file(const std::string& path) {
  RunConfig cfg;
  merge_config_text(cfg, read_text_file(path));
  return cfg;
}

void merge_config_text(RunConfig& cfg, const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    fail(std::string("config is not valid JSON: ") + e.what());
  }
  run_config_from_json(cfg, j);
}

std::string run_config_json(const RunConfig& cfg) { return run_config_to_json(cfg).dump(2); }

std::string artifact_path(const RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out_dir) / name).string();
}

std::string mask_artifact_path(const RunConfig& cfg) {
  return cfg.mask_path.empty() ? artifact_path(cfg, "mask.csv") : cfg.mask_path;
}

void cmd_build_graph(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  InputList inputs;
  if (cfg.synthetic) {
    SyntheticData data = generate_synthetic(cfg.synth);
    save_graph(data.graph, artifact_path(cfg, "graph.ggr1"));
    std::vector<uint64_t> ids(data.graph.n);
    std::iota(ids.begin(), ids.end(), uint64_t{0});
    write_id_map(artifact_path(cfg, "id_map_items.csv"), ids);
    write_text_file(artifact_path(cfg, "id_map_users.csv"), "external_id,dense_id\n");
    std::printf("graph: N=%llu E=%llu (synthetic)\n",
                static_cast<unsigned long long>(data.graph.n),
                static_cast<unsigned long long>(data.graph.edge_count));
    write_manifest(cfg, "build-graph", inputs,
                   {"graph.ggr1", "id_map_items.csv", "id_map_users.csv"});
    return;
  }
  require(!cfg.interactions.empty(), "--interactions is required for build-graph");
  require(fs::exists(cfg.interactions), "missing interactions file " + cfg.interactions);
  inputs.emplace_back(cfg.interactions, file_hash_hex(cfg.interactions));
  InteractionLog log = load_interactions_tsv(cfg.interactions);
  if (cfg.min_degree > 0) {
    // Items below the interaction floor lose all their edges but keep their
    // dense id, so feature-row alignment survives the filter.
    std::vector<uint32_t> count(log.n_items, 0);
    for (const auto& [u, i] : log.entries) count[i]++;
    std::vector<std::pair<uint32_t, uint32_t>> kept;
    kept.reserve(log.entries.size());
    for (const auto& e : log.entries)
      if (count[e.second] >= cfg.min_degree) kept.push_back(e);
    log.entries = std::move(kept);
  }
  ItemGraph g = project_item_graph(log);
  save_graph(g, artifact_path(cfg, "graph.ggr1"));
  write_id_map(artifact_path(cfg, "id_map_items.csv"), log.item_ids);
  write_id_map(artifact_path(cfg, "id_map_users.csv"), log.user_ids);
  std::printf("graph: N=%llu E=%llu users=%u interactions=%zu\n",
              static_cast<unsigned long long>(g.n), static_cast<unsigned long long>(g.edge_count),
              log.n_users, log.entries.size());
  write_manifest(cfg, "build-graph", inputs, {"graph.ggr1", "id_map_items.csv", "id_map_users.csv"});
}

void cmd_mask(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  InputList inputs;
  size_t n_items = 0, n_modalities = 0;
  if (cfg.synthetic) {
    cfg.synth.validate();
    n_items = cfg.synth.n_items();
    n_modalities = cfg.synth.dims.size();
  } else {
    ModalityStore store = load_required_features(cfg, inputs);
    n_items = store.n_items();
    n_modalities = store.n_modalities();
  }
  ModalityMask mask = apply_masking(n_items, n_modalities, cfg.rate, cfg.seed);
  std::string path = mask_artifact_path(cfg);
  save_mask_csv(mask, path);
  size_t full = 0;
  std::vector<size_t> hidden_per_m(n_modalities, 0);
  for (uint32_t i = 0; i < n_items; ++i) {
    if (mask.observed_count(i) == n_modalities) full++;
    for (uint32_t m = 0; m < n_modalities; ++m)
      if (!mask.is_observed(i, m)) hidden_per_m[m]++;
  }
  std::printf("mask: items=%zu modalities=%zu full=%zu", n_items, n_modalities, full);
  for (size_t m = 0; m < n_modalities; ++m) std::printf(" hidden_m%zu=%zu", m, hidden_per_m[m]);
  std::printf("\n");
  write_manifest(cfg, "mask", inputs, {path});
}

void cmd_retrieve(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  Bundle b = load_bundle(cfg);
  std::vector<uint32_t> queries = sample_queries(items_with_observation(b.mask), cfg);
  std::vector<std::string> rows(queries.size());
  double t0 = now_seconds();
  parallel_for(queries.size(), cfg.threads, [&](size_t qi) {
    uint32_t q = queries[qi];
    RetrievalOutcome out = retrieve_subgraph(b.graph, b.store, b.mask, q, cfg.retrieval);
    std::string row = std::to_string(q);
    row += ',';
    row += std::to_string(out.anchors.modality);
    row += ',';
    row += join_ids(out.anchors.anchors);
    row += ',';
    row += join_ids(out.subgraph.nodes);
    row += ',';
    row += format_double(out.subgraph.phi);
    row += '\n';
    rows[qi] = std::move(row);
  });
  double dt = now_seconds() - t0;
  std::string csv = "query_id,modality,anchor_ids,subgraph_ids,phi\n";
  for (const std::string& r : rows) csv += r;
  write_text_file(artifact_path(cfg, "retrieve.csv"), csv);
  std::printf("retrieve: queries=%zu seconds=%.3f\n", queries.size(), dt);
  write_manifest(cfg, "retrieve", b.inputs, {"retrieve.csv"});
}

void cmd_train(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  Bundle b = load_bundle(cfg);
  ModelConfig mc = cfg.model;
  mc.seed = cfg.seed;
  TrainResult tr = train_model(b.graph, b.store, b.mask, mc, cfg.retrieval, cfg.threads);
  save_params(tr.params, artifact_path(cfg, "model.gmp1"));
  write_text_file(artifact_path(cfg, "training_log.csv"), training_log_csv(tr.log));
  const EpochLog& last = tr.log.back();
  std::printf("train: samples=%zu val=%zu epochs=%zu recon=%.6f val_recon=%.6f\n", tr.n_train,
              tr.n_val, tr.log.size(), last.recon, last.val_recon);
  write_manifest(cfg, "train", b.inputs, {"model.gmp1", "training_log.csv"});
}

void cmd_complete(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  Bundle b = load_bundle(cfg);
  InputList inputs = b.inputs;
  std::vector<std::string> outputs;
  ModelParams params = obtain_model(cfg, b, inputs, outputs);
  std::vector<uint32_t> queries = sample_queries(items_with_missing(b.mask), cfg);
  require(!queries.empty(), "no item has a missing modality; nothing to complete");
  std::vector<CompletionResult> results(queries.size());
  parallel_for(queries.size(), cfg.threads, [&](size_t qi) {
    results[qi] = complete_item(b.graph, b.store, b.mask, queries[qi], params, cfg.retrieval);
  });
  size_t n_modalities = b.store.n_modalities();
  std::vector<FeatureMatrix> sheets(n_modalities);
  for (size_t m = 0; m < n_modalities; ++m) {
    sheets[m].modality = static_cast<uint32_t>(m);
    sheets[m].dim = b.store.dim(static_cast<uint32_t>(m));
  }
  std::ostringstream index;
  index << "item_id,modality,row\n";
  size_t total_rows = 0;
  for (const CompletionResult& res : results) {
    for (const auto& [m, vec] : res.completed) {
      FeatureMatrix& sheet = sheets[m];
      index << res.item << ',' << m << ',' << sheet.rows << '\n';
      for (double v : vec) sheet.data.push_back(static_cast<float>(v));
      sheet.rows++;
      total_rows++;
    }
  }
  for (size_t m = 0; m < n_modalities; ++m) {
    if (sheets[m].rows == 0) continue;
    std::string name = "completions_m" + std::to_string(m) + ".gmc1";
    save_features(sheets[m], artifact_path(cfg, name));
    outputs.push_back(name);
  }
  write_text_file(artifact_path(cfg, "completions_index.csv"), index.str());
  outputs.push_back("completions_index.csv");
  std::printf("complete: items=%zu vectors=%zu\n", queries.size(), total_rows);
  write_manifest(cfg, "complete", inputs, outputs);
}

void cmd_evaluate(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  Bundle b = load_bundle(cfg);
  InputList inputs = b.inputs;
  std::vector<std::string> outputs;
  ModelParams params = obtain_model(cfg, b, inputs, outputs);
  std::vector<uint32_t> queries = sample_queries(items_with_missing(b.mask), cfg);
  require(!queries.empty(), "no item has a missing modality; nothing to evaluate");

  double t0 = now_seconds();
  std::vector<RelevanceRow> rel =
      relevance_comparison(b.graph, b.store, b.mask, queries, cfg.retrieval, cfg.threads);
  double t_retrieval = now_seconds() - t0;

  t0 = now_seconds();
  std::vector<std::vector<double>> truth, pred_model, pred_neighbor, pred_zero;
  for (uint32_t q : queries) {
    CompletionResult res = complete_item(b.graph, b.store, b.mask, q, params, cfg.retrieval);
    for (const auto& [m, vec] : res.completed) {
      std::span<const float> t = b.store.feature(q, m);
      truth.emplace_back(t.begin(), t.end());
      pred_model.push_back(vec);
      pred_neighbor.push_back(
          baseline_neighbor_mean(b.graph, b.store, b.mask, q, m, cfg.retrieval.k_hop));
      pred_zero.push_back(baseline_zero_fill(vec.size()));
    }
  }
  double t_completion = now_seconds() - t0;

  t0 = now_seconds();
  CompletionMetrics m_model = completion_metrics(pred_model, truth);
  CompletionMetrics m_neighbor = completion_metrics(pred_neighbor, truth);
  CompletionMetrics m_zero = completion_metrics(pred_zero, truth);
  size_t n_compared = 0;
  double neighbor_sum = 0.0, retrieved_sum = 0.0;
  size_t neighbor_defined = 0, retrieved_defined = 0;
  std::ostringstream detail;
  detail << "query_id,modality,neighbor_mean,neighbor_defined,retrieved_mean,retrieved_defined,"
            "n_neighbors,n_retrieved\n";
  for (const RelevanceRow& r : rel) {
    if (r.neighbor_defined) neighbor_defined++;
    if (r.retrieved_defined) retrieved_defined++;
    if (r.neighbor_defined && r.retrieved_defined) {
      n_compared++;
      neighbor_sum += r.neighbor_mean;
      retrieved_sum += r.retrieved_mean;
    }
    detail << r.query << ',' << r.modality << ',' << format_double(r.neighbor_mean) << ','
           << (r.neighbor_defined ? 1 : 0) << ',' << format_double(r.retrieved_mean) << ','
           << (r.retrieved_defined ? 1 : 0) << ',' << r.n_neighbors << ',' << r.n_retrieved
           << '\n';
  }
  double neighbor_mean = n_compared ? neighbor_sum / n_compared : 0.0;
  double retrieved_mean = n_compared ? retrieved_sum / n_compared : 0.0;
  double t_evaluation = now_seconds() - t0;

  auto metrics_json = [](const CompletionMetrics& m) {
    return json{{"mse", m.mse}, {"mean_cosine", m.mean_cosine}, {"count", m.count}};
  };
  json report{
      {"relevance",
       {{"n_queries", queries.size()},
        {"n_compared", n_compared},
        {"n_neighbor_defined", neighbor_defined},
        {"n_retrieved_defined", retrieved_defined},
        {"k_hop", cfg.retrieval.k_hop},
        {"neighbor_mean", neighbor_mean},
        {"retrieved_mean", retrieved_mean}}},
      {"completion",
       {{"gremc", metrics_json(m_model)},
        {"neighbor_mean", metrics_json(m_neighbor)},
        {"zero_fill", metrics_json(m_zero)}}},
      {"timings",
       {{"retrieval", t_retrieval},
        {"completion", t_completion},
        {"evaluation", t_evaluation},
        {"total", t_retrieval + t_completion + t_evaluation}}},
      {"config_echo", json::parse(run_config_json(cfg))}};
  write_text_file(artifact_path(cfg, "report.json"), report.dump(2) + "\n");
  write_text_file(artifact_path(cfg, "relevance_detail.csv"), detail.str());
  outputs.push_back("report.json");
  outputs.push_back("relevance_detail.csv");
  std::printf("evaluate: queries=%zu relevance retrieved=%.4f neighbor=%.4f | cosine gremc=%.4f "
              "neighbor=%.4f zero=%.4f\n",
              queries.size(), retrieved_mean, neighbor_mean, m_model.mean_cosine,
              m_neighbor.mean_cosine, m_zero.mean_cosine);
  write_manifest(cfg, "evaluate", inputs, outputs);
}

void cmd_bench(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  // Fixed benchmark world: 10k nodes, mean degree ~9. Only retrieval is
  // timed; generation and masking happen outside the window.
  SyntheticSpec spec = cfg.synth;
  spec.n_clusters = 100;
  spec.items_per_cluster = 100;
  spec.p_intra = 0.04;
  spec.p_inter = 0.0005;
  SyntheticData data = generate_synthetic(spec);
  ModalityMask mask =
      apply_masking(data.store.n_items(), data.store.n_modalities(), cfg.rate, cfg.seed);
  size_t n_queries = cfg.sample > 0 ? static_cast<size_t>(cfg.sample) : 1000;
  std::vector<uint32_t> all(data.graph.n);
  std::iota(all.begin(), all.end(), 0u);
  Rng rng = derive_stream(cfg.seed, "queries");
  rng.shuffle(all);
  n_queries = std::min(n_queries, all.size());
  std::vector<uint32_t> queries(all.begin(), all.begin() + n_queries);
  std::sort(queries.begin(), queries.end());

  std::vector<size_t> sizes(queries.size());
  double t0 = now_seconds();
  parallel_for(queries.size(), cfg.threads, [&](size_t qi) {
    RetrievalOutcome out =
        retrieve_subgraph(data.graph, data.store, mask, queries[qi], cfg.retrieval);
    sizes[qi] = out.subgraph.nodes.size();
  });
  double dt = now_seconds() - t0;
  double mean_size = 0.0;
  for (size_t s : sizes) mean_size += static_cast<double>(s);
  if (!sizes.empty()) mean_size /= static_cast<double>(sizes.size());

  json bench{{"nodes", data.graph.n},
             {"edges", data.graph.edge_count},
             {"queries", queries.size()},
             {"k", cfg.retrieval.k},
             {"t", cfg.retrieval.t},
             {"threads", cfg.threads},
             {"seconds", dt},
             {"per_query_ms", queries.empty() ? 0.0 : dt * 1000.0 / queries.size()},
             {"mean_subgraph_size", mean_size}};
  write_text_file(artifact_path(cfg, "bench.json"), bench.dump(2) + "\n");
  std::printf("bench: nodes=%llu edges=%llu queries=%zu seconds=%.3f per_query_ms=%.3f\n",
              static_cast<unsigned long long>(data.graph.n),
              static_cast<unsigned long long>(data.graph.edge_count), queries.size(), dt,
              queries.empty() ? 0.0 : dt * 1000.0 / queries.size());
  write_manifest(cfg, "bench", {}, {"bench.json"});
}

}  // namespace gremc
