#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "gsc/experiment.hpp"
#include "gsc/matrix_io.hpp"
#include "gsc/rng.hpp"
#include "gsc/stability.hpp"

namespace fs = std::filesystem;

namespace gsc {

namespace {

struct Route {
  std::string name;
  bool net = false;
  std::string net_tag;
  bool pooled = false;  // classify on pooled group norms
  bool group = false;   // l2-group solve; false = singleton l1 (BP)
  bool gap = false;
};

Route parse_method(const std::string& m) {
  Route r;
  r.name = m;
  if (m == "DenseShallow" || m == "DenseDeep" || m == "LinearTransformer") {
    r.net = true;
    r.net_tag = m;
    r.pooled = true;
    r.group = true;
    return r;
  }
  std::string base = m;
  if (base.size() > 4 && base.substr(base.size() - 4) == "+gap") {
    r.gap = true;
    base = base.substr(0, base.size() - 4);
  }
  if (base == "BP") {
    r.group = false;
  } else if (base == "GBP") {
    r.group = true;
  } else if (base == "PGBP") {
    r.group = true;
    r.pooled = true;
  } else {
    throw ConfigError("unknown method: " + m);
  }
  return r;
}

std::string route_code_tag(const Route& r) { return r.group ? "group" : "bp"; }

RegularizerSpec route_spec(const Route& r, const ExperimentConfig& cfg, int m, int group_size) {
  if (r.group) {
    return RegularizerSpec::uniform(GroupPartition::contiguous(m, group_size), GroupNorm::l2(),
                                    cfg.gamma_gbp);
  }
  return RegularizerSpec::uniform(GroupPartition::singletons(m), GroupNorm::l1(), cfg.gamma_bp);
}

double route_gate(const Route& r, const ExperimentConfig& cfg) {
  return r.group ? cfg.gamma_gbp : cfg.gamma_bp;
}

void append_kv(std::ostream& os, const std::string& k, const std::string& v) {
  os << k << ',' << v << '\n';
}

Eigen::MatrixXd solve_batch(const Eigen::MatrixXd& inputs, const Dictionary& dict,
                            const RegularizerSpec& spec, const SolveOptions& opts, int jobs,
                            std::vector<SolveResult>* results_out = nullptr) {
  const int n = static_cast<int>(inputs.cols());
  Eigen::MatrixXd codes(dict.n_atoms(), n);
  std::vector<SolveResult> results(n);
  const auto worker = [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      results[i] = solve_gbp(inputs.col(i), dict, spec, opts);
      codes.col(i) = results[i].code.values();
    }
  };
  const int threads = std::max(1, jobs);
  if (threads == 1 || n < 2 * threads) {
    worker(0, n);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int b = t * chunk;
      const int e = std::min(n, b + chunk);
      if (b < e) pool.emplace_back(worker, b, e);
    }
    for (auto& th : pool) th.join();
  }
  if (results_out) *results_out = std::move(results);
  return codes;
}

void write_solve_csv(const std::string& path, const std::vector<SolveResult>& results,
                     const GroupPartition& part, std::uint64_t seed, std::uint64_t hash) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open for writing: " + path, 0);
  os << "sample,objective,iterations,support_size,group_support_bitmap,seed,config_hash\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    std::string bitmap(part.n_groups(), '0');
    for (int g = 0; g < part.n_groups(); ++g) {
      for (int idx : part.group(g)) {
        if (r.code.values()[idx] != 0.0) {
          bitmap[g] = '1';
          break;
        }
      }
    }
    os << i << ',' << format_double(r.objective) << ',' << r.iterations << ','
       << r.code.support().size() << ',' << bitmap << ',' << seed << ',' << hash << '\n';
  }
}

struct GroupStatsRow {
  std::string method;
  GroupStats stats;
};

void write_group_stats_csv(const std::string& path, const std::vector<GroupStatsRow>& rows,
                           std::uint64_t seed, std::uint64_t hash) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open for writing: " + path, 0);
  os << "method,Inactive Groups,Mean Grp. Acc.,Found Grp. Combs.,seed,config_hash\n";
  for (const auto& r : rows) {
    os << r.method << ',' << format_double(r.stats.inactive_rate) << ','
       << format_double(r.stats.mean_group_acc) << ','
       << format_double(r.stats.exact_combo_rate) << ',' << seed << ',' << hash << '\n';
  }
}

int net_predict_label(const FeedforwardModel& model, const Eigen::VectorXd& x) {
  const Eigen::VectorXd out = forward(model, x);
  if (out.size() == 1) return out[0] > 0.0 ? 1 : 0;
  int best = 0;
  for (int i = 1; i < out.size(); ++i) {
    if (out[i] > out[best]) best = i;
  }
  return best;
}

// ---------------------------------------------------------------- synthetic

int synthetic_gen_data(const ExperimentConfig& cfg) {
  const std::string out = cfg.out_dir;
  const GroupPartition part = GroupPartition::contiguous(cfg.data.m, cfg.data.group_size);
  PackingResult packing = build_low_coherence_dictionary(cfg.data.n, cfg.data.m, part, cfg.seed,
                                                         cfg.target_mu, cfg.packing_rounds);
  save_dictionary(out + "/dictionary.gbpd", packing.dictionary);

  const LinearClassifier w_full = make_random_classifier(cfg.data.m, cfg.seed + 101);
  const LinearClassifier w_pooled = make_random_classifier(cfg.data.n_groups, cfg.seed + 102);
  save_classifier(out + "/w_full.gbpc", w_full);
  save_classifier(out + "/w_pooled.gbpc", w_pooled);

  const SyntheticPair pair =
      generate_synthetic_dataset(packing.dictionary, cfg.data, w_full, w_pooled);
  const LabeledDataset& ds = cfg.kind == "synthetic-pooled" ? pair.pooled : pair.no_pool;
  save_dataset(out + "/dataset", ds);

  std::ofstream manifest(out + "/manifest.csv");
  manifest << "key,value\n";
  append_kv(manifest, "kind", cfg.kind);
  append_kv(manifest, "seed", std::to_string(cfg.seed));
  append_kv(manifest, "config_hash", std::to_string(config_hash(cfg)));
  append_kv(manifest, "achieved_mu", format_double(packing.achieved_mu));
  append_kv(manifest, "packing_rounds", std::to_string(packing.rounds_used));
  append_kv(manifest, "n_samples", std::to_string(ds.count()));
  return kExitOk;
}

int synthetic_solve(const ExperimentConfig& cfg) {
  const std::string out = cfg.out_dir;
  const Dictionary dict = load_dictionary(out + "/dictionary.gbpd");
  const LabeledDataset ds = load_dataset(out + "/dataset");
  const GroupPartition part = GroupPartition::contiguous(cfg.data.m, cfg.data.group_size);
  const std::uint64_t hash = config_hash(cfg);

  SolveOptions opts;
  opts.max_iter = cfg.solver_max_iter;

  std::vector<GroupStatsRow> stats_rows;
  std::vector<std::string> done;
  for (const auto& name : cfg.methods) {
    const Route route = parse_method(name);
    const std::string tag = route_code_tag(route);
    if (std::find(done.begin(), done.end(), tag) == done.end()) {
      const RegularizerSpec spec = route_spec(route, cfg, cfg.data.m, cfg.data.group_size);
      std::vector<SolveResult> results;
      const Eigen::MatrixXd codes = solve_batch(ds.inputs, dict, spec, opts, cfg.jobs, &results);
      write_matrix(out + "/codes_" + tag + ".gbpm", codes, kMagicMatrix);
      write_solve_csv(out + "/solve_" + tag + ".csv", results, part, cfg.seed, hash);
      done.push_back(tag);
    }
    const Eigen::MatrixXd codes = read_matrix(out + "/codes_" + tag + ".gbpm", kMagicMatrix);
    stats_rows.push_back(
        {name, group_statistics(codes, ds.codes, part, route_gate(route, cfg))});
  }
  write_group_stats_csv(out + "/group_stats.csv", stats_rows, cfg.seed, hash);
  return kExitOk;
}

int synthetic_train(const ExperimentConfig& cfg) {
  if (cfg.kind != "synthetic-pooled") return kExitOk;
  const std::string out = cfg.out_dir;
  bool any_net = false;
  for (const auto& name : cfg.methods) any_net = any_net || parse_method(name).net;
  if (!any_net) return kExitOk;

  const LabeledDataset ds = load_dataset(out + "/dataset");
  const GroupPartition part = GroupPartition::contiguous(cfg.data.m, cfg.data.group_size);
  const Eigen::MatrixXd codes = read_matrix(out + "/codes_group.gbpm", kMagicMatrix);
  Eigen::MatrixXd targets(part.n_groups(), codes.cols());
  for (int i = 0; i < codes.cols(); ++i) targets.col(i) = pool_groups(codes.col(i), part);
  const LinearClassifier w_pooled = load_classifier(out + "/w_pooled.gbpc");

  for (const auto& name : cfg.methods) {
    const Route route = parse_method(name);
    if (!route.net) continue;
    TrainLog log;
    FeedforwardModel model = train_feedforward_approximator(
        ds.inputs, targets,
        make_synthetic_model(route.net_tag, cfg.data.n, cfg.data.n_groups, cfg.seed + 7),
        cfg.train, &log);
    set_head(model, w_pooled);
    save_model(out + "/model_" + route.net_tag + ".gbpn", model);
    write_train_log_csv(out + "/train_" + route.net_tag + ".csv", log);
  }
  return kExitOk;
}

int synthetic_attack(const ExperimentConfig& cfg) {
  const std::string out = cfg.out_dir;
  const Dictionary dict = load_dictionary(out + "/dictionary.gbpd");
  const LabeledDataset ds = load_dataset(out + "/dataset");
  const std::uint64_t hash = config_hash(cfg);

  SweepDataset sweep_data{ds.inputs, ds.labels};
  AttackConfig base;
  base.steps = cfg.attack_steps;  // synthetic data carries no range clamp

  SolveOptions opts;
  opts.max_iter = cfg.solver_max_iter;

  for (const auto& name : cfg.methods) {
    const Route route = parse_method(name);
    const RegularizerSpec spec = route_spec(route, cfg, cfg.data.m, cfg.data.group_size);
    const LinearClassifier clf =
        load_classifier(out + (route.pooled ? "/w_pooled.gbpc" : "/w_full.gbpc"));
    Pipeline craft{dict,
                   spec,
                   opts,
                   clf,
                   LossKind::Hinge,
                   route.pooled,
                   route.gap ? cfg.attack_gap_weight : 0.0,
                   route_gate(route, cfg),
                   cfg.unroll_iterations};
    Predictor evaluate;  // empty = white box
    FeedforwardModel model;
    if (route.net) {
      model = load_model(out + "/model_" + route.net_tag + ".gbpn");
      evaluate = [model](const Eigen::VectorXd& x) { return net_predict_label(model, x); };
    }
    const auto rows =
        attack_sweep(craft, sweep_data, cfg.epsilons, base, name, cfg.seed, evaluate, cfg.jobs);
    write_sweep_csv(out + "/sweep_" + name + ".csv", rows, hash);
  }
  return kExitOk;
}

// ------------------------------------------------------------------- mnist

int mnist_gen_data(const ExperimentConfig& cfg) {
  if (cfg.mnist_dir.empty())
    throw ConfigError("config error: mnist.dir is required for the mnist experiment");
  const std::string out = cfg.out_dir;
  const MnistData train = load_mnist_idx(cfg.mnist_dir + "/train-images-idx3-ubyte",
                                         cfg.mnist_dir + "/train-labels-idx1-ubyte");
  const MnistData test = load_mnist_idx(cfg.mnist_dir + "/t10k-images-idx3-ubyte",
                                        cfg.mnist_dir + "/t10k-labels-idx1-ubyte");
  const Standardizer st = Standardizer::fit(train.images);
  st.save(out + "/standardizer.gbpm");

  const int n_train = std::min<int>(cfg.mnist_train_limit, static_cast<int>(train.images.cols()));
  const int n_test = std::min<int>(cfg.mnist_test_limit, static_cast<int>(test.images.cols()));
  Eigen::MatrixXd train_x = st.apply(train.images.leftCols(n_train));
  Eigen::MatrixXd test_x = st.apply(test.images.leftCols(n_test));
  write_matrix(out + "/mnist_train.gbpm", train_x, kMagicMatrix);
  write_matrix(out + "/mnist_test.gbpm", test_x, kMagicMatrix);

  std::ofstream labels(out + "/mnist_labels.csv");
  labels << "split,index,label\n";
  for (int i = 0; i < n_train; ++i) labels << "train," << i << ',' << train.labels[i] << '\n';
  for (int i = 0; i < n_test; ++i) labels << "test," << i << ',' << test.labels[i] << '\n';

  std::ofstream manifest(out + "/manifest.csv");
  manifest << "key,value\n";
  append_kv(manifest, "kind", cfg.kind);
  append_kv(manifest, "seed", std::to_string(cfg.seed));
  append_kv(manifest, "config_hash", std::to_string(config_hash(cfg)));
  append_kv(manifest, "n_train", std::to_string(n_train));
  append_kv(manifest, "n_test", std::to_string(n_test));
  append_kv(manifest, "clamp_low", format_double(train_x.minCoeff()));
  append_kv(manifest, "clamp_high", format_double(train_x.maxCoeff()));
  return kExitOk;
}

std::pair<Eigen::VectorXi, Eigen::VectorXi> load_mnist_labels(const std::string& out, int n_train,
                                                              int n_test) {
  std::ifstream is(out + "/mnist_labels.csv");
  if (!is) throw FormatError("cannot open: " + out + "/mnist_labels.csv", 0);
  Eigen::VectorXi train(n_train), test(n_test);
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string split, idx, label;
    std::getline(ss, split, ',');
    std::getline(ss, idx, ',');
    std::getline(ss, label, ',');
    if (split == "train") train[std::stoi(idx)] = std::stoi(label);
    else test[std::stoi(idx)] = std::stoi(label);
  }
  return {train, test};
}

int mnist_train(const ExperimentConfig& cfg) {
  const std::string out = cfg.out_dir;
  const Eigen::MatrixXd train_x = read_matrix(out + "/mnist_train.gbpm", kMagicMatrix);
  const Eigen::MatrixXd test_x = read_matrix(out + "/mnist_test.gbpm", kMagicMatrix);
  const auto [train_labels, test_labels] =
      load_mnist_labels(out, static_cast<int>(train_x.cols()), static_cast<int>(test_x.cols()));

  const int m_atoms = cfg.mnist_groups * 8;
  const GroupPartition part = GroupPartition::contiguous(m_atoms, 8);
  const std::uint64_t hash = config_hash(cfg);

  SolveOptions opts;
  opts.max_iter = cfg.solver_max_iter;

  // one pretrained dictionary per solve route
  std::vector<std::string> done;
  for (const auto& name : cfg.methods) {
    const Route route = parse_method(name);
    const std::string tag = route_code_tag(route);
    if (std::find(done.begin(), done.end(), tag) != done.end()) continue;
    done.push_back(tag);

    const RegularizerSpec spec = route.group
                                     ? RegularizerSpec::uniform(part, GroupNorm::l2(),
                                                                cfg.gamma_gbp)
                                     : RegularizerSpec::uniform(
                                           GroupPartition::singletons(m_atoms), GroupNorm::l1(),
                                           cfg.gamma_bp);
    TrainLog dict_log;
    const Dictionary dict = pretrain_dictionary(train_x, spec, cfg.train, &dict_log);
    save_dictionary(out + "/dictionary_" + tag + ".gbpd", dict);
    write_train_log_csv(out + "/pretrain_" + tag + ".csv", dict_log);

    std::vector<SolveResult> results;
    const Eigen::MatrixXd train_codes = solve_batch(train_x, dict, spec, opts, cfg.jobs,
                                                    &results);
    write_matrix(out + "/codes_train_" + tag + ".gbpm", train_codes, kMagicMatrix);
    write_solve_csv(out + "/solve_" + tag + ".csv", results, part, cfg.seed, hash);
    const Eigen::MatrixXd test_codes = solve_batch(test_x, dict, spec, opts, cfg.jobs);
    write_matrix(out + "/codes_test_" + tag + ".gbpm", test_codes, kMagicMatrix);
  }

  // classifiers first, then the nets (they borrow the PGBP head)
  for (const bool net_pass : {false, true}) {
    for (const auto& name : cfg.methods) {
      const Route route = parse_method(name);
      if (route.net != net_pass) continue;
      const std::string tag = route_code_tag(route);
      Eigen::MatrixXd codes = read_matrix(out + "/codes_train_" + tag + ".gbpm", kMagicMatrix);
      if (route.pooled) {
        Eigen::MatrixXd pooled(part.n_groups(), codes.cols());
        for (int i = 0; i < codes.cols(); ++i) pooled.col(i) = pool_groups(codes.col(i), part);
        codes = pooled;
      }
      if (route.net) {
        const std::string clf_path = out + "/clf_PGBP.gbpc";
        if (!fs::exists(clf_path))
          throw ConfigError("mnist: feedforward methods need PGBP in the method list");
        TrainLog log;
        FeedforwardModel model = train_feedforward_approximator(
            train_x, codes, make_mnist_model(route.net_tag, cfg.seed + 7), cfg.train, &log);
        set_head(model, load_classifier(clf_path));
        save_model(out + "/model_" + route.net_tag + ".gbpn", model);
        write_train_log_csv(out + "/train_" + route.net_tag + ".csv", log);
      } else {
        TrainConfig clf_cfg = cfg.train;
        clf_cfg.loss = LossKind::CrossEntropy;
        TrainLog log;
        const LinearClassifier clf =
            train_classifier(codes, train_labels, 10, part, clf_cfg, &log);
        save_classifier(out + "/clf_" + name + ".gbpc", clf);
        write_train_log_csv(out + "/train_" + name + ".csv", log);
      }
    }
  }
  return kExitOk;
}

int mnist_attack(const ExperimentConfig& cfg) {
  const std::string out = cfg.out_dir;
  const Eigen::MatrixXd train_x = read_matrix(out + "/mnist_train.gbpm", kMagicMatrix);
  const Eigen::MatrixXd test_x = read_matrix(out + "/mnist_test.gbpm", kMagicMatrix);
  const auto [train_labels, test_labels] =
      load_mnist_labels(out, static_cast<int>(train_x.cols()), static_cast<int>(test_x.cols()));
  const std::uint64_t hash = config_hash(cfg);

  const int m_atoms = cfg.mnist_groups * 8;
  const GroupPartition part = GroupPartition::contiguous(m_atoms, 8);
  SolveOptions opts;
  opts.max_iter = cfg.solver_max_iter;

  AttackConfig base;
  base.steps = cfg.attack_steps;
  base.clamp_low = train_x.minCoeff();  // standardized data range
  base.clamp_high = train_x.maxCoeff();

  SweepDataset sweep_data{test_x, test_labels};
  for (const auto& name : cfg.methods) {
    const Route route = parse_method(name);
    const std::string tag = route_code_tag(route);
    const Dictionary dict = load_dictionary(out + "/dictionary_" + tag + ".gbpd");
    const RegularizerSpec spec = route.group
                                     ? RegularizerSpec::uniform(part, GroupNorm::l2(),
                                                                cfg.gamma_gbp)
                                     : RegularizerSpec::uniform(
                                           GroupPartition::singletons(m_atoms), GroupNorm::l1(),
                                           cfg.gamma_bp);
    const std::string clf_name = route.net ? "PGBP" : name;
    const LinearClassifier clf = load_classifier(out + "/clf_" + clf_name + ".gbpc");
    Pipeline craft{dict,
                   spec,
                   opts,
                   clf,
                   LossKind::CrossEntropy,
                   route.pooled,
                   route.gap ? cfg.attack_gap_weight : 0.0,
                   route_gate(route, cfg),
                   cfg.unroll_iterations};
    Predictor evaluate;
    FeedforwardModel model;
    if (route.net) {
      model = load_model(out + "/model_" + route.net_tag + ".gbpn");
      evaluate = [model](const Eigen::VectorXd& x) { return net_predict_label(model, x); };
    }
    const auto rows =
        attack_sweep(craft, sweep_data, cfg.epsilons, base, name, cfg.seed, evaluate, cfg.jobs);
    write_sweep_csv(out + "/sweep_" + name + ".csv", rows, hash);
  }
  return kExitOk;
}

// ----------------------------------------------------------------- certify

std::vector<GroupNorm> certify_tags(int n_groups, Rng& rng) {
  std::vector<GroupNorm> norms;
  for (int g = 0; g < n_groups; ++g) {
    const double pick = rng.uniform();
    if (pick < 0.3) norms.push_back(GroupNorm::elastic(rng.uniform(0.85, 0.95)));
    else if (pick < 0.6) norms.push_back(GroupNorm::l1());
    else norms.push_back(GroupNorm::l2());
  }
  return norms;
}

int run_certify(const ExperimentConfig& cfg) {
  const std::string out = cfg.out_dir;
  const GroupPartition part = GroupPartition::contiguous(cfg.data.m, cfg.data.group_size);
  PackingResult packing = build_low_coherence_dictionary(cfg.data.n, cfg.data.m, part, cfg.seed,
                                                         cfg.target_mu, cfg.packing_rounds);
  save_dictionary(out + "/dictionary.gbpd", packing.dictionary);
  const std::uint64_t hash = config_hash(cfg);

  std::ofstream csv(out + "/certificates.csv");
  csv << "instance,mu,stripe_of_chi,condition_a_bound,condition_a,required_gamma_min,"
         "condition_b,rank_ok,linf_bound,weak_linf_bound,claim1,claim2,claim3,claim4,"
         "measured_linf_error,seed,config_hash\n";
  std::ofstream audit(out + "/certificates.txt");

  SolveOptions opts;
  opts.max_iter = std::max(cfg.solver_max_iter, 60000);

  int failures = 0;
  for (int i = 0; i < cfg.certify_count; ++i) {
    Rng tag_rng(cfg.seed + 1000 + i);
    const auto inst = generate_certified_instance(
        packing.dictionary, part, certify_tags(part.n_groups(), tag_rng), cfg.active_groups,
        cfg.noise_level, cfg.c, cfg.seed + 2000 + i);
    const Eigen::VectorXd y =
        packing.dictionary.matrix() * inst.gamma_true.values() + inst.noise;
    SolveOptions alt = opts;
    alt.init = Eigen::VectorXd::Constant(cfg.data.m, 0.1);
    const SolveResult a = solve_gbp(y, packing.dictionary, inst.spec, opts);
    const SolveResult b = solve_gbp(y, packing.dictionary, inst.spec, alt);
    const RecoveryReport rep = verify_recovery(a, b, inst.gamma_true, inst.certificate, inst.spec);
    if (!rep.all_pass()) ++failures;

    const auto& c = inst.certificate;
    csv << i << ',' << format_double(c.mu) << ',' << c.stripe_of_chi << ','
        << format_double(c.condition_a_bound) << ',' << int(c.condition_a_holds) << ','
        << format_double(c.required_gamma_min) << ',' << int(c.condition_b_holds) << ','
        << int(c.rank_ok) << ',' << format_double(c.linf_bound) << ','
        << format_double(c.weak_linf_bound) << ',' << int(rep.support_containment.pass) << ','
        << int(rep.uniqueness_two_start.pass) << ',' << int(rep.linf_error.pass) << ','
        << int(rep.threshold_support.pass) << ',' << format_double(rep.measured_linf_error)
        << ',' << cfg.seed << ',' << hash << '\n';

    audit << "instance " << i << ": mu=" << c.mu << " stripe(chi)=" << c.stripe_of_chi
          << " bound_a=" << c.condition_a_bound << (c.condition_a_holds ? " [a ok]" : " [a FAIL]")
          << " gamma_min>=" << c.required_gamma_min
          << (c.condition_b_holds ? " [b ok]" : " [b FAIL]")
          << (c.rank_ok ? " [rank ok]" : " [rank FAIL]") << " linf<" << c.linf_bound
          << " measured=" << rep.measured_linf_error
          << (rep.all_pass() ? "  PASS" : "  FAIL") << '\n';
  }
  audit << (failures == 0 ? "all instances recovered within their certificates\n"
                          : std::to_string(failures) + " instances failed\n");

  std::ofstream manifest(out + "/manifest.csv");
  manifest << "key,value\n";
  append_kv(manifest, "kind", cfg.kind);
  append_kv(manifest, "seed", std::to_string(cfg.seed));
  append_kv(manifest, "config_hash", std::to_string(hash));
  append_kv(manifest, "achieved_mu", format_double(packing.achieved_mu));
  append_kv(manifest, "instances", std::to_string(cfg.certify_count));
  append_kv(manifest, "failures", std::to_string(failures));
  return failures == 0 ? kExitOk : kExitCheckFailed;
}

int run_layered_bounds(const ExperimentConfig& cfg) {
  const std::string out = cfg.out_dir;
  const std::uint64_t hash = config_hash(cfg);
  std::ofstream csv(out + "/layered_bounds.csv");
  csv << "instance,epsilon0,epsilon1,epsilon2,linf_bound1,linf_bound2,err1,err2,amp_err1,"
         "amp_err2,pass,seed,config_hash\n";

  SolveOptions opts;
  opts.max_iter = std::max(cfg.solver_max_iter, 60000);

  int failures = 0;
  for (int i = 0; i < cfg.layered_count; ++i) {
    const auto inst = generate_certified_layered_instance(
        cfg.data.n, cfg.data.m, cfg.layered_groups2, cfg.noise_level, cfg.c, cfg.seed + 3000 + i);
    const auto results = solve_layered_gbp(inst.x + inst.noise, inst.problem, opts);
    bool pass = inst.bounds.all_conditions();
    std::vector<double> errs, amps;
    for (int layer = 0; layer < 2; ++layer) {
      const Eigen::VectorXd err =
          results[layer].code.values() - inst.gamma_true[layer].values();
      errs.push_back(err.lpNorm<Eigen::Infinity>());
      const double amp = layer + 1 < 2 ? local_amplitude(err, inst.problem.dictionaries[layer + 1])
                                       : err.norm();
      amps.push_back(amp);
      pass = pass && errs[layer] < inst.bounds.layers[layer].linf_bound &&
             amp <= inst.bounds.epsilons[layer + 1];
    }
    if (!pass) ++failures;
    csv << i << ',' << format_double(inst.bounds.epsilons[0]) << ','
        << format_double(inst.bounds.epsilons[1]) << ','
        << format_double(inst.bounds.epsilons[2]) << ','
        << format_double(inst.bounds.layers[0].linf_bound) << ','
        << format_double(inst.bounds.layers[1].linf_bound) << ',' << format_double(errs[0])
        << ',' << format_double(errs[1]) << ',' << format_double(amps[0]) << ','
        << format_double(amps[1]) << ',' << int(pass) << ',' << cfg.seed << ',' << hash << '\n';
  }
  std::ofstream manifest(out + "/manifest.csv");
  manifest << "key,value\n";
  append_kv(manifest, "kind", cfg.kind);
  append_kv(manifest, "seed", std::to_string(cfg.seed));
  append_kv(manifest, "config_hash", std::to_string(hash));
  append_kv(manifest, "instances", std::to_string(cfg.layered_count));
  append_kv(manifest, "failures", std::to_string(failures));
  return failures == 0 ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg, const StageSet& stages) {
  fs::create_directories(cfg.out_dir);
  {
    std::ofstream echo(cfg.out_dir + "/resolved.cfg");
    echo << resolved_config_echo(cfg);
  }
  try {
    if (cfg.kind == "certify") return run_certify(cfg);
    if (cfg.kind == "layered-bounds") return run_layered_bounds(cfg);
    if (cfg.kind == "synthetic-nopool" || cfg.kind == "synthetic-pooled") {
      int rc = kExitOk;
      if (stages.gen_data && (rc = synthetic_gen_data(cfg)) != kExitOk) return rc;
      if (stages.solve && (rc = synthetic_solve(cfg)) != kExitOk) return rc;
      if (stages.train && (rc = synthetic_train(cfg)) != kExitOk) return rc;
      if (stages.attack && (rc = synthetic_attack(cfg)) != kExitOk) return rc;
      if (stages.report) rc = emit_report(cfg.out_dir);
      return rc;
    }
    if (cfg.kind == "mnist") {
      int rc = kExitOk;
      if (stages.gen_data && (rc = mnist_gen_data(cfg)) != kExitOk) return rc;
      if (stages.train && (rc = mnist_train(cfg)) != kExitOk) return rc;
      if (stages.attack && (rc = mnist_attack(cfg)) != kExitOk) return rc;
      if (stages.report) rc = emit_report(cfg.out_dir);
      return rc;
    }
    throw ConfigError("config error: unknown experiment kind " + cfg.kind);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    std::ofstream failure(cfg.out_dir + "/failure.txt");
    failure << e.what() << '\n';
    std::fprintf(stderr, "runtime failure: %s\n", e.what());
    return kExitRuntime;
  }
}

}  // namespace gsc
