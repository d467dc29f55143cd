#include "gsc/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "gsc/matrix_io.hpp"
#include "gsc/rng.hpp"
#include "gsc/solver.hpp"
#include "gsc/stability.hpp"

namespace gsc {

namespace {

const std::vector<std::string> kKinds = {"synthetic-nopool", "synthetic-pooled", "mnist",
                                         "certify", "layered-bounds"};
const std::vector<std::string> kMethods = {"BP",      "GBP",      "PGBP",
                                           "BP+gap",  "GBP+gap",  "PGBP+gap",
                                           "DenseShallow", "DenseDeep", "LinearTransformer"};

int edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::vector<int>> d(a.size() + 1, std::vector<int>(b.size() + 1, 0));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int sub = d[i - 1][j - 1] + (std::tolower(a[i - 1]) == std::tolower(b[j - 1]) ? 0 : 1);
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, sub});
    }
  }
  return d[a.size()][b.size()];
}

std::string nearest(const std::string& word, const std::vector<std::string>& candidates) {
  // plain edit distance, with letter scrambles of the same multiset (GBPP vs
  // PGBP) preferred over deletions
  const auto letters = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), ::tolower);
    std::sort(s.begin(), s.end());
    return s;
  };
  std::string best;
  double best_d = 1e9;
  for (const auto& c : candidates) {
    double d = edit_distance(word, c);
    if (letters(word) == letters(c)) d -= 1.5;
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct KeyHandler {
  std::function<void(ExperimentConfig&, const std::string&, int line)> set;
};

[[noreturn]] void config_fail(const std::string& msg, int line) {
  throw ConfigError("config error at line " + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    config_fail("expected a number, got '" + v + "'", line);
  }
}

long long parse_int(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    config_fail("expected an integer, got '" + v + "'", line);
  }
}

const std::map<std::string, KeyHandler>& key_table() {
  static const std::map<std::string, KeyHandler> table = {
      {"experiment",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         if (std::find(kKinds.begin(), kKinds.end(), v) == kKinds.end())
           config_fail("unknown experiment '" + v + "' (did you mean '" + nearest(v, kKinds) +
                           "'?)",
                       line);
         c.kind = v;
       }}},
      {"seed",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.seed = static_cast<std::uint64_t>(parse_int(v, line));
       }}},
      {"out", {[](ExperimentConfig& c, const std::string& v, int) { c.out_dir = v; }}},
      {"jobs",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.jobs = static_cast<int>(parse_int(v, line));
         if (c.jobs < 1) config_fail("jobs must be >= 1", line);
       }}},
      {"methods",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.methods = split_list(v);
         if (c.methods.empty()) config_fail("methods list is empty", line);
         for (const auto& m : c.methods) {
           if (std::find(kMethods.begin(), kMethods.end(), m) == kMethods.end())
             config_fail("unknown method '" + m + "' (did you mean '" + nearest(m, kMethods) +
                             "'?)",
                         line);
         }
       }}},
      {"data.n",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.data.n = static_cast<int>(parse_int(v, line));
       }}},
      {"data.m",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.data.m = static_cast<int>(parse_int(v, line));
       }}},
      {"data.n_groups",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.data.n_groups = static_cast<int>(parse_int(v, line));
       }}},
      {"data.group_size",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.data.group_size = static_cast<int>(parse_int(v, line));
       }}},
      {"data.active_groups",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.data.active_groups = static_cast<int>(parse_int(v, line));
       }}},
      {"data.count",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.data.count = static_cast<int>(parse_int(v, line));
       }}},
      {"data.margin",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.data.margin = parse_double(v, line);
       }}},
      {"data.amplitude_lo",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.data.amplitude_lo = parse_double(v, line);
       }}},
      {"data.amplitude_hi",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.data.amplitude_hi = parse_double(v, line);
       }}},
      {"mnist.dir", {[](ExperimentConfig& c, const std::string& v, int) { c.mnist_dir = v; }}},
      {"mnist.train_limit",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.mnist_train_limit = static_cast<int>(parse_int(v, line));
       }}},
      {"mnist.test_limit",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.mnist_test_limit = static_cast<int>(parse_int(v, line));
       }}},
      {"mnist.groups",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.mnist_groups = static_cast<int>(parse_int(v, line));
       }}},
      {"solver.gamma_bp",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.gamma_bp = parse_double(v, line);
       }}},
      {"solver.gamma_gbp",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.gamma_gbp = parse_double(v, line);
       }}},
      {"solver.max_iter",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.solver_max_iter = static_cast<int>(parse_int(v, line));
       }}},
      {"packing.target_mu",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.target_mu = parse_double(v, line);
       }}},
      {"packing.rounds",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.packing_rounds = static_cast<int>(parse_int(v, line));
       }}},
      {"attack.epsilons",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.epsilons.clear();
         for (const auto& item : split_list(v)) c.epsilons.push_back(parse_double(item, line));
         if (c.epsilons.empty()) config_fail("attack.epsilons is empty", line);
         if (!std::is_sorted(c.epsilons.begin(), c.epsilons.end()))
           config_fail("attack.epsilons must be sorted ascending", line);
       }}},
      {"attack.steps",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.attack_steps = static_cast<int>(parse_int(v, line));
         if (c.attack_steps < 1) config_fail("attack.steps must be >= 1", line);
       }}},
      {"attack.gap_weight",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.attack_gap_weight = parse_double(v, line);
       }}},
      {"attack.unroll",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.unroll_iterations = static_cast<int>(parse_int(v, line));
       }}},
      {"certify.count",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.certify_count = static_cast<int>(parse_int(v, line));
       }}},
      {"certify.noise",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.noise_level = parse_double(v, line);
       }}},
      {"certify.c",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.c = parse_double(v, line);
         if (!(c.c > 0.0 && c.c < 1.0)) config_fail("certify.c must lie in (0,1)", line);
       }}},
      {"certify.active_groups",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.active_groups = static_cast<int>(parse_int(v, line));
       }}},
      {"certify.layered_count",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.layered_count = static_cast<int>(parse_int(v, line));
       }}},
      {"certify.layered_groups2",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.layered_groups2 = static_cast<int>(parse_int(v, line));
       }}},
      {"train.epochs",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.train.epochs_max = static_cast<int>(parse_int(v, line));
       }}},
      {"train.patience",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.train.early_stop_patience = static_cast<int>(parse_int(v, line));
       }}},
      {"train.warmup",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.train.gamma_warmup_epochs = static_cast<int>(parse_int(v, line));
       }}},
      {"train.batch",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.train.batch_size = static_cast<int>(parse_int(v, line));
       }}},
      {"train.lr",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.train.learning_rate = parse_double(v, line);
       }}},
      {"train.gap_weight",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.train.gap_weight = parse_double(v, line);
       }}},
      {"train.val_fraction",
       {[](ExperimentConfig& c, const std::string& v, int line) {
         c.train.val_fraction = parse_double(v, line);
       }}},
  };
  return table;
}

void validate(ExperimentConfig& cfg) {
  if (cfg.kind.empty()) throw ConfigError("config error: required key 'experiment' is missing");
  if (cfg.data.n_groups * cfg.data.group_size != cfg.data.m)
    throw ConfigError("config error: data.n_groups * data.group_size must equal data.m");
  if (cfg.data.active_groups > cfg.data.n_groups)
    throw ConfigError("config error: data.active_groups exceeds data.n_groups");
  const bool pooled_kind = cfg.kind == "synthetic-pooled";
  const bool nopool_kind = cfg.kind == "synthetic-nopool";
  for (const auto& m : cfg.methods) {
    const bool is_net =
        m == "DenseShallow" || m == "DenseDeep" || m == "LinearTransformer";
    const bool is_pooled_route = m.rfind("PGBP", 0) == 0 || is_net;
    if (nopool_kind && is_pooled_route)
      throw ConfigError("config error: method '" + m + "' needs the pooled experiment");
    if (pooled_kind && !is_pooled_route)
      throw ConfigError("config error: method '" + m + "' needs the no-pool experiment");
  }
  cfg.data.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  std::string section;
  int line_no = 0;
  std::vector<std::string> known;
  for (const auto& [k, _] : key_table()) known.push_back(k);

  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') config_fail("unterminated section header", line_no);
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) config_fail("expected 'key = value'", line_no);
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) config_fail("empty key", line_no);
    if (!section.empty()) key = section + "." + key;

    const auto it = key_table().find(key);
    if (it == key_table().end()) {
      config_fail("unknown key '" + key + "' (did you mean '" + nearest(key, known) + "'?)",
                  line_no);
    }
    it->second.set(cfg, value, line_no);
  }
  (void)origin;
  validate(cfg);
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config error: cannot open " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str(), path);
}

std::string resolved_config_echo(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "experiment = " << cfg.kind << '\n';
  os << "seed = " << cfg.seed << '\n';
  os << "out = " << cfg.out_dir << '\n';
  os << "jobs = " << cfg.jobs << '\n';
  os << "methods = ";
  for (std::size_t i = 0; i < cfg.methods.size(); ++i)
    os << (i ? "," : "") << cfg.methods[i];
  os << '\n';
  os << "data.n = " << cfg.data.n << '\n';
  os << "data.m = " << cfg.data.m << '\n';
  os << "data.n_groups = " << cfg.data.n_groups << '\n';
  os << "data.group_size = " << cfg.data.group_size << '\n';
  os << "data.active_groups = " << cfg.data.active_groups << '\n';
  os << "data.count = " << cfg.data.count << '\n';
  os << "data.margin = " << format_double(cfg.data.margin) << '\n';
  os << "data.amplitude_lo = " << format_double(cfg.data.amplitude_lo) << '\n';
  os << "data.amplitude_hi = " << format_double(cfg.data.amplitude_hi) << '\n';
  os << "mnist.dir = " << cfg.mnist_dir << '\n';
  os << "mnist.train_limit = " << cfg.mnist_train_limit << '\n';
  os << "mnist.test_limit = " << cfg.mnist_test_limit << '\n';
  os << "mnist.groups = " << cfg.mnist_groups << '\n';
  os << "solver.gamma_bp = " << format_double(cfg.gamma_bp) << '\n';
  os << "solver.gamma_gbp = " << format_double(cfg.gamma_gbp) << '\n';
  os << "solver.max_iter = " << cfg.solver_max_iter << '\n';
  os << "packing.target_mu = " << format_double(cfg.target_mu) << '\n';
  os << "packing.rounds = " << cfg.packing_rounds << '\n';
  os << "attack.epsilons = ";
  for (std::size_t i = 0; i < cfg.epsilons.size(); ++i)
    os << (i ? "," : "") << format_double(cfg.epsilons[i]);
  os << '\n';
  os << "attack.steps = " << cfg.attack_steps << '\n';
  os << "attack.gap_weight = " << format_double(cfg.attack_gap_weight) << '\n';
  os << "attack.unroll = " << cfg.unroll_iterations << '\n';
  os << "certify.count = " << cfg.certify_count << '\n';
  os << "certify.noise = " << format_double(cfg.noise_level) << '\n';
  os << "certify.c = " << format_double(cfg.c) << '\n';
  os << "certify.active_groups = " << cfg.active_groups << '\n';
  os << "certify.layered_count = " << cfg.layered_count << '\n';
  os << "certify.layered_groups2 = " << cfg.layered_groups2 << '\n';
  os << "train.epochs = " << cfg.train.epochs_max << '\n';
  os << "train.patience = " << cfg.train.early_stop_patience << '\n';
  os << "train.warmup = " << cfg.train.gamma_warmup_epochs << '\n';
  os << "train.batch = " << cfg.train.batch_size << '\n';
  os << "train.lr = " << format_double(cfg.train.learning_rate) << '\n';
  os << "train.gap_weight = " << format_double(cfg.train.gap_weight) << '\n';
  os << "train.val_fraction = " << format_double(cfg.train.val_fraction) << '\n';
  return os.str();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  // the hash identifies the experiment; output location and thread count are
  // not part of its identity
  std::stringstream ss(resolved_config_echo(cfg));
  std::string line;
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  while (std::getline(ss, line)) {
    if (line.rfind("out = ", 0) == 0 || line.rfind("jobs = ", 0) == 0) continue;
    line += '\n';
    for (unsigned char ch : line) {
      h ^= ch;
      h *= 1099511628211ull;
    }
  }
  return h;
}

GroupStats group_statistics(const Eigen::MatrixXd& solved_codes,
                            const Eigen::MatrixXd& true_codes, const GroupPartition& partition,
                            double gate) {
  if (solved_codes.cols() != true_codes.cols() || solved_codes.rows() != true_codes.rows())
    throw InvalidInput("group_statistics: shape mismatch");
  const int n = static_cast<int>(solved_codes.cols());
  const int k = partition.n_groups();
  GroupStats stats;
  for (int i = 0; i < n; ++i) {
    int inactive = 0, correct = 0;
    bool exact = true;
    for (int g = 0; g < k; ++g) {
      double got_sq = 0.0, want_sq = 0.0;
      for (int idx : partition.group(g)) {
        got_sq += solved_codes(idx, i) * solved_codes(idx, i);
        want_sq += true_codes(idx, i) * true_codes(idx, i);
      }
      const bool got = std::sqrt(got_sq) > gate;
      const bool want = want_sq > 0.0;
      inactive += got ? 0 : 1;
      correct += got == want ? 1 : 0;
      exact = exact && got == want;
    }
    stats.inactive_rate += static_cast<double>(inactive) / k;
    stats.mean_group_acc += static_cast<double>(correct) / k;
    stats.exact_combo_rate += exact ? 1.0 : 0.0;
  }
  stats.inactive_rate /= n;
  stats.mean_group_acc /= n;
  stats.exact_combo_rate /= n;
  return stats;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows,
                     std::uint64_t config_hash_value) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open for writing: " + path, 0);
  os << "method,epsilon,accuracy,n_samples,seed,config_hash\n";
  for (const auto& r : rows) {
    os << r.method << ',' << format_double(r.epsilon) << ',' << format_double(r.accuracy) << ','
       << r.n_samples << ',' << r.seed << ',' << config_hash_value << '\n';
  }
}

std::vector<SweepRow> read_sweep_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open: " + path, 0);
  std::vector<SweepRow> rows;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    SweepRow r;
    std::string cell;
    std::getline(ss, r.method, ',');
    std::getline(ss, cell, ',');
    r.epsilon = std::stod(cell);
    std::getline(ss, cell, ',');
    r.accuracy = std::stod(cell);
    std::getline(ss, cell, ',');
    r.n_samples = std::stoi(cell);
    std::getline(ss, cell, ',');
    r.seed = std::stoull(cell);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace gsc
