#include "cli.hpp"

#include <filesystem>
#include <iomanip>
#include <memory>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "revdiff/eval.hpp"
#include "revdiff/invariants.hpp"
#include "revdiff/io.hpp"
#include "revdiff/oracle.hpp"
#include "revdiff/samplers.hpp"
#include "revdiff/train.hpp"

namespace revdiff {
namespace {

using nlohmann::json;

json default_config() {
  return json::parse(R"({
    "spec": {"K": 2, "L": 2, "family": "udm", "schedule": "linear", "eps_floor": 0.001},
    "p0": {"dirichlet_seed": 0},
    "grid": {"n": 4, "terminal": "one"},
    "loss": {"kind": "nelbo_discrete", "param": "marginalization", "M": 512, "reconstruction": true},
    "representation": "denoiser",
    "train": {"lr": 0.1, "steps": 5000, "optimizer": "adam", "seed": 0, "tol": 0.0},
    "sampler": {"kind": "ancestral", "predictor": "oracle", "table": "", "joint": false,
                "n_samples": 10000, "trajectory": false},
    "modifier": {"kind": "none", "value": 1.0, "applied_to": "denoiser"},
    "pc": {"M": 0, "k": 1, "at_zero": false},
    "frontier": {"modifiers": [{"kind": "temperature", "value": 0.8}, {"kind": "temperature", "value": 1.0}],
                 "nfe": [4, 8]},
    "oracle": {"t": 0.0},
    "seed": null,
    "out_dir": "."
  })");
}

// Flag values; unset flags leave the config untouched.
struct Overrides {
  std::string config_path;
  std::optional<std::string> out_dir, family, schedule, terminal, loss, param, representation, optimizer, sampler,
      table, modifier, applied_to, p0_file, only;
  std::optional<int> K, L, n, steps, pc_M, pc_k;
  std::optional<double> lr, modifier_value, t;
  std::optional<std::uint64_t> seed, dirichlet_seed;
  std::optional<std::size_t> samples;
  bool joint = false, trajectory = false;
};

template <class T>
void set_if(json& j, const char* a, const char* b, const std::optional<T>& v) {
  if (v) j[a][b] = *v;
}

json build_config(const Overrides& o) {
  json cfg = default_config();
  if (!o.config_path.empty()) {
    json user;
    try {
      user = json::parse(read_text(o.config_path));
    } catch (const json::exception& e) {
      throw ConfigError("invalid JSON in " + o.config_path + ": " + e.what());
    }
    if (!user.is_object()) throw ConfigError("config must be a JSON object: " + o.config_path);
    cfg.merge_patch(user);
  }
  set_if(cfg, "spec", "K", o.K);
  set_if(cfg, "spec", "L", o.L);
  set_if(cfg, "spec", "family", o.family);
  set_if(cfg, "spec", "schedule", o.schedule);
  set_if(cfg, "grid", "n", o.n);
  set_if(cfg, "grid", "terminal", o.terminal);
  set_if(cfg, "loss", "kind", o.loss);
  set_if(cfg, "loss", "param", o.param);
  set_if(cfg, "train", "steps", o.steps);
  set_if(cfg, "train", "lr", o.lr);
  set_if(cfg, "train", "optimizer", o.optimizer);
  set_if(cfg, "sampler", "kind", o.sampler);
  set_if(cfg, "sampler", "n_samples", o.samples);
  set_if(cfg, "modifier", "kind", o.modifier);
  set_if(cfg, "modifier", "value", o.modifier_value);
  set_if(cfg, "modifier", "applied_to", o.applied_to);
  set_if(cfg, "pc", "M", o.pc_M);
  set_if(cfg, "pc", "k", o.pc_k);
  set_if(cfg, "oracle", "t", o.t);
  if (o.table) {
    cfg["sampler"]["predictor"] = "table";
    cfg["sampler"]["table"] = *o.table;
  }
  if (o.joint) cfg["sampler"]["joint"] = true;
  if (o.trajectory) cfg["sampler"]["trajectory"] = true;
  if (o.representation) cfg["representation"] = *o.representation;
  if (o.p0_file) cfg["p0"] = json{{"file", *o.p0_file}};
  if (o.dirichlet_seed) cfg["p0"] = json{{"dirichlet_seed", *o.dirichlet_seed}};
  if (o.seed) cfg["seed"] = *o.seed;
  if (o.out_dir) cfg["out_dir"] = *o.out_dir;
  return cfg;
}

std::string hash_of(const json& cfg) {
  json c = cfg;
  c.erase("out_dir");
  return fnv1a_hex(c.dump());
}

// Typed view of the config, validated before any work starts.
struct Experiment {
  json cfg;
  std::string hash;
  ProcessSpec spec;
  DataTable p0;
  TimeGrid grid;
  LossSpec loss;
  Representation rep = Representation::Denoiser;
  TrainConfig train;
  Modifier modifier;
  PCConfig pc;
  std::filesystem::path out;
};

Experiment load(const Overrides& o) {
  Experiment e;
  e.cfg = build_config(o);
  e.hash = hash_of(e.cfg);
  const json& c = e.cfg;
  try {
    const json& s = c.at("spec");
    e.spec.K = s.at("K").get<int>();
    e.spec.L = s.at("L").get<int>();
    e.spec.family = parse_family(s.at("family").get<std::string>());
    e.spec.schedule.kind = parse_schedule(s.at("schedule").get<std::string>());
    e.spec.schedule.eps_floor = s.at("eps_floor").get<double>();
    e.spec.validate();
    e.spec.schedule.validate();

    const json& p = c.at("p0");
    if (p.contains("file")) {
      e.p0 = load_datatable(p.at("file").get<std::string>());
      if (e.p0.K != e.spec.K || e.p0.L != e.spec.L) throw ConfigError("p0 file does not match spec K, L");
    } else {
      e.p0 = DataTable::dirichlet(e.spec.K, e.spec.L, p.at("dirichlet_seed").get<std::uint64_t>());
    }

    const json& g = c.at("grid");
    std::string term = g.at("terminal").get<std::string>();
    if (term != "one" && term != "floor") throw ConfigError("grid.terminal must be one or floor");
    e.grid = TimeGrid::uniform(g.at("n").get<int>(), term == "one" ? Terminal::One : Terminal::Floor,
                               e.spec.schedule.eps_floor);

    const json& l = c.at("loss");
    e.loss.kind = parse_loss(l.at("kind").get<std::string>());
    e.loss.param = parse_param(l.at("param").get<std::string>());
    e.loss.grid = e.grid;
    e.loss.M = l.at("M").get<int>();
    e.loss.options.reconstruction = l.at("reconstruction").get<bool>();
    if (e.loss.M < 1) throw ConfigError("loss.M must be >= 1");

    e.rep = parse_representation(c.at("representation").get<std::string>());

    const json& t = c.at("train");
    e.train.lr = t.at("lr").get<double>();
    e.train.steps = t.at("steps").get<int>();
    e.train.optimizer = parse_optimizer(t.at("optimizer").get<std::string>());
    e.train.seed = t.at("seed").get<std::uint64_t>();
    e.train.tol = t.at("tol").get<double>();
    e.train.validate();

    const json& m = c.at("modifier");
    e.modifier.kind = parse_modifier_kind(m.at("kind").get<std::string>());
    e.modifier.value = m.at("value").get<double>();
    e.modifier.applied_to = parse_representation(m.at("applied_to").get<std::string>());
    e.modifier.validate();

    const json& pc = c.at("pc");
    e.pc.M = pc.at("M").get<int>();
    e.pc.k = pc.at("k").get<int>();
    e.pc.at_zero = pc.at("at_zero").get<bool>();
    e.pc.validate(e.spec.L);

    e.out = c.at("out_dir").get<std::string>();
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  } catch (const IoError&) {
    throw;
  } catch (const CapacityError&) {
    throw;
  } catch (const Error& ex) {
    throw ConfigError(ex.what());
  }
  return e;
}

std::uint64_t require_seed(const Experiment& e) {
  if (!e.cfg.contains("seed") || e.cfg.at("seed").is_null()) throw ConfigError("--seed is required for sampling");
  return e.cfg.at("seed").get<std::uint64_t>();
}

std::string write_artifact(const Experiment& e, const std::string& stem, const std::string& ext,
                           const std::string& content, std::ostream& out) {
  std::error_code ec;
  std::filesystem::create_directories(e.out, ec);
  if (ec) throw IoError("cannot create directory " + e.out.string() + ": " + ec.message());
  std::string path = (e.out / (stem + "_" + e.hash + "." + ext)).string();
  write_text(path, content);
  out << path << "\n";
  return path;
}

SamplerSpec sampler_spec(const Experiment& e) {
  const json& s = e.cfg.at("sampler");
  SamplerSpec ss;
  try {
    ss.kind = parse_sampler(s.at("kind").get<std::string>());
    std::string src = s.at("predictor").get<std::string>();
    if (src == "table") {
      ss.predictor = std::make_shared<TablePredictor>(load_table(s.at("table").get<std::string>()));
    } else if (src == "oracle") {
      ss.predictor = std::make_shared<OraclePredictor>(e.p0, e.spec, e.rep, s.at("joint").get<bool>());
    } else {
      throw ConfigError("sampler.predictor must be oracle or table");
    }
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  ss.param = e.loss.param;
  ss.grid = e.grid;
  ss.modifier = e.modifier;
  ss.pc = e.pc;
  try {
    ss.validate();
  } catch (const IoError&) {
    throw;
  } catch (const Error& ex) {
    throw ConfigError(ex.what());
  }
  return ss;
}

int cmd_check(const Overrides& o, std::ostream& out) {
  if (!o.config_path.empty() || o.K || o.L) load(o);
  auto results = run_invariants(o.only);
  if (o.only && results.empty()) throw ConfigError("no invariants in group " + *o.only);
  int failed = 0;
  out << std::left << std::setw(12) << "group" << std::setw(34) << "invariant" << std::setw(6) << "status"
      << "detail\n";
  for (const auto& r : results) {
    failed += r.result.pass ? 0 : 1;
    out << std::left << std::setw(12) << r.invariant->group << std::setw(34) << r.invariant->name << std::setw(6)
        << (r.result.pass ? "PASS" : "FAIL") << r.result.detail << "\n";
  }
  out << results.size() - failed << "/" << results.size() << " invariants passed\n";
  return failed == 0 ? 0 : 1;
}

int cmd_train(const Overrides& o, std::ostream& out) {
  Experiment e = load(o);
  TablePredictor table(e.spec, e.rep, TablePredictor::grid_bins(e.grid));
  auto result = train(std::move(table), e.p0, e.loss, e.train);
  write_artifact(e, "table", "json", table_json(result.table, e.hash), out);
  write_artifact(e, "trace", "csv", trace_csv(result.trace, e.hash), out);
  write_artifact(e, "report", "json", report_json(evaluate_report(e.p0, e.spec, e.loss, result.table), e.hash), out);
  return 0;
}

int cmd_sample(const Overrides& o, std::ostream& out) {
  Experiment e = load(o);
  std::uint64_t seed = require_seed(e);
  SamplerSpec ss = sampler_spec(e);
  std::size_t N = e.cfg.at("sampler").at("n_samples").get<std::size_t>();
  if (e.cfg.at("sampler").at("trajectory").get<bool>()) {
    std::vector<std::vector<State>> traj(N);
    parallel_for(N, [&](std::size_t b, std::size_t en) {
      for (std::size_t i = b; i < en; ++i) run_sampler(ss, RngKey{seed, i}, &traj[i]);
    });
    write_artifact(e, "trajectories", "csv", trajectories_csv(traj, e.hash), out);
  } else {
    write_artifact(e, "samples", "csv", samples_csv(sample_endpoints(ss, N, seed), e.hash), out);
  }
  return 0;
}

int cmd_frontier(const Overrides& o, std::ostream& out) {
  Experiment e = load(o);
  std::uint64_t seed = require_seed(e);
  SamplerSpec ss = sampler_spec(e);
  std::vector<Modifier> mods;
  std::vector<int> nfes;
  try {
    for (const auto& m : e.cfg.at("frontier").at("modifiers")) {
      Modifier md;
      md.kind = parse_modifier_kind(m.at("kind").get<std::string>());
      md.value = m.value("value", 1.0);
      md.applied_to = parse_representation(m.value("applied_to", std::string("denoiser")));
      md.validate();
      mods.push_back(md);
    }
    nfes = e.cfg.at("frontier").at("nfe").get<std::vector<int>>();
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  std::size_t N = e.cfg.at("sampler").at("n_samples").get<std::size_t>();
  auto rows = frontier_sweep(ss, mods, nfes, N, seed, e.p0);
  write_artifact(e, "frontier", "csv", frontier_csv(rows, e.hash), out);
  return 0;
}

int cmd_oracle_dump(const Overrides& o, std::ostream& out) {
  Experiment e = load(o);
  double t = e.cfg.at("oracle").at("t").get<double>();
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("oracle.t must lie in [0, 1]");
  write_artifact(e, "oracle", "json", exact_json(marginal(e.p0, e.spec, t), e.hash), out);
  return 0;
}

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_path, "JSON config file");
  app->add_option("--out", o.out_dir, "output directory");
  app->add_option("--K", o.K, "vocabulary size");
  app->add_option("--L", o.L, "sequence length");
  app->add_option("--family", o.family, "udm | mdm | audm | maxcoupling");
  app->add_option("--schedule", o.schedule, "linear | geometric");
  app->add_option("--n", o.n, "grid steps");
  app->add_option("--terminal", o.terminal, "one | floor");
  app->add_option("--p0", o.p0_file, "DataTable JSON file");
  app->add_option("--dirichlet-seed", o.dirichlet_seed, "seed for a Dirichlet p0");
  app->add_option("--representation", o.representation, "denoiser | loo | score");
  app->add_option("--loss", o.loss, "loss name");
  app->add_option("--param", o.param, "marginalization | plugin_canonical | plugin_barycentric");
}

void add_sampling(CLI::App* app, Overrides& o) {
  app->add_option("--seed", o.seed, "sampling seed (required)");
  app->add_option("--sampler", o.sampler, "ancestral | pc | audm | reaudm | mudm | euler | tau_leap");
  app->add_option("--samples", o.samples, "number of samples");
  app->add_option("--table", o.table, "trained table JSON");
  app->add_flag("--joint", o.joint, "oracle predictor exposes its joint posterior");
  app->add_option("--modifier", o.modifier, "none | temperature | top_p");
  app->add_option("--modifier-value", o.modifier_value, "temperature or nucleus mass");
  app->add_option("--applied-to", o.applied_to, "denoiser | loo");
  app->add_option("--pc-M", o.pc_M, "corrector sweeps per step");
  app->add_option("--pc-k", o.pc_k, "positions per sweep");
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"revdiff: exact small-scale discrete diffusion experiments"};
  app.require_subcommand(1);
  Overrides o;

  auto* check = app.add_subcommand("check", "run the registered invariants");
  check->add_option("--only", o.only, "restrict to one group");
  check->add_option("--config", o.config_path, "validate this config first");
  check->add_option("--K", o.K, "vocabulary size");
  check->add_option("--L", o.L, "sequence length");

  auto* tr = app.add_subcommand("train", "train a table predictor");
  add_common(tr, o);
  tr->add_option("--steps", o.steps, "optimizer steps");
  tr->add_option("--lr", o.lr, "learning rate");
  tr->add_option("--optimizer", o.optimizer, "gd | adam");

  auto* sa = app.add_subcommand("sample", "draw samples");
  add_common(sa, o);
  add_sampling(sa, o);
  sa->add_flag("--trajectory", o.trajectory, "write full trajectories");

  auto* fr = app.add_subcommand("frontier", "modifier x NFE sweep");
  add_common(fr, o);
  add_sampling(fr, o);

  auto* oracle = app.add_subcommand("oracle", "exact quantities");
  oracle->require_subcommand(1);
  auto* dump = oracle->add_subcommand("dump", "write the exact marginal p_t");
  add_common(dump, o);
  dump->add_option("--t", o.t, "time in [0, 1]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (check->parsed()) return cmd_check(o, out);
    if (tr->parsed()) return cmd_train(o, out);
    if (sa->parsed()) return cmd_sample(o, out);
    if (fr->parsed()) return cmd_frontier(o, out);
    if (dump->parsed()) return cmd_oracle_dump(o, out);
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace revdiff
