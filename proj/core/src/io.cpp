#include "revdiff/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace revdiff {
namespace {

using nlohmann::json;

json parse_or_throw(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

template <class F>
auto field(const json& j, const char* key, F conv) {
  if (!j.contains(key)) throw ConfigError(std::string("missing field: ") + key);
  try {
    return conv(j.at(key));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad field ") + key + ": " + e.what());
  }
}

std::string dump(json& j, const std::string& hash) {
  if (!hash.empty()) j["config_hash"] = hash;
  return j.dump() + "\n";
}

std::string csv_head(const std::string& hash) { return hash.empty() ? "" : "# config_hash=" + hash + "\n"; }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

json spec_obj(const ProcessSpec& s) {
  return json{{"K", s.K},
              {"L", s.L},
              {"family", family_name(s.family)},
              {"schedule", schedule_name(s.schedule.kind)},
              {"eps_floor", s.schedule.eps_floor}};
}

ProcessSpec spec_from(const json& j) {
  ProcessSpec s;
  s.K = field(j, "K", [](const json& v) { return v.get<int>(); });
  s.L = field(j, "L", [](const json& v) { return v.get<int>(); });
  if (j.contains("family")) s.family = parse_family(j.at("family").get<std::string>());
  if (j.contains("schedule")) s.schedule.kind = parse_schedule(j.at("schedule").get<std::string>());
  if (j.contains("eps_floor")) s.schedule.eps_floor = j.at("eps_floor").get<double>();
  return s;
}

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path);
  return os.str();
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

std::string datatable_json(const DataTable& p0, const std::string& hash) {
  json j{{"K", p0.K}, {"L", p0.L}, {"probs", p0.probs}};
  return dump(j, hash);
}

DataTable parse_datatable(const std::string& text) {
  json j = parse_or_throw(text);
  int K = field(j, "K", [](const json& v) { return v.get<int>(); });
  int L = field(j, "L", [](const json& v) { return v.get<int>(); });
  auto probs = field(j, "probs", [](const json& v) { return v.get<std::vector<double>>(); });
  try {
    return DataTable::from_any(K, L, probs);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("DataTable: ") + e.what());
  }
}

DataTable load_datatable(const std::string& path) { return parse_datatable(read_text(path)); }

std::string exact_json(const ExactDistribution& d, const std::string& hash) {
  json j{{"space", d.space}, {"probs", d.probs}};
  return dump(j, hash);
}

ExactDistribution parse_exact(const std::string& text) {
  json j = parse_or_throw(text);
  return {field(j, "space", [](const json& v) { return v.get<std::string>(); }),
          field(j, "probs", [](const json& v) { return v.get<std::vector<double>>(); })};
}

std::string spec_json(const ProcessSpec& spec) { return spec_obj(spec).dump(); }

ProcessSpec parse_spec(const std::string& text) { return spec_from(parse_or_throw(text)); }

std::string table_json(const TablePredictor& t, const std::string& hash) {
  json j{{"spec", spec_obj(t.spec())},
         {"representation", representation_name(t.representation())},
         {"bins", t.bins()},
         {"logits", t.logits()}};
  return dump(j, hash);
}

TablePredictor parse_table(const std::string& text) {
  json j = parse_or_throw(text);
  ProcessSpec spec = field(j, "spec", [](const json& v) { return spec_from(v); });
  auto rep = parse_representation(field(j, "representation", [](const json& v) { return v.get<std::string>(); }));
  auto bins = field(j, "bins", [](const json& v) { return v.get<std::vector<double>>(); });
  auto logits = field(j, "logits", [](const json& v) { return v.get<std::vector<double>>(); });
  return TablePredictor(spec, rep, std::move(bins), std::move(logits));
}

TablePredictor load_table(const std::string& path) { return parse_table(read_text(path)); }

std::string report_json(const LossReport& r, const std::string& hash) {
  json j{{"loss_name", r.loss_name},
         {"value", r.value},
         {"prior_kl", r.prior_kl},
         {"descriptor", r.descriptor},
         {"predictor_id", r.predictor_id}};
  return dump(j, hash);
}

std::string trace_csv(const std::vector<TraceRow>& trace, const std::string& hash) {
  std::string s = csv_head(hash) + "step,loss,grad_norm\n";
  for (const auto& r : trace) s += std::to_string(r.step) + "," + fmt(r.loss) + "," + fmt(r.grad_norm) + "\n";
  return s;
}

std::string samples_csv(const std::vector<State>& samples, const std::string& hash) {
  std::string s = csv_head(hash) + "sample_id,state_index\n";
  for (std::size_t i = 0; i < samples.size(); ++i) s += std::to_string(i) + "," + std::to_string(samples[i]) + "\n";
  return s;
}

std::string trajectories_csv(const std::vector<std::vector<State>>& trajectories, const std::string& hash) {
  std::string s = csv_head(hash) + "sample_id,t_index,state_index\n";
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& tr = trajectories[i];
    int n = static_cast<int>(tr.size()) - 1;
    for (int j = 0; j <= n; ++j)
      s += std::to_string(i) + "," + std::to_string(n - j) + "," + std::to_string(tr[j]) + "\n";
  }
  return s;
}

std::string frontier_csv(const std::vector<FrontierRow>& rows, const std::string& hash) {
  std::string s = csv_head(hash) + "modifier_kind,modifier_value,nfe,tv,entropy,nll_p0,n_samples,seed\n";
  for (const auto& r : rows)
    s += r.modifier_kind + "," + fmt(r.modifier_value) + "," + std::to_string(r.nfe) + "," + fmt(r.tv) + "," +
         fmt(r.entropy) + "," + fmt(r.nll_p0) + "," + std::to_string(r.n_samples) + "," + std::to_string(r.seed) +
         "\n";
  return s;
}

}  // namespace revdiff
