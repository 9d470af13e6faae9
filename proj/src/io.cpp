#include "edpbrl/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace edpbrl {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::optional<double> parse_double(const std::string& text) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || text.empty()) return std::nullopt;
  return value;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::string where(const fs::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

const Json& require_field(const Json& doc, const char* key,
                          const std::string& context) {
  if (!doc.is_object() || !doc.contains(key))
    throw FormatError(context + "missing field '" + key + "'");
  return doc.at(key);
}

int require_int(const Json& doc, const char* key, const std::string& context) {
  const Json& v = require_field(doc, key, context);
  if (!v.is_number_integer())
    throw FormatError(context + "field '" + key + "' must be an integer");
  return v.get<int>();
}

void reject_unknown_keys(const Json& doc, std::initializer_list<const char*> known,
                         const std::string& context) {
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : doc.items())
    if (!allowed.count(key))
      throw FormatError(context + "unknown field '" + key + "'");
}

Json parse_json(const std::string& text, const std::string& context) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw FormatError(context + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Json vector_to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const Json& doc, const std::string& what) {
  if (!doc.is_array()) throw FormatError(what + " must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(doc.size()));
  for (std::size_t i = 0; i < doc.size(); ++i) {
    if (!doc[i].is_number())
      throw FormatError(what + "[" + std::to_string(i) + "] is not a number");
    v[static_cast<Eigen::Index>(i)] = doc[i].get<double>();
  }
  return v;
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    out.push_back(vector_to_json(m.row(r).transpose()));
  return out;
}

Eigen::MatrixXd matrix_from_json(const Json& doc, const std::string& what) {
  if (!doc.is_array()) throw FormatError(what + " must be an array of rows");
  if (doc.empty()) return {};
  const auto cols = doc[0].is_array() ? doc[0].size() : 0;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(doc.size()),
                    static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < doc.size(); ++r) {
    const auto row = vector_from_json(doc[r], what + "[" + std::to_string(r) + "]");
    if (static_cast<std::size_t>(row.size()) != cols)
      throw FormatError(what + " has ragged rows");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

// ---- MDP ------------------------------------------------------------------

Json mdp_to_json(const MdpSpec& spec) {
  Json doc;
  doc["num_states"] = spec.num_states;
  doc["num_actions"] = spec.num_actions;
  doc["horizon"] = spec.horizon;
  Json transition = Json::array();
  for (int s = 0; s < spec.num_states; ++s) {
    Json per_action = Json::array();
    for (int a = 0; a < spec.num_actions; ++a)
      per_action.push_back(
          vector_to_json(spec.transition.row(spec.row(s, a)).transpose()));
    transition.push_back(std::move(per_action));
  }
  doc["transition"] = std::move(transition);
  doc["initial_dist"] = vector_to_json(spec.initial_dist);
  return doc;
}

MdpSpec mdp_from_json(const Json& doc) {
  const std::string ctx = "mdp: ";
  if (!doc.is_object()) throw FormatError(ctx + "document must be an object");
  reject_unknown_keys(
      doc, {"num_states", "num_actions", "horizon", "transition", "initial_dist"},
      ctx);
  MdpSpec spec;
  spec.num_states = require_int(doc, "num_states", ctx);
  spec.num_actions = require_int(doc, "num_actions", ctx);
  spec.horizon = require_int(doc, "horizon", ctx);
  if (spec.num_states < 1 || spec.num_actions < 1 || spec.horizon < 1)
    throw FormatError(ctx + "num_states, num_actions and horizon must be positive");
  const Json& tr = require_field(doc, "transition", ctx);
  if (!tr.is_array() || tr.size() != static_cast<std::size_t>(spec.num_states))
    throw FormatError(ctx + "transition must have num_states entries");
  spec.transition.resize(spec.num_states * spec.num_actions, spec.num_states);
  for (int s = 0; s < spec.num_states; ++s) {
    if (!tr[s].is_array() ||
        tr[s].size() != static_cast<std::size_t>(spec.num_actions))
      throw FormatError(ctx + "transition[" + std::to_string(s) +
                        "] must have num_actions entries");
    for (int a = 0; a < spec.num_actions; ++a) {
      const std::string what =
          "transition[" + std::to_string(s) + "][" + std::to_string(a) + "]";
      const auto row = vector_from_json(tr[s][a], ctx + what);
      if (row.size() != spec.num_states)
        throw FormatError(ctx + what + " must have num_states entries");
      spec.transition.row(spec.row(s, a)) = row.transpose();
    }
  }
  spec.initial_dist =
      vector_from_json(require_field(doc, "initial_dist", ctx), ctx + "initial_dist");
  if (spec.initial_dist.size() != spec.num_states)
    throw FormatError(ctx + "initial_dist must have num_states entries");
  const auto problems = validate_mdp(spec);
  if (!problems.empty()) throw FormatError(ctx + problems.front());
  return spec;
}

MdpSpec read_mdp(const fs::path& path) {
  const std::string ctx = path.string() + ": ";
  try {
    return mdp_from_json(parse_json(read_text_file(path), ctx));
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    throw FormatError(msg.rfind(ctx, 0) == 0 ? msg : ctx + msg);
  }
}

void write_mdp(const fs::path& path, const MdpSpec& spec) {
  write_text_file(path, mdp_to_json(spec).dump(2) + "\n");
}

// ---- Features ---------------------------------------------------------------

FeatureFile read_features(const fs::path& path) {
  const auto lines = split_lines(read_text_file(path));
  FeatureFile out;
  std::vector<std::vector<double>> rows;
  std::optional<bool> labelled;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string line = trim(lines[i]);
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv(line);
    if (!labelled) labelled = !parse_double(cells[0]).has_value();
    std::size_t first = 0;
    if (*labelled) {
      out.labels.push_back(cells[0]);
      first = 1;
    }
    std::vector<double> values;
    for (std::size_t c = first; c < cells.size(); ++c) {
      const auto v = parse_double(cells[c]);
      if (!v || !std::isfinite(*v))
        throw FormatError(where(path, i + 1) + "column " + std::to_string(c + 1) +
                          " is not a finite number: '" + cells[c] + "'");
      values.push_back(*v);
    }
    if (values.empty())
      throw FormatError(where(path, i + 1) + "row has no feature values");
    if (!rows.empty() && values.size() != rows.front().size())
      throw FormatError(where(path, i + 1) + "expected " +
                        std::to_string(rows.front().size()) + " values, got " +
                        std::to_string(values.size()));
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw FormatError(path.string() + ": no feature rows");
  out.features.phi.resize(static_cast<Eigen::Index>(rows.size()),
                          static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      out.features.phi(static_cast<Eigen::Index>(r),
                       static_cast<Eigen::Index>(c)) = rows[r][c];
  return out;
}

namespace {
std::string format_number(double v) { return Json(v).dump(); }
}  // namespace

void write_features(const fs::path& path, const FeatureMap& f,
                    const std::vector<std::string>& labels) {
  std::string text;
  for (int s = 0; s < f.num_states(); ++s) {
    if (!labels.empty()) text += labels.at(s) + ",";
    for (int j = 0; j < f.dim(); ++j) {
      if (j) text += ",";
      text += format_number(f.phi(s, j));
    }
    text += "\n";
  }
  write_text_file(path, text);
}

std::map<std::string, Eigen::VectorXd> read_prefix_table(const fs::path& path,
                                                         int dim) {
  const auto lines = split_lines(read_text_file(path));
  std::map<std::string, Eigen::VectorXd> table;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string line = trim(lines[i]);
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv(line);
    const std::string& key = cells[0];
    const bool key_ok =
        !key.empty() && key.front() != '-' && key.back() != '-' &&
        key.find("--") == std::string::npos &&
        std::all_of(key.begin(), key.end(),
                    [](char c) { return (c >= '0' && c <= '9') || c == '-'; });
    if (!key_ok)
      throw FormatError(where(path, i + 1) + "bad prefix key '" + key + "'");
    if (static_cast<int>(cells.size()) - 1 != dim)
      throw FormatError(where(path, i + 1) + "expected " + std::to_string(dim) +
                        " values, got " + std::to_string(cells.size() - 1));
    Eigen::VectorXd v(dim);
    for (int j = 0; j < dim; ++j) {
      const auto x = parse_double(cells[j + 1]);
      if (!x || !std::isfinite(*x))
        throw FormatError(where(path, i + 1) + "column " + std::to_string(j + 2) +
                          " is not a finite number");
      v[j] = *x;
    }
    if (!table.emplace(key, v).second)
      throw FormatError(where(path, i + 1) + "duplicate prefix key '" + key + "'");
  }
  return table;
}

void write_prefix_table(const fs::path& path,
                        const std::map<std::string, Eigen::VectorXd>& table) {
  std::string text;
  for (const auto& [key, v] : table) {
    text += key;
    for (Eigen::Index j = 0; j < v.size(); ++j) text += "," + format_number(v[j]);
    text += "\n";
  }
  write_text_file(path, text);
}

std::vector<std::string> read_vocabulary(const fs::path& path) {
  auto lines = split_lines(read_text_file(path));
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  for (auto& l : lines) l = trim(l);
  return lines;
}

// ---- Records ----------------------------------------------------------------

Json record_to_json(const PreferenceRecord& rec) {
  Json doc;
  doc["episode"] = rec.episode;
  doc["step"] = rec.step;
  doc["chosen"] = rec.chosen;
  doc["options"] = matrix_to_json(rec.options.features);
  if (!rec.option_keys.empty()) doc["option_keys"] = rec.option_keys;
  return doc;
}

PreferenceRecord record_from_json(const Json& doc) {
  const std::string ctx;
  if (!doc.is_object()) throw FormatError("record must be an object");
  reject_unknown_keys(doc, {"episode", "step", "chosen", "options", "option_keys"},
                      ctx);
  PreferenceRecord rec;
  rec.episode = require_int(doc, "episode", ctx);
  rec.step = require_int(doc, "step", ctx);
  rec.chosen = require_int(doc, "chosen", ctx);
  if (rec.episode < 0 || rec.step < 0)
    throw FormatError("episode and step must be non-negative");
  rec.options.features = matrix_from_json(require_field(doc, "options", ctx), "options");
  try {
    validate_options(rec.options);
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  if (rec.chosen < 0 || rec.chosen >= rec.options.count())
    throw FormatError("chosen " + std::to_string(rec.chosen) +
                      " outside [0, " + std::to_string(rec.options.count()) + ")");
  if (doc.contains("option_keys")) {
    const Json& keys = doc.at("option_keys");
    if (!keys.is_array() ||
        keys.size() != static_cast<std::size_t>(rec.options.count()))
      throw FormatError("option_keys must list one key per option");
    for (const auto& k : keys) {
      if (!k.is_string()) throw FormatError("option_keys must be strings");
      rec.option_keys.push_back(k.get<std::string>());
    }
  }
  return rec;
}

std::string record_line(const PreferenceRecord& rec) {
  return record_to_json(rec).dump() + "\n";
}

std::vector<PreferenceRecord> parse_records(const std::string& text,
                                            const std::string& source_name) {
  std::vector<PreferenceRecord> records;
  const auto lines = split_lines(text);
  int dim = -1;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::string ctx = source_name + ":" + std::to_string(i + 1) + ": ";
    try {
      auto rec = record_from_json(parse_json(lines[i], ""));
      if (dim >= 0 && rec.options.dim() != dim)
        throw FormatError("feature dimension " + std::to_string(rec.options.dim()) +
                          " differs from earlier records (" + std::to_string(dim) +
                          ")");
      dim = rec.options.dim();
      records.push_back(std::move(rec));
    } catch (const FormatError& e) {
      throw FormatError(ctx + e.what());
    } catch (const Json::exception& e) {
      throw FormatError(ctx + e.what());
    }
  }
  return records;
}

std::vector<PreferenceRecord> read_records(const fs::path& path) {
  return parse_records(read_text_file(path), path.string());
}

void write_records(const fs::path& path,
                   const std::vector<PreferenceRecord>& records) {
  std::string text;
  for (const auto& rec : records) text += record_line(rec);
  write_text_file(path, text);
}

void append_record(const fs::path& path, const PreferenceRecord& rec) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + path.string());
  out << record_line(rec);
  out.flush();
}

// ---- Design artifacts -------------------------------------------------------

Json policy_to_json(const Policy& policy) {
  Json steps = Json::array();
  for (const auto& m : policy.probs) steps.push_back(matrix_to_json(m));
  return steps;
}

Policy policy_from_json(const Json& doc) {
  if (!doc.is_array()) throw FormatError("policy must be an array of steps");
  Policy p;
  for (std::size_t h = 0; h < doc.size(); ++h)
    p.probs.push_back(matrix_from_json(doc[h], "policy step " + std::to_string(h)));
  return p;
}

Json visitation_to_json(const VisitationMeasure& d) {
  Json steps = Json::array();
  for (const auto& m : d.d) steps.push_back(matrix_to_json(m));
  return steps;
}

std::string trace_lines(const DesignResult& result) {
  std::string text;
  for (std::size_t n = 0; n < result.objective_trace.size(); ++n) {
    Json line;
    line["iteration"] = n;
    line["objective"] = result.objective_trace[n];
    line["gap"] = result.fw_gap_trace[n];
    line["alpha"] = result.step_sizes[n];
    text += line.dump() + "\n";
  }
  return text;
}

void write_design(const fs::path& dir, const DesignResult& result) {
  fs::create_directories(dir);
  Json vis = Json::array();
  for (const auto& d : result.visitations) vis.push_back(visitation_to_json(d));
  Json pols = Json::array();
  for (const auto& p : result.policies) pols.push_back(policy_to_json(p));
  Json vis_doc;
  vis_doc["visitations"] = std::move(vis);
  vis_doc["final_gap"] = result.final_gap;
  Json pol_doc;
  pol_doc["policies"] = std::move(pols);
  write_text_file(dir / "visitations.json", vis_doc.dump() + "\n");
  write_text_file(dir / "policies.json", pol_doc.dump() + "\n");
  write_text_file(dir / "trace.jsonl", trace_lines(result));
}

std::vector<Policy> read_policies(const fs::path& path) {
  const std::string ctx = path.string() + ": ";
  const Json doc = parse_json(read_text_file(path), ctx);
  try {
    const Json& arr = require_field(doc, "policies", ctx);
    if (!arr.is_array()) throw FormatError(ctx + "'policies' must be an array");
    std::vector<Policy> out;
    for (const auto& p : arr) out.push_back(policy_from_json(p));
    return out;
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    throw FormatError(msg.rfind(ctx, 0) == 0 ? msg : ctx + msg);
  }
}

Json theta_to_json(const ThetaEstimate& est, double lambda,
                   std::size_t num_records) {
  Json doc;
  doc["theta"] = vector_to_json(est.theta);
  doc["lambda"] = lambda;
  doc["num_records"] = num_records;
  doc["final_objective"] = est.final_objective;
  doc["iterations"] = est.iterations;
  doc["gradient_norm"] = est.gradient_norm;
  doc["converged"] = est.converged;
  return doc;
}

ThetaEstimate theta_from_json(const Json& doc) {
  ThetaEstimate est;
  est.theta = vector_from_json(require_field(doc, "theta", ""), "theta");
  if (doc.contains("final_objective"))
    est.final_objective = doc.at("final_objective").get<double>();
  if (doc.contains("iterations")) est.iterations = doc.at("iterations").get<int>();
  if (doc.contains("gradient_norm"))
    est.gradient_norm = doc.at("gradient_norm").get<double>();
  if (doc.contains("converged")) est.converged = doc.at("converged").get<bool>();
  return est;
}

void write_theta(const fs::path& path, const ThetaEstimate& est, double lambda,
                 std::size_t num_records) {
  write_text_file(path, theta_to_json(est, lambda, num_records).dump(2) + "\n");
}

ThetaEstimate read_theta(const fs::path& path) {
  const std::string ctx = path.string() + ": ";
  try {
    return theta_from_json(parse_json(read_text_file(path), ctx));
  } catch (const Json::exception& e) {
    throw FormatError(ctx + e.what());
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    throw FormatError(msg.rfind(ctx, 0) == 0 ? msg : ctx + msg);
  }
}

// ---- Results ----------------------------------------------------------------

std::string trace_rows_csv(const std::vector<TraceRow>& rows) {
  std::string text = "seed,policy_source,T,lambda,metric,value\n";
  for (const auto& r : rows) {
    text += std::to_string(r.seed) + "," + r.policy_source + "," +
            std::to_string(r.episodes) + "," + format_number(r.lambda) + "," +
            r.metric + "," + format_number(r.value) + "\n";
  }
  return text;
}

Json sweep_summary(const std::vector<TraceRow>& rows) {
  std::map<std::tuple<std::string, int, std::string>, std::vector<double>> cells;
  std::set<std::uint64_t> seeds;
  for (const auto& r : rows) {
    cells[{r.policy_source, r.episodes, r.metric}].push_back(r.value);
    seeds.insert(r.seed);
  }
  Json out;
  out["num_seeds"] = seeds.size();
  Json entries = Json::array();
  for (const auto& [key, values] : cells) {
    const auto& [source, episodes, metric] = key;
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    const double se = values.size() > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
    Json e;
    e["policy_source"] = source;
    e["T"] = episodes;
    e["metric"] = metric;
    e["median"] = median(values);
    e["mean"] = mean;
    e["standard_error"] = se;
    e["count"] = values.size();
    entries.push_back(std::move(e));
  }
  out["cells"] = std::move(entries);
  return out;
}

// ---- Run configuration ------------------------------------------------------

RunConfig run_config_from_json(const Json& doc, const fs::path& base_dir) {
  const std::string ctx = "config: ";
  if (!doc.is_object()) throw FormatError(ctx + "document must be an object");
  reject_unknown_keys(doc,
                      {"mdp", "features", "prefix_table", "vocabulary", "design",
                       "oracle", "feedback", "policy_source", "output_dir", "seed"},
                      ctx);
  RunConfig cfg;
  const auto get_path = [&](const char* key) {
    const Json& v = require_field(doc, key, ctx);
    if (!v.is_string()) throw FormatError(ctx + "'" + key + "' must be a path string");
    return resolve(base_dir, v.get<std::string>());
  };
  try {
    cfg.mdp_path = get_path("mdp");
    cfg.features_path = get_path("features");
    if (doc.contains("prefix_table")) cfg.prefix_table_path = get_path("prefix_table");
    if (doc.contains("vocabulary")) cfg.vocabulary_path = get_path("vocabulary");
    cfg.output_dir =
        doc.contains("output_dir") ? get_path("output_dir") : base_dir / "out";
    if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("feedback"))
      cfg.feedback = parse_feedback_kind(doc.at("feedback").get<std::string>());
    if (doc.contains("policy_source"))
      cfg.policy_source =
          parse_policy_source(doc.at("policy_source").get<std::string>());

    cfg.design.rng_seed = cfg.seed;
    if (doc.contains("design")) {
      const Json& d = doc.at("design");
      const std::string dctx = ctx + "design: ";
      if (!d.is_object()) throw FormatError(dctx + "must be an object");
      reject_unknown_keys(d,
                          {"num_policies", "episodes", "lambda", "fw_iterations",
                           "scalarization", "v_matrix", "grid_points",
                           "refine_tolerance"},
                          dctx);
      if (d.contains("num_policies")) cfg.design.num_policies = d.at("num_policies").get<int>();
      if (d.contains("episodes")) cfg.design.episodes = d.at("episodes").get<int>();
      if (d.contains("lambda")) cfg.design.lambda = d.at("lambda").get<double>();
      if (d.contains("fw_iterations"))
        cfg.design.fw_iterations = d.at("fw_iterations").get<int>();
      if (d.contains("grid_points"))
        cfg.design.line_search.grid_points = d.at("grid_points").get<int>();
      if (d.contains("refine_tolerance"))
        cfg.design.line_search.refine_tolerance = d.at("refine_tolerance").get<double>();
      const std::string kind =
          d.contains("scalarization") ? d.at("scalarization").get<std::string>() : "A";
      if (kind == "A") {
        cfg.design.scalarization = Scalarization::a_design();
      } else if (kind == "V") {
        if (!d.contains("v_matrix"))
          throw FormatError(dctx + "V scalarization needs 'v_matrix'");
        cfg.design.scalarization =
            Scalarization::v_design(matrix_from_json(d.at("v_matrix"), "v_matrix"));
      } else {
        throw FormatError(dctx + "scalarization must be \"A\" or \"V\"");
      }
    }

    if (doc.contains("oracle") && !doc.at("oracle").is_null()) {
      const Json& o = doc.at("oracle");
      const std::string octx = ctx + "oracle: ";
      reject_unknown_keys(o, {"theta_star", "mode", "seed"}, octx);
      OracleSpec oracle;
      oracle.theta_star =
          vector_from_json(require_field(o, "theta_star", octx), "theta_star");
      if (!oracle.theta_star.allFinite())
        throw FormatError(octx + "theta_star must be finite");
      if (o.contains("mode")) oracle.mode = parse_oracle_mode(o.at("mode").get<std::string>());
      oracle.rng_seed = o.contains("seed") ? o.at("seed").get<std::uint64_t>() : cfg.seed;
      cfg.oracle = oracle;
    }
  } catch (const Json::exception& e) {
    throw FormatError(ctx + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(ctx + e.what());
  }
  return cfg;
}

RunConfig read_run_config(const fs::path& path) {
  const std::string ctx = path.string() + ": ";
  const Json doc = parse_json(read_text_file(path), ctx);
  try {
    return run_config_from_json(doc, path.parent_path());
  } catch (const FormatError& e) {
    throw FormatError(ctx + e.what());
  }
}

Json run_config_to_json(const RunConfig& cfg) {
  Json doc;
  doc["mdp"] = cfg.mdp_path.string();
  doc["features"] = cfg.features_path.string();
  if (cfg.prefix_table_path) doc["prefix_table"] = cfg.prefix_table_path->string();
  if (cfg.vocabulary_path) doc["vocabulary"] = cfg.vocabulary_path->string();
  Json d;
  d["num_policies"] = cfg.design.num_policies;
  d["episodes"] = cfg.design.episodes;
  d["lambda"] = cfg.design.lambda;
  d["fw_iterations"] = cfg.design.fw_iterations;
  d["grid_points"] = cfg.design.line_search.grid_points;
  d["refine_tolerance"] = cfg.design.line_search.refine_tolerance;
  if (cfg.design.scalarization.kind == ScalarizationKind::V_design) {
    d["scalarization"] = "V";
    d["v_matrix"] = matrix_to_json(cfg.design.scalarization.v);
  } else {
    d["scalarization"] = "A";
  }
  doc["design"] = std::move(d);
  if (cfg.oracle) {
    Json o;
    o["theta_star"] = vector_to_json(cfg.oracle->theta_star);
    o["mode"] = to_string(cfg.oracle->mode);
    o["seed"] = cfg.oracle->rng_seed;
    doc["oracle"] = std::move(o);
  }
  doc["feedback"] = to_string(cfg.feedback);
  doc["policy_source"] = to_string(cfg.policy_source);
  doc["output_dir"] = cfg.output_dir.string();
  doc["seed"] = cfg.seed;
  return doc;
}

FeatureMap load_features(const RunConfig& cfg, int num_states) {
  FeatureMap features = read_features(cfg.features_path).features;
  if (features.num_states() != num_states)
    throw FormatError(cfg.features_path.string() + ": has " +
                      std::to_string(features.num_states()) +
                      " rows but the MDP has " + std::to_string(num_states) +
                      " states");
  if (cfg.prefix_table_path)
    features.prefix_table = read_prefix_table(*cfg.prefix_table_path, features.dim());
  validate_features(features);
  return features;
}

}  // namespace edpbrl
