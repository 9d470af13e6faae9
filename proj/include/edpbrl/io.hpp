#pragma once

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "edpbrl/design.hpp"
#include "edpbrl/experiment.hpp"
#include "edpbrl/frank_wolfe.hpp"
#include "edpbrl/mdp.hpp"
#include "edpbrl/preference.hpp"

namespace edpbrl {

using Json = nlohmann::ordered_json;

/// Malformed or inconsistent input file. The message names the path and,
/// for line-oriented formats, the 1-based line number.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads a whole file; throws std::runtime_error naming the path when it
/// cannot be opened.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     const std::string& text);

// MDP documents: {num_states, num_actions, horizon, transition[s][a][s'],
// initial_dist}.
Json mdp_to_json(const MdpSpec& spec);
MdpSpec mdp_from_json(const Json& doc);
MdpSpec read_mdp(const std::filesystem::path& path);
void write_mdp(const std::filesystem::path& path, const MdpSpec& spec);

struct FeatureFile {
  FeatureMap features;
  std::vector<std::string> labels;  // empty when the file has no label column
};

/// Comma-separated rows of d numbers, optionally preceded by a label column.
/// A first cell that does not parse as a number marks a label column.
FeatureFile read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const FeatureMap& f,
                    const std::vector<std::string>& labels = {});

/// Rows "0-3-2,v1,...,vd". Every row must have `dim` values.
std::map<std::string, Eigen::VectorXd> read_prefix_table(
    const std::filesystem::path& path, int dim);
void write_prefix_table(const std::filesystem::path& path,
                        const std::map<std::string, Eigen::VectorXd>& table);

/// One token per line; line i names action i.
std::vector<std::string> read_vocabulary(const std::filesystem::path& path);

// Preference records as JSON lines:
// {"episode", "step", "chosen", "options": [[...], ...], "option_keys": [...]}.
Json record_to_json(const PreferenceRecord& rec);
PreferenceRecord record_from_json(const Json& doc);
std::string record_line(const PreferenceRecord& rec);
std::vector<PreferenceRecord> parse_records(const std::string& text,
                                            const std::string& source_name);
std::vector<PreferenceRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path,
                   const std::vector<PreferenceRecord>& records);
void append_record(const std::filesystem::path& path,
                   const PreferenceRecord& rec);

Json policy_to_json(const Policy& policy);
Policy policy_from_json(const Json& doc);
Json visitation_to_json(const VisitationMeasure& d);

/// Writes visitations.json, policies.json and trace.jsonl into `dir`.
/// Output is a pure function of the result, so reruns are byte-identical.
void write_design(const std::filesystem::path& dir, const DesignResult& result);
std::string trace_lines(const DesignResult& result);
std::vector<Policy> read_policies(const std::filesystem::path& path);

Json theta_to_json(const ThetaEstimate& est, double lambda,
                   std::size_t num_records);
ThetaEstimate theta_from_json(const Json& doc);
void write_theta(const std::filesystem::path& path, const ThetaEstimate& est,
                 double lambda, std::size_t num_records);
ThetaEstimate read_theta(const std::filesystem::path& path);

/// Rows "seed,policy_source,T,lambda,metric,value" with a header line.
std::string trace_rows_csv(const std::vector<TraceRow>& rows);
/// Median and standard error per (source, budget, metric).
Json sweep_summary(const std::vector<TraceRow>& rows);

Json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const Json& doc, const std::string& what);
Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& doc, const std::string& what);

/// Everything one CLI run needs. Relative paths are resolved against the
/// directory of the configuration file.
struct RunConfig {
  std::filesystem::path mdp_path;
  std::filesystem::path features_path;
  std::optional<std::filesystem::path> prefix_table_path;
  std::optional<std::filesystem::path> vocabulary_path;
  DesignConfig design;
  std::optional<OracleSpec> oracle;
  FeedbackKind feedback = FeedbackKind::state_based;
  PolicySource policy_source = PolicySource::design;
  std::filesystem::path output_dir = ".";
  std::uint64_t seed = 0;
};

RunConfig run_config_from_json(const Json& doc,
                               const std::filesystem::path& base_dir);
RunConfig read_run_config(const std::filesystem::path& path);
Json run_config_to_json(const RunConfig& cfg);

/// Loads features and the optional prefix table named by the config and
/// checks them against the MDP.
FeatureMap load_features(const RunConfig& cfg, int num_states);

}  // namespace edpbrl
