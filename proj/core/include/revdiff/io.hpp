#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "revdiff/eval.hpp"
#include "revdiff/losses.hpp"
#include "revdiff/predict.hpp"
#include "revdiff/train.hpp"

namespace revdiff {

// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& content);

// JSON files carry "config_hash" when hash is non-empty; CSV files start with "# config_hash=<hash>".
std::string datatable_json(const DataTable& p0, const std::string& hash = "");
DataTable parse_datatable(const std::string& json);
DataTable load_datatable(const std::string& path);

std::string exact_json(const ExactDistribution& d, const std::string& hash = "");
ExactDistribution parse_exact(const std::string& json);

std::string spec_json(const ProcessSpec& spec);
ProcessSpec parse_spec(const std::string& json);

std::string table_json(const TablePredictor& t, const std::string& hash = "");
TablePredictor parse_table(const std::string& json);
TablePredictor load_table(const std::string& path);

std::string report_json(const LossReport& r, const std::string& hash = "");

std::string trace_csv(const std::vector<TraceRow>& trace, const std::string& hash = "");
std::string samples_csv(const std::vector<State>& samples, const std::string& hash = "");
std::string trajectories_csv(const std::vector<std::vector<State>>& trajectories, const std::string& hash = "");
std::string frontier_csv(const std::vector<FrontierRow>& rows, const std::string& hash = "");

}  // namespace revdiff
