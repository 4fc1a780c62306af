#pragma once

#include <string>

#include "emtest/predict.hpp"
#include "emtest/procedure.hpp"

namespace emtest {

// Machine-readable reports ("emtest-report/1" schema). Timing lives in the
// single wall_time_sec field so reports are otherwise reproducible
// byte-for-byte from (data, config, seed).
std::string test_report_json(const TestReport& report);
std::string sequential_result_json(const SequentialResult& result);
std::string rejection_table_json(const RejectionTable& table,
                                 const std::string& scenario_id, int m0,
                                 std::uint64_t seed);
std::string tune_result_json(const TuneResult& result,
                             const std::string& scenario_id,
                             std::uint64_t seed);
std::string predict_report_json(const PredictReport& report,
                                std::uint64_t seed);

// Fixed-width human-readable companions.
std::string test_report_table(const TestReport& report);
std::string sequential_result_table(const SequentialResult& result);
std::string rejection_table_text(const RejectionTable& table);
std::string tune_result_table(const TuneResult& result);
std::string predict_report_table(const PredictReport& report);
std::string scenario_catalog_table();

}  // namespace emtest
