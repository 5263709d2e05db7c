#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "spv/tasks.hpp"

namespace spv::trial_log {

inline constexpr const char* kTrialHeader =
    "task,block,device,rho_um,lambda_um,display,trial,stimulus,response,correct,collisions,time_s,seed";
inline constexpr const char* kPathHeader = "trial_id,t_s,x_m,y_m,yaw_deg";

/// Shortest round-trip decimal form.
std::string format_double(double v);

/// One row per record; LF line endings. Fields that do not apply are empty.
void write_trials(std::ostream& os, const std::vector<tasks::TrialRecord>& records);
/// Parses rows written by write_trials. Throws ValidationError with the line
/// number on malformed input.
std::vector<tasks::TrialRecord> read_trials(std::istream& is);

void write_paths(std::ostream& os, const std::vector<tasks::TrialRecord>& records);
/// Attaches path rows to records by trial id. Unknown ids are an error.
void read_paths(std::istream& is, std::vector<tasks::TrialRecord>& records);

std::string trials_csv(const std::vector<tasks::TrialRecord>& records);
std::string paths_csv(const std::vector<tasks::TrialRecord>& records);

/// Splits one CSV line, honouring double-quoted fields.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace spv::trial_log
