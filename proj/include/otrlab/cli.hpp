// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace otrlab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

inline constexpr const char* kSummaryHeader = "objective,beta,final_loss,eval_in_acc,eval_ood_acc,gt_fraction";

/// Runs `otrlab <args...>`; args excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace otrlab
