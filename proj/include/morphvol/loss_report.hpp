// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "morphvol/autodiff.hpp"

namespace morphvol {

/// Named loss terms, their weights and the weighted total.
/// Invariant: total == sum over names (in key order) of weights[name] * terms[name].
struct LossReport {
    std::map<std::string, double> terms;
    std::map<std::string, double> weights;
    double total = 0.0;
    /// Optional gradient-check residuals, keyed by parameter group.
    std::map<std::string, double> grad_residuals;
    /// Conditions worth surfacing (zero embedding, empty mask, ...).
    std::vector<std::string> flags;

    nlohmann::json to_json() const;
};

/// A LossReport whose total is still attached to its graph.
struct LossGraph {
    LossReport report;
    ad::Var total;
};

/// Builds the weighted sum of `terms` with `weights` (missing weight -> error).
/// Terms are summed in name order; the report total equals the Var total bit-exactly.
LossGraph weighted_sum(const std::map<std::string, ad::Var>& terms, const std::map<std::string, double>& weights);

}  // namespace morphvol
