// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/loss_report.hpp"

#include <stdexcept>

namespace morphvol {

nlohmann::json LossReport::to_json() const {
    nlohmann::json j;
    j["terms"] = terms;
    j["weights"] = weights;
    j["total"] = total;
    if (!grad_residuals.empty()) j["grad_residuals"] = grad_residuals;
    if (!flags.empty()) j["flags"] = flags;
    return j;
}

LossGraph weighted_sum(const std::map<std::string, ad::Var>& terms, const std::map<std::string, double>& weights) {
    if (terms.empty()) throw std::invalid_argument("weighted_sum: no terms");
    LossGraph g;
    ad::Var total;
    double acc = 0.0;
    for (const auto& [name, term] : terms) {
        const auto w = weights.find(name);
        if (w == weights.end()) throw std::invalid_argument("weighted_sum: no weight for term '" + name + "'");
        if (term.value().size() != 1) throw std::invalid_argument("weighted_sum: term '" + name + "' is not a scalar");
        const ad::Var scaled = term * w->second;
        total = total.defined() ? total + scaled : scaled;
        acc = total.item();
        g.report.terms[name] = term.item();
        g.report.weights[name] = w->second;
    }
    g.report.total = acc;
    g.total = total;
    return g;
}

}  // namespace morphvol
