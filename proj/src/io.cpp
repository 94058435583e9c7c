#include "miboost/boosting.hpp"

#include <json.hpp>

namespace miboost {

std::string to_json(const BoostFit<double>& fit, std::span<const std::string> names) {
    using nlohmann::json;
    json j;
    j["M"] = fit.M;
    j["p"] = fit.p;
    j["nu"] = fit.nu;
    j["t_stop"] = fit.t_stop;
    j["offsets"] = std::vector<double>(fit.offsets.data(), fit.offsets.data() + fit.offsets.size());
    json per = json::array();
    for (Index m = 0; m < fit.M; ++m) {
        std::vector<double> row(fit.coefficients.cols());
        for (Index c = 0; c < fit.coefficients.cols(); ++c) row[c] = fit.coefficients(m, c);
        per.push_back(row);
    }
    j["coefficients"] = std::move(per);
    j["averaged"] = std::vector<double>(fit.averaged.data(), fit.averaged.data() + fit.averaged.size());
    j["intercept"] = fit.averaged_intercept();
    j["selection_path"] = fit.selection_path;
    if (!names.empty()) {
        json sel = json::array();
        for (Index r : fit.selected()) sel.push_back(names[r]);
        j["selected"] = std::move(sel);
    } else {
        j["selected"] = fit.selected();
    }
    return j.dump(2);
}

}  // namespace miboost
