#include "meanfleet/grid.hpp"

#include <json.hpp>

#include "meanfleet/demand.hpp"

namespace mf {

using nlohmann::json;

std::string CityGrid::to_json() const {
    json j;
    j["M"] = M_;
    j["meters_per_unit"] = meters_per_unit_;
    json mask = json::array();
    for (auto v : operational_) mask.push_back(v ? 1 : 0);
    j["operational_mask"] = std::move(mask);
    return j.dump();
}

CityGrid CityGrid::from_json(const std::string& text) {
    const json j = json::parse(text);
    const int M = j.at("M").get<int>();
    const double mpu = j.at("meters_per_unit").get<double>();
    std::vector<std::uint8_t> mask;
    for (const auto& v : j.at("operational_mask")) mask.push_back(v.get<int>() ? 1 : 0);
    return CityGrid(M, std::move(mask), mpu);
}

std::string DemandPattern::to_json() const {
    json j;
    j["schema_version"] = 1;
    j["T"] = T;
    j["n_zones"] = n_zones;
    j["rate"] = rate;
    json dists = json::array();
    for (const auto& d : dist) dists.push_back(d.mass);
    j["demand_dist"] = std::move(dists);
    j["od_shared"] = od_shared;
    json kernels = json::array();
    for (const auto& k : od) kernels.push_back(k);
    j["od_kernel"] = std::move(kernels);
    return j.dump();
}

DemandPattern DemandPattern::from_json(const std::string& text) {
    const json j = json::parse(text);
    DemandPattern p;
    p.T = j.at("T").get<int>();
    p.n_zones = j.at("n_zones").get<int>();
    p.rate = j.at("rate").get<std::vector<double>>();
    for (const auto& d : j.at("demand_dist"))
        p.dist.emplace_back(d.get<std::vector<double>>());
    p.od_shared = j.at("od_shared").get<bool>();
    for (const auto& k : j.at("od_kernel")) p.od.push_back(k.get<std::vector<double>>());
    return p;
}

}  // namespace mf
