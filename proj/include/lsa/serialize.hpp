#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "lsa/tensor.hpp"

namespace lsa {

inline nlohmann::json tensor_to_json(const Tensor& t) {
    return nlohmann::json{{"shape", t.shape}, {"data", t.data}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
    return Tensor::from(j.at("shape").get<std::vector<std::size_t>>(),
                        j.at("data").get<std::vector<double>>());
}

inline void save_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << j.dump(1) << "\n";
}

inline nlohmann::json load_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open for read: " + path);
    return nlohmann::json::parse(f);
}

}  // namespace lsa
