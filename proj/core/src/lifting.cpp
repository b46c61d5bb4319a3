#include "koopveh/lifting.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace koopveh::lifting {

double tps_rbf(const std::vector<double>& x, const std::vector<double>& c) {
    if (x.size() != c.size()) throw std::invalid_argument("tps_rbf: dimension mismatch");
    double r2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - c[i];
        r2 += d * d;
    }
    if (r2 == 0.0) return 0.0;  // limit of r^2 log r
    return 0.5 * r2 * std::log(r2);
}

TpsDictionary sample_centers(const std::vector<double>& mean, const std::vector<double>& std,
                             std::size_t k, std::uint64_t seed, bool includes_state) {
    if (k < 1) throw std::invalid_argument("sample_centers: k >= 1");
    if (mean.size() != std.size())
        throw std::invalid_argument("sample_centers: mean/std length mismatch");
    for (double s : std)
        if (!(s > 0.0))
            throw std::invalid_argument("sample_centers: std must be positive per channel");
    numkit::Rng rng(seed);
    TpsDictionary dict;
    dict.includes_state = includes_state;
    dict.centers.resize(k);
    for (auto& c : dict.centers) {
        c.resize(mean.size());
        for (std::size_t j = 0; j < mean.size(); ++j) c[j] = rng.gauss(mean[j], std[j]);
    }
    return dict;
}

std::vector<double> lift(const std::vector<double>& x, const TpsDictionary& dict) {
    std::vector<double> phi;
    phi.reserve(dict.output_dim(x.size()));
    if (dict.includes_state) phi.insert(phi.end(), x.begin(), x.end());
    for (const auto& c : dict.centers) phi.push_back(tps_rbf(x, c));
    return phi;
}

std::vector<double> assemble_psi(const std::vector<double>& phi, const std::vector<double>& u) {
    std::vector<double> psi = phi;
    psi.insert(psi.end(), u.begin(), u.end());
    return psi;
}

std::size_t ElmFeatureMap::output_dim() const {
    if (weights.empty()) return 0;
    return weights.back().rows() + (includes_state ? input_dim() : 0);
}

ElmFeatureMap make_elm_map(std::size_t input_dim, const std::vector<std::size_t>& layer_dims,
                           std::uint64_t seed, bool includes_state) {
    if (layer_dims.empty()) throw std::invalid_argument("make_elm_map: no layers");
    numkit::Rng rng(seed);
    ElmFeatureMap map;
    map.includes_state = includes_state;
    std::size_t prev = input_dim;
    for (std::size_t dim : layer_dims) {
        const double f = 1.0 / std::sqrt(static_cast<double>(prev));
        numkit::Matrix w(dim, prev);
        std::vector<double> b(dim);
        for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-f, f);
        for (double& x : b) x = rng.uniform(-f, f);
        map.weights.push_back(std::move(w));
        map.biases.push_back(std::move(b));
        prev = dim;
    }
    return map;
}

std::vector<double> elm_lift(const std::vector<double>& x, const ElmFeatureMap& map) {
    if (map.weights.empty() || x.size() != map.input_dim())
        throw std::invalid_argument("elm_lift: dimension mismatch");
    std::vector<double> h = x;
    for (std::size_t l = 0; l < map.weights.size(); ++l) {
        std::vector<double> z = numkit::matvec(map.weights[l], h);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += map.biases[l][i];
        if (l + 1 < map.weights.size())
            for (double& v : z) v = std::max(v, 0.0);  // ReLU hidden, linear last
        h = std::move(z);
    }
    if (map.includes_state) {
        std::vector<double> out = x;
        out.insert(out.end(), h.begin(), h.end());
        return out;
    }
    return h;
}

void save_dictionary(const TpsDictionary& dict, const std::string& path) {
    nlohmann::json j;
    j["type"] = "tps";
    j["includes_state"] = dict.includes_state;
    j["centers"] = dict.centers;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_dictionary: cannot open " + path);
    out << j.dump(2) << "\n";
}

TpsDictionary load_dictionary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dictionary: cannot open " + path);
    nlohmann::json j;
    in >> j;
    TpsDictionary dict;
    dict.includes_state = j.at("includes_state").get<bool>();
    dict.centers = j.at("centers").get<std::vector<std::vector<double>>>();
    return dict;
}

void save_elm_map(const ElmFeatureMap& map, const std::string& path) {
    nlohmann::json j;
    j["type"] = "elm";
    j["includes_state"] = map.includes_state;
    for (std::size_t l = 0; l < map.weights.size(); ++l) {
        nlohmann::json layer;
        layer["rows"] = map.weights[l].rows();
        layer["cols"] = map.weights[l].cols();
        layer["w"] = std::vector<double>(map.weights[l].data(),
                                         map.weights[l].data() + map.weights[l].size());
        layer["b"] = map.biases[l];
        j["layers"].push_back(layer);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_elm_map: cannot open " + path);
    out << j.dump() << "\n";
}

ElmFeatureMap load_elm_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_elm_map: cannot open " + path);
    nlohmann::json j;
    in >> j;
    ElmFeatureMap map;
    map.includes_state = j.at("includes_state").get<bool>();
    for (const auto& layer : j.at("layers")) {
        const auto rows = layer.at("rows").get<std::size_t>();
        const auto cols = layer.at("cols").get<std::size_t>();
        map.weights.emplace_back(rows, cols, layer.at("w").get<std::vector<double>>());
        map.biases.push_back(layer.at("b").get<std::vector<double>>());
    }
    return map;
}

}  // namespace koopveh::lifting
