#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "koopveh/matrix.hpp"

namespace koopveh::lifting {

/// phi(x) = r^2 log r with r = ||x - c||, continuous at r = 0.
double tps_rbf(const std::vector<double>& x, const std::vector<double>& c);

/// Thin-plate-spline dictionary with randomly placed centers. When
/// includes_state is set the raw state is appended to the features, so a
/// linear decode can reproduce x exactly.
struct TpsDictionary {
    std::vector<std::vector<double>> centers;
    bool includes_state = true;

    std::size_t output_dim(std::size_t state_dim) const {
        return centers.size() + (includes_state ? state_dim : 0);
    }
};

/// Centers drawn i.i.d. N(mean_c, std_c^2) per channel. std must be
/// strictly positive on every channel.
TpsDictionary sample_centers(const std::vector<double>& mean, const std::vector<double>& std,
                             std::size_t k, std::uint64_t seed, bool includes_state = true);

std::vector<double> lift(const std::vector<double>& x, const TpsDictionary& dict);

/// Psi = [phi; u].
std::vector<double> assemble_psi(const std::vector<double>& phi, const std::vector<double>& u);

/// Frozen random-feature map for ELM-EDMD: ReLU hidden layers whose weights
/// never change after construction.
struct ElmFeatureMap {
    std::vector<numkit::Matrix> weights;
    std::vector<std::vector<double>> biases;
    bool includes_state = true;

    std::size_t input_dim() const { return weights.empty() ? 0 : weights.front().cols(); }
    std::size_t output_dim() const;
};

/// Hidden dims mirror the encoder shape; final layer is linear.
ElmFeatureMap make_elm_map(std::size_t input_dim, const std::vector<std::size_t>& layer_dims,
                           std::uint64_t seed, bool includes_state = true);

std::vector<double> elm_lift(const std::vector<double>& x, const ElmFeatureMap& map);

void save_dictionary(const TpsDictionary& dict, const std::string& path);
TpsDictionary load_dictionary(const std::string& path);
void save_elm_map(const ElmFeatureMap& map, const std::string& path);
ElmFeatureMap load_elm_map(const std::string& path);

}  // namespace koopveh::lifting
