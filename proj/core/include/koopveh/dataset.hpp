#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "koopveh/plant.hpp"

namespace koopveh::dataset {

inline constexpr std::size_t kStateDim = 3;
inline constexpr std::size_t kControlDim = 2;

/// Per-channel min/max for the 3 state channels followed by the 2 control
/// channels. normalize maps min -> 0 and max -> 1.
struct NormalizationStats {
    std::array<double, kStateDim + kControlDim> min{};
    std::array<double, kStateDim + kControlDim> max{};

    void validate() const;
};

NormalizationStats compute_stats(const std::vector<plant::Episode>& episodes);

double normalize(double x, const NormalizationStats& s, std::size_t channel);
double denormalize(double xn, const NormalizationStats& s, std::size_t channel);

std::vector<double> normalize_state(const plant::VehicleState& x, const NormalizationStats& s);
plant::VehicleState denormalize_state(const std::vector<double>& xn,
                                      const NormalizationStats& s);
std::vector<double> normalize_control(const plant::ControlInput& u,
                                      const NormalizationStats& s);
plant::ControlInput denormalize_control(const std::vector<double>& un,
                                        const NormalizationStats& s);

void save_stats(const NormalizationStats& s, const std::string& path);  // JSON sidecar
NormalizationStats load_stats(const std::string& path);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

/// Deterministic 90/5/5 split (at least one episode per part). 40 episodes
/// give sizes (36, 2, 2).
Split split_episodes(std::size_t episode_count, std::uint64_t seed);

/// One training window: a tau-concatenated start state, p controls, and p
/// tau-concatenated targets, all normalized.
struct Window {
    std::vector<double> x0;                   // n * tau
    std::vector<std::vector<double>> u_seq;   // p entries of length m
    std::vector<std::vector<double>> x_seq;   // p entries of length n * tau
};

/// All windows of an episode at stride 1, starting from an offset drawn
/// uniformly in [0, p] (redrawn per call, i.e. per epoch). Episodes shorter
/// than tau * (p + 1) yield no windows.
std::vector<Window> window_sequences(const plant::Episode& episode,
                                     const NormalizationStats& stats, std::size_t p,
                                     std::size_t tau, std::uint64_t seed);

/// CSV columns: t, v_x, v_y, yaw_rate, steer, engine; one header row;
/// 17 significant digits.
void write_csv(const plant::Episode& episode, const std::string& path);
plant::Episode read_csv(const std::string& path);

}  // namespace koopveh::dataset
