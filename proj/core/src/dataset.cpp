#include "koopveh/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "koopveh/matrix.hpp"

namespace koopveh::dataset {

void NormalizationStats::validate() const {
    for (std::size_t c = 0; c < min.size(); ++c)
        if (!(max[c] > min[c]))
            throw std::invalid_argument("NormalizationStats: max must exceed min per channel");
}

NormalizationStats compute_stats(const std::vector<plant::Episode>& episodes) {
    if (episodes.empty()) throw std::invalid_argument("compute_stats: no episodes");
    NormalizationStats s;
    s.min.fill(std::numeric_limits<double>::infinity());
    s.max.fill(-std::numeric_limits<double>::infinity());
    for (const auto& ep : episodes) {
        for (std::size_t k = 0; k < ep.length(); ++k) {
            const double ch[5] = {ep.states[k].v_x, ep.states[k].v_y, ep.states[k].yaw_rate,
                                  ep.controls[k].steer, ep.controls[k].engine};
            for (std::size_t c = 0; c < 5; ++c) {
                s.min[c] = std::min(s.min[c], ch[c]);
                s.max[c] = std::max(s.max[c], ch[c]);
            }
        }
    }
    // Constant channels would make the map singular; give them unit width.
    for (std::size_t c = 0; c < 5; ++c)
        if (!(s.max[c] > s.min[c])) s.max[c] = s.min[c] + 1.0;
    return s;
}

double normalize(double x, const NormalizationStats& s, std::size_t channel) {
    return (x - s.min[channel]) / (s.max[channel] - s.min[channel]);
}

double denormalize(double xn, const NormalizationStats& s, std::size_t channel) {
    return s.min[channel] + xn * (s.max[channel] - s.min[channel]);
}

std::vector<double> normalize_state(const plant::VehicleState& x, const NormalizationStats& s) {
    return {normalize(x.v_x, s, 0), normalize(x.v_y, s, 1), normalize(x.yaw_rate, s, 2)};
}

plant::VehicleState denormalize_state(const std::vector<double>& xn,
                                      const NormalizationStats& s) {
    if (xn.size() < kStateDim) throw std::invalid_argument("denormalize_state: short vector");
    return {denormalize(xn[0], s, 0), denormalize(xn[1], s, 1), denormalize(xn[2], s, 2)};
}

std::vector<double> normalize_control(const plant::ControlInput& u,
                                      const NormalizationStats& s) {
    return {normalize(u.steer, s, 3), normalize(u.engine, s, 4)};
}

plant::ControlInput denormalize_control(const std::vector<double>& un,
                                        const NormalizationStats& s) {
    if (un.size() != kControlDim) throw std::invalid_argument("denormalize_control: size");
    return {denormalize(un[0], s, 3), denormalize(un[1], s, 4)};
}

void save_stats(const NormalizationStats& s, const std::string& path) {
    nlohmann::json j;
    j["min"] = s.min;
    j["max"] = s.max;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_stats: cannot open " + path);
    out << j.dump(2) << "\n";
}

NormalizationStats load_stats(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_stats: cannot open " + path);
    nlohmann::json j;
    in >> j;
    NormalizationStats s;
    const auto mn = j.at("min").get<std::vector<double>>();
    const auto mx = j.at("max").get<std::vector<double>>();
    if (mn.size() != s.min.size() || mx.size() != s.max.size())
        throw std::runtime_error("load_stats: wrong channel count in " + path);
    std::copy(mn.begin(), mn.end(), s.min.begin());
    std::copy(mx.begin(), mx.end(), s.max.begin());
    s.validate();
    return s;
}

Split split_episodes(std::size_t episode_count, std::uint64_t seed) {
    if (episode_count < 5)
        throw std::invalid_argument("split_episodes: need at least 5 episodes");
    std::vector<std::size_t> order(episode_count);
    std::iota(order.begin(), order.end(), 0);
    numkit::Rng rng(seed);
    for (std::size_t i = episode_count; i > 1; --i)
        std::swap(order[i - 1], order[rng.index(i)]);

    const auto part = [&](double frac) {
        return std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(frac * static_cast<double>(episode_count))));
    };
    const std::size_t n_test = part(0.05);
    const std::size_t n_val = part(0.05);
    Split sp;
    sp.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    sp.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test),
                         order.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
    sp.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), order.end());
    std::sort(sp.train.begin(), sp.train.end());
    std::sort(sp.validation.begin(), sp.validation.end());
    std::sort(sp.test.begin(), sp.test.end());
    return sp;
}

std::vector<Window> window_sequences(const plant::Episode& episode,
                                     const NormalizationStats& stats, std::size_t p,
                                     std::size_t tau, std::uint64_t seed) {
    if (p < 1 || tau < 1) throw std::invalid_argument("window_sequences: p, tau >= 1");
    std::vector<Window> out;
    const std::size_t len = episode.length();
    if (len < tau * (p + 1)) return out;  // too short; caller may warn

    numkit::Rng rng(seed);
    const std::size_t offset = rng.index(p + 1);  // uniform in [0, p]

    // Concatenated state at index j is [x_j; ...; x_{j+tau-1}]; a window needs
    // indices up to start + p + tau - 1.
    auto concat_state = [&](std::size_t j) {
        std::vector<double> v;
        v.reserve(kStateDim * tau);
        for (std::size_t t = 0; t < tau; ++t) {
            const auto xs = normalize_state(episode.states[j + t], stats);
            v.insert(v.end(), xs.begin(), xs.end());
        }
        return v;
    };

    for (std::size_t start = offset; start + p + tau - 1 < len; ++start) {
        Window w;
        w.x0 = concat_state(start);
        w.u_seq.reserve(p);
        w.x_seq.reserve(p);
        for (std::size_t i = 0; i < p; ++i) {
            // The control advancing the newest constituent of the concat state.
            w.u_seq.push_back(normalize_control(episode.controls[start + i + tau - 1], stats));
            w.x_seq.push_back(concat_state(start + i + 1));
        }
        out.push_back(std::move(w));
    }
    return out;
}

void write_csv(const plant::Episode& episode, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path);
    out.precision(17);
    out << "t,v_x,v_y,yaw_rate,steer,engine\n";
    for (std::size_t k = 0; k < episode.length(); ++k) {
        out << static_cast<double>(k) * episode.dt << ',' << episode.states[k].v_x << ','
            << episode.states[k].v_y << ',' << episode.states[k].yaw_rate << ','
            << episode.controls[k].steer << ',' << episode.controls[k].engine << '\n';
    }
}

plant::Episode read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_csv: empty file " + path);
    plant::Episode ep;
    std::vector<double> times;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        double vals[6];
        std::string tok;
        for (int c = 0; c < 6; ++c) {
            if (!std::getline(ss, tok, ','))
                throw std::runtime_error("read_csv: malformed row at line " +
                                         std::to_string(lineno) + " in " + path);
            try {
                vals[c] = std::stod(tok);
            } catch (const std::exception&) {
                throw std::runtime_error("read_csv: bad number at line " +
                                         std::to_string(lineno) + " in " + path);
            }
        }
        times.push_back(vals[0]);
        ep.states.push_back({vals[1], vals[2], vals[3]});
        ep.controls.push_back({vals[4], vals[5]});
    }
    if (ep.states.empty()) throw std::runtime_error("read_csv: no data rows in " + path);
    ep.dt = times.size() >= 2 ? times[1] - times[0] : 0.01;
    return ep;
}

}  // namespace koopveh::dataset
