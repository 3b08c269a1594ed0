#pragma once

// Synthetic prediction streams: moving rectangles / ellipses over a background
// class, a corrupted softmax prediction of them, and a cell-state stack whose
// block-to-block drift grows on mispredicted segments.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cellstab/common.hpp"
#include "cellstab/tensor_io.hpp"

namespace cellstab {

struct SynthConfig {
    int height = 64;
    int width = 96;
    int num_classes = 5;
    int num_blocks = 10;
    int num_frames = 300;
    int num_objects = 8;
    int min_half_size = 4;
    int max_half_size = 10;
    double min_velocity = 0.0;  // px / frame
    double max_velocity = 1.5;
    double p_err = 0.15;        // per object and frame: predicted with a wrong class
    int jitter = 1;             // max boundary / position jitter, px
    double flash_prob = 0.05;   // per object and frame: missing from the prediction
    double cell_noise = 0.05;
    uint64_t seed = 42;

    void validate() const {
        auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (height < 3 || width < 3) throw Error("SynthConfig: height and width must be >= 3");
        if (num_classes < 2) throw Error("SynthConfig: num_classes must be >= 2");
        if (num_blocks < 2) throw Error("SynthConfig: num_blocks must be >= 2");
        if (num_frames < 1 || num_objects < 0) throw Error("SynthConfig: num_frames >= 1 and num_objects >= 0 required");
        if (min_half_size < 1 || max_half_size < min_half_size) throw Error("SynthConfig: invalid object size range");
        if (min_velocity < 0 || max_velocity < min_velocity) throw Error("SynthConfig: invalid velocity range");
        if (!prob(p_err) || !prob(flash_prob)) throw Error("SynthConfig: probabilities must lie in [0, 1]");
        if (jitter < 0 || cell_noise < 0) throw Error("SynthConfig: jitter and cell_noise must be >= 0");
    }
};

inline nlohmann::ordered_json to_json(const SynthConfig& c) {
    return {{"height", c.height},         {"width", c.width},
            {"num_classes", c.num_classes}, {"num_blocks", c.num_blocks},
            {"num_frames", c.num_frames},   {"num_objects", c.num_objects},
            {"min_half_size", c.min_half_size}, {"max_half_size", c.max_half_size},
            {"min_velocity", c.min_velocity}, {"max_velocity", c.max_velocity},
            {"p_err", c.p_err},             {"jitter", c.jitter},
            {"flash_prob", c.flash_prob},   {"cell_noise", c.cell_noise},
            {"seed", c.seed}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
    SynthConfig c;
    const auto defaults = to_json(c);
    for (const auto& [k, v] : j.items()) {
        if (!defaults.contains(k)) throw Error("synth config: unknown key '" + k + "'");
    }
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("height", c.height);
    get("width", c.width);
    get("num_classes", c.num_classes);
    get("num_blocks", c.num_blocks);
    get("num_frames", c.num_frames);
    get("num_objects", c.num_objects);
    get("min_half_size", c.min_half_size);
    get("max_half_size", c.max_half_size);
    get("min_velocity", c.min_velocity);
    get("max_velocity", c.max_velocity);
    get("p_err", c.p_err);
    get("jitter", c.jitter);
    get("flash_prob", c.flash_prob);
    get("cell_noise", c.cell_noise);
    get("seed", c.seed);
    c.validate();
    return c;
}

struct SynthFrame {
    LabelFrame ground_truth;
    LabelFrame prediction;  // argmax of softmax, by construction
    Tensor softmax;         // (H, W, c)
    Tensor cell_states;     // (H, W, l)
    std::vector<int> flipped_objects;
};

namespace detail {

struct SynthObject {
    int32_t class_id = 1;
    bool ellipse = false;
    double row = 0, col = 0;
    double v_row = 0, v_col = 0;
    int half_h = 4, half_w = 4;
};

inline bool covers(double cr, double cc, int hh, int hw, bool ellipse, int r, int c) {
    const double dr = (r - cr) / hh;
    const double dc = (c - cc) / hw;
    return ellipse ? dr * dr + dc * dc <= 1.0 : std::abs(dr) <= 1.0 && std::abs(dc) <= 1.0;
}

}  // namespace detail

class SynthStream {
public:
    explicit SynthStream(const SynthConfig& config) : cfg_(config), rng_(config.seed) {
        cfg_.validate();
        std::uniform_int_distribution<int> cls(1, cfg_.num_classes - 1);
        std::uniform_int_distribution<int> half(cfg_.min_half_size, cfg_.max_half_size);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        for (int k = 0; k < cfg_.num_objects; ++k) {
            detail::SynthObject o;
            o.class_id = cls(rng_);
            o.ellipse = u01(rng_) < 0.5;
            o.half_h = half(rng_);
            o.half_w = half(rng_);
            o.row = u01(rng_) * (cfg_.height - 1);
            o.col = u01(rng_) * (cfg_.width - 1);
            const double speed = cfg_.min_velocity + u01(rng_) * (cfg_.max_velocity - cfg_.min_velocity);
            const double angle = u01(rng_) * 2.0 * std::numbers::pi;
            o.v_row = speed * std::sin(angle);
            o.v_col = speed * std::cos(angle);
            objects_.push_back(o);
        }
    }

    const SynthConfig& config() const noexcept { return cfg_; }

    SynthFrame next() {
        const int H = cfg_.height, W = cfg_.width, C = cfg_.num_classes, L = cfg_.num_blocks;
        if (frame_ > 0) advance();
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        std::uniform_int_distribution<int> jit(-cfg_.jitter, cfg_.jitter);
        std::normal_distribution<double> normal(0.0, 1.0);

        SynthFrame out;
        out.ground_truth = LabelFrame(H, W, 0);
        LabelFrame gt_owner(H, W, -1);
        for (int k = 0; k < static_cast<int>(objects_.size()); ++k) {
            const auto& o = objects_[k];
            paint(out.ground_truth, gt_owner, k, o.row, o.col, o.half_h, o.half_w, o.ellipse, o.class_id);
        }

        // Per-object error events, confidence and cell-state amplitude.
        const std::size_t n = objects_.size();
        std::vector<double> confidence(n), amplitude(n);
        std::vector<int32_t> predicted_class(n);
        out.prediction = LabelFrame(H, W, 0);
        LabelFrame owner(H, W, -1);
        for (std::size_t k = 0; k < n; ++k) {
            const auto& o = objects_[k];
            const bool flash = u01(rng_) < cfg_.flash_prob;
            const bool flip = u01(rng_) < cfg_.p_err;
            const int dr = jit(rng_), dc = jit(rng_), ds = jit(rng_);
            const double conf_draw = u01(rng_);
            const double amp_draw = u01(rng_);
            const int jitter_total = std::abs(dr) + std::abs(dc) + std::abs(ds);
            predicted_class[k] = o.class_id;
            if (flip) {
                if (C >= 3) {
                    const int shift = 1 + static_cast<int>(u01(rng_) * (C - 2));
                    predicted_class[k] = 1 + (o.class_id - 1 + std::min(shift, C - 2)) % (C - 1);
                } else {
                    predicted_class[k] = 0;
                }
                confidence[k] = 0.55 + 0.33 * conf_draw;
                amplitude[k] = 1.8 + 1.4 * amp_draw;
                out.flipped_objects.push_back(static_cast<int>(k));
            } else {
                confidence[k] = 0.72 + 0.25 * conf_draw - 0.02 * jitter_total;
                amplitude[k] = (0.8 + 0.4 * amp_draw) * (1.0 + 0.25 * jitter_total);
            }
            if (flash) continue;
            paint(out.prediction, owner, static_cast<int>(k), o.row + dr, o.col + dc, std::max(2, o.half_h + ds),
                  std::max(2, o.half_w + ds), o.ellipse, predicted_class[k]);
        }
        const double background_conf = 0.9 + 0.08 * u01(rng_);
        const double background_amp = 0.8 + 0.4 * u01(rng_);

        out.softmax = make_tensor({uint32_t(H), uint32_t(W), uint32_t(C)});
        out.cell_states = make_tensor({uint32_t(H), uint32_t(W), uint32_t(L)});
        constexpr double rho = 0.7;
        const double innovation = std::sqrt(1.0 - rho * rho);
        std::vector<double> probs(C);
        for (int r = 0; r < H; ++r) {
            for (int c = 0; c < W; ++c) {
                const int32_t p = out.prediction(r, c);
                const int k = owner(r, c);

                // Chebyshev distance to the nearest differently labelled pixel (capped).
                int dist = 4;
                int32_t neighbour_class = -1;
                for (int rad = 1; rad <= 3 && dist == 4; ++rad) {
                    for (int rr = r - rad; rr <= r + rad && dist == 4; ++rr) {
                        for (int cc = c - rad; cc <= c + rad; ++cc) {
                            if (std::max(std::abs(rr - r), std::abs(cc - c)) != rad || !out.prediction.contains(rr, cc)) continue;
                            if (out.prediction(rr, cc) != p) {
                                dist = rad;
                                neighbour_class = out.prediction(rr, cc);
                                break;
                            }
                        }
                    }
                }
                const double falloff = dist >= 4 ? 1.0 : 1.0 / (1.0 + std::exp(-(dist - 1.5) / 0.5));

                const double seg_conf = k >= 0 ? confidence[k] : background_conf;
                const double conf =
                    std::clamp(0.5 + (seg_conf - 0.5) * falloff + 0.02 * (u01(rng_) - 0.5), 0.5, 0.995);
                int32_t second = neighbour_class;
                if (second < 0) {
                    const int32_t truth = out.ground_truth(r, c);
                    second = truth != p ? truth : (p + 1) % C;
                }
                const double rest = 1.0 - conf;
                std::fill(probs.begin(), probs.end(), C > 2 ? 0.3 * rest / (C - 2) : 0.0);
                probs[p] = conf;
                probs[second] = C > 2 ? 0.7 * rest : rest;
                for (int y = 0; y < C; ++y) out.softmax.values[(std::size_t(r) * W + c) * C + y] = static_cast<float>(probs[y]);

                const double scene = 0.5 * std::sin(2.0 * std::numbers::pi * (double(r) / H + 0.02 * frame_)) *
                                         std::cos(2.0 * std::numbers::pi * double(c) / W) +
                                     0.1 * p;
                const double amp = (k >= 0 ? amplitude[k] : background_amp) * (1.0 + 0.5 * (1.0 - falloff));
                float* cell = out.cell_states.values.data() + (std::size_t(r) * W + c) * L;
                double drift = 0.0;
                cell[0] = static_cast<float>(scene);
                for (int b = 1; b < L; ++b) {
                    drift = rho * drift + innovation * cfg_.cell_noise * amp * normal(rng_);
                    cell[b] = static_cast<float>(scene + drift);
                }
            }
        }
        ++frame_;
        return out;
    }

private:
    static void paint(LabelFrame& labels, LabelFrame& owner, int k, double cr, double cc, int hh, int hw, bool ellipse,
                      int32_t cls) {
        const int r0 = std::max(0, static_cast<int>(std::floor(cr - hh)));
        const int r1 = std::min(labels.rows() - 1, static_cast<int>(std::ceil(cr + hh)));
        const int c0 = std::max(0, static_cast<int>(std::floor(cc - hw)));
        const int c1 = std::min(labels.cols() - 1, static_cast<int>(std::ceil(cc + hw)));
        for (int r = r0; r <= r1; ++r) {
            for (int c = c0; c <= c1; ++c) {
                if (detail::covers(cr, cc, hh, hw, ellipse, r, c)) {
                    labels(r, c) = cls;
                    owner(r, c) = k;
                }
            }
        }
    }

    void advance() {
        for (auto& o : objects_) {
            o.row += o.v_row;
            o.col += o.v_col;
            if (o.row < 0 || o.row > cfg_.height - 1) {
                o.v_row = -o.v_row;
                o.row = std::clamp(o.row, 0.0, double(cfg_.height - 1));
            }
            if (o.col < 0 || o.col > cfg_.width - 1) {
                o.v_col = -o.v_col;
                o.col = std::clamp(o.col, 0.0, double(cfg_.width - 1));
            }
        }
    }

    SynthConfig cfg_;
    std::mt19937_64 rng_;
    std::vector<detail::SynthObject> objects_;
    int frame_ = 0;
};

/// Writes num_frames frames plus manifest.json into out_dir.
inline StreamManifest generate_stream(const SynthConfig& config, const std::filesystem::path& out_dir) {
    config.validate();
    std::filesystem::create_directories(out_dir);
    StreamManifest m;
    m.height = config.height;
    m.width = config.width;
    m.num_classes = config.num_classes;
    m.num_blocks = config.num_blocks;
    m.num_frames = config.num_frames;
    m.directory = out_dir;
    m.class_names.push_back("background");
    for (int y = 1; y < config.num_classes; ++y) m.class_names.push_back("object_" + std::to_string(y));
    m.extra["generator"] = to_json(config);
    SynthStream stream(config);
    char name[64];
    for (int t = 0; t < config.num_frames; ++t) {
        const SynthFrame f = stream.next();
        FramePaths paths;
        std::snprintf(name, sizeof name, "frame_%04d_softmax.tmsg", t);
        paths.softmax = name;
        std::snprintf(name, sizeof name, "frame_%04d_cells.tmsg", t);
        paths.cell_states = name;
        std::snprintf(name, sizeof name, "frame_%04d_gt.tmsg", t);
        paths.ground_truth = name;
        write_tensor(out_dir / paths.softmax, f.softmax);
        write_tensor(out_dir / paths.cell_states, f.cell_states);
        write_tensor(out_dir / paths.ground_truth, label_tensor(f.ground_truth));
        m.frames.push_back(std::move(paths));
    }
    write_manifest(out_dir / "manifest.json", m);
    return m;
}

}  // namespace cellstab
