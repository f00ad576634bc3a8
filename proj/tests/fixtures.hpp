#pragma once

// Lazily built tiny-pipeline fixtures shared across test files. Everything is
// seeded and deterministic; the first test that needs a stage pays its cost.

#include "tact/forecaster.hpp"
#include "tact/sae.hpp"
#include "tact/synthgrid.hpp"

namespace fixtures {

inline tact::WorldParams world_params() {
    tact::WorldParams p;
    p.height = 16;
    p.width = 16;
    p.channels = 3;
    p.patch = 4;
    p.timesteps = 420;
    p.seed = 97;
    p.event_duty = 0.3;
    p.event_rarity = 0.025;
    p.event_radius = 2.0;
    p.event_depth = 6.0;
    return p;
}

inline tact::ForecasterConfig forecaster_config() {
    tact::ForecasterConfig cfg;
    cfg.height = 16;
    cfg.width = 16;
    cfg.channels = 3;
    cfg.patch = 4;
    cfg.dim = 32;
    cfg.layers = 4;
    cfg.tap_layer = 2;
    cfg.ffn_dim = 64;
    return cfg;
}

inline tact::SaeConfig sae_config() {
    tact::SaeConfig cfg;
    cfg.input_dim = 32;
    cfg.concepts = 256;
    cfg.k = 8;
    cfg.k_aux = 16;
    cfg.dead_horizon = 60;
    return cfg;
}

inline const tact::Dataset& dataset() {
    static const tact::Dataset ds = tact::generate_dataset(world_params(), 0.7, 0.15);
    return ds;
}

inline const tact::ForecastModel& trained_forecaster() {
    static const tact::ForecastModel m = [] {
        tact::ForecastModel model = tact::ForecastModel::init(forecaster_config(), 97);
        tact::train_base(model, dataset(), 400, 2e-3f, 4, 97);
        return model;
    }();
    return m;
}

inline const tact::ActivationDump& train_activations() {
    static const tact::ActivationDump d =
        tact::dump_activations(trained_forecaster(), dataset(), 0, dataset().train_end,
                               forecaster_config().tap_layer);
    return d;
}

inline const tact::ActivationDump& test_activations() {
    static const tact::ActivationDump d =
        tact::dump_activations(trained_forecaster(), dataset(), dataset().calib_end, dataset().total(),
                               forecaster_config().tap_layer);
    return d;
}

inline const tact::SaeModel& trained_sae() {
    static const tact::SaeModel m = [] {
        tact::SaeModel sae = tact::SaeModel::init(sae_config(), 97);
        tact::train_sae(sae, train_activations(), 900, 2e-3f, 128, 97);
        return sae;
    }();
    return m;
}

} // namespace fixtures
