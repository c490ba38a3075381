#pragma once

#include "robustq/dataset.hpp"
#include "robustq/model.hpp"
#include "robustq/trainer.hpp"

namespace robustq::fixture {

inline const DataSplit& blobs() {
    static const DataSplit split = [] {
        BlobsConfig b;
        b.samples = 4000;
        return split_dataset(make_blobs(b), 0.25, 256, 1);
    }();
    return split;
}

inline ModelSpec two_layer_mlp() {
    ModelSpec s;
    s.widths = {16, 64, 4};
    return s;
}

inline TrainConfig quick(int epochs = 30, std::uint64_t seed = 1) {
    TrainConfig c;
    c.epochs = epochs;
    c.seed = seed;
    return c;
}

inline const TrainResult& trained_mlp() {
    static const TrainResult r = train(two_layer_mlp(), blobs(), quick());
    return r;
}

}  // namespace robustq::fixture
