#pragma once

// Model files: JSON holding the fitted hyperparameters, the anchor, the
// multistep order and a reference (path + content hash) to the training CSV.
// Loading re-reads the dataset and rebuilds the posterior.

#include <string>

#include "ebcbf/sim.hpp"

namespace ebcbf {

struct ModelFile {
    Hyperparams hp;
    Anchor anchor;
    int order{2};
    double gap_factor{10.0};
    std::string dataset_path;
    std::string dataset_sha1;
    MassSpring system;
    double nlml{0.0};
};

std::string model_json(const ModelFile& m);
ModelFile parse_model_json(const std::string& text);

/// Reads the model file and its dataset (relative paths resolve against the model's directory).
ModelFile read_model_file(const std::string& path, Dataset* data);
TrainedGp build_model(const ModelFile& m, const Dataset& data);
TrainedGp load_model(const std::string& path);

}  // namespace ebcbf
