#pragma once
#include <string>

#include "credlab/data.hpp"
#include "credlab/network.hpp"
#include "credlab/trees.hpp"

namespace credlab {

// Versioned JSON documents. Network weights are flattened row-major; tree
// ensembles store flattened pre-order node arrays. Models carry the scaling
// parameters they were trained with.

void save_network(const NetworkModel& model, const ScalingParams& scaling,
                  const std::string& path);
std::pair<NetworkModel, ScalingParams> load_network(const std::string& path);

void save_tree_ensemble(const TreeEnsembleModel& model, const ScalingParams& scaling,
                        const std::string& path);
std::pair<TreeEnsembleModel, ScalingParams> load_tree_ensemble(const std::string& path);

void save_scaling(const ScalingParams& params, const std::string& path);
ScalingParams load_scaling(const std::string& path);

void save_transition_matrix(const TransitionMatrix& matrix, const std::string& path);
TransitionMatrix load_transition_matrix(const std::string& path);

}  // namespace credlab
