/*
Copyright 2026 The Sparklet Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <string>
#include <variant>

#include "sparklet/als.hpp"
#include "sparklet/bayes.hpp"
#include "sparklet/cluster.hpp"
#include "sparklet/glm.hpp"
#include "sparklet/io.hpp"
#include "sparklet/pca.hpp"
#include "sparklet/pipeline.hpp"
#include "sparklet/tree.hpp"

namespace sparklet {

/// Any model this library can train.
using AnyModel = std::variant<GLMModel, NBModel, KMeansModel, PCAModel, ALSModel, DecisionTree, Forest, PipelineModel>;

template <class Model>
void saveModel(const Model& m, const std::string& path) {
  saveArtifact(toArtifact(m), path);
}

inline ModelArtifact loadModel(const std::string& path) { return loadArtifact(path); }

inline AnyModel modelFromArtifact(const ModelArtifact& a) {
  switch (a.modelType) {
    case ModelType::Linear:
    case ModelType::Logistic: return glmFromArtifact(a);
    case ModelType::NaiveBayes: return naiveBayesFromArtifact(a);
    case ModelType::KMeans: return kmeansFromArtifact(a);
    case ModelType::Pca: return pcaFromArtifact(a);
    case ModelType::Als: return alsFromArtifact(a);
    case ModelType::Tree: return treeFromArtifact(a);
    case ModelType::Forest: return forestFromArtifact(a);
    case ModelType::Pipeline: return pipelineFromArtifact(a);
  }
  throw ParseError("unknown model type");
}

inline AnyModel loadAnyModel(const std::string& path) { return modelFromArtifact(loadArtifact(path)); }

inline ModelArtifact toArtifact(const AnyModel& m) {
  return std::visit([](const auto& model) { return toArtifact(model); }, m);
}

}  // namespace sparklet
