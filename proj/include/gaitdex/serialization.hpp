#pragma once

#include <nlohmann/json.hpp>

#include "gaitdex/fpca.hpp"
#include "gaitdex/mfpca.hpp"
#include "gaitdex/pipeline.hpp"

namespace gaitdex {

// JSON encodings. Doubles are written in shortest round-trip form, so a
// save/load cycle reproduces every value bit for bit.

nlohmann::json to_json(const FpcaModel& model);
FpcaModel fpca_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const MfpcaModel& model);
MfpcaModel mfpca_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const PipelineModel& model);
PipelineModel pipeline_from_json(const nlohmann::json& doc);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& doc, const char* what);
nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& doc, const char* what);

}  // namespace gaitdex
