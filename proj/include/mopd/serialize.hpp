// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0
//
// JSON artifacts, content hashes and the CSV training log.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "mopd/evalharness.hpp"
#include "mopd/synthdata.hpp"
#include "mopd/trainer.hpp"

namespace mopd {

using Json = nlohmann::ordered_json;

// Parse failure naming the offending field.
class ConfigError : public Error {
public:
    using Error::Error;
};

Json to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j, const std::string& field = "matrix");

Json to_json(const Backbone& b);
Backbone backbone_from_json(const Json& j);

Json to_json(const TaskSpec& s);
// Fields missing from j keep their defaults unless listed in `required`.
TaskSpec task_spec_from_json(const Json& j, const std::vector<std::string>& required = {});

Json to_json(const SyntheticTask& t); // backbone excluded
SyntheticTask task_from_json(const Json& j, const Backbone& backbone);

Json to_json(const TeacherSpec& s);
TeacherSpec teacher_spec_from_json(const Json& j);

Json to_json(const TeacherPool& p);
TeacherPool pool_from_json(const Json& j);

Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);

Json to_json(const GatingNetwork& g);
GatingNetwork gating_from_json(const Json& j);

Json to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const Json& j);

Json to_json(const EvalReport& r);

// Hex FNV-1a 64 of the compact dump.
std::string content_hash(const Json& j);
std::string content_hash(const std::string& bytes);

std::string dump(const Json& j);
Json read_json_file(const std::filesystem::path& p);
void write_text_file(const std::filesystem::path& p, const std::string& text);
std::string read_text_file(const std::filesystem::path& p);

std::string training_log_csv(const std::vector<LogRow>& rows);

} // namespace mopd
