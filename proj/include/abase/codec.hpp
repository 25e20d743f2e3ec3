#pragma once

// JSON encodings of catalog records. Used for the store's table files and
// for machine-readable output of the CLI and HTTP API. Objects are keyed
// through std::map, so every encoding is key-ordered and canonical.

#include "json.hpp"

#include "abase/crawler.hpp"
#include "abase/model.hpp"
#include "abase/trace.hpp"

namespace abase {

using json = nlohmann::json;

void to_json(json& j, const Id& v);
void from_json(const json& j, Id& v);
void to_json(json& j, const Timestamp& v);
void from_json(const json& j, Timestamp& v);

json encode_attr(const AttrValue& v);
AttrValue decode_attr(const json& j);
json encode_attrs(const AttrMap& m);
AttrMap decode_attrs(const json& j);

void to_json(json& j, const UserRecord& v);
void from_json(const json& j, UserRecord& v);
void to_json(json& j, const PipelineVersion& v);
void from_json(const json& j, PipelineVersion& v);
void to_json(json& j, const PipelineRecord& v);
void from_json(const json& j, PipelineRecord& v);
void to_json(json& j, const AlgorithmRecord& v);
void from_json(const json& j, AlgorithmRecord& v);
void to_json(json& j, const PipelineStep& v);
void from_json(const json& j, PipelineStep& v);
void to_json(json& j, const FileRef& v);
void from_json(const json& j, FileRef& v);
void to_json(json& j, const DataItemRecord& v);
void from_json(const json& j, DataItemRecord& v);
void to_json(json& j, const DatasetRecord& v);
void from_json(const json& j, DatasetRecord& v);
void to_json(json& j, const InputValue& v);
void from_json(const json& j, InputValue& v);
void to_json(json& j, const OutputValue& v);
void from_json(const json& j, OutputValue& v);
void to_json(json& j, const AnalysisRecord& v);
void from_json(const json& j, AnalysisRecord& v);
void to_json(json& j, const AnnotationRecord& v);
void from_json(const json& j, AnnotationRecord& v);
void to_json(json& j, const ExecutionEvent& v);
void from_json(const json& j, ExecutionEvent& v);
void to_json(json& j, const PipelineSnapshot& v);
void from_json(const json& j, PipelineSnapshot& v);
void to_json(json& j, const StepViolation& v);
void to_json(json& j, const ChangeSet& v);

json encode_input_payload(const InputPayload& v);
InputPayload decode_input_payload(const json& j);

}  // namespace abase
