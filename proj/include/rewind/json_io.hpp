#pragma once

#include "rewind/codec.hpp"
#include "rewind/operations.hpp"
#include "rewind/provenance.hpp"
#include "rewind/trace.hpp"

namespace rwd {

json to_json(const ThreadKey& key);
ThreadKey thread_key_from_json(const json& j);

json to_json(const EventRef& ref);
EventRef event_ref_from_json(const json& j);

json to_json(const NetworkTuple& tuple);
NetworkTuple network_tuple_from_json(const json& j);

json to_json(const Anchor& anchor);
Anchor anchor_from_json(const json& j);

json to_json(const DBOperation& op);
DBOperation db_operation_from_json(const json& j);

json to_json(const FileOperation& op);
FileOperation file_operation_from_json(const json& j);

json to_json(const ExternalInteraction& x);
ExternalInteraction external_interaction_from_json(const json& j);

}  // namespace rwd
