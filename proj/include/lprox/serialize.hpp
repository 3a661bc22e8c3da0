#pragma once

#include "lprox/constraints.hpp"
#include "lprox/decoder.hpp"
#include "lprox/schedule.hpp"
#include "lprox/score.hpp"

#include <json.hpp>

#include <string>

namespace lprox {

using Json = nlohmann::ordered_json;

Json vec_to_json(const Vec& v);
Json mat_to_json(const Mat& m);  // array of rows
Vec vec_from_json(const Json& j, const std::string& field);
Mat mat_from_json(const Json& j, const std::string& field);

Json schedule_to_json(const NoiseSchedule& s);
NoiseSchedule schedule_from_json(const Json& j);

/// Self-describing score document; analytic kinds round-trip value-exactly.
Json score_to_json(const ScoreField& f);
ScoreField score_from_json(const Json& j);

/// Decoder document, including the cached Lipschitz bound and probe count.
Json decoder_to_json(const DecoderMap& d);
DecoderMap decoder_from_json(const Json& j);

Json centroid_to_json(const CentroidModel& m);
CentroidModel centroid_from_json(const Json& j);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

/// Line and column (1-based) of a byte offset in `text`.
std::pair<int, int> line_column(const std::string& text, std::size_t offset);

}  // namespace lprox
