#pragma once

// Serialization of populations, point configurations and sampler output.
// Doubles are written with 17 significant digits so files round-trip and
// reruns are byte-identical.  Column layouts are documented in docs/FORMATS.md.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "bbm/genealogy.hpp"
#include "bbm/point_config.hpp"
#include "bbm/population.hpp"
#include "bbm/spine.hpp"

namespace bbm {

std::string format_double(double x);
/// Inverse of format_double; accepts inf, -inf and nan.
double parse_double(const std::string& s);

/// JSON cannot hold inf/nan; they are stored as strings.
nlohmann::json json_number(double x);
double json_to_double(const nlohmann::json& j);

void write_population_csv(std::ostream& out, const Population& pop);
void write_population_binary(std::ostream& out, const Population& pop);
Population read_population_binary(std::istream& in);

void write_points_csv(std::ostream& out, const PointConfiguration& pc);
nlohmann::json points_to_json(const PointConfiguration& pc);
PointConfiguration points_from_json(const nlohmann::json& j);

void write_labeled_csv(std::ostream& out, const LabeledExtremalProcess& lep);
nlohmann::json labeled_to_json(const LabeledExtremalProcess& lep);

void write_cluster_samples_csv(std::ostream& out, const std::vector<ClusterSample>& samples);
void write_barrier_csv(std::ostream& out, const std::vector<BarrierEstimate>& rows);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace bbm
