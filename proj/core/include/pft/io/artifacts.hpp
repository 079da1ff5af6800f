#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pft/io/checkpoint.hpp"
#include "pft/io/config.hpp"
#include "pft/pipeline/phases.hpp"

namespace pft {

// Typed views over Container files. Every file carries a "meta.kind" text
// entry and the "meta.manifest" hash of the run that wrote it.

void write_parameters(Container& c, const Network& net);
/// Copies stored values into an already shaped network; a missing entry or a
/// shape difference raises DimensionError.
void read_parameters(const Container& c, Network& net);

Container pack_source(const SourceModel& m, const std::string& manifest);
/// Rebuilds F and C. `expected_feat_dim` guards against loading a checkpoint
/// trained at a different width than the configuration asks for.
SourceModel unpack_source(const Container& c, std::size_t expected_feat_dim);

Container pack_translator(const PretrainedTranslator& t, const std::string& manifest);
PretrainedTranslator unpack_translator(const Container& c, std::size_t expected_feat_dim);

Container pack_personalizations(const std::vector<Personalization>& ps, const std::string& manifest);
std::vector<Personalization> unpack_personalizations(const Container& c, std::size_t expected_feat_dim);

/// Byte-level image of every parameter of F and C, for frozen-state checks.
std::vector<std::uint8_t> parameter_bytes(const FeatureExtractor& f, const Classifier& c);

/// The manifest hash a file was written under.
std::string manifest_of(const Container& c);
/// Raises DependencyError when the file is missing and ManifestError when
/// it belongs to another run.
Container load_artifact(const std::filesystem::path& path, const std::string& kind, const std::string& manifest);

// Dataset directory: manifest.json, profiles.bin and one
// subject_<id>.bin per subject.
void write_dataset_dir(const Dataset& data, const RunConfig& cfg, const std::filesystem::path& dir);
Dataset read_dataset_dir(const std::filesystem::path& dir, const std::string& manifest);

}  // namespace pft
