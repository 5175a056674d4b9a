#pragma once

#include <string>

#include "aggrank/corpus.hpp"
#include "aggrank/trainer.hpp"

namespace aggrank::config {

// The single on-disk configuration: three sections, every key optional,
// unknown keys rejected. The reward's grade ceiling is bound to the
// dataset schema at load time by the commands, not stored in the file.
struct FileConfig {
  corpus::SynthConfig synth;
  train::TrainConfig train;
  corpus::ClickModelConfig click_model;
};

FileConfig defaults();
FileConfig parse(const std::string& text, const std::string& where);
FileConfig load(const std::string& path);

// Complete round-trippable dump; load(dump(c)) == c.
std::string dump(const FileConfig& config);

}  // namespace aggrank::config
