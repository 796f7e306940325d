#pragma once

// Entry points behind the `pipeline` subcommands. Each returns the process exit code
// (0 success, 1 partial failure) and throws on fatal errors.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cer::commands {

namespace fs = std::filesystem;

struct ExtractArgs {
    /// A video file, or a directory whose video files are all extracted.
    fs::path video;
    fs::path out;
};
int extract(const ExtractArgs& a);

struct FacesArgs {
    fs::path frames;
    std::string detector = "yunet";
    fs::path out;
    /// Training config whose `align` section sets crop size, margin and template.
    fs::path config;
};
int faces(const FacesArgs& a);

struct AnnotateArgs {
    fs::path manifest;
    std::string backend = "http";
    /// Reply script for the mock backend.
    fs::path mock_script;
    std::string model;
    std::string base_url;
    std::string api_key_env = "ANTHROPIC_API_KEY";
    std::string prompt = "1";
    fs::path cache;
    fs::path out;
    int sample_every = 1;
    int max_in_flight = 4;
    double requests_per_second = 2.0;
    int max_attempts = 5;
};
int annotate(const AnnotateArgs& a);

struct TrainArgs {
    fs::path data;
    std::string layout = "folder_per_class";
    /// "all" or a comma-separated subset of the configured models.
    std::string models = "all";
    fs::path config;
    fs::path out;
};
int train(const TrainArgs& a);

struct FinetuneArgs {
    fs::path pseudo;
    fs::path faces;
    fs::path from;
    fs::path out;
    /// Defaults to the config stored with the stage-1 run.
    fs::path config;
    /// Ground-truth data for validation; defaults to the stage-1 data.
    fs::path data;
    std::string layout;
};
int finetune(const FinetuneArgs& a);

struct PredictArgs {
    fs::path manifest;
    fs::path faces;
    fs::path models;
    fs::path out;
    fs::path dump_probs;
    int batch_size = 32;
};
int predict(const PredictArgs& a);

struct EvaluateArgs {
    fs::path pred;
    fs::path truth;
    /// Optional JSON report.
    fs::path json_out;
};
int evaluate(const EvaluateArgs& a);

struct SynthArgs {
    /// "labeled", "videos" or "mock-script".
    std::string kind;
    fs::path out;
    int per_class = 120;
    int videos = 7;
    int frames = 12;
    int size = 64;
    std::uint64_t seed = 0;
    /// For mock-script: a face manifest and the truth CSV written with the videos.
    fs::path manifest;
    fs::path truth;
};
int synth(const SynthArgs& a);

}  // namespace cer::commands
