#include "cer/commands.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <iostream>

using namespace cer;

int main(int argc, char** argv) {
    CLI::App app{"Compound facial expression recognition pipeline"};
    app.require_subcommand(1);
    bool verbose = false, quiet = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");
    app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

    commands::ExtractArgs ex;
    auto* c_extract = app.add_subcommand("extract", "Decode video frames to PNG files");
    c_extract->add_option("--video", ex.video, "Video file or directory of videos")->required();
    c_extract->add_option("--out", ex.out, "Output frame directory")->required();

    commands::FacesArgs fa;
    auto* c_faces = app.add_subcommand("faces", "Detect, select and align one face per frame");
    c_faces->add_option("--frames", fa.frames, "Frame directory")->required()->check(CLI::ExistingDirectory);
    c_faces->add_option("--detector", fa.detector, "Detector adapter (yunet, sidecar)")->capture_default_str();
    c_faces->add_option("--out", fa.out, "Output face directory")->required();
    c_faces->add_option("--config", fa.config, "Config file with an align section")->check(CLI::ExistingFile);

    commands::AnnotateArgs an;
    auto* c_annotate = app.add_subcommand("annotate", "Pseudo-label faces with a vision-language model");
    c_annotate->add_option("--manifest", an.manifest, "Face manifest")->required()->check(CLI::ExistingFile);
    c_annotate->add_option("--backend", an.backend, "Backend (http, mock)")->capture_default_str();
    c_annotate->add_option("--mock-script", an.mock_script, "Reply script for the mock backend")->check(CLI::ExistingFile);
    c_annotate->add_option("--model", an.model, "Model id for the http backend");
    c_annotate->add_option("--base-url", an.base_url, "API base URL for the http backend");
    c_annotate->add_option("--api-key-env", an.api_key_env, "Environment variable holding the API key")->capture_default_str();
    c_annotate->add_option("--prompt", an.prompt, "Prompt variant")->check(CLI::IsMember({"1", "2", "both"}))->capture_default_str();
    c_annotate->add_option("--cache", an.cache, "Reply cache directory");
    c_annotate->add_option("--out", an.out, "Output pseudo_labels.jsonl")->required();
    c_annotate->add_option("--sample-every", an.sample_every, "Annotate every Nth face")->check(CLI::PositiveNumber)->capture_default_str();
    c_annotate->add_option("--max-in-flight", an.max_in_flight, "Concurrent requests")->check(CLI::PositiveNumber)->capture_default_str();
    c_annotate->add_option("--rps", an.requests_per_second, "Request rate limit")->check(CLI::PositiveNumber)->capture_default_str();
    c_annotate->add_option("--max-attempts", an.max_attempts, "Attempts per request")->check(CLI::PositiveNumber)->capture_default_str();

    commands::TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Stage 1: train the five models on ground truth");
    c_train->add_option("--data", tr.data, "Dataset root")->required()->check(CLI::ExistingDirectory);
    c_train->add_option("--layout", tr.layout, "folder_per_class or rafdb_compound")->capture_default_str();
    c_train->add_option("--models", tr.models, "all, or a comma-separated list")->capture_default_str();
    c_train->add_option("--config", tr.config, "YAML config")->check(CLI::ExistingFile);
    c_train->add_option("--out", tr.out, "Run directory")->required();

    commands::FinetuneArgs ft;
    auto* c_finetune = app.add_subcommand("finetune", "Stage 2: fine-tune on confident pseudo-labels");
    c_finetune->add_option("--pseudo", ft.pseudo, "pseudo_labels.jsonl")->required()->check(CLI::ExistingFile);
    c_finetune->add_option("--faces", ft.faces, "Face directory")->required()->check(CLI::ExistingDirectory);
    c_finetune->add_option("--from", ft.from, "Stage-1 run directory")->required()->check(CLI::ExistingDirectory);
    c_finetune->add_option("--out", ft.out, "Run directory")->required();
    c_finetune->add_option("--config", ft.config, "YAML config (default: the stage-1 config)")->check(CLI::ExistingFile);
    c_finetune->add_option("--data", ft.data, "Validation dataset root (default: the stage-1 data)");
    c_finetune->add_option("--layout", ft.layout, "Validation dataset layout");

    commands::PredictArgs pr;
    auto* c_predict = app.add_subcommand("predict", "Majority-vote predictions of the five-model ensemble");
    c_predict->add_option("--manifest", pr.manifest, "Face manifest")->required()->check(CLI::ExistingFile);
    c_predict->add_option("--faces", pr.faces, "Face directory (default: the manifest's directory)");
    c_predict->add_option("--models", pr.models, "Directory with five checkpoints or a run directory")->required();
    c_predict->add_option("--out", pr.out, "Output CSV")->required();
    c_predict->add_option("--dump-probs", pr.dump_probs, "Per-model probabilities as JSON lines");
    c_predict->add_option("--batch-size", pr.batch_size, "Inference batch size")->check(CLI::PositiveNumber)->capture_default_str();

    commands::EvaluateArgs ev;
    auto* c_evaluate = app.add_subcommand("evaluate", "Per-class F1 and macro-F1 of a predictions file");
    c_evaluate->add_option("--pred", ev.pred, "Predictions CSV")->required()->check(CLI::ExistingFile);
    c_evaluate->add_option("--truth", ev.truth, "Truth CSV (video_id,frame_index,label_index)")->required()->check(CLI::ExistingFile);
    c_evaluate->add_option("--json", ev.json_out, "Also write the report as JSON");

    commands::SynthArgs sy;
    auto* c_synth = app.add_subcommand("synth", "Write synthetic data for smoke tests");
    c_synth->add_option("kind", sy.kind, "labeled, videos or mock-script")->required();
    c_synth->add_option("--out", sy.out, "Output directory (file for mock-script)")->required();
    c_synth->add_option("--per-class", sy.per_class, "Images per class")->capture_default_str();
    c_synth->add_option("--videos", sy.videos, "Number of videos")->capture_default_str();
    c_synth->add_option("--frames", sy.frames, "Frames per video")->capture_default_str();
    c_synth->add_option("--size", sy.size, "Image or face size in pixels")->capture_default_str();
    c_synth->add_option("--seed", sy.seed, "Random seed")->capture_default_str();
    c_synth->add_option("--manifest", sy.manifest, "Face manifest (mock-script)");
    c_synth->add_option("--truth", sy.truth, "Truth CSV (mock-script)");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);

    try {
        if (*c_extract) return commands::extract(ex);
        if (*c_faces) return commands::faces(fa);
        if (*c_annotate) return commands::annotate(an);
        if (*c_train) return commands::train(tr);
        if (*c_finetune) return commands::finetune(ft);
        if (*c_predict) return commands::predict(pr);
        if (*c_evaluate) return commands::evaluate(ev);
        if (*c_synth) return commands::synth(sy);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 1;
}
