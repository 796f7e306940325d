// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when all pass.
//
//   acceptance [--only 1,5,9] [--work DIR]

#include "cer/commands.hpp"
#include "cer/ensemble.hpp"
#include "cer/face/pipeline.hpp"
#include "cer/loss.hpp"
#include "cer/metrics.hpp"
#include "cer/nn/zoo.hpp"
#include "cer/synthetic.hpp"
#include "cer/train/trainer.hpp"
#include "cer/util/io.hpp"
#include "cer/vlm/annotator.hpp"
#include "cer/vlm/prompt.hpp"
#include "cer/vote.hpp"
#include "face_fixtures.hpp"
#include "oracles.hpp"
#include "prompt_rows.hpp"
#include "reply_suite.hpp"

#include <CLI11.hpp>
#include <opencv2/imgcodecs.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

using namespace cer;
namespace fs = std::filesystem;
using MatD = Mat<double>;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) {
            pass = false;
            detail = what;
        }
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path g_work;

// 1 -------------------------------------------------------------------------------------------

Outcome loss_oracle() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(101);
    std::normal_distribution<double> logit(0, 4);
    std::uniform_int_distribution<long> count(1, 10000);
    std::uniform_int_distribution<int> cls(0, 6);
    double worst = 0, worst_equal = 0;
    for (int c = 0; c < 10000; ++c) {
        MatD z(1, 7);
        for (auto& v : z.reshaped()) v = logit(rng);
        std::vector<long> n(7);
        for (auto& v : n) v = count(rng);
        const std::vector<int> t{cls(rng)};
        std::vector<double> zr(z.data(), z.data() + 7);
        worst = std::max(worst, std::abs(bal_ce(z, t, ClassCountTable(n)) - oracle::bal_ce_direct(zr, t[0], n)));
        const std::vector<long> same(7, n[0]);
        worst_equal = std::max(worst_equal, std::abs(bal_ce(z, t, ClassCountTable(same)) - cross_entropy(z, t)));
    }
    const double secs = seconds_since(t0);
    o.require(worst <= 1e-8, "max |bal_ce - direct| = " + fmt("%.3g", worst));
    o.require(worst_equal <= 1e-10, "max |bal_ce(equal) - CE| = " + fmt("%.3g", worst_equal));
    o.require(secs < 10, "runtime " + fmt("%.1f", secs) + " s");
    if (o.pass)
        o.detail = "10000 cases, max err " + fmt("%.2g", worst) + ", equal-count err " + fmt("%.2g", worst_equal) + ", " +
                   fmt("%.2f", secs) + " s";
    return o;
}

// 2 -------------------------------------------------------------------------------------------

Outcome gradient_checks() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(202);
    std::normal_distribution<double> logit(0, 2);
    std::uniform_int_distribution<long> count(1, 1000);
    std::uniform_int_distribution<int> cls(0, 6), batch(1, 8);
    LossConfig cfg;
    cfg.lambda = 1.5;
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int b = batch(rng);
        MatD z(b, 7);
        for (auto& v : z.reshaped()) v = logit(rng);
        std::vector<int> t(static_cast<std::size_t>(b));
        for (auto& v : t) v = cls(rng);
        std::vector<long> n(7);
        for (auto& v : n) v = count(rng);
        const ClassCountTable counts(n);
        auto ce = [&](const MatD& x) { return bal_ce(x, t, counts); };
        auto dice = [&](const MatD& x) { return multi_dice_logits(x, t, cfg.dice_epsilon); };
        auto total = [&](const MatD& x) { return total_loss(x, t, counts, cfg); };
        worst = std::max({worst, oracle::relative_error(bal_ce_grad(z, t, counts), oracle::central_difference(ce, z, 1e-5)),
                          oracle::relative_error(multi_dice_logits_grad(z, t, cfg.dice_epsilon),
                                                 oracle::central_difference(dice, z, 1e-5)),
                          oracle::relative_error(total_loss_grad(z, t, counts, cfg), oracle::central_difference(total, z, 1e-5))});
    }
    const double secs = seconds_since(t0);
    o.require(worst <= 1e-4, "max relative error " + fmt("%.3g", worst));
    o.require(secs < 60, "runtime " + fmt("%.1f", secs) + " s");
    if (o.pass) o.detail = "100 batches, max relative error " + fmt("%.2g", worst) + ", " + fmt("%.2f", secs) + " s";
    return o;
}

// 3 -------------------------------------------------------------------------------------------

Outcome dice_values() {
    Outcome o;
    const double eps = 1e-12;
    const MatD uniform = MatD::Constant(1, 7, 1.0 / 7);
    MatD half(1, 2);
    half << 0.5, 0.5;
    const double u = multi_dice(uniform, std::vector<int>{0}, eps);
    const double h = multi_dice(half, std::vector<int>{0}, eps);
    o.require(std::abs(u - 27.0 / 28) <= 1e-6, "uniform example " + fmt("%.9f", u));
    o.require(std::abs(h - 2.0 / 3) <= 1e-6, "two-class example " + fmt("%.9f", h));
    if (o.pass) o.detail = "uniform " + fmt("%.9f", u) + ", two-class " + fmt("%.9f", h);
    return o;
}

// 4 -------------------------------------------------------------------------------------------

Outcome metric_oracle() {
    Outcome o;
    std::mt19937_64 rng(404);
    std::uniform_int_distribution<int> len(1, 80), cls(0, 6);
    int mismatches = 0;
    for (int c = 0; c < 1000; ++c) {
        std::vector<int> p(std::size_t(len(rng))), t(p.size());
        for (auto& v : p) v = cls(rng);
        for (auto& v : t) v = cls(rng);
        if (macro_f1(p, t, 7) != oracle::macro_f1(p, t, 7)) ++mismatches;
    }
    const double worked = macro_f1(std::vector<int>{0, 1, 1, 2}, std::vector<int>{0, 0, 1, 2}, 7);
    o.require(mismatches == 0, std::to_string(mismatches) + " of 1000 cases differ from the oracle");
    o.require(std::abs(worked - 1.0 / 3) <= 1e-15, "worked example " + fmt("%.17g", worked));
    if (o.pass) o.detail = "1000 cases exact, worked example " + fmt("%.15f", worked);
    return o;
}

// 5 -------------------------------------------------------------------------------------------

Outcome vote_brute_force() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(505);
    std::uniform_real_distribution<double> u(0, 1);
    std::array<int, 5> perm{};
    long cases = 0, bad = 0, not_invariant = 0;
    for (int code = 0; code < 16807; ++code) {
        std::vector<int> votes(5);
        for (int m = 0, c = code; m < 5; ++m, c /= 7) votes[std::size_t(m)] = c % 7;
        Eigen::MatrixXd random(5, 7);
        for (auto& v : random.reshaped()) v = u(rng);
        random = random.array().colwise() / random.rowwise().sum().array();
        for (const Eigen::MatrixXd& probs : {random, Eigen::MatrixXd(Eigen::MatrixXd::Constant(5, 7, 1.0 / 7))}) {
            ++cases;
            const auto got = vote(votes, probs);
            const auto want = oracle::vote_rule(votes, probs);
            if (got.label != want.label || got.tie_broken != want.tie) ++bad;
            std::iota(perm.begin(), perm.end(), 0);
            do {
                std::vector<int> pv(5);
                Eigen::MatrixXd pp(5, 7);
                for (int m = 0; m < 5; ++m) {
                    pv[std::size_t(m)] = votes[std::size_t(perm[std::size_t(m)])];
                    pp.row(m) = probs.row(perm[std::size_t(m)]);
                }
                const auto r = vote(pv, pp);
                if (r.label != got.label || r.tie_broken != got.tie_broken) ++not_invariant;
            } while (std::next_permutation(perm.begin(), perm.end()));
        }
    }
    const double secs = seconds_since(t0);
    o.require(bad == 0, std::to_string(bad) + " combinations disagree with the rule");
    o.require(not_invariant == 0, std::to_string(not_invariant) + " permutations change the result");
    o.require(secs < 30, "runtime " + fmt("%.1f", secs) + " s");
    if (o.pass)
        o.detail = "16807 combinations x 2 tables, 120 orders each, " + fmt("%.2f", secs) + " s (" + std::to_string(cases) +
                   " cases)";
    return o;
}

// 6 -------------------------------------------------------------------------------------------

Outcome parameter_counts() {
    Outcome o;
    const std::vector<std::pair<std::string, long>> table = {{"mobilenet_v2", 3504872},
                                                             {"resnet152", 60192808},
                                                             {"densenet121", 7978856},
                                                             {"resnet18", 11689512},
                                                             {"densenet201", 20013928}};
    std::string got;
    for (const auto& [name, want] : table) {
        const long n = nn::Network<float>(nn::BackboneSpec::reference(name)).count_params();
        o.require(n == want, name + " has " + std::to_string(n) + " parameters, expected " + std::to_string(want));
        got += (got.empty() ? "" : " / ") + std::to_string(n);
    }
    if (o.pass) o.detail = got;
    return o;
}

// 7 -------------------------------------------------------------------------------------------

Outcome pipeline_rules() {
    Outcome o;
    std::mt19937_64 rng(707);
    int frames = 0;
    const int tracks = 1000;
    for (int c = 0; c < tracks && o.pass; ++c) {
        const auto track = fixtures::random_track(rng);
        frames += int(track.size());
        const auto problem = fixtures::check_plan(track, face::plan_video(track));
        o.require(problem.empty(), "track " + std::to_string(c) + ": " + problem);
    }
    if (o.pass) o.detail = std::to_string(tracks) + " random tracks, " + std::to_string(frames) + " frames";
    return o;
}

// 8 -------------------------------------------------------------------------------------------

Outcome prompt_fidelity() {
    Outcome o;
    o.require(vlm::build_prompt(1) == fixtures::kPromptRow1, "prompt 1 differs from the expected wording");
    o.require(vlm::build_prompt(2) == fixtures::kPromptRow2, "prompt 2 differs from the expected wording");
    const auto suite = fixtures::reply_suite();
    vlm::MockBackend mock;
    std::vector<std::string> images;
    for (std::size_t i = 0; i < suite.size(); ++i) {
        cv::Mat img(4, 4, CV_8UC3, cv::Scalar(double(i), double(i * 3 % 256), 7));
        std::vector<uchar> buf;
        cv::imencode(".png", img, buf);
        images.emplace_back(buf.begin(), buf.end());
        mock.script(util::sha256_hex(images.back()), suite[i].reply);
    }
    std::map<std::string, int> per_suite;
    for (std::size_t i = 0; i < suite.size(); ++i) {
        const auto reply = vlm::annotate(images[i], vlm::build_prompt(1), mock, {});
        const auto r = vlm::extract_label(reply);
        o.require(r.label == suite[i].label && r.confident == suite[i].label.has_value(),
                  suite[i].suite + " reply misread: \"" + suite[i].reply + "\"");
        ++per_suite[suite[i].suite];
    }
    o.require(suite.size() >= 50, "only " + std::to_string(suite.size()) + " scripted replies");
    if (o.pass) {
        o.detail = "both prompts verbatim, " + std::to_string(suite.size()) + " replies (";
        for (const auto& [name, n] : per_suite) o.detail += name + " " + std::to_string(n) + ", ";
        o.detail.resize(o.detail.size() - 2);
        o.detail += ")";
    }
    return o;
}

// 9 and 10 ------------------------------------------------------------------------------------

struct DeskRun {
    train::TrainConfig cfg;
    train::Split split;
    fs::path faces_dir, truth_csv, stage1, stage2;
    train::RunManifest m1, m2;
    double seconds = 0;
};

train::TrainConfig desk_config() {
    train::TrainConfig cfg;
    cfg.seed = 2024;
    cfg.width = 0.125;
    cfg.input_size = 32;
    cfg.hidden_dim = 64;
    cfg.align.crop_size = 32;
    cfg.val_fraction = 1.0 / 6;
    return cfg;
}

DeskRun desk_run(const fs::path& root, const DeskRun* data = nullptr) {
    DeskRun run;
    run.cfg = desk_config();
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(root);
    if (data) {
        run.split = data->split;
        run.faces_dir = data->faces_dir;
        run.truth_csv = data->truth_csv;
    } else {
        synthetic::write_labeled(root / "images", 120, 32, 11);
        run.split = train::stratified_split(train::load_ground_truth(root / "images", train::Layout::FolderPerClass),
                                            run.cfg.val_fraction, util::derive_seed(run.cfg.seed, "split"));
        const auto videos = synthetic::write_videos(root / "videos", 7, 12, 48, 12);
        run.truth_csv = videos.truth_csv;
        run.faces_dir = root / "faces";
        auto detector = face::make_detector("sidecar");
        face::process_frames(videos.frames_dir, *detector, run.faces_dir, run.cfg.align);
        synthetic::write_mock_script(run.faces_dir / "manifest.jsonl", run.truth_csv, root / "mock.json");
        auto backend = vlm::MockBackend::from_file(root / "mock.json");
        vlm::ReplyCache cache(root / "cache");
        vlm::AnnotateOptions opts;
        opts.requests_per_second = 1000;
        vlm::pseudo_label_dataset(run.faces_dir / "manifest.jsonl", *backend, cache, root / "pseudo_labels.jsonl", opts);
    }
    const auto pseudo = train::load_pseudo((data ? data->faces_dir.parent_path() : root) / "pseudo_labels.jsonl", run.faces_dir);
    run.stage1 = root / "stage1";
    run.stage2 = root / "stage2";
    run.m1 = train::train_all(run.split.train, run.split.val, run.cfg, run.stage1);
    run.m2 = train::finetune(pseudo, run.split.val, run.stage1, run.cfg, run.stage2);
    run.seconds = seconds_since(t0);
    return run;
}

std::optional<DeskRun> g_desk;

const DeskRun& desk() {
    if (!g_desk) g_desk = desk_run(g_work / "desk");
    return *g_desk;
}

double ensemble_val_f1(const DeskRun& run) {
    std::vector<ensemble::FaceEntry> faces;
    for (std::size_t i = 0; i < run.split.val.size(); ++i)
        faces.push_back({{"val", int(i)}, run.split.val.records[i].image});
    std::vector<std::unique_ptr<ensemble::Member>> members;
    for (const auto& p : ensemble::find_checkpoints(run.stage2)) members.push_back(ensemble::load_member(p));
    const auto preds = ensemble::predict(faces, members, g_work / "desk" / "val_predictions.csv");
    std::vector<int> voted;
    for (const auto& p : preds) voted.push_back(p.vote.label);
    return macro_f1(voted, run.split.val.labels(), kNumClasses);
}

Outcome desk_scale() {
    Outcome o;
    const auto& run = desk();
    o.require(run.split.train.size() == 700 && run.split.val.size() == 140,
              "split is " + std::to_string(run.split.train.size()) + "/" + std::to_string(run.split.val.size()));
    o.require(run.m1.all_ok() && run.m2.all_ok(), "a model failed to train");
    o.require(run.m1.models.size() == 5, "stage 1 trained " + std::to_string(run.m1.models.size()) + " models");
    double tiny = -1;
    std::string members;
    for (const auto& r : run.m2.models) {
        if (r.model == "resnet18") tiny = r.history.best_macro_f1;
        members += " " + r.model + "=" + fmt("%.3f", r.history.best_macro_f1);
    }
    const double vote_f1 = o.pass ? ensemble_val_f1(run) : -1;
    o.require(tiny >= 0.9, "tiny resnet18 validation macro-F1 " + fmt("%.4f", tiny));
    o.require(vote_f1 >= 0.9, "ensemble validation macro-F1 " + fmt("%.4f", vote_f1));
    o.require(run.seconds < 15 * 60, "full run took " + fmt("%.0f", run.seconds) + " s");

    const auto rerun = desk_run(g_work / "desk_rerun", &run);
    bool same = rerun.m1.models.size() == run.m1.models.size() && rerun.m2.models.size() == run.m2.models.size();
    for (std::size_t i = 0; same && i < run.m1.models.size(); ++i)
        same = run.m1.models[i].history.same_results(rerun.m1.models[i].history) &&
               run.m2.models[i].history.same_results(rerun.m2.models[i].history);
    o.require(same, "rerun with the same seed produced a different training history");
    if (o.pass)
        o.detail = "resnet18 " + fmt("%.4f", tiny) + ", ensemble " + fmt("%.4f", vote_f1) + ", members" + members +
                   "; run " + fmt("%.0f", run.seconds) + " s; rerun identical";
    return o;
}

std::size_t csv_rows(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) ++n;
    return n ? n - 1 : 0;
}

/// Captures std::cout for its lifetime.
class QuietStdout {
public:
    QuietStdout() : old_(std::cout.rdbuf(buf_.rdbuf())) {}
    ~QuietStdout() { std::cout.rdbuf(old_); }

private:
    std::ostringstream buf_;
    std::streambuf* old_;
};

Outcome predict_evaluate() {
    Outcome o;
    QuietStdout quiet;
    const auto& run = desk();
    const auto dir = g_work / "commands";
    fs::create_directories(dir);
    const auto manifest = run.faces_dir / "manifest.jsonl";
    int rc = commands::predict({manifest, run.faces_dir, run.stage2, dir / "preds.csv", dir / "probs.jsonl", 32});
    o.require(rc == 0, "predict exited " + std::to_string(rc));
    const auto faces = ensemble::read_face_manifest(manifest, run.faces_dir).size();
    o.require(csv_rows(dir / "preds.csv") == faces, "prediction rows differ from manifest rows");
    rc = commands::evaluate({dir / "preds.csv", run.truth_csv, dir / "report.json"});
    o.require(rc == 0, "evaluate exited " + std::to_string(rc));
    const double synthetic_f1 = nlohmann::json::parse(util::read_file(dir / "report.json")).at("macro_f1");

    // A frame directory in the per-video layout, or the one named by CER_USER_FRAMES.
    fs::path frames;
    std::string detector = "sidecar";
    if (const char* user = std::getenv("CER_USER_FRAMES")) {
        frames = user;
        if (const char* d = std::getenv("CER_USER_DETECTOR")) detector = d;
    } else {
        frames = dir / "user_frames";
        const auto set = synthetic::write_videos(dir / "user_src", 3, 5, 40, 99, 0, 0);
        for (const auto& e : fs::directory_iterator(set.frames_dir)) {
            const auto stem = e.path().stem().string();
            const auto cut = stem.rfind('_');
            const auto target = frames / stem.substr(0, cut) / (std::to_string(std::stoi(stem.substr(cut + 1))) + e.path().extension().string());
            fs::create_directories(target.parent_path());
            fs::copy_file(e.path(), target);
        }
    }
    rc = commands::faces({frames, detector, dir / "user_faces", {}});
    o.require(rc == 0, "faces on " + frames.string() + " exited " + std::to_string(rc));
    rc = commands::predict({dir / "user_faces" / "manifest.jsonl", dir / "user_faces", run.stage2, dir / "user_preds.csv", {}, 32});
    o.require(rc == 0, "predict on the frame directory exited " + std::to_string(rc));
    const auto user_faces = ensemble::read_face_manifest(dir / "user_faces" / "manifest.jsonl", dir / "user_faces").size();
    o.require(user_faces > 0 && csv_rows(dir / "user_preds.csv") == user_faces, "frame-directory predictions incomplete");
    if (o.pass)
        o.detail = std::to_string(faces) + " synthetic faces, macro-F1 " + fmt("%.4f", synthetic_f1) + "; " +
                   std::to_string(user_faces) + " faces from " + frames.filename().string();
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::string only;
    std::string work = (fs::temp_directory_path() / "cer_acceptance").string();
    bool verbose = false;
    app.add_option("--only", only, "Comma-separated criterion numbers");
    app.add_option("--work", work, "Scratch directory");
    app.add_flag("-v,--verbose", verbose, "Show training logs");
    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);
    g_work = work;
    fs::remove_all(g_work);
    fs::create_directories(g_work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"loss oracle equivalence", loss_oracle},
        {"gradient checks", gradient_checks},
        {"dice worked values", dice_values},
        {"metric oracle", metric_oracle},
        {"voting brute force", vote_brute_force},
        {"reference parameter counts", parameter_counts},
        {"face pipeline rules", pipeline_rules},
        {"prompt fidelity", prompt_fidelity},
        {"desk-scale end-to-end", desk_scale},
        {"predict/evaluate commands", predict_evaluate},
    };
    std::set<int> selected;
    std::stringstream ss(only);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) selected.insert(std::stoi(item));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = int(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << id << " " << criteria[i].first << ": " << o.detail << std::endl;
    }
    return failed ? 1 : 0;
}
