#include <doctest.h>

#include "cer/ensemble.hpp"
#include "cer/face/pipeline.hpp"
#include "cer/nn/checkpoint.hpp"
#include "cer/synthetic.hpp"
#include "cer/util/io.hpp"
#include "oracles.hpp"

#include <opencv2/imgcodecs.hpp>

#include <fstream>
#include <numeric>
#include <random>

using namespace cer;
using namespace cer::ensemble;

namespace {

fs::path temp_dir(const std::string& tag) {
    auto p = fs::temp_directory_path() / ("cer_ensemble_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

/// Fixed probability rows keyed by image file name.
class StubMember final : public Member {
public:
    StubMember(std::string name, std::map<std::string, Eigen::RowVectorXd> rows, LabelSpace labels = LabelSpace::standard())
        : name_(std::move(name)), rows_(std::move(rows)), labels_(std::move(labels)) {}
    std::string name() const override { return name_; }
    const LabelSpace& labels() const override { return labels_; }
    Eigen::MatrixXd probabilities(const std::vector<fs::path>& images) override {
        Eigen::MatrixXd out(Eigen::Index(images.size()), 7);
        for (std::size_t i = 0; i < images.size(); ++i) out.row(Eigen::Index(i)) = rows_.at(images[i].filename().string());
        return out;
    }

private:
    std::string name_;
    std::map<std::string, Eigen::RowVectorXd> rows_;
    LabelSpace labels_;
};

struct StubFixture {
    fs::path dir = temp_dir("stubs");
    std::vector<FaceEntry> faces;
    std::vector<std::unique_ptr<Member>> members;
    // tables[m](face, class)
    std::vector<Eigen::MatrixXd> tables;

    explicit StubFixture(unsigned seed = 3) {
        for (int f = 0; f < 3; ++f) {
            const auto img = dir / ("face" + std::to_string(f) + ".png");
            cv::imwrite(img.string(), cv::Mat(4, 4, CV_8UC3, cv::Scalar::all(f)));
            faces.push_back({{"clip", f}, img});
        }
        std::mt19937 rng(seed);
        std::uniform_real_distribution<double> u(0.01, 1);
        for (int m = 0; m < 5; ++m) {
            Eigen::MatrixXd t(3, 7);
            for (int f = 0; f < 3; ++f) {
                for (int c = 0; c < 7; ++c) t(f, c) = u(rng);
                t.row(f) /= t.row(f).sum();
            }
            // Face 0: clear majority on class 4. Face 2: a 2-2-1 split between classes 0 and 1.
            t.row(0).setConstant(0.05);
            t(0, m < 3 ? 4 : 6) = 0.7;
            t.row(2).setConstant(0.02);
            t(2, m < 2 ? 0 : m < 4 ? 1 : 3) = 0.6 + 0.05 * m;
            t.row(2) /= t.row(2).sum();
            tables.push_back(t);
        }
        for (int m = 0; m < 5; ++m) {
            std::map<std::string, Eigen::RowVectorXd> rows;
            for (int f = 0; f < 3; ++f) rows["face" + std::to_string(f) + ".png"] = tables[std::size_t(m)].row(f);
            members.push_back(std::make_unique<StubMember>("m" + std::to_string(m), rows));
        }
    }
};

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST_CASE("predict with stub members follows the vote rule") {
    StubFixture fx;
    PredictOptions opts;
    opts.batch_size = 2;
    opts.dump_probs = fx.dir / "probs.jsonl";
    const auto preds = predict(fx.faces, fx.members, fx.dir / "preds.csv", opts);
    REQUIRE(preds.size() == 3);

    std::string expected = "video_id,frame_index,label_index,label_name,tie_broken\n";
    for (int f = 0; f < 3; ++f) {
        oracle::MatD probs(5, 7);
        std::vector<int> votes;
        for (int m = 0; m < 5; ++m) {
            probs.row(m) = fx.tables[std::size_t(m)].row(f);
            int arg = 0;
            probs.row(m).maxCoeff(&arg);
            votes.push_back(arg);
        }
        const auto want = oracle::vote_rule(votes, probs);
        CHECK(preds[std::size_t(f)].vote.label == want.label);
        CHECK(preds[std::size_t(f)].vote.tie_broken == want.tie);
        CHECK(preds[std::size_t(f)].argmaxes == votes);
        expected += "clip," + std::to_string(f) + "," + std::to_string(want.label) + "," +
                    LabelSpace::standard().name(want.label) + "," + (want.tie ? "1" : "0") + "\n";
    }
    CHECK(preds[0].vote.label == 4);
    CHECK(preds[2].vote.tie_broken);
    CHECK(util::read_file(fx.dir / "preds.csv") == expected);

    std::ifstream dump(opts.dump_probs);
    int lines = 0;
    for (std::string line; std::getline(dump, line); ++lines) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j["per_model"].size() == 5);
        CHECK(j["vote_counts"].get<std::vector<int>>().size() == 7);
    }
    CHECK(lines == 3);

    const auto first = util::read_file(fx.dir / "preds.csv");
    predict(fx.faces, fx.members, fx.dir / "preds.csv", opts);
    CHECK(util::read_file(fx.dir / "preds.csv") == first);
}

TEST_CASE("predict errors") {
    StubFixture fx;
    SUBCASE("four members") {
        fx.members.pop_back();
        CHECK_THROWS_WITH(predict(fx.faces, fx.members, fx.dir / "p.csv"), "ensemble requires exactly 5 models");
    }
    SUBCASE("label order mismatch") {
        auto names = LabelSpace::standard().names();
        std::swap(names[0], names[1]);
        fx.members[3] = std::make_unique<StubMember>("odd", std::map<std::string, Eigen::RowVectorXd>{}, LabelSpace(names));
        CHECK_THROWS_WITH(predict(fx.faces, fx.members, fx.dir / "p.csv"), doctest::Contains("label order mismatch"));
    }
    SUBCASE("missing face") {
        fs::remove(fx.faces[1].image);
        CHECK_THROWS_WITH(predict(fx.faces, fx.members, fx.dir / "p.csv"), doctest::Contains("clip:1"));
        CHECK_FALSE(fs::exists(fx.dir / "p.csv"));
    }
}

TEST_CASE("predict from checkpoints") {
    const auto dir = temp_dir("ckpt");
    std::mt19937_64 rng(5);
    fs::create_directories(dir / "faces" / "v");
    std::ofstream manifest(dir / "faces" / "manifest.jsonl");
    for (int i = 0; i < 6; ++i) {
        const auto rel = fs::path("v") / face::face_image_relpath("v", i).filename();
        cv::imwrite((dir / "faces" / rel).string(), synthetic::make_image(i % 7, 40, rng));
        manifest << nlohmann::json{{"video_id", "v"}, {"frame_index", i}, {"image", rel.generic_string()}}.dump() << "\n";
    }
    manifest.close();

    const std::vector<std::string> models = {"mobilenet_v2", "resnet152", "densenet121", "resnet18", "densenet201"};
    for (std::size_t m = 0; m < models.size(); ++m) {
        nn::BackboneSpec spec;
        spec.name = models[m];
        spec.width = 0.125;
        spec.input_size = 32;
        spec.hidden_dim = 16;
        nn::Network<float> net(spec);
        net.initialize(m);
        const nlohmann::json meta = {{"model", models[m]},
                                     {"stage", "stage1"},
                                     {"normalization", {{"mean", {0.5, 0.5, 0.5}}, {"std", {0.25, 0.25, 0.25}}}}};
        nn::save_checkpoint(net, dir / "run" / "checkpoints" / models[m] / "stage1" / "best.ckpt", LabelSpace::standard(), meta);
        if (m < 2) nn::save_checkpoint(net, dir / "run" / "checkpoints" / models[m] / "stage2" / "best.ckpt", LabelSpace::standard(), meta);
        nn::save_checkpoint(net, dir / "flat" / (models[m] + ".ckpt"), LabelSpace::standard(), meta);
    }
    const auto nested = find_checkpoints(dir / "run");
    REQUIRE(nested.size() == 5);
    CHECK(nested[0].parent_path().filename() == "stage1");
    CHECK(nested[3].parent_path().filename() == "stage2");
    CHECK(find_checkpoints(dir / "flat").size() == 5);
    CHECK_THROWS_WITH(find_checkpoints(dir / "absent"), doctest::Contains("not found"));

    auto run = [&](const fs::path& out) {
        std::vector<std::unique_ptr<Member>> members;
        for (const auto& p : find_checkpoints(dir / "flat")) members.push_back(load_member(p));
        return predict(read_face_manifest(dir / "faces" / "manifest.jsonl", dir / "faces"), members, out);
    };
    const auto preds = run(dir / "a.csv");
    CHECK(preds.size() == 6);
    CHECK(preds[0].members[0] == "densenet121");
    for (const auto& p : preds) {
        CHECK(p.probs.rowwise().sum().isApproxToConstant(1.0, 1e-5));
        CHECK(std::accumulate(p.vote.vote_counts.begin(), p.vote.vote_counts.end(), 0) == 5);
    }
    run(dir / "b.csv");
    CHECK(util::read_file(dir / "a.csv") == util::read_file(dir / "b.csv"));

    nn::BackboneSpec spec;
    spec.name = "resnet18";
    spec.width = 0.125;
    spec.input_size = 32;
    nn::Network<float> net(spec);
    net.initialize(9);
    nn::save_checkpoint(net, dir / "flat" / "extra.ckpt", LabelSpace::standard());
    CHECK(find_checkpoints(dir / "flat").size() == 6);
}

TEST_CASE("evaluate") {
    const auto dir = temp_dir("eval");
    const std::string header = "video_id,frame_index,label_index,label_name,tie_broken\n";
    write_text(dir / "truth.csv", "video_id,frame_index,label_index\nv,0,0\nv,1,0\nv,2,1\nw,0,2\n");
    std::string all_truth = "video_id,frame_index,label_index\n", all_pred = header;
    for (int c = 0; c < 7; ++c) {
        all_truth += "u," + std::to_string(c) + "," + std::to_string(c) + "\n";
        all_pred += "u," + std::to_string(c) + "," + std::to_string(c) + ",x,0\n";
    }
    write_text(dir / "all_truth.csv", all_truth);
    write_text(dir / "perfect.csv", all_pred);
    write_text(dir / "worked.csv", header + "v,1,1,b,0\nv,0,0,a,0\nw,0,2,c,1\nv,2,1,b,0\n");
    write_text(dir / "other.csv", header + "v,0,0,a,0\nv,1,0,a,0\nv,2,1,b,0\nx,0,2,c,0\n");

    CHECK(evaluate(dir / "perfect.csv", dir / "all_truth.csv").scores.macro_f1 == 1.0);
    const auto report = evaluate(dir / "worked.csv", dir / "truth.csv");
    CHECK(report.scores.macro_f1 == doctest::Approx(1.0 / 3).epsilon(1e-15));
    CHECK(report.scores.macro_f1 == doctest::Approx(oracle::macro_f1({0, 1, 1, 2}, {0, 0, 1, 2}, 7)).epsilon(1e-15));
    CHECK(report.scores.per_class[0].support == 2);
    CHECK(report.scores.confusion(0, 1) == 1);
    CHECK(report.faces == 4);
    CHECK(report.to_json()["per_class"].size() == 7);
    CHECK(report.to_text().find("macro-F1 0.333333") != std::string::npos);

    CHECK_THROWS_WITH(evaluate(dir / "other.csv", dir / "truth.csv"),
                      doctest::Contains("only in predictions: x:0; only in truth: w:0"));
    write_text(dir / "dup.csv", header + "v,0,0,a,0\nv,0,1,b,0\n");
    CHECK_THROWS_WITH(evaluate(dir / "dup.csv", dir / "truth.csv"), doctest::Contains("duplicate face v:0"));
    write_text(dir / "range.csv", header + "v,0,9,a,0\n");
    CHECK_THROWS_WITH(evaluate(dir / "range.csv", dir / "truth.csv"), doctest::Contains("out of range"));
}
