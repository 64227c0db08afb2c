// Command-line entry point: dataset generation, training, evaluation, rollout
// export, and the verification suite.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 check failure.

#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "igns/datagen.hpp"
#include "igns/dataset.hpp"
#include "igns/evaluation.hpp"
#include "igns/models.hpp"
#include "igns/training.hpp"
#include "igns/verify.hpp"

namespace fs = std::filesystem;
using igns::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheck = 3;

json load_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    json j;
    in >> j;
    return j;
}

std::vector<int> split_ids(const igns::DatasetManifest& m, const std::string& split) {
    if (split == "train") return m.train_ids;
    if (split == "val") return m.val_ids;
    if (split == "test") return m.test_ids;
    throw std::runtime_error("unknown split: " + split);
}

int cmd_gen(const std::string& task, int count, uint64_t seed, const std::string& out, int rows,
            int cols, int horizon) {
    igns::datagen::GenOptions opt{rows, cols, horizon};
    auto manifest =
        igns::datagen::generate_dataset(igns::datagen::task_from_string(task), count, seed, out, opt);
    std::cout << "wrote " << manifest.n_trajectories << " trajectories (" << manifest.n_nodes
              << " nodes, horizon " << manifest.horizon << ") to " << out << "\n";
    return kExitOk;
}

template <typename Real>
int run_train(const std::string& dataset, const json& mj, const json& tj, const std::string& out) {
    auto mcfg = igns::model_config_from_json(mj);
    auto tcfg = igns::train_config_from_json(tj);
    auto ds = igns::read_dataset<Real>(dataset);
    auto result = igns::train(ds, mcfg, tcfg, out);
    json echo{{"variant", igns::variant_name(mcfg.variant)},
              {"parameter_count", result.parameter_count},
              {"iterations", result.iterations},
              {"first_train_loss", result.first_train_loss},
              {"final_train_loss", result.final_train_loss},
              {"best_val_loss", result.best_val_loss},
              {"checkpoint", result.checkpoint.string()},
              {"metrics", result.metrics.string()}};
    std::ofstream(fs::path(out) / "train_summary.json") << echo.dump(2) << "\n";
    std::cout << echo.dump(2) << "\n";
    return kExitOk;
}

int cmd_train(const std::string& dataset, const std::string& model_config,
              const std::string& train_config, const std::string& out, int precision,
              const std::string& variant_override, int64_t seed_override) {
    json mj = load_json(model_config);
    json tj = load_json(train_config);
    if (!variant_override.empty()) mj["variant"] = variant_override;
    if (seed_override >= 0) tj["seed"] = seed_override;
    if (precision == 64) return run_train<double>(dataset, mj, tj, out);
    return run_train<float>(dataset, mj, tj, out);
}

template <typename Real>
int run_eval(const std::string& checkpoint, const std::string& dataset, const std::string& split,
             const std::string& out, int warmup_override, bool oracle, bool dump) {
    auto model = igns::Model<Real>::load_checkpoint(checkpoint);
    auto ds = igns::read_dataset<Real>(dataset);
    auto ids = split_ids(ds.manifest, split);
    auto metrics = igns::evaluate_rollouts(model, ds, ids, warmup_override, oracle);
    json j = igns::to_json(metrics);
    j["split"] = split;
    j["checkpoint"] = checkpoint;
    if (!out.empty()) {
        fs::create_directories(out);
        std::ofstream(fs::path(out) / "eval.json") << j.dump(2) << "\n";
        if (dump) igns::dump_rollouts(model, ds, ids, fs::path(out) / "rollouts", warmup_override);
    }
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset, const std::string& split,
             const std::string& out, int warmup_override, bool oracle, bool dump) {
    // the checkpoint header carries its own precision
    std::ifstream in(checkpoint, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + checkpoint);
    char magic[8];
    uint64_t hlen = 0;
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    const bool is64 = json::parse(hs).at("dtype").get<std::string>() == "float64";
    if (is64) return run_eval<double>(checkpoint, dataset, split, out, warmup_override, oracle, dump);
    return run_eval<float>(checkpoint, dataset, split, out, warmup_override, oracle, dump);
}

template <typename Real>
int run_rollout(const std::string& checkpoint, const std::string& dataset, const std::string& split,
                const std::string& out, int warmup_override) {
    auto model = igns::Model<Real>::load_checkpoint(checkpoint);
    auto ds = igns::read_dataset<Real>(dataset);
    auto ids = split_ids(ds.manifest, split);
    igns::dump_rollouts(model, ds, ids, out, warmup_override);
    std::cout << "wrote " << ids.size() << " predicted trajectories to " << out << "\n";
    return kExitOk;
}

int cmd_rollout(const std::string& checkpoint, const std::string& dataset, const std::string& split,
                const std::string& out, int warmup_override) {
    std::ifstream in(checkpoint, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + checkpoint);
    char magic[8];
    uint64_t hlen = 0;
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    const bool is64 = json::parse(hs).at("dtype").get<std::string>() == "float64";
    if (is64) return run_rollout<double>(checkpoint, dataset, split, out, warmup_override);
    return run_rollout<float>(checkpoint, dataset, split, out, warmup_override);
}

int cmd_verify(int precision) {
    auto results = igns::verify::run_verification(precision);
    int failures = 0;
    for (const auto& r : results) {
        std::printf("[%s] %-44s measured % .6e %s % .6e%s%s\n", r.pass ? "PASS" : "FAIL",
                    r.name.c_str(), r.measured, r.lower_is_pass ? "<=" : ">=", r.bound,
                    r.detail.empty() ? "" : "  -- ", r.detail.c_str());
        failures += r.pass ? 0 : 1;
    }
    std::printf("%zu checks, %d failed (precision %d)\n", results.size(), failures, precision);
    return failures == 0 ? kExitOk : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"information-preserving graph neural simulator"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    std::string gen_task, gen_out;
    int gen_count = 10, gen_rows = -1, gen_cols = -1, gen_horizon = -1;
    uint64_t gen_seed = 0;
    gen->add_option("--task", gen_task, "wave_balls_mini | mass_spring_lattice | diffusion_contrast")
        ->required();
    gen->add_option("--count", gen_count, "number of trajectories")->required();
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--rows", gen_rows, "grid rows override");
    gen->add_option("--cols", gen_cols, "grid cols override");
    gen->add_option("--horizon", gen_horizon, "horizon override");

    // train
    auto* train = app.add_subcommand("train", "train a model on a dataset");
    std::string tr_dataset, tr_model_cfg, tr_train_cfg, tr_out, tr_variant;
    int tr_precision = 32;
    int64_t tr_seed = -1;
    train->add_option("--dataset", tr_dataset, "dataset directory")->required();
    train->add_option("--model-config", tr_model_cfg, "model config json")->required();
    train->add_option("--train-config", tr_train_cfg, "train config json")->required();
    train->add_option("--out", tr_out, "output directory")->required();
    train->add_option("--precision", tr_precision, "32 or 64")->check(CLI::IsMember({32, 64}));
    train->add_option("--variant", tr_variant, "override the config variant");
    train->add_option("--seed", tr_seed, "override the training seed");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    std::string ev_ckpt, ev_dataset, ev_out;
    std::string ev_split = "test";
    int ev_warmup = -1;
    bool ev_oracle = false, ev_dump = false;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--dataset", ev_dataset, "dataset directory")->required();
    ev->add_option("--split", ev_split, "train | val | test")
        ->check(CLI::IsMember({"train", "val", "test"}));
    ev->add_option("--out", ev_out, "output directory for eval.json");
    ev->add_option("--warmup-override", ev_warmup, "override warmup length at inference");
    ev->add_flag("--oracle", ev_oracle, "score ground truth against itself (plumbing check)");
    ev->add_flag("--dump", ev_dump, "also export rollouts in the dataset format");

    // rollout
    auto* ro = app.add_subcommand("rollout", "export predicted rollouts in the dataset format");
    std::string ro_ckpt, ro_dataset, ro_out;
    std::string ro_split = "test";
    int ro_warmup = -1;
    ro->add_option("--checkpoint", ro_ckpt, "checkpoint file")->required();
    ro->add_option("--dataset", ro_dataset, "dataset directory")->required();
    ro->add_option("--split", ro_split, "train | val | test")
        ->check(CLI::IsMember({"train", "val", "test"}));
    ro->add_option("--out", ro_out, "output directory")->required();
    ro->add_option("--warmup-override", ro_warmup, "override warmup length at inference");

    // verify
    auto* vf = app.add_subcommand("verify", "run the executable property suite");
    int vf_precision = 64;
    vf->add_option("--precision", vf_precision, "32 or 64")->check(CLI::IsMember({32, 64}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed())
            return cmd_gen(gen_task, gen_count, gen_seed, gen_out, gen_rows, gen_cols, gen_horizon);
        if (train->parsed())
            return cmd_train(tr_dataset, tr_model_cfg, tr_train_cfg, tr_out, tr_precision,
                             tr_variant, tr_seed);
        if (ev->parsed())
            return cmd_eval(ev_ckpt, ev_dataset, ev_split, ev_out, ev_warmup, ev_oracle, ev_dump);
        if (ro->parsed()) return cmd_rollout(ro_ckpt, ro_dataset, ro_split, ro_out, ro_warmup);
        if (vf->parsed()) return cmd_verify(vf_precision);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
