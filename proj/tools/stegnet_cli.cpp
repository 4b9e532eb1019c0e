#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "stegnet/arch.hpp"
#include "stegnet/checkpoint.hpp"
#include "stegnet/eval.hpp"
#include "stegnet/frontend.hpp"
#include "stegnet/gradcheck.hpp"
#include "stegnet/jpeg.hpp"
#include "stegnet/manifest.hpp"
#include "stegnet/network.hpp"
#include "stegnet/simulate.hpp"
#include "stegnet/tensor_io.hpp"
#include "stegnet/trainer.hpp"

namespace {

using namespace stegnet;

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

template <typename Scalar>
void run_preprocess(const std::string& in, const std::string& out) {
    const JpegPlane plane = read_jcf(in);
    const Tensor<Scalar> spatial = decompress_no_round<Scalar>(plane);
    write_tensor(out, spatial);
    std::cout << "cached spatial plane " << spatial.shape().str() << " -> " << out << "\n";
}

void run_simulate(const std::string& in, const std::string& out, const SimConfig& cfg) {
    const JpegPlane cover = read_jcf(in);
    const JpegPlane stego = simulate_stego(cover, cfg);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < cover.coeffs.size(); ++i)
        changed += cover.coeffs[i] != stego.coeffs[i];
    write_jcf(out, stego);
    std::cout << "changed " << changed << " coefficients -> " << out << "\n";
}

void run_corpus(const std::string& out_dir, const CorpusConfig& cfg) {
    const DatasetManifest m = make_synthetic_corpus(out_dir, cfg);
    std::cout << "wrote " << m.records.size() << " pairs (" << cfg.image_size << "x"
              << cfg.image_size << ", qf " << cfg.quality << ", change rate "
              << cfg.sim.change_rate << ") and " << out_dir << "/manifest.tsv\n";
}

template <typename Scalar>
void run_train(const std::string& manifest_path, const std::string& val_path,
               const std::string& arch, const std::string& width_tok,
               const std::string& config_path, const std::string& out_dir,
               const std::string& resume, const std::string& init_from) {
    const TrainConfig cfg =
        config_path.empty() ? TrainConfig{} : read_train_config(config_path);
    const double width = width_tok.empty() ? 1.0 : parse_width_token(width_tok);
    Network<Scalar> net(make_arch(arch, width));
    const PairDataset<Scalar> train_set = load_pairs<Scalar>(read_manifest(manifest_path));
    PairDataset<Scalar> val_set;
    const bool have_val = !val_path.empty();
    if (have_val) val_set = load_pairs<Scalar>(read_manifest(val_path));

    TrainOptions opts;
    opts.out_dir = out_dir;
    opts.resume_from = resume;
    opts.log = &std::cout;
    if (!init_from.empty()) {
        finetune_init(net, init_from);
        opts.init_network = false;
        std::cout << "weights from " << init_from << "; schedule restarts at the base rate\n";
    }
    const TrainResult r =
        train_loop<Scalar>(net, train_set, have_val ? &val_set : nullptr, cfg, opts);
    std::cout << "done: " << r.iterations << " iterations, final loss " << r.final_loss << ", "
              << r.checkpoint_paths.size() << " checkpoints in " << out_dir << "\n";
}

template <typename Scalar>
EvalReport eval_one(const std::string& ckpt, const ArchSpec& arch,
                    const PairDataset<Scalar>& ds, const std::vector<std::string>& names) {
    Network<Scalar> net(arch);
    TrainState state;
    load_checkpoint(ckpt, net, state);
    EvalReport r = evaluate(net, ds, PreprocConfig{}, &names);
    r.checkpoints = {ckpt};
    return r;
}

void run_eval(const std::string& manifest_path, const std::string& checkpoints_arg,
              const std::string& out_csv) {
    const std::vector<std::string> ckpts = split_list(checkpoints_arg);
    if (ckpts.empty()) throw std::runtime_error("no checkpoints given");
    const DatasetManifest manifest = read_manifest(manifest_path);
    const std::vector<std::string> names = image_names(manifest);
    PairDataset<double> ds64;
    PairDataset<float> ds32;
    std::vector<EvalReport> runs;
    for (const auto& path : ckpts) {
        const CheckpointInfo info = checkpoint_info(path);
        EvalReport r;
        if (info.scalar_bytes == 8) {
            if (ds64.size() == 0) ds64 = load_pairs<double>(manifest);
            r = eval_one<double>(path, info.arch, ds64, names);
        } else {
            if (ds32.size() == 0) ds32 = load_pairs<float>(manifest);
            r = eval_one<float>(path, info.arch, ds32, names);
        }
        std::cout << path << " (iter " << info.iteration << "): error " << r.error << "\n";
        runs.push_back(std::move(r));
    }
    const EvalReport final_report = ensemble_probs(runs);
    if (runs.size() > 1)
        std::cout << "ensemble of " << runs.size() << ": error " << final_report.error << "\n";
    if (out_csv.empty())
        write_eval_csv(std::cout, final_report);
    else
        write_eval_csv(out_csv, final_report);
}

int run_gradcheck() {
    int failures = 0;
    auto show = [&](const GradCheckReport& report) {
        for (const auto& e : report.entries) {
            std::cout << (e.pass() ? "[PASS] " : "[FAIL] ") << std::left << std::setw(28)
                      << e.name << " max rel err " << std::scientific << std::setprecision(3)
                      << e.max_rel_err << " (tolerance " << e.tolerance << ")\n"
                      << std::defaultfloat;
            failures += !e.pass();
        }
    };
    std::cout << "per-layer checks:\n";
    show(layer_gradient_checks());
    std::cout << "full stack, 20-layer net at width 1/8:\n";
    show(full_net20_gradient_check());
    std::cout << (failures ? "FAILED" : "all checks passed") << "\n";
    return failures ? 1 : 0;
}

void run_compare(const std::string& logs_arg, const std::string& names_arg,
                 const std::string& field_str, const std::string& out_path) {
    const std::vector<std::string> paths = split_list(logs_arg);
    const std::vector<std::string> names = split_list(names_arg);
    if (!names.empty() && names.size() != paths.size())
        throw std::runtime_error("--names must match --logs in count");
    std::vector<MetricsLog> logs;
    for (std::size_t i = 0; i < paths.size(); ++i)
        logs.push_back(read_metrics_csv(paths[i], i < names.size() ? names[i] : ""));
    const CurveField field =
        field_str == "train_loss" ? CurveField::TrainLoss : CurveField::ValError;
    const CurveTable table = compare_runs(logs, field, &std::cerr);
    if (out_path.empty()) {
        write_curve_csv(std::cout, table);
    } else {
        std::ofstream os(out_path);
        if (!os) throw std::runtime_error("cannot open " + out_path);
        write_curve_csv(os, table);
        std::cout << "wrote " << table.iters.size() << " joined rows -> " << out_path << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"JPEG-domain CNN steganalysis workbench"};
    app.require_subcommand(1);
    int rc = 0;

    // preprocess
    std::string pp_in, pp_out, pp_precision = "f64";
    auto* pre = app.add_subcommand("preprocess",
                                   "decompress a coefficient file to a cached spatial tensor");
    pre->add_option("--in", pp_in, "input .jcf file")->required()->check(CLI::ExistingFile);
    pre->add_option("--out", pp_out, "output .tns file")->required();
    pre->add_option("--precision", pp_precision, "f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    pre->callback([&] {
        if (pp_precision == "f32")
            run_preprocess<float>(pp_in, pp_out);
        else
            run_preprocess<double>(pp_in, pp_out);
    });

    // simulate
    std::string sim_in, sim_out;
    SimConfig sim_cfg;
    auto* sim = app.add_subcommand("simulate", "derive a stego coefficient file from a cover");
    sim->add_option("--in", sim_in, "cover .jcf")->required()->check(CLI::ExistingFile);
    sim->add_option("--out", sim_out, "stego .jcf")->required();
    sim->add_option("--rate", sim_cfg.change_rate, "fraction of nonzero AC coefficients")
        ->required()
        ->check(CLI::Range(0.0, 1.0));
    sim->add_option("--payload", sim_cfg.payload_bpnzac, "nominal payload metadata");
    sim->add_option("--seed", sim_cfg.rng_seed, "rng seed");
    sim->callback([&] { run_simulate(sim_in, sim_out, sim_cfg); });

    // corpus
    std::string corpus_out;
    CorpusConfig corpus_cfg;
    auto* corpus = app.add_subcommand("corpus", "generate a synthetic cover/stego corpus");
    corpus->add_option("--out", corpus_out, "output directory")->required();
    corpus->add_option("--pairs", corpus_cfg.n_pairs, "number of pairs");
    corpus->add_option("--size", corpus_cfg.image_size, "square image side, multiple of 16");
    corpus->add_option("--quality", corpus_cfg.quality, "quantization quality factor");
    corpus->add_option("--rate", corpus_cfg.sim.change_rate, "change rate")
        ->check(CLI::Range(0.0, 1.0));
    corpus->add_option("--payload", corpus_cfg.sim.payload_bpnzac, "nominal payload metadata");
    corpus->add_option("--seed", corpus_cfg.sim.rng_seed, "rng seed");
    corpus->add_option("--split", corpus_cfg.split, "split label for the manifest");
    corpus->callback([&] { run_corpus(corpus_out, corpus_cfg); });

    // train / finetune
    std::string tr_manifest, tr_val, tr_arch, tr_width, tr_config, tr_out = "run", tr_resume;
    std::string tr_precision = "f64", ft_init;
    auto add_train_opts = [&](CLI::App* cmd, bool finetune) {
        cmd->add_option("--manifest", tr_manifest, "training manifest")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--val", tr_val, "validation manifest")->check(CLI::ExistingFile);
        cmd->add_option("--arch", tr_arch, "architecture name")->required();
        cmd->add_option("--width", tr_width, "width multiplier (decimal or fraction)");
        cmd->add_option("--config", tr_config, "key=value training configuration")
            ->check(CLI::ExistingFile);
        cmd->add_option("--out", tr_out, "output directory for checkpoints and metrics");
        cmd->add_option("--precision", tr_precision, "f32 or f64")
            ->check(CLI::IsMember({"f32", "f64"}));
        if (finetune)
            cmd->add_option("--init-from", ft_init, "checkpoint providing initial weights")
                ->required()
                ->check(CLI::ExistingFile);
        else
            cmd->add_option("--resume", tr_resume, "checkpoint to continue")
                ->check(CLI::ExistingFile);
    };
    auto* train = app.add_subcommand("train", "train a network on a manifest");
    add_train_opts(train, false);
    train->callback([&] {
        if (tr_precision == "f32")
            run_train<float>(tr_manifest, tr_val, tr_arch, tr_width, tr_config, tr_out,
                             tr_resume, "");
        else
            run_train<double>(tr_manifest, tr_val, tr_arch, tr_width, tr_config, tr_out,
                              tr_resume, "");
    });
    auto* finetune =
        app.add_subcommand("finetune", "train starting from an existing checkpoint's weights");
    add_train_opts(finetune, true);
    finetune->callback([&] {
        if (tr_precision == "f32")
            run_train<float>(tr_manifest, tr_val, tr_arch, tr_width, tr_config, tr_out, "",
                             ft_init);
        else
            run_train<double>(tr_manifest, tr_val, tr_arch, tr_width, tr_config, tr_out, "",
                              ft_init);
    });

    // eval
    std::string ev_manifest, ev_ckpts, ev_out;
    auto* ev = app.add_subcommand("eval", "score checkpoints on a split, averaging if several");
    ev->add_option("--manifest", ev_manifest, "evaluation manifest")
        ->required()
        ->check(CLI::ExistingFile);
    ev->add_option("--checkpoints", ev_ckpts, "comma-separated checkpoint files")->required();
    ev->add_option("--out", ev_out, "report CSV path (stdout when omitted)");
    ev->callback([&] { run_eval(ev_manifest, ev_ckpts, ev_out); });

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference verification of every layer");
    gc->callback([&] { rc = run_gradcheck(); });

    // compare
    std::string cmp_logs, cmp_names, cmp_field = "val_error", cmp_out;
    auto* cmp = app.add_subcommand("compare", "join metrics logs on iteration for plotting");
    cmp->add_option("--logs", cmp_logs, "comma-separated metrics CSV files")->required();
    cmp->add_option("--names", cmp_names, "column names, comma-separated (default: file stems)");
    cmp->add_option("--field", cmp_field, "val_error or train_loss")
        ->check(CLI::IsMember({"val_error", "train_loss"}));
    cmp->add_option("--out", cmp_out, "joined CSV path (stdout when omitted)");
    cmp->callback([&] { run_compare(cmp_logs, cmp_names, cmp_field, cmp_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
