#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stegnet/manifest.hpp"
#include "stegnet/network.hpp"
#include "stegnet/trainer.hpp"

namespace stegnet {

struct ImageEval {
    std::string image;
    double prob_cover = 0;
    double prob_stego = 0;
    int label = 0;
    int pred = 0;
};

struct EvalReport {
    std::vector<ImageEval> images;
    double error = 0;
    std::vector<std::string> checkpoints;  // provenance, filled by the caller
    int ensemble_size = 1;

    void validate() const {
        for (const auto& im : images)
            if (std::abs(im.prob_cover + im.prob_stego - 1.0) > 1e-6)
                throw std::logic_error("probabilities for " + im.image + " do not sum to 1");
        if (!(error >= 0 && error <= 1)) throw std::logic_error("error outside [0,1]");
    }
};

// Tie goes to cover: stego needs strictly more mass.
inline int predict_label(double prob_cover, double prob_stego) {
    return prob_stego > prob_cover ? 1 : 0;
}

inline double misclassification_rate(const std::vector<ImageEval>& images) {
    if (images.empty()) throw std::invalid_argument("no images to score");
    std::size_t wrong = 0;
    for (const auto& im : images) wrong += im.pred != im.label;
    return static_cast<double>(wrong) / static_cast<double>(images.size());
}

// Image names in evaluation order: each pair contributes its cover then its
// stego, matching batch assembly.
inline std::vector<std::string> image_names(const DatasetManifest& m) {
    std::vector<std::string> names;
    names.reserve(m.records.size() * 2);
    for (const auto& r : m.records) {
        names.push_back(r.cover_path);
        names.push_back(r.stego_path);
    }
    return names;
}

// Scores every image of a split: forward in evaluation mode, softmax, argmax.
// Deterministic; batch membership cannot affect results because evaluation
// mode normalizes with running statistics.
template <typename Scalar>
EvalReport evaluate(Network<Scalar>& net, const PairDataset<Scalar>& ds, const PreprocConfig& pp,
                    const std::vector<std::string>* names = nullptr) {
    if (ds.size() == 0) throw std::invalid_argument("empty evaluation split");
    if (names && names->size() != ds.size() * 2)
        throw std::invalid_argument("name list does not match dataset");
    const Mode prev = net.mode();
    net.set_mode(Mode::Eval);
    EvalReport report;
    const std::size_t chunk = 16;
    for (std::size_t start = 0; start < ds.size(); start += chunk) {
        const std::size_t stop = std::min(ds.size(), start + chunk);
        std::vector<std::size_t> idx(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        const Batch<Scalar> b = assemble_batch(ds, idx, pp, nullptr);
        const Tensor<Scalar> logits = net.forward(b.input);
        for (int i = 0; i < logits.shape().n; ++i) {
            const double l0 = static_cast<double>(logits.at(i, 0, 0, 0));
            const double l1 = static_cast<double>(logits.at(i, 1, 0, 0));
            const double m = std::max(l0, l1);
            const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
            ImageEval im;
            im.prob_cover = e0 / (e0 + e1);
            im.prob_stego = e1 / (e0 + e1);
            im.label = b.labels[static_cast<std::size_t>(i)];
            im.pred = predict_label(im.prob_cover, im.prob_stego);
            const std::size_t global = 2 * start + static_cast<std::size_t>(i);
            im.image = names ? (*names)[global]
                             : "pair" + std::to_string(global / 2) +
                                   (global % 2 ? ":stego" : ":cover");
            report.images.push_back(std::move(im));
        }
    }
    net.set_mode(prev);
    report.error = misclassification_rate(report.images);
    report.validate();
    return report;
}

// Uniform average of per-image probability tables, summed in list order.
// Every table must describe the same images; predictions and the error are
// recomputed from the averaged probabilities.
inline EvalReport ensemble_probs(const std::vector<EvalReport>& runs) {
    if (runs.empty()) throw std::invalid_argument("no probability tables to ensemble");
    const std::size_t n_images = runs.front().images.size();
    for (const auto& r : runs) {
        if (r.images.size() != n_images)
            throw std::invalid_argument("image lists differ across tables");
        for (std::size_t i = 0; i < n_images; ++i)
            if (r.images[i].image != runs.front().images[i].image ||
                r.images[i].label != runs.front().images[i].label)
                throw std::invalid_argument("image lists differ across tables");
    }
    EvalReport out;
    out.ensemble_size = 0;
    for (const auto& r : runs) {
        out.ensemble_size += r.ensemble_size;
        out.checkpoints.insert(out.checkpoints.end(), r.checkpoints.begin(),
                               r.checkpoints.end());
    }
    const double n = static_cast<double>(runs.size());
    for (std::size_t i = 0; i < n_images; ++i) {
        ImageEval im;
        im.image = runs.front().images[i].image;
        im.label = runs.front().images[i].label;
        double pc = 0, ps = 0;
        for (const auto& r : runs) {
            pc += r.images[i].prob_cover;
            ps += r.images[i].prob_stego;
        }
        im.prob_cover = pc / n;
        im.prob_stego = ps / n;
        im.pred = predict_label(im.prob_cover, im.prob_stego);
        out.images.push_back(std::move(im));
    }
    out.error = misclassification_rate(out.images);
    out.validate();
    return out;
}

inline void write_eval_csv(std::ostream& os, const EvalReport& report) {
    os << std::setprecision(17);
    os << "image,prob_cover,prob_stego,label,pred\n";
    for (const auto& im : report.images)
        os << im.image << ',' << im.prob_cover << ',' << im.prob_stego << ',' << im.label << ','
           << im.pred << '\n';
    if (!report.checkpoints.empty()) {
        os << "# checkpoints=";
        for (std::size_t i = 0; i < report.checkpoints.size(); ++i)
            os << (i ? ";" : "") << report.checkpoints[i];
        os << '\n';
    }
    os << "# error=" << report.error << " images=" << report.images.size()
       << " ensemble_size=" << report.ensemble_size << '\n';
}

inline void write_eval_csv(const std::string& path, const EvalReport& report) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    write_eval_csv(os, report);
    if (!os) throw std::runtime_error("write failed: " + path);
}

// Parsed form of the trainer's metrics CSV.
struct MetricsRow {
    std::uint64_t iter = 0;
    double lr = 0;
    double train_loss = 0;
    bool has_val = false;
    double val_error = 0;
};

struct MetricsLog {
    std::string name;
    std::vector<MetricsRow> rows;
};

inline MetricsLog read_metrics_csv(const std::string& path, std::string name = "") {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open metrics log: " + path);
    MetricsLog log;
    log.name = name.empty() ? std::filesystem::path(path).stem().string() : std::move(name);
    std::string line;
    if (!std::getline(is, line) || line != "iter,lr,train_loss,val_error")
        throw std::runtime_error(path + ": not a metrics log (bad header)");
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string f0, f1, f2, f3;
        std::getline(ls, f0, ',');
        std::getline(ls, f1, ',');
        std::getline(ls, f2, ',');
        std::getline(ls, f3, ',');
        try {
            MetricsRow row;
            row.iter = std::stoull(f0);
            row.lr = std::stod(f1);
            row.train_loss = std::stod(f2);
            if (!f3.empty()) {
                row.val_error = std::stod(f3);
                row.has_val = true;
            }
            log.rows.push_back(row);
        } catch (const std::exception&) {
            throw std::runtime_error(path + " line " + std::to_string(lineno) +
                                     ": bad metrics row \"" + line + "\"");
        }
    }
    return log;
}

enum class CurveField { TrainLoss, ValError };

// Inner join of several runs' curves on iteration number, for side-by-side
// plots. Mismatched grids shrink to the intersection with a warning; an empty
// intersection is an error.
struct CurveTable {
    std::vector<std::uint64_t> iters;
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;  // one column per log
    bool grids_differed = false;
};

inline CurveTable compare_runs(const std::vector<MetricsLog>& logs, CurveField field,
                               std::ostream* warn = nullptr) {
    if (logs.size() < 2) throw std::invalid_argument("need at least two metrics logs");
    std::vector<std::map<std::uint64_t, double>> series;
    for (const auto& log : logs) {
        std::map<std::uint64_t, double> s;
        for (const auto& row : log.rows) {
            if (field == CurveField::ValError) {
                if (row.has_val) s[row.iter] = row.val_error;
            } else {
                s[row.iter] = row.train_loss;
            }
        }
        series.push_back(std::move(s));
    }
    std::set<std::uint64_t> common;
    for (const auto& [it, v] : series.front()) common.insert(it);
    for (std::size_t i = 1; i < series.size(); ++i) {
        std::set<std::uint64_t> keep;
        for (std::uint64_t it : common)
            if (series[i].count(it)) keep.insert(it);
        common.swap(keep);
    }
    if (common.empty()) throw std::runtime_error("no common iterations across metrics logs");

    CurveTable table;
    table.iters.assign(common.begin(), common.end());
    for (const auto& s : series)
        if (s.size() != common.size()) table.grids_differed = true;
    if (table.grids_differed && warn)
        *warn << "warning: iteration grids differ; inner join keeps " << common.size()
              << " common iterations\n";
    for (std::size_t i = 0; i < logs.size(); ++i) {
        table.names.push_back(logs[i].name);
        std::vector<double> col;
        col.reserve(table.iters.size());
        for (std::uint64_t it : table.iters) col.push_back(series[i].at(it));
        table.columns.push_back(std::move(col));
    }
    return table;
}

inline void write_curve_csv(std::ostream& os, const CurveTable& table) {
    os << std::setprecision(17);
    os << "iter";
    for (const auto& n : table.names) os << ',' << n;
    os << '\n';
    for (std::size_t r = 0; r < table.iters.size(); ++r) {
        os << table.iters[r];
        for (const auto& col : table.columns) os << ',' << col[r];
        os << '\n';
    }
}

}  // namespace stegnet
