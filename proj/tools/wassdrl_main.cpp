// wassdrl: batch front end over the library. Five subcommands (train,
// crossval, interval, worstcase, radius) that read CSV datasets and JSON
// configs and emit JSON reports plus plot-ready CSV.
//
// Exit codes: 0 success, 2 usage/IO/data errors, 3 solver failures,
// 4 unsupported configurations (non-polyhedral exact mode, n = 1 radius, ...).

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wassdrl/bounds.hpp"
#include "wassdrl/classification.hpp"
#include "wassdrl/extremal.hpp"
#include "wassdrl/kernelized.hpp"
#include "wassdrl/neural.hpp"
#include "wassdrl/regression.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace wassdrl;

namespace {

// ------------------------------------------------------------ small parsers

Norm parse_p(const std::string& s) {
    if (s == "1") return Norm::One;
    if (s == "2") return Norm::Two;
    if (s == "inf") return Norm::Inf;
    throw ParseError("--p must be one of 1, 2, inf (got '" + s + "')");
}

double parse_kappa(const std::string& s) {
    if (s == "inf") return kInf;
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        if (!(v >= 0.0)) throw ParseError("--kappa must be >= 0");
        return v;
    } catch (const std::invalid_argument&) {
        throw ParseError("--kappa must be a number or 'inf' (got '" + s + "')");
    } catch (const std::out_of_range&) {
        throw ParseError("--kappa out of range: " + s);
    }
}

double parse_num(const std::string& s, const std::string& flag) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(flag + " expects a number, got '" + s + "'");
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

// Loss syntax: hinge | smooth_hinge | logloss | absolute | huber[:delta] |
// eps[:epsilon] | pinball[:tau]
LossSpec parse_loss(const std::string& s) {
    const auto parts = split(s, ':');
    const std::string& name = parts[0];
    const auto param = [&](double dflt) {
        return parts.size() > 1 ? parse_num(parts[1], "--loss " + name) : dflt;
    };
    if (parts.size() > 2) throw ParseError("malformed loss spec '" + s + "'");
    if (name == "hinge") return LossSpec::hinge();
    if (name == "smooth_hinge") return LossSpec::smooth_hinge();
    if (name == "logloss") return LossSpec::logloss();
    if (name == "absolute") return LossSpec::absolute();
    if (name == "huber") return LossSpec::huber(param(1.0));
    if (name == "eps") return LossSpec::eps_insensitive(param(0.1));
    if (name == "pinball") return LossSpec::pinball(param(0.5));
    throw ParseError("unknown loss '" + name +
                     "' (try hinge, smooth_hinge, logloss, absolute, "
                     "huber:d, eps:e, pinball:t)");
}

json loss_to_json(const LossSpec& L) {
    json j;
    switch (L.kind) {
        case LossKind::Hinge: j["name"] = "hinge"; break;
        case LossKind::SmoothHinge: j["name"] = "smooth_hinge"; break;
        case LossKind::Logloss: j["name"] = "logloss"; break;
        case LossKind::Absolute: j["name"] = "absolute"; break;
        case LossKind::Huber:
            j["name"] = "huber";
            j["param"] = L.delta;
            break;
        case LossKind::EpsInsensitive:
            j["name"] = "eps";
            j["param"] = L.eps;
            break;
        case LossKind::Pinball:
            j["name"] = "pinball";
            j["param"] = L.tau;
            break;
        case LossKind::PWL:
            throw ParseError("raw piecewise losses have no CLI serialization");
    }
    return j;
}

LossSpec loss_from_json(const json& j) {
    std::string s = j.at("name").get<std::string>();
    if (j.contains("param")) s += ":" + std::to_string(j["param"].get<double>());
    return parse_loss(s);
}

// Kernel syntax: linear | gaussian:gamma | laplacian:gamma |
// poly:gamma:degree[:radius]
KernelSpec parse_kernel(const std::string& s) {
    const auto parts = split(s, ':');
    const std::string& name = parts[0];
    if (name == "linear") {
        if (parts.size() > 1) throw ParseError("linear kernel takes no parameters");
        return KernelSpec::linear();
    }
    if (name == "gaussian" || name == "laplacian") {
        if (parts.size() != 2)
            throw ParseError(name + " kernel needs exactly one parameter (gamma)");
        const double g = parse_num(parts[1], "--kernel " + name);
        return name == "gaussian" ? KernelSpec::gaussian(g)
                                  : KernelSpec::laplacian(g);
    }
    if (name == "poly") {
        if (parts.size() < 3 || parts.size() > 4)
            throw ParseError("poly kernel syntax: poly:gamma:degree[:radius]");
        const double g = parse_num(parts[1], "--kernel poly");
        const double d = parse_num(parts[2], "--kernel poly");
        const double r = parts.size() == 4 ? parse_num(parts[3], "--kernel poly") : 0.0;
        if (d != std::floor(d)) throw ParseError("poly degree must be an integer");
        return KernelSpec::polynomial(g, static_cast<int>(d), r);
    }
    throw ParseError("unknown kernel '" + name +
                     "' (try linear, gaussian:g, laplacian:g, poly:g:d[:R])");
}

json kernel_to_json(const KernelSpec& k) {
    json j;
    j["name"] = kernel_name(k.kind);
    j["gamma"] = k.gamma;
    j["degree"] = k.degree;
    j["radius"] = k.radius;
    return j;
}

KernelSpec kernel_from_json(const json& j) {
    const std::string name = j.at("name").get<std::string>();
    if (name == "linear") return KernelSpec::linear();
    if (name == "gaussian") return KernelSpec::gaussian(j.at("gamma").get<double>());
    if (name == "laplacian")
        return KernelSpec::laplacian(j.at("gamma").get<double>());
    if (name == "polynomial")
        return KernelSpec::polynomial(j.at("gamma").get<double>(),
                                      j.at("degree").get<int>(),
                                      j.value("radius", 0.0));
    throw ParseError("unknown kernel kind in model file: " + name);
}

Activation parse_activation(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "relu") return Activation::ReLU;
    if (s == "tanh") return Activation::Tanh;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "softmax") return Activation::Softmax;
    if (s == "elu") return Activation::Elu;
    throw ParseError("unknown activation '" + s + "'");
}

// ---------------------------------------------------------------- JSON ops

json vec_to_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Vec vec_from_json(const json& a) {
    Vec v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    return v;
}

json mat_to_json(const Mat& M) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i)
        rows.push_back(vec_to_json(M.row(i).transpose()));
    return rows;
}

Mat mat_from_json(const json& rows) {
    if (rows.empty()) return Mat(0, 0);
    const auto R = static_cast<Eigen::Index>(rows.size());
    const auto C = static_cast<Eigen::Index>(rows[0].size());
    Mat M(R, C);
    for (Eigen::Index i = 0; i < R; ++i) {
        if (static_cast<Eigen::Index>(rows[i].size()) != C)
            throw ParseError("ragged matrix in JSON input");
        for (Eigen::Index j = 0; j < C; ++j) M(i, j) = rows[i][j].get<double>();
    }
    return M;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void write_file(const fs::path& path, const std::string& body) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path.string());
    out << body;
    if (!out) throw ParseError("short write on " + path.string());
}

void write_json_file(const fs::path& path, const json& j) {
    write_file(path, j.dump(2) + "\n");
}

std::string csv_num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

// Support file: JSON {C1: [[...]], c2: [...], d: [...]}; c2 optional (inputs
// only when absent).
SupportPolytope load_support(const std::string& path) {
    const json j = read_json_file(path);
    SupportPolytope s;
    s.C1 = mat_from_json(j.at("C1"));
    s.d = vec_from_json(j.at("d"));
    if (j.contains("c2") && !j["c2"].empty()) s.c2 = vec_from_json(j["c2"]);
    if (s.C1.rows() != s.d.size() ||
        (s.c2.size() > 0 && s.c2.size() != s.d.size()))
        throw ParseError(path + ": C1/c2/d row counts disagree");
    return s;
}

double json_kappa(const json& j) {
    return j.is_string() ? parse_kappa(j.get<std::string>()) : j.get<double>();
}

json kappa_json(double kappa) {
    if (kappa == kInf) return "inf";
    return kappa;
}

// --------------------------------------------------------------- run state

struct CommonOpts {
    std::string data;
    std::string task = "reg";
    std::string loss = "hinge";
    std::string p = "2";
    std::string kappa = "inf";
    std::string metric = "joint";  // regression only: joint | separable
    std::string kernel;
    std::string support;
    std::string out = "out";
    std::string model;
    double rho = 0.0;
    double eta = 0.05;
    double gamma = 0.0;  // worst-case sequence-mode granularity
    std::uint64_t seed = 0;
    int folds = 5;
    std::vector<double> rho_grid;
    std::string kappa_grid;
    // neural options
    std::string net;
    std::string act = "tanh";
    double rho_bar = 0.0;
    int epochs = 200;
    double eta0 = 1e-3;
    double momentum = 0.9;
};

Task parse_task(const std::string& s) {
    if (s == "reg") return Task::Regression;
    if (s == "cls") return Task::Classification;
    throw ParseError("--task must be reg or cls");
}

TransportCost make_metric(const CommonOpts& o, Task task) {
    const Norm p = parse_p(o.p);
    const double kappa = parse_kappa(o.kappa);
    if (task == Task::Classification) return TransportCost::classification(p, kappa);
    if (o.metric == "joint") return TransportCost::joint_regression(p);
    if (o.metric == "separable") return TransportCost::separable_regression(p, kappa);
    throw ParseError("--metric must be joint or separable");
}

LinearHypothesis linear_from_model(const json& m) {
    if (m.at("kind") != "linear")
        throw ParseError("this command needs a linear model file");
    return LinearHypothesis{vec_from_json(m.at("w"))};
}

// ------------------------------------------------------------------- train

json train_linear(const CommonOpts& o, const Dataset& ds, json& model) {
    const LossSpec loss = parse_loss(o.loss);
    const TransportCost metric = make_metric(o, ds.task);
    SupportPolytope support;
    if (!o.support.empty()) support = load_support(o.support);

    TrainResult res;
    if (ds.task == Task::Classification) {
        ClassificationProblem prob{ds, loss, support, metric, o.rho};
        res = loss.is_pwl() ? train_pwl_classification(prob)
                            : train_lipschitz_classification(prob);
    } else {
        RegressionProblem prob{ds, loss, support, metric, o.rho};
        res = loss.is_pwl() ? train_pwl_regression(prob)
                            : train_lipschitz_regression(prob);
    }

    model["kind"] = "linear";
    model["w"] = vec_to_json(res.hypothesis.w);
    json rep;
    rep["objective"] = res.value;
    return rep;
}

json train_kernel(const CommonOpts& o, const Dataset& ds, json& model) {
    const LossSpec loss = parse_loss(o.loss);
    const KernelSpec kspec = parse_kernel(o.kernel);
    if (!o.support.empty())
        throw BoundedSupportUnsupported("kernel training has no support-set mode");
    KernelTrainResult res =
        ds.task == Task::Classification
            ? train_kernel_classification(ds, kspec, loss, o.rho,
                                          parse_kappa(o.kappa))
            : train_kernel_regression(ds, kspec, loss, o.rho);
    model["kind"] = "kernel";
    model["kernel"] = kernel_to_json(res.hypothesis.kernel);
    model["beta"] = vec_to_json(res.hypothesis.beta);
    model["anchors"] = mat_to_json(res.hypothesis.anchors);
    json rep;
    rep["objective"] = res.value;
    return rep;
}

json train_neural(const CommonOpts& o, const Dataset& ds, json& model) {
    const LossSpec loss = parse_loss(o.loss);
    MLPSpec spec;
    spec.p = parse_p(o.p);
    spec.sizes.push_back(static_cast<int>(ds.dim()));
    for (const std::string& tok : split(o.net, ','))
        spec.sizes.push_back(static_cast<int>(parse_num(tok, "--net")));
    spec.sizes.push_back(1);
    const Activation hidden = parse_activation(o.act);
    for (std::size_t m = 0; m + 2 < spec.sizes.size(); ++m)
        spec.acts.push_back(hidden);
    spec.acts.push_back(Activation::Identity);

    SPGDOptions opts;
    opts.epochs = o.epochs;
    opts.eta0 = o.eta0;
    opts.momentum = o.momentum;
    opts.seed = o.seed;
    const auto res = train_spgd(spec, ds, loss, o.rho_bar, opts);

    model["kind"] = "neural";
    model["p"] = norm_name(spec.p);
    json layers = json::array();
    for (std::size_t m = 0; m < res.weights.W.size(); ++m) {
        const Mat& W = res.weights.W[m];
        json layer;
        layer["rows"] = W.rows();
        layer["cols"] = W.cols();
        json data = json::array();
        for (Eigen::Index i = 0; i < W.rows(); ++i)
            for (Eigen::Index j = 0; j < W.cols(); ++j) data.push_back(W(i, j));
        layer["data"] = data;
        layer["activation"] = activation_name(spec.acts[m]);
        layers.push_back(layer);
    }
    model["layers"] = layers;

    std::ostringstream trace;
    trace << "epoch,objective,reg_term\n";
    for (std::size_t k = 0; k < res.trace.size(); ++k)
        trace << k + 1 << ',' << csv_num(res.trace[k].objective) << ','
              << csv_num(res.trace[k].reg) << '\n';
    write_file(fs::path(o.out) / "trace.csv", trace.str());

    json rep;
    rep["objective"] = res.value;
    rep["epochs_run"] = res.epochs_run;
    rep["rho_bar"] = o.rho_bar;
    return rep;
}

int cmd_train(const CommonOpts& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset ds = load_dataset(o.data, parse_task(o.task));

    json model;
    model["task"] = o.task;
    model["loss"] = loss_to_json(parse_loss(o.loss));
    model["p"] = o.p;
    model["kappa"] = kappa_json(parse_kappa(o.kappa));
    model["rho"] = o.rho;
    if (parse_task(o.task) == Task::Regression) model["metric"] = o.metric;

    json rep;
    if (!o.net.empty())
        rep = train_neural(o, ds, model);
    else if (!o.kernel.empty())
        rep = train_kernel(o, ds, model);
    else
        rep = train_linear(o, ds, model);

    const fs::path model_path = fs::path(o.out) / "model.json";
    write_json_file(model_path, model);

    rep["command"] = "train";
    rep["rho"] = o.rho;
    rep["kappa"] = kappa_json(parse_kappa(o.kappa));
    rep["p"] = o.p;
    rep["loss"] = loss_to_json(parse_loss(o.loss));
    rep["model"] = model_path.string();
    rep["n"] = ds.dim();
    rep["N"] = ds.size();
    rep["wall_time"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    write_json_file(fs::path(o.out) / "report.json", rep);
    std::cout << rep.dump(2) << std::endl;
    return 0;
}

// ---------------------------------------------------------------- crossval

// Deterministic fold ids: seeded shuffle, then round-robin; classification
// shuffles and deals each class separately so folds stay stratified.
std::vector<int> fold_ids(const Dataset& ds, int folds, std::uint64_t seed) {
    const auto N = ds.size();
    if (N < folds)
        throw InsufficientData("cannot split " + std::to_string(N) +
                               " samples into " + std::to_string(folds) +
                               " folds");
    std::vector<int> id(static_cast<std::size_t>(N), 0);
    std::mt19937_64 gen(seed);
    auto deal = [&](std::vector<Eigen::Index> idx) {
        std::shuffle(idx.begin(), idx.end(), gen);
        for (std::size_t k = 0; k < idx.size(); ++k)
            id[static_cast<std::size_t>(idx[k])] = static_cast<int>(k % folds);
    };
    if (ds.task == Task::Classification) {
        std::vector<Eigen::Index> pos, neg;
        for (Eigen::Index i = 0; i < N; ++i)
            (ds.y[i] > 0 ? pos : neg).push_back(i);
        deal(std::move(pos));
        deal(std::move(neg));
    } else {
        std::vector<Eigen::Index> all(static_cast<std::size_t>(N));
        std::iota(all.begin(), all.end(), 0);
        deal(std::move(all));
    }
    return id;
}

Dataset subset(const Dataset& ds, const std::vector<int>& id, int fold, bool keep) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < ds.size(); ++i)
        if ((id[static_cast<std::size_t>(i)] == fold) == keep) rows.push_back(i);
    Mat X(static_cast<Eigen::Index>(rows.size()), ds.dim());
    Vec y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        X.row(static_cast<Eigen::Index>(k)) = ds.X.row(rows[k]);
        y[static_cast<Eigen::Index>(k)] = ds.y[rows[k]];
    }
    Dataset out;
    out.X = std::move(X);
    out.y = std::move(y);
    out.task = ds.task;
    return out;
}

std::vector<double> parse_kappa_grid(const std::string& s) {
    std::vector<double> out;
    for (const std::string& tok : split(s, ',')) out.push_back(parse_kappa(tok));
    if (out.empty()) throw ParseError("--kappa-grid is empty");
    std::sort(out.begin(), out.end());  // inf sorts last
    return out;
}

int cmd_crossval(const CommonOpts& o) {
    if (!o.net.empty())
        throw ParseError("crossval supports linear and kernel models only");
    const Dataset ds = load_dataset(o.data, parse_task(o.task));
    const LossSpec loss = parse_loss(o.loss);
    const Norm p = parse_p(o.p);
    if (o.folds < 2) throw ParseError("--folds must be >= 2");

    std::vector<double> rhos = o.rho_grid;
    if (rhos.empty())
        rhos = {1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 5e-1};
    std::sort(rhos.begin(), rhos.end());
    for (double r : rhos)
        if (!(r >= 0.0)) throw ParseError("--rho-grid entries must be >= 0");
    std::vector<double> kappas;
    if (!o.kappa_grid.empty())
        kappas = parse_kappa_grid(o.kappa_grid);
    else if (ds.task == Task::Classification)
        kappas = {0.1, 0.25, 0.5, 0.75, kInf};
    else
        kappas = {parse_kappa(o.kappa)};

    const auto id = fold_ids(ds, o.folds, o.seed);
    const bool kernelized = !o.kernel.empty();
    const KernelSpec kspec = kernelized ? parse_kernel(o.kernel) : KernelSpec{};

    // score: CCR for classification (higher better), negative mean loss for
    // regression, so the argmax convention covers both
    auto evaluate = [&](const Dataset& train, const Dataset& probe, double rho,
                        double kappa) {
        std::function<double(const Vec&)> predict;
        if (kernelized) {
            const auto res =
                ds.task == Task::Classification
                    ? train_kernel_classification(train, kspec, loss, rho, kappa)
                    : train_kernel_regression(train, kspec, loss, rho);
            const KernelHypothesis h = res.hypothesis;
            predict = [h](const Vec& x) { return h(x); };
        } else if (ds.task == Task::Classification) {
            ClassificationProblem prob{train, loss, {},
                                       TransportCost::classification(p, kappa),
                                       rho};
            const auto res = loss.is_pwl() ? train_pwl_classification(prob)
                                           : train_lipschitz_classification(prob);
            const LinearHypothesis h = res.hypothesis;
            predict = [h](const Vec& x) { return h(x); };
        } else {
            const TransportCost metric =
                o.metric == "separable"
                    ? TransportCost::separable_regression(p, kappa)
                    : TransportCost::joint_regression(p);
            RegressionProblem prob{train, loss, {}, metric, rho};
            const auto res = loss.is_pwl() ? train_pwl_regression(prob)
                                           : train_lipschitz_regression(prob);
            const LinearHypothesis h = res.hypothesis;
            predict = [h](const Vec& x) { return h(x); };
        }
        double score = 0.0;
        for (Eigen::Index i = 0; i < probe.size(); ++i) {
            const double out = predict(probe.input(i));
            if (ds.task == Task::Classification)
                score += probe.y[i] * out > 0.0 ? 1.0 : 0.0;
            else
                score -= loss_eval(loss, out - probe.y[i]);
        }
        return score / static_cast<double>(probe.size());
    };

    std::ostringstream table;
    table << "rho,kappa,fold,score\n";
    double best_score = -kInf, best_rho = rhos.front(), best_kappa = kappas.front();
    for (double rho : rhos) {
        for (double kappa : kappas) {
            double mean = 0.0;
            for (int f = 0; f < o.folds; ++f) {
                const double s =
                    evaluate(subset(ds, id, f, false), subset(ds, id, f, true),
                             rho, kappa);
                table << csv_num(rho) << ','
                      << (kappa == kInf ? std::string("inf") : csv_num(kappa))
                      << ',' << f << ',' << csv_num(s) << '\n';
                mean += s;
            }
            mean /= o.folds;
            // strict improvement only: ties resolve to the smallest rho,
            // then the smallest kappa (the iteration order)
            if (mean > best_score + 1e-12) {
                best_score = mean;
                best_rho = rho;
                best_kappa = kappa;
            }
        }
    }
    write_file(fs::path(o.out) / "cv_scores.csv", table.str());

    json rep;
    rep["command"] = "crossval";
    rep["rho"] = best_rho;
    rep["kappa"] = kappa_json(best_kappa);
    rep["score"] = best_score;
    rep["folds"] = o.folds;
    rep["seed"] = o.seed;
    rep["p"] = o.p;
    rep["loss"] = loss_to_json(loss);
    if (kernelized) rep["kernel"] = kernel_to_json(kspec);
    write_json_file(fs::path(o.out) / "crossval.json", rep);
    std::cout << rep.dump(2) << std::endl;
    return 0;
}

// ---------------------------------------------------------------- interval

int cmd_interval(const CommonOpts& o, bool rho_given) {
    const json m = read_json_file(o.model);
    const Task task = parse_task(m.at("task").get<std::string>());
    const Dataset ds = load_dataset(o.data, task);
    const LinearHypothesis h = linear_from_model(m);
    const Norm p = parse_p(m.at("p").get<std::string>());

    double rho;
    std::string source;
    if (rho_given) {
        rho = o.rho;
        source = "override";
    } else {
        // concentration dimension: the sample space is (x, y) for regression
        // and x alone for classification (labels are discrete)
        const int dim = static_cast<int>(ds.dim()) +
                        (task == Task::Regression ? 1 : 0);
        rho = radius_basic(ds.size(), dim, o.eta / 2.0);
        source = "basic(eta/2)";
    }

    Interval iv;
    json rep;
    if (task == Task::Regression) {
        iv = error_interval(ds, h.w, rho, p);
        rep["quantity"] = "error";
    } else {
        const double kappa = json_kappa(m.at("kappa"));
        iv = risk_interval(ds, h.w, rho, kappa, p);
        rep["quantity"] = "risk";
        rep["kappa"] = kappa_json(kappa);
    }
    rep["command"] = "interval";
    rep["radius"] = rho;
    rep["radius_source"] = source;
    rep["eta"] = o.eta;
    rep["lower"] = iv.lower;
    rep["upper"] = iv.upper;
    rep["p"] = norm_name(p);
    rep["N"] = ds.size();
    write_json_file(fs::path(o.out) / "interval.json", rep);
    std::cout << rep.dump(2) << std::endl;
    return 0;
}

// --------------------------------------------------------------- worstcase

// Systematic resampling: deterministic given the seed and, at rho = 0 (all
// atoms carrying 1/N), reproduces the training rows exactly.
std::vector<std::size_t> resample(const std::vector<WeightedAtom>& atoms,
                                  Eigen::Index N, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    const double u0 = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
    std::vector<std::size_t> picks;
    std::size_t a = 0;
    double cum = atoms.empty() ? 0.0 : atoms[0].mass;
    for (Eigen::Index k = 0; k < N; ++k) {
        const double u = (static_cast<double>(k) + u0) / static_cast<double>(N);
        while (u > cum && a + 1 < atoms.size()) cum += atoms[++a].mass;
        picks.push_back(a);
    }
    return picks;
}

int cmd_worstcase(const CommonOpts& o, bool gamma_given) {
    const json m = read_json_file(o.model);
    const Task task = parse_task(m.at("task").get<std::string>());
    const Dataset ds = load_dataset(o.data, task);
    const LinearHypothesis h = linear_from_model(m);
    const LossSpec loss = loss_from_json(m.at("loss"));
    const Norm p = parse_p(m.at("p").get<std::string>());
    const double kappa = json_kappa(m.at("kappa"));
    SupportPolytope support;
    if (!o.support.empty()) support = load_support(o.support);

    WorstCaseDistribution wc;
    std::string mode;
    if (task == Task::Regression) {
        const std::string mname = m.value("metric", std::string("joint"));
        const TransportCost metric =
            mname == "separable" ? TransportCost::separable_regression(p, kappa)
                                 : TransportCost::joint_regression(p);
        RegressionProblem prob{ds, loss, support, metric, o.rho};
        if (gamma_given) {
            wc = worstcase_regression_sequence(prob, h, o.gamma);
            mode = "sequence";
        } else {
            wc = worstcase_regression_exact(prob, h);
            mode = "exact";
        }
    } else {
        ClassificationProblem prob{ds, loss, support,
                                   TransportCost::classification(p, kappa),
                                   o.rho};
        if (gamma_given) {
            wc = worstcase_classification_sequence(prob, h, o.gamma);
            mode = "sequence";
        } else {
            wc = worstcase_classification_exact(prob, h);
            mode = "exact";
        }
    }

    json rep;
    rep["command"] = "worstcase";
    rep["mode"] = mode;
    rep["value"] = wc.attained_value;
    rep["gap_bound"] = wc.gap_bound;
    rep["rho"] = o.rho;
    rep["seed"] = o.seed;
    json atoms = json::array();
    for (const auto& a : wc.atoms) {
        json ja;
        ja["x"] = vec_to_json(a.x);
        ja["y"] = a.y;
        ja["mass"] = a.mass;
        ja["source"] = a.source;
        atoms.push_back(ja);
    }
    rep["atoms"] = atoms;
    write_json_file(fs::path(o.out) / "worstcase.json", rep);

    std::ostringstream csv;
    for (std::size_t pick : resample(wc.atoms, ds.size(), o.seed)) {
        const auto& a = wc.atoms[pick];
        for (Eigen::Index j = 0; j < a.x.size(); ++j) csv << csv_num(a.x[j]) << ',';
        csv << csv_num(a.y) << '\n';
    }
    write_file(fs::path(o.out) / "stressed.csv", csv.str());
    std::cout << rep.dump(2) << std::endl;
    return 0;
}

// ------------------------------------------------------------------ radius

int cmd_radius(const CommonOpts& o, long N, int n) {
    json rep;
    rep["command"] = "radius";
    rep["N"] = N;
    rep["n"] = n;
    rep["eta"] = o.eta;
    const LightTailParams params;
    const HypothesisBox box;
    try {
        rep["rho_basic"] = radius_basic(N, n, o.eta, params);
    } catch (const UnsupportedDimension& e) {
        rep["rho_basic"] = nullptr;
        rep["basic_note"] = e.what();
    }
    rep["improved_required_N"] = improved_radius_requirement(n, o.eta, params);
    try {
        const auto imp = radius_improved(N, n, o.eta, params, box);
        rep["rho_improved"] = imp.value;
        rep["improved_feasible"] = true;
    } catch (const SampleSizeTooSmall&) {
        rep["rho_improved"] = nullptr;
        rep["improved_feasible"] = false;
    }
    write_json_file(fs::path(o.out) / "radius.json", rep);
    std::cout << rep.dump(2) << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distributionally robust learning over Wasserstein balls"};
    app.require_subcommand(1);

    CommonOpts o;
    long radius_N = 0;
    int radius_n = 0;

    auto add_common = [&](CLI::App* c, bool needs_data) {
        auto* d = c->add_option("--data", o.data, "training CSV (last column = output)");
        if (needs_data) d->required();
        c->add_option("--task", o.task, "reg | cls");
        c->add_option("--loss", o.loss,
                      "hinge | smooth_hinge | logloss | absolute | huber:d | "
                      "eps:e | pinball:t");
        c->add_option("--p", o.p, "ground norm: 1 | 2 | inf");
        c->add_option("--kappa", o.kappa, "output transport cost (number or inf)");
        c->add_option("--metric", o.metric, "regression transport: joint | separable");
        c->add_option("--support", o.support, "support polytope JSON");
        c->add_option("--seed", o.seed, "run seed");
        c->add_option("--out", o.out, "output directory");
    };

    auto* train = app.add_subcommand("train", "fit a model and write model + report");
    add_common(train, true);
    train->add_option("--rho", o.rho, "Wasserstein radius")->check(CLI::NonNegativeNumber);
    train->add_option("--kernel", o.kernel,
                      "linear | gaussian:g | laplacian:g | poly:g:d[:R]");
    train->add_option("--net", o.net, "hidden layer widths, e.g. 8,4");
    train->add_option("--act", o.act, "hidden activation for --net");
    train->add_option("--rho-bar", o.rho_bar, "convex-surrogate weight for --net");
    train->add_option("--epochs", o.epochs, "training epochs for --net");
    train->add_option("--eta0", o.eta0, "initial step size for --net");
    train->add_option("--momentum", o.momentum, "momentum for --net");

    auto* cv = app.add_subcommand("crossval", "grid search over (rho, kappa)");
    add_common(cv, true);
    cv->add_option("--rho-grid", o.rho_grid, "rho candidates")->delimiter(',');
    cv->add_option("--kappa-grid", o.kappa_grid, "kappa candidates (comma list)");
    cv->add_option("--folds", o.folds, "cross-validation folds");
    cv->add_option("--kernel", o.kernel, "kernel spec (optional)");

    auto* iv = app.add_subcommand("interval", "confidence interval for a model");
    add_common(iv, true);
    iv->add_option("--model", o.model, "model JSON from train")->required();
    auto* rho_opt = iv->add_option("--rho", o.rho, "radius override")
                        ->check(CLI::NonNegativeNumber);
    iv->add_option("--eta", o.eta, "significance level (radius uses eta/2)");

    auto* wc = app.add_subcommand("worstcase", "extremal distribution for a model");
    add_common(wc, true);
    wc->add_option("--model", o.model, "model JSON from train")->required();
    wc->add_option("--rho", o.rho, "Wasserstein radius")->check(CLI::NonNegativeNumber);
    auto* gamma_opt =
        wc->add_option("--gamma", o.gamma, "sequence-mode granularity in (0,1]");

    auto* rad = app.add_subcommand("radius", "concentration radii for (N, n, eta)");
    rad->add_option("--N", radius_N, "sample count")->required();
    rad->add_option("--n", radius_n, "input dimension")->required();
    rad->add_option("--eta", o.eta, "significance level");
    rad->add_option("--out", o.out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(train)) return cmd_train(o);
        if (app.got_subcommand(cv)) return cmd_crossval(o);
        if (app.got_subcommand(iv)) return cmd_interval(o, rho_opt->count() > 0);
        if (app.got_subcommand(wc)) return cmd_worstcase(o, gamma_opt->count() > 0);
        if (app.got_subcommand(rad)) return cmd_radius(o, radius_N, radius_n);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const UnsupportedNorm& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const NotPWL& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const UnsupportedDimension& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const SampleSizeTooSmall& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const KappaInfinite& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const BoundedSupportUnsupported& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const GammaOutOfRange& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const NotSymmetric& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const IndefiniteBeyondTolerance& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const RadiusViolation& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const SolverFailure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const MaxIterations& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const DivergenceDetected& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
