#include "wassdrl/bounds.hpp"
#include "wassdrl/core.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace wassdrl;
using Catch::Matchers::WithinAbs;

namespace {

std::string bin_path() {
    const char* b = std::getenv("WASSDRL_BIN");
    REQUIRE(b != nullptr);
    return b;
}

fs::path schemas_dir() {
    const char* d = std::getenv("WASSDRL_SCHEMAS");
    REQUIRE(d != nullptr);
    return d;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("wassdrl_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_text(const fs::path& p, const std::string& body) {
    std::ofstream out(p);
    REQUIRE(out.good());
    out << body;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run run_cli(const std::string& args, const fs::path& scratch) {
    const fs::path so = scratch / "stdout.txt";
    const fs::path se = scratch / "stderr.txt";
    const std::string cmd = "\"" + bin_path() + "\" " + args + " > \"" +
                            so.string() + "\" 2> \"" + se.string() + "\"";
    const int raw = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = read_text(so);
    r.err = read_text(se);
    return r;
}

json jload(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    return json::parse(in);
}

// ------------------------------------------------- tiny schema validator

bool type_ok(const json& inst, const std::string& t) {
    if (t == "number") return inst.is_number();
    if (t == "integer") return inst.is_number_integer();
    if (t == "string") return inst.is_string();
    if (t == "boolean") return inst.is_boolean();
    if (t == "null") return inst.is_null();
    if (t == "object") return inst.is_object();
    if (t == "array") return inst.is_array();
    return false;
}

void check_schema(const json& inst, const json& sch, const std::string& where) {
    INFO("at " << where << ": " << inst.dump());
    if (sch.contains("enum")) {
        bool hit = false;
        for (const auto& v : sch["enum"])
            if (inst == v) hit = true;
        REQUIRE(hit);
        return;
    }
    if (sch.contains("type")) {
        const json& t = sch["type"];
        bool ok = false;
        if (t.is_array()) {
            for (const auto& alt : t) ok = ok || type_ok(inst, alt.get<std::string>());
        } else {
            ok = type_ok(inst, t.get<std::string>());
        }
        REQUIRE(ok);
    }
    if (inst.is_object()) {
        if (sch.contains("required"))
            for (const auto& name : sch["required"]) {
                INFO("missing key " << name << " at " << where);
                REQUIRE(inst.contains(name.get<std::string>()));
            }
        if (sch.contains("properties"))
            for (const auto& [k, sub] : sch["properties"].items())
                if (inst.contains(k)) check_schema(inst[k], sub, where + "." + k);
    }
    if (inst.is_array() && sch.contains("items"))
        for (std::size_t i = 0; i < inst.size(); ++i)
            check_schema(inst[i], sch["items"],
                         where + "[" + std::to_string(i) + "]");
}

void validate_schema(const json& inst, const std::string& name) {
    check_schema(inst, jload(schemas_dir() / (name + ".schema.json")), name);
}

// ------------------------------------------------------------ test data

const char* kCls6 =
    "x1,x2,y\n"
    "1.0,0.5,1\n"
    "-0.8,0.2,-1\n"
    "0.6,-0.9,1\n"
    "-0.3,-0.4,-1\n"
    "0.9,0.1,1\n"
    "-0.7,-0.6,-1\n";

const char* kReg5 =
    "x1,x2,y\n"
    "0.1,0.4,0.25\n"
    "0.4,-0.2,0.7\n"
    "-0.3,0.1,-0.35\n"
    "0.8,0.3,1.1\n"
    "-0.6,-0.5,-0.65\n";

std::string separable12() {
    std::ostringstream os;
    os << "x1,x2,y\n";
    const double xs[] = {0.5, 0.7, 0.9, 1.1, 0.6, 0.8};
    for (int k = 0; k < 6; ++k) {
        os << xs[k] << ',' << (k % 2 == 0 ? 0.1 : -0.1) << ",1\n";
        os << -xs[k] << ',' << (k % 2 == 0 ? -0.1 : 0.1) << ",-1\n";
    }
    return os.str();
}

double hinge_emp(const Dataset& ds, const Vec& w) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < ds.size(); ++i)
        total += std::max(0.0, 1.0 - ds.y[i] * w.dot(ds.input(i)));
    return total / static_cast<double>(ds.size());
}

Vec w_from_model(const json& model) {
    Vec w(static_cast<Eigen::Index>(model.at("w").size()));
    for (Eigen::Index i = 0; i < w.size(); ++i)
        w[i] = model["w"][static_cast<std::size_t>(i)].get<double>();
    return w;
}

std::vector<std::vector<double>> csv_rows(const fs::path& p, Task task) {
    const Dataset ds = load_dataset(p.string(), task);
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        std::vector<double> r;
        for (Eigen::Index j = 0; j < ds.dim(); ++j) r.push_back(ds.X(i, j));
        r.push_back(ds.y[i]);
        rows.push_back(std::move(r));
    }
    std::sort(rows.begin(), rows.end());
    return rows;
}

}  // namespace

TEST_CASE("train writes schema-valid models and reports") {
    const fs::path dir = fresh_dir("train");
    write_text(dir / "cls.csv", kCls6);
    write_text(dir / "reg.csv", kReg5);

    SECTION("linear classifier") {
        const auto r = run_cli("train --data \"" + (dir / "cls.csv").string() +
                                   "\" --task cls --loss hinge --rho 0.1 "
                                   "--kappa 0.25 --p inf --out \"" +
                                   (dir / "lin").string() + "\"",
                               dir);
        REQUIRE(r.code == 0);
        const json rep = jload(dir / "lin" / "report.json");
        const json model = jload(dir / "lin" / "model.json");
        validate_schema(rep, "report");
        validate_schema(model, "model");
        REQUIRE(model["kind"] == "linear");
        REQUIRE(rep["objective"].get<double>() > 0.0);
        REQUIRE(rep["wall_time"].get<double>() >= 0.0);
        // stdout carries the same report
        REQUIRE(json::parse(r.out) == rep);
        // determinism: a second run produces a byte-identical model
        const auto r2 = run_cli("train --data \"" + (dir / "cls.csv").string() +
                                    "\" --task cls --loss hinge --rho 0.1 "
                                    "--kappa 0.25 --p inf --out \"" +
                                    (dir / "lin2").string() + "\"",
                                dir);
        REQUIRE(r2.code == 0);
        REQUIRE(read_text(dir / "lin" / "model.json") ==
                read_text(dir / "lin2" / "model.json"));
    }

    SECTION("kernel classifier") {
        const auto r = run_cli("train --data \"" + (dir / "cls.csv").string() +
                                   "\" --task cls --loss hinge --rho 0.01 "
                                   "--kappa 0.5 --kernel gaussian:0.5 --out \"" +
                                   (dir / "ker").string() + "\"",
                               dir);
        REQUIRE(r.code == 0);
        const json model = jload(dir / "ker" / "model.json");
        validate_schema(model, "model");
        REQUIRE(model["kind"] == "kernel");
        REQUIRE(model["kernel"]["name"] == "gaussian");
        REQUIRE(model["beta"].size() == 6);
        REQUIRE(model["anchors"].size() == 6);
        validate_schema(jload(dir / "ker" / "report.json"), "report");
    }

    SECTION("neural regressor with objective trace") {
        const std::string common =
            "train --data \"" + (dir / "reg.csv").string() +
            "\" --task reg --loss huber:1 --net 3 --act tanh --rho-bar 0.01 "
            "--epochs 15 --eta0 0.05 --seed 7 --out \"";
        const auto r = run_cli(common + (dir / "nn").string() + "\"", dir);
        REQUIRE(r.code == 0);
        const json model = jload(dir / "nn" / "model.json");
        validate_schema(model, "model");
        REQUIRE(model["kind"] == "neural");
        REQUIRE(model["layers"].size() == 2);
        REQUIRE(model["layers"][0]["rows"] == 3);
        REQUIRE(model["layers"][0]["cols"] == 2);
        REQUIRE(model["layers"][1]["activation"] == "identity");
        const std::string trace = read_text(dir / "nn" / "trace.csv");
        REQUIRE(trace.rfind("epoch,objective,reg_term\n", 0) == 0);
        validate_schema(jload(dir / "nn" / "report.json"), "report");
        // same seed, same bytes
        const auto r2 = run_cli(common + (dir / "nn2").string() + "\"", dir);
        REQUIRE(r2.code == 0);
        REQUIRE(read_text(dir / "nn" / "model.json") ==
                read_text(dir / "nn2" / "model.json"));
        REQUIRE(read_text(dir / "nn" / "trace.csv") ==
                read_text(dir / "nn2" / "trace.csv"));
    }
}

TEST_CASE("train at radius zero reports the empirical loss") {
    const fs::path dir = fresh_dir("emp");
    write_text(dir / "cls.csv", kCls6);
    const auto r = run_cli("train --data \"" + (dir / "cls.csv").string() +
                               "\" --task cls --loss hinge --rho 0 --kappa 0.25 "
                               "--p inf --out \"" +
                               (dir / "run").string() + "\"",
                           dir);
    REQUIRE(r.code == 0);
    const json rep = jload(dir / "run" / "report.json");
    const Vec w = w_from_model(jload(dir / "run" / "model.json"));
    const Dataset ds =
        load_dataset((dir / "cls.csv").string(), Task::Classification);
    REQUIRE_THAT(rep["objective"].get<double>(),
                 WithinAbs(hinge_emp(ds, w), 1e-9));
}

TEST_CASE("infinite flip cost equals the folded regularized run") {
    // with kappa = inf the classification objective is the regularized
    // empirical minimization, which is exactly a regression run on the
    // label-folded inputs z_i = y_i x_i with target zero
    const fs::path dir = fresh_dir("fold");
    write_text(dir / "cls.csv", kCls6);
    const Dataset ds =
        load_dataset((dir / "cls.csv").string(), Task::Classification);
    std::ostringstream folded;
    folded << "z1,z2,t\n";
    folded.precision(17);
    for (Eigen::Index i = 0; i < ds.size(); ++i)
        folded << ds.y[i] * ds.X(i, 0) << ',' << ds.y[i] * ds.X(i, 1) << ",0\n";
    write_text(dir / "folded.csv", folded.str());

    const auto a = run_cli("train --data \"" + (dir / "cls.csv").string() +
                               "\" --task cls --loss hinge --rho 0.07 "
                               "--kappa inf --p inf --out \"" +
                               (dir / "a").string() + "\"",
                           dir);
    const auto b = run_cli("train --data \"" + (dir / "folded.csv").string() +
                               "\" --task reg --loss hinge --rho 0.07 "
                               "--metric separable --kappa inf --p inf --out \"" +
                               (dir / "b").string() + "\"",
                           dir);
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    const double ja = jload(dir / "a" / "report.json")["objective"].get<double>();
    const double jb = jload(dir / "b" / "report.json")["objective"].get<double>();
    REQUIRE_THAT(ja, WithinAbs(jb, 1e-8));
}

TEST_CASE("usage and data errors exit with code two") {
    const fs::path dir = fresh_dir("err2");
    write_text(dir / "cls.csv", kCls6);
    const std::string out = " --out \"" + (dir / "o").string() + "\"";

    auto r = run_cli("train --data missing.csv --task cls" + out, dir);
    REQUIRE(r.code == 2);
    REQUIRE(r.err.find("cannot open") != std::string::npos);

    r = run_cli("train --data \"" + (dir / "cls.csv").string() +
                    "\" --task cls --loss nosuch" + out,
                dir);
    REQUIRE(r.code == 2);

    r = run_cli("train --data \"" + (dir / "cls.csv").string() +
                    "\" --task cls --p 7" + out,
                dir);
    REQUIRE(r.code == 2);

    r = run_cli("frobnicate", dir);
    REQUIRE(r.code == 2);
    r = run_cli("", dir);
    REQUIRE(r.code == 2);

    write_text(dir / "bad.csv", "x,y\n0.1,2\n0.2,1\n");
    r = run_cli("train --data \"" + (dir / "bad.csv").string() +
                    "\" --task cls --loss hinge" + out,
                dir);
    REQUIRE(r.code == 2);
}

TEST_CASE("unsupported configurations exit with code four") {
    const fs::path dir = fresh_dir("err4");
    write_text(dir / "reg.csv", kReg5);
    write_text(dir / "one.csv", "x,y\n0.5,1\n-0.4,-1\n1.0,1\n-0.8,-1\n");
    const std::string out = " --out \"" + (dir / "o").string() + "\"";

    // p = 2 has no polyhedral exact construction
    auto r = run_cli("train --data \"" + (dir / "reg.csv").string() +
                         "\" --task reg --loss absolute --rho 0.05 --p 2" + out,
                     dir);
    REQUIRE(r.code == 0);
    r = run_cli("worstcase --data \"" + (dir / "reg.csv").string() +
                    "\" --model \"" + (dir / "o" / "model.json").string() +
                    "\" --rho 0.05" + out,
                dir);
    REQUIRE(r.code == 4);

    // the basic radius has no n = 1 form, so auto-radius intervals refuse
    r = run_cli("train --data \"" + (dir / "one.csv").string() +
                    "\" --task cls --loss hinge --rho 0 --kappa 0.5 --p inf "
                    "--out \"" +
                    (dir / "c").string() + "\"",
                dir);
    REQUIRE(r.code == 0);
    r = run_cli("interval --data \"" + (dir / "one.csv").string() +
                    "\" --model \"" + (dir / "c" / "model.json").string() +
                    "\"" + out,
                dir);
    REQUIRE(r.code == 4);

    // sequence-mode granularity outside (0, 1]
    r = run_cli("worstcase --data \"" + (dir / "reg.csv").string() +
                    "\" --model \"" + (dir / "o" / "model.json").string() +
                    "\" --rho 0.05 --gamma 1.5" + out,
                dir);
    REQUIRE(r.code == 4);
}

TEST_CASE("crossval selects by mean score with documented tie-breaks") {
    const fs::path dir = fresh_dir("cv");
    write_text(dir / "sep.csv", separable12());
    const std::string data = "crossval --data \"" + (dir / "sep.csv").string() +
                             "\" --task cls --loss hinge --p inf --folds 3 ";

    SECTION("ties resolve to the smallest rho, then the smallest kappa") {
        const auto r = run_cli(data +
                                   "--rho-grid 2e-6,1e-6 --kappa-grid 0.75,0.25 "
                                   "--out \"" +
                                   (dir / "tie").string() + "\"",
                               dir);
        REQUIRE(r.code == 0);
        const json rep = jload(dir / "tie" / "crossval.json");
        validate_schema(rep, "crossval");
        REQUIRE(rep["rho"].get<double>() == 1e-6);
        REQUIRE(rep["kappa"].get<double>() == 0.25);
        REQUIRE(rep["score"].get<double>() == 1.0);
        // the full table: header + |rho| x |kappa| x folds rows
        std::istringstream table(read_text(dir / "tie" / "cv_scores.csv"));
        std::string line;
        int rows = 0;
        REQUIRE(std::getline(table, line));
        REQUIRE(line == "rho,kappa,fold,score");
        while (std::getline(table, line))
            if (!line.empty()) ++rows;
        REQUIRE(rows == 2 * 2 * 3);
        // separable data: the pick must beat the majority baseline
        const Dataset ds =
            load_dataset((dir / "sep.csv").string(), Task::Classification);
        Eigen::Index pos = 0;
        for (Eigen::Index i = 0; i < ds.size(); ++i) pos += ds.y[i] > 0 ? 1 : 0;
        const double majority =
            static_cast<double>(std::max(pos, ds.size() - pos)) /
            static_cast<double>(ds.size());
        REQUIRE(rep["score"].get<double>() >= majority - 1e-12);
    }

    SECTION("a single-point grid returns that point") {
        const auto r = run_cli(data +
                                   "--rho-grid 0.07 --kappa-grid 0.5 --out \"" +
                                   (dir / "single").string() + "\"",
                               dir);
        REQUIRE(r.code == 0);
        const json rep = jload(dir / "single" / "crossval.json");
        REQUIRE(rep["rho"].get<double>() == 0.07);
        REQUIRE(rep["kappa"].get<double>() == 0.5);
    }

    SECTION("fold assignment is deterministic given the seed") {
        const auto a = run_cli(data +
                                   "--rho-grid 0.01 --kappa-grid 0.25 --seed 11 "
                                   "--out \"" +
                                   (dir / "s1").string() + "\"",
                               dir);
        const auto b = run_cli(data +
                                   "--rho-grid 0.01 --kappa-grid 0.25 --seed 11 "
                                   "--out \"" +
                                   (dir / "s2").string() + "\"",
                               dir);
        REQUIRE(a.code == 0);
        REQUIRE(b.code == 0);
        REQUIRE(read_text(dir / "s1" / "cv_scores.csv") ==
                read_text(dir / "s2" / "cv_scores.csv"));
        REQUIRE(read_text(dir / "s1" / "crossval.json") ==
                read_text(dir / "s2" / "crossval.json"));
    }

    SECTION("empty folds are refused") {
        write_text(dir / "four.csv", "x1,x2,y\n1,0,1\n-1,0,-1\n0.9,0,1\n-0.9,0,-1\n");
        const auto r = run_cli("crossval --data \"" +
                                   (dir / "four.csv").string() +
                                   "\" --task cls --loss hinge --folds 5 "
                                   "--rho-grid 0.01 --kappa-grid 0.25 --out \"" +
                                   (dir / "small").string() + "\"",
                               dir);
        REQUIRE(r.code == 2);
    }

    SECTION("kernel and regression grids run end to end") {
        auto r = run_cli(data +
                             "--rho-grid 0,0.01 --kappa-grid 0.5 "
                             "--kernel linear --out \"" +
                             (dir / "ker").string() + "\"",
                         dir);
        REQUIRE(r.code == 0);
        const json rep = jload(dir / "ker" / "crossval.json");
        validate_schema(rep, "crossval");
        REQUIRE(rep["kernel"]["name"] == "linear");

        write_text(dir / "reg.csv", kReg5);
        r = run_cli("crossval --data \"" + (dir / "reg.csv").string() +
                        "\" --task reg --loss absolute --p 1 --folds 2 "
                        "--metric separable --kappa 2 --rho-grid 0,0.05 "
                        "--out \"" +
                        (dir / "reg").string() + "\"",
                    dir);
        REQUIRE(r.code == 0);
        REQUIRE(jload(dir / "reg" / "crossval.json")["kappa"].get<double>() ==
                2.0);
    }
}

TEST_CASE("interval reports match the module closed forms") {
    const fs::path dir = fresh_dir("iv");
    write_text(dir / "reg.csv", kReg5);
    write_text(dir / "cls.csv", kCls6);

    auto train = [&](const std::string& extra, const std::string& out) {
        const auto r = run_cli("train " + extra + " --out \"" +
                                   (dir / out).string() + "\"",
                               dir);
        REQUIRE(r.code == 0);
    };
    train("--data \"" + (dir / "reg.csv").string() +
              "\" --task reg --loss absolute --rho 0.05 --p 2",
          "reg");
    train("--data \"" + (dir / "cls.csv").string() +
              "\" --task cls --loss hinge --rho 0.05 --kappa 0.25 --p inf",
          "cls");

    SECTION("regression override matches error_interval") {
        const auto r = run_cli("interval --data \"" + (dir / "reg.csv").string() +
                                   "\" --model \"" +
                                   (dir / "reg" / "model.json").string() +
                                   "\" --rho 0.12 --out \"" +
                                   (dir / "ivr").string() + "\"",
                               dir);
        REQUIRE(r.code == 0);
        const json rep = jload(dir / "ivr" / "interval.json");
        validate_schema(rep, "interval");
        REQUIRE(rep["quantity"] == "error");
        REQUIRE(rep["radius_source"] == "override");
        const Vec w = w_from_model(jload(dir / "reg" / "model.json"));
        const Dataset ds =
            load_dataset((dir / "reg.csv").string(), Task::Regression);
        const Interval iv = error_interval(ds, w, 0.12, Norm::Two);
        REQUIRE_THAT(rep["lower"].get<double>(), WithinAbs(iv.lower, 1e-12));
        REQUIRE_THAT(rep["upper"].get<double>(), WithinAbs(iv.upper, 1e-12));
    }

    SECTION("a zero radius collapses the interval to a point") {
        const auto r = run_cli("interval --data \"" + (dir / "reg.csv").string() +
                                   "\" --model \"" +
                                   (dir / "reg" / "model.json").string() +
                                   "\" --rho 0 --out \"" +
                                   (dir / "iv0").string() + "\"",
                               dir);
        REQUIRE(r.code == 0);
        const json rep = jload(dir / "iv0" / "interval.json");
        REQUIRE_THAT(rep["lower"].get<double>(),
                     WithinAbs(rep["upper"].get<double>(), 1e-15));
    }

    SECTION("without an override the radius comes from the basic formula") {
        const auto r = run_cli("interval --data \"" + (dir / "reg.csv").string() +
                                   "\" --model \"" +
                                   (dir / "reg" / "model.json").string() +
                                   "\" --eta 0.1 --out \"" +
                                   (dir / "iva").string() + "\"",
                               dir);
        REQUIRE(r.code == 0);
        const json rep = jload(dir / "iva" / "interval.json");
        REQUIRE(rep["radius_source"] == "basic(eta/2)");
        // the joint sample space (x, y) adds one output dimension
        REQUIRE_THAT(rep["radius"].get<double>(),
                     WithinAbs(radius_basic(5, 3, 0.05), 1e-15));
    }

    SECTION("classification matches risk_interval") {
        const auto r = run_cli("interval --data \"" + (dir / "cls.csv").string() +
                                   "\" --model \"" +
                                   (dir / "cls" / "model.json").string() +
                                   "\" --rho 0.15 --out \"" +
                                   (dir / "ivc").string() + "\"",
                               dir);
        REQUIRE(r.code == 0);
        const json rep = jload(dir / "ivc" / "interval.json");
        validate_schema(rep, "interval");
        REQUIRE(rep["quantity"] == "risk");
        REQUIRE(rep["kappa"].get<double>() == 0.25);
        const Vec w = w_from_model(jload(dir / "cls" / "model.json"));
        const Dataset ds =
            load_dataset((dir / "cls.csv").string(), Task::Classification);
        const Interval iv = risk_interval(ds, w, 0.15, 0.25, Norm::Inf);
        REQUIRE_THAT(rep["lower"].get<double>(), WithinAbs(iv.lower, 1e-9));
        REQUIRE_THAT(rep["upper"].get<double>(), WithinAbs(iv.upper, 1e-9));
    }
}

TEST_CASE("worstcase exports the extremal distribution") {
    const fs::path dir = fresh_dir("wc");
    write_text(dir / "reg.csv", kReg5);
    write_text(dir / "cls.csv", kCls6);

    SECTION("radius zero reproduces the training rows") {
        auto r = run_cli("train --data \"" + (dir / "reg.csv").string() +
                             "\" --task reg --loss absolute --rho 0 --p 1 "
                             "--out \"" +
                             (dir / "t0").string() + "\"",
                         dir);
        REQUIRE(r.code == 0);
        r = run_cli("worstcase --data \"" + (dir / "reg.csv").string() +
                        "\" --model \"" + (dir / "t0" / "model.json").string() +
                        "\" --rho 0 --out \"" + (dir / "w0").string() + "\"",
                    dir);
        REQUIRE(r.code == 0);
        const json rep = jload(dir / "w0" / "worstcase.json");
        validate_schema(rep, "worstcase");
        REQUIRE_THAT(rep["value"].get<double>(),
                     WithinAbs(jload(dir / "t0" / "report.json")["objective"]
                                   .get<double>(),
                               1e-9));
        REQUIRE(csv_rows(dir / "w0" / "stressed.csv", Task::Regression) ==
                csv_rows(dir / "reg.csv", Task::Regression));
    }

    SECTION("the exact value matches the training objective at the trained w") {
        auto r = run_cli("train --data \"" + (dir / "cls.csv").string() +
                             "\" --task cls --loss hinge --rho 0.1 "
                             "--kappa 0.25 --p inf --out \"" +
                             (dir / "tc").string() + "\"",
                         dir);
        REQUIRE(r.code == 0);
        r = run_cli("worstcase --data \"" + (dir / "cls.csv").string() +
                        "\" --model \"" + (dir / "tc" / "model.json").string() +
                        "\" --rho 0.1 --out \"" + (dir / "wc").string() + "\"",
                    dir);
        REQUIRE(r.code == 0);
        const json rep = jload(dir / "wc" / "worstcase.json");
        REQUIRE(rep["mode"] == "exact");
        REQUIRE(rep["gap_bound"].get<double>() == 0.0);
        REQUIRE_THAT(rep["value"].get<double>(),
                     WithinAbs(jload(dir / "tc" / "report.json")["objective"]
                                   .get<double>(),
                               1e-6));
        // the stressed rows stay a loadable classification dataset
        const Dataset stressed =
            load_dataset((dir / "wc" / "stressed.csv").string(),
                         Task::Classification);
        REQUIRE(stressed.size() == 6);
        REQUIRE(stressed.dim() == 2);
    }

    SECTION("free label flips show up in the atoms") {
        // train at a flip cost that keeps w away from zero, then price
        // flips at zero for the adversary: every margin now flips
        auto r = run_cli("train --data \"" + (dir / "cls.csv").string() +
                             "\" --task cls --loss hinge --rho 0 --kappa 0.25 "
                             "--p inf --out \"" +
                             (dir / "tf").string() + "\"",
                         dir);
        REQUIRE(r.code == 0);
        json model = jload(dir / "tf" / "model.json");
        model["kappa"] = 0.0;
        write_text(dir / "tf" / "model.json", model.dump(2) + "\n");
        r = run_cli("worstcase --data \"" + (dir / "cls.csv").string() +
                        "\" --model \"" + (dir / "tf" / "model.json").string() +
                        "\" --rho 0 --out \"" + (dir / "wf").string() + "\"",
                    dir);
        REQUIRE(r.code == 0);
        const json rep = jload(dir / "wf" / "worstcase.json");
        const Dataset ds =
            load_dataset((dir / "cls.csv").string(), Task::Classification);
        bool flipped = false;
        for (const auto& a : rep["atoms"]) {
            const int src = a["source"].get<int>();
            if (src >= 0 && a["y"].get<double>() != ds.y[src]) flipped = true;
        }
        REQUIRE(flipped);
    }

    SECTION("smooth losses fall back to the sequence construction") {
        auto r = run_cli("train --data \"" + (dir / "reg.csv").string() +
                             "\" --task reg --loss huber:1 --rho 0.05 --p 2 "
                             "--out \"" +
                             (dir / "th").string() + "\"",
                         dir);
        REQUIRE(r.code == 0);
        r = run_cli("worstcase --data \"" + (dir / "reg.csv").string() +
                        "\" --model \"" + (dir / "th" / "model.json").string() +
                        "\" --rho 0.05 --gamma 0.5 --out \"" +
                        (dir / "ws").string() + "\"",
                    dir);
        REQUIRE(r.code == 0);
        const json rep = jload(dir / "ws" / "worstcase.json");
        validate_schema(rep, "worstcase");
        REQUIRE(rep["mode"] == "sequence");
        REQUIRE(rep["gap_bound"].get<double>() >= 0.0);
        REQUIRE(std::isfinite(rep["value"].get<double>()));
    }
}

TEST_CASE("radius reports both formulas and their preconditions") {
    const fs::path dir = fresh_dir("rad");

    SECTION("matches the module formulas") {
        auto r = run_cli("radius --N 10000 --n 20 --eta 0.05 --out \"" +
                             (dir / "a").string() + "\"",
                         dir);
        REQUIRE(r.code == 0);
        const json rep = jload(dir / "a" / "radius.json");
        validate_schema(rep, "radius");
        REQUIRE_THAT(rep["rho_basic"].get<double>(),
                     WithinAbs(radius_basic(10000, 20, 0.05), 1e-15));
        REQUIRE(rep["improved_feasible"] == false);
        REQUIRE(rep["rho_improved"].is_null());
        REQUIRE_THAT(rep["improved_required_N"].get<double>(),
                     WithinAbs(improved_radius_requirement(20, 0.05), 1e-12));

        r = run_cli("radius --N 2000 --n 2 --eta 0.05 --out \"" +
                        (dir / "b").string() + "\"",
                    dir);
        REQUIRE(r.code == 0);
        const json rep2 = jload(dir / "b" / "radius.json");
        validate_schema(rep2, "radius");
        REQUIRE(rep2["improved_feasible"] == true);
        REQUIRE_THAT(
            rep2["rho_improved"].get<double>(),
            WithinAbs(radius_improved(2000, 2, 0.05, {}, {}).value, 1e-15));
    }

    SECTION("raising eta shrinks both radii") {
        auto r = run_cli("radius --N 2000 --n 2 --eta 0.05 --out \"" +
                             (dir / "lo").string() + "\"",
                         dir);
        REQUIRE(r.code == 0);
        r = run_cli("radius --N 2000 --n 2 --eta 0.1 --out \"" +
                        (dir / "hi").string() + "\"",
                    dir);
        REQUIRE(r.code == 0);
        const json lo = jload(dir / "lo" / "radius.json");
        const json hi = jload(dir / "hi" / "radius.json");
        REQUIRE(hi["rho_basic"].get<double>() < lo["rho_basic"].get<double>());
        REQUIRE(hi["rho_improved"].get<double>() <
                lo["rho_improved"].get<double>());
    }

    SECTION("the one-dimensional case is reported, not thrown") {
        const auto r = run_cli("radius --N 100 --n 1 --eta 0.05 --out \"" +
                                   (dir / "one").string() + "\"",
                               dir);
        REQUIRE(r.code == 0);
        const json rep = jload(dir / "one" / "radius.json");
        validate_schema(rep, "radius");
        REQUIRE(rep["rho_basic"].is_null());
        REQUIRE(rep.contains("basic_note"));
    }
}
