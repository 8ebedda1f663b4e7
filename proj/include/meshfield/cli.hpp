#pragma once

#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "meshfield/checkpoint.hpp"
#include "meshfield/config.hpp"
#include "meshfield/training.hpp"

namespace meshfield::cli {

namespace fs = std::filesystem;

// exit codes: 0 ok, 2 config, 3 numeric divergence, 4 i/o
inline constexpr int kOk = 0, kConfigExit = 2, kNumericExit = 3, kIoExit = 4;

struct GenOptions {
    std::size_t train_count = 1000, test_count = 100;
    std::size_t train_points = 1000, test_points = 5000;
    std::size_t heatsink_count = 10;
};

// ---- dataset files ---------------------------------------------------------------

inline std::string num(double v) { return fmt_double(v); }

inline void write_labels_csv(const std::string& path, const std::vector<std::array<double, 2>>& pts,
                             const Tensor<double>& values, const std::vector<std::string>& fields) {
    std::vector<std::string> header = {"idx", "x", "y"};
    header.insert(header.end(), fields.begin(), fields.end());
    CsvWriter csv(header);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::vector<std::string> row = {std::to_string(i), num(pts[i][0]), num(pts[i][1])};
        for (std::size_t j = 0; j < fields.size(); ++j) row.push_back(num(values(i, j)));
        csv.row(row);
    }
    csv.save(path);
}

inline void read_labels_csv(const std::string& path, std::vector<std::array<double, 2>>& pts,
                            Tensor<double>& values) {
    const auto rows = read_csv(path);
    if (rows.size() < 2) throw IoError("labels csv is empty: " + path);
    const std::size_t fields = rows[0].size() - 3;
    pts.clear();
    values = Tensor<double>({rows.size() - 1, fields});
    for (std::size_t r = 1; r < rows.size(); ++r) {
        pts.push_back({std::stod(rows[r][1]), std::stod(rows[r][2])});
        for (std::size_t j = 0; j < fields; ++j) values(r - 1, j) = std::stod(rows[r][3 + j]);
    }
}

inline void write_manifest(const std::string& dir, const RunConfig& rc, const GenOptions& gen) {
    nlohmann::ordered_json j;
    j["benchmark"] = rc.benchmark;
    j["seed"] = rc.seed;
    j["train_count"] = gen.train_count;
    j["test_count"] = gen.test_count;
    write_text_file(dir + "/dataset.json", j.dump(1) + "\n");
}

inline nlohmann::json read_manifest(const std::string& dir) {
    try {
        return nlohmann::json::parse(read_text_file(dir + "/dataset.json"));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("dataset manifest parse error: ") + e.what());
    }
}

struct Dataset {
    std::string benchmark;
    std::vector<PDEInstance> train;
    std::vector<PDEInstance> test;
};

inline void cmd_gen(const RunConfig& rc, const GenOptions& gen) {
    const std::string dir = rc.out_dir;
    fs::create_directories(dir);
    if (rc.benchmark == "poisson") {
        const auto inst = poisson_instance();
        save_mesh(inst.mesh, dir + "/mesh.json");
        write_labels_csv(dir + "/labels_train.csv", inst.data_points, inst.data_values, {"u"});
        write_labels_csv(dir + "/test_points.csv", inst.eval_points, inst.eval_values, {"u"});
    } else if (rc.benchmark == "beam2d") {
        const auto ds = beam_dataset(rc.seed, gen.train_count, gen.train_points, gen.test_count,
                                     gen.test_points);
        save_mesh(ds.mesh, dir + "/mesh.json");
        auto dump_split = [&](const std::string& split, const std::vector<PDEInstance>& insts,
                              const std::vector<double>& moments) {
            for (std::size_t i = 0; i < insts.size(); ++i) {
                char name[32];
                std::snprintf(name, sizeof(name), "inst_%04zu", i);
                nlohmann::ordered_json j;
                j["moment"] = moments[i];
                j["points"] = std::string(name) + ".csv";
                write_text_file(dir + "/" + split + "/" + name + ".json", j.dump(1) + "\n");
                write_labels_csv(dir + "/" + split + "/" + name + ".csv", insts[i].data_points,
                                 insts[i].data_values, {"u", "v", "sigma_x", "sigma_y", "tau_xy"});
            }
        };
        dump_split("train", ds.train, ds.train_moments);
        dump_split("test", ds.test, ds.test_moments);
    } else if (rc.benchmark == "heatsink2d") {
        Rng rng(rc.seed);
        for (std::size_t i = 0; i < gen.heatsink_count; ++i) {
            const double H = rng.uniform(2.0, 4.0);
            const double a = rng.uniform(0.5, 1.5);
            const auto inst = heatsink_instance(H, a);
            char name[32];
            std::snprintf(name, sizeof(name), "inst_%02zu", i);
            nlohmann::ordered_json j;
            j["height"] = H;
            j["a"] = a;
            j["spacing"] = 0.2;
            write_text_file(dir + "/test/" + name + ".json", j.dump(1) + "\n");
            save_mesh(inst.mesh, dir + "/test/" + std::string(name) + "_mesh.json");
        }
    } else if (rc.benchmark == "ambiguity") {
        const auto ds = ambiguity_dataset();
        auto dump_half = [&](const std::vector<PDEInstance>& half, const std::string& top,
                             std::size_t base) {
            const std::vector<double> scales = {0.06, 0.08, 0.10, 0.12, 0.14};
            for (std::size_t i = 0; i < half.size(); ++i) {
                char name[32];
                std::snprintf(name, sizeof(name), "inst_%02zu", base + i);
                nlohmann::ordered_json j;
                j["top"] = top;
                j["a"] = scales[i];
                write_text_file(dir + "/" + name + ".json", j.dump(1) + "\n");
                save_mesh(half[i].mesh, dir + "/" + std::string(name) + "_mesh.json");
                write_labels_csv(dir + "/" + std::string(name) + "_labels.csv", half[i].eval_points,
                                 half[i].eval_values, {"T"});
            }
        };
        dump_half(ds.dirichlet_half, "dirichlet", 0);
        dump_half(ds.neumann_half, "neumann", 5);
    } else {
        throw ConfigError("gen: unknown benchmark '" + rc.benchmark + "'");
    }
    write_manifest(dir, rc, gen);
}

inline PDEInstance beam_instance_from_files(const Mesh& mesh, double moment,
                                            const std::string& labels_path) {
    BeamSpec spec;
    spec.moment = moment;
    PDEInstance inst;
    inst.tag = "beam2d";
    inst.domain.rects = {mesh.bbox()};
    Mesh m = mesh;
    const double H3 = spec.height * spec.height * spec.height;
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m.node(i)[0] >= spec.length - 1e-12)
            m.set_condition("traction", i, {12.0 * moment / (spec.width * H3) * m.node(i)[1]});
    inst.mesh = std::move(m);
    read_labels_csv(labels_path, inst.data_points, inst.data_values);
    inst.eval_points = inst.data_points;
    inst.eval_values = inst.data_values;
    return inst;
}

inline std::vector<PDEInstance> load_beam_split(const std::string& dir, const Mesh& mesh,
                                                const std::string& split) {
    std::vector<PDEInstance> out;
    std::vector<fs::path> files;
    const fs::path sub = fs::path(dir) / split;
    if (!fs::exists(sub)) return out;
    for (auto& e : fs::directory_iterator(sub))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (auto& f : files) {
        const auto j = nlohmann::json::parse(read_text_file(f.string()));
        out.push_back(beam_instance_from_files(
            mesh, j.at("moment").get<double>(),
            (sub / j.at("points").get<std::string>()).string()));
    }
    return out;
}

inline Dataset load_dataset(const std::string& dir) {
    const auto manifest = read_manifest(dir);
    Dataset ds;
    ds.benchmark = manifest.at("benchmark").get<std::string>();
    if (ds.benchmark == "poisson") {
        PDEInstance inst;
        inst.tag = "poisson";
        inst.mesh = load_mesh(dir + "/mesh.json");
        inst.domain.rects = {inst.mesh.bbox()};
        inst.source = PoissonOracle::f;
        read_labels_csv(dir + "/labels_train.csv", inst.data_points, inst.data_values);
        read_labels_csv(dir + "/test_points.csv", inst.eval_points, inst.eval_values);
        ds.train.push_back(inst);
        ds.test.push_back(std::move(inst));
    } else if (ds.benchmark == "beam2d") {
        const Mesh mesh = load_mesh(dir + "/mesh.json");
        ds.train = load_beam_split(dir, mesh, "train");
        ds.test = load_beam_split(dir, mesh, "test");
    } else if (ds.benchmark == "heatsink2d") {
        const fs::path sub = fs::path(dir) / "test";
        std::vector<fs::path> files;
        for (auto& e : fs::directory_iterator(sub)) {
            const auto name = e.path().filename().string();
            if (e.path().extension() == ".json" && name.find("_mesh") == std::string::npos)
                files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (auto& f : files) {
            const auto j = nlohmann::json::parse(read_text_file(f.string()));
            ds.test.push_back(heatsink_instance(j.at("height").get<double>(), j.at("a").get<double>(),
                                                HeatsinkGeom{}, j.at("spacing").get<double>()));
        }
    } else if (ds.benchmark == "ambiguity") {
        for (std::size_t i = 0; i < 10; ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "inst_%02zu", i);
            const fs::path jf = fs::path(dir) / (std::string(name) + ".json");
            const auto j = nlohmann::json::parse(read_text_file(jf.string()));
            const double a = j.at("a").get<double>();
            const auto top = j.at("top").get<std::string>() == "dirichlet"
                                 ? TopCondition::dirichlet_zero
                                 : TopCondition::neumann_zero;
            // rebuild deterministically, then attach the stored labels
            auto all = ambiguity_dataset();
            const auto& half = top == TopCondition::dirichlet_zero ? all.dirichlet_half : all.neumann_half;
            PDEInstance inst;
            for (auto& cand : half) {
                const auto kd = cand.mesh.schema().find("dirichlet");
                bool match = false;
                for (std::size_t n = 0; n < cand.mesh.size() && !match; ++n)
                    if (cand.mesh.node(n)[1] <= 1e-12 && cand.mesh.group(*kd).present[n])
                        match = std::abs((*cand.mesh.record(n).values[*kd])[0] -
                                         heatsink_bottom_temperature(cand.mesh.node(n)[0], a)) < 1e-9;
                if (match) inst = cand;
            }
            read_labels_csv((fs::path(dir) / (std::string(name) + "_labels.csv")).string(),
                            inst.eval_points, inst.eval_values);
            ds.test.push_back(inst);
            ds.train.push_back(ds.test.back());
        }
    } else {
        throw ConfigError("load_dataset: unknown benchmark '" + ds.benchmark + "'");
    }
    return ds;
}

/// In-memory dataset at desk scale when no directory is given.
inline Dataset default_dataset(const RunConfig& rc) {
    Dataset ds;
    ds.benchmark = rc.benchmark;
    if (rc.benchmark == "poisson") {
        auto inst = poisson_instance();
        ds.train.push_back(inst);
        ds.test.push_back(std::move(inst));
    } else if (rc.benchmark == "beam2d") {
        auto b = beam_dataset(rc.seed, 64, 256, 8, 1024);
        ds.train = std::move(b.train);
        ds.test = std::move(b.test);
    } else if (rc.benchmark == "ambiguity") {
        auto a = ambiguity_dataset();
        for (auto& i : a.dirichlet_half) ds.train.push_back(i);
        for (auto& i : a.neumann_half) ds.train.push_back(i);
        ds.test = ds.train;
    } else if (rc.benchmark == "heatsink2d") {
        Rng rng(rc.seed + 99);
        for (int i = 0; i < 4; ++i)
            ds.test.push_back(heatsink_instance(rng.uniform(2.0, 4.0), rng.uniform(0.5, 1.5)));
    } else {
        throw ConfigError("unknown benchmark '" + rc.benchmark + "'");
    }
    return ds;
}

// ---- train ------------------------------------------------------------------------

struct EvalField {
    std::string name;
    FieldFn pred;
    FieldFn truth;
};

inline std::vector<EvalField> eval_fields_for(const std::string& benchmark) {
    if (benchmark == "beam2d")
        return {{"u", field_column(0), field_column(0)},
                {"v", field_column(1), field_column(1)},
                {"sigma_v", field_von_mises(2), field_von_mises(2)}};
    if (benchmark == "poisson") return {{"u", field_column(0), field_column(0)}};
    return {{"T", field_column(0), field_column(0)}};
}

inline std::string csv_terms(const EpochLog& log) {
    return std::to_string(log.epoch) + "," + num(log.train.total) + "," + num(log.train.pde) + "," +
           num(log.train.data) + "," + num(log.train.bottom) + "," + num(log.train.top) + "," +
           num(log.train.other) + "," + num(log.val_rel_l2) + "," + num(log.seconds);
}

template <class T>
int cmd_train_typed(const RunConfig& rc, const Dataset& ds, bool quiet) {
    Model<T> model(rc.model, rc.condition_schema(), rc.seed);
    fs::create_directories(rc.out_dir);

    std::string log_csv = "epoch,total,pde,data,bottom,top,other,val_rel_l2,seconds\n";
    auto on_epoch = [&](const EpochLog& log) {
        log_csv += csv_terms(log) + "\n";
        if (!quiet)
            std::cout << "epoch " << log.epoch << " total " << log.train.total << " val "
                      << log.val_rel_l2 << "\n";
    };

    TrainResult<T> result;
    if (rc.benchmark == "heatsink2d") {
        // fresh boundary parameters every epoch
        auto store = std::make_shared<std::vector<PDEInstance>>();
        auto base_seed = rc.seed;
        EpochSampler sampler = [store, base_seed, &rc](int epoch) -> const std::vector<PDEInstance>& {
            Rng rng(base_seed + std::uint64_t(epoch) * 7919);
            store->clear();
            for (int i = 0; i < rc.train.batch_instances; ++i)
                store->push_back(heatsink_instance(rng.uniform(2.0, 4.0), rng.uniform(0.5, 1.5)));
            return *store;
        };
        result = train(model, sampler, ds.test, rc.train, on_epoch);
    } else {
        result = train(model, ds.train, ds.test, rc.train, on_epoch);
    }

    Model<T> best(rc.model, rc.condition_schema(), result.best_params);
    save_checkpoint(best, rc.out_dir + "/checkpoint.json");
    write_text_file(rc.out_dir + "/log.csv", log_csv);
    if (result.diverged) {
        std::cerr << "training diverged: " << result.divergence_note
                  << " (last good checkpoint written)\n";
        return kNumericExit;
    }
    if (!quiet)
        std::cout << "best epoch " << result.best_epoch << " val " << result.best_val << "\n";
    return kOk;
}

inline int cmd_train(const RunConfig& rc, bool quiet = false) {
    const Dataset ds = rc.data_dir.empty() ? default_dataset(rc) : load_dataset(rc.data_dir);
    if (!rc.data_dir.empty() && ds.benchmark != rc.benchmark)
        throw ConfigError("dataset benchmark '" + ds.benchmark + "' does not match config '" +
                          rc.benchmark + "'");
    if (rc.precision == 32) return cmd_train_typed<float>(rc, ds, quiet);
    return cmd_train_typed<double>(rc, ds, quiet);
}

// ---- eval -------------------------------------------------------------------------

template <class T>
int cmd_eval_typed(const Model<T>& model, const Dataset& ds, const std::string& out_dir) {
    std::vector<PDEInstance> with_labels;
    for (auto& inst : ds.test)
        if (!inst.eval_points.empty()) with_labels.push_back(inst);
    if (with_labels.empty()) throw IoError("eval: dataset carries no ground-truth labels");

    fs::create_directories(out_dir);
    std::string summary = "field,rel_l2\n";
    for (const auto& field : eval_fields_for(ds.benchmark)) {
        const double err = evaluate_rel_l2(model, with_labels, field.pred);
        std::cout << field.name << " " << err << "\n";
        summary += field.name + "," + num(err) + "\n";
    }
    if (ds.benchmark == "ambiguity") {
        for (const std::string half : {"ambiguity-D", "ambiguity-N"}) {
            std::vector<PDEInstance> part;
            for (auto& inst : with_labels)
                if (inst.tag == half) part.push_back(inst);
            if (part.empty()) continue;
            const double err = evaluate_rel_l2(model, part, field_column(0));
            std::cout << half << " " << err << "\n";
            summary += half + "," + num(err) + "\n";
        }
    }
    write_text_file(out_dir + "/metrics.csv", summary);

    // per-point dump of the first labeled instance
    const auto& inst = with_labels.front();
    const auto pred = model.predict(inst.mesh, inst.eval_points);
    const std::size_t out_dim = pred.shape[1];
    std::vector<std::string> header = {"x", "y"};
    for (std::size_t j = 0; j < out_dim; ++j) header.push_back("pred_" + std::to_string(j));
    for (std::size_t j = 0; j < inst.eval_values.shape[1]; ++j)
        header.push_back("truth_" + std::to_string(j));
    for (std::size_t j = 0; j < std::min<std::size_t>(out_dim, inst.eval_values.shape[1]); ++j)
        header.push_back("abs_err_" + std::to_string(j));
    CsvWriter csv(header);
    for (std::size_t i = 0; i < inst.eval_points.size(); ++i) {
        std::vector<std::string> row = {num(inst.eval_points[i][0]), num(inst.eval_points[i][1])};
        for (std::size_t j = 0; j < out_dim; ++j) row.push_back(num(double(pred(i, j))));
        for (std::size_t j = 0; j < inst.eval_values.shape[1]; ++j)
            row.push_back(num(inst.eval_values(i, j)));
        for (std::size_t j = 0; j < std::min<std::size_t>(out_dim, inst.eval_values.shape[1]); ++j)
            row.push_back(num(std::abs(double(pred(i, j)) - inst.eval_values(i, j))));
        csv.row(row);
    }
    csv.save(out_dir + "/eval.csv");
    return kOk;
}

inline int checkpoint_precision(const std::string& path) {
    const auto j = nlohmann::json::parse(read_text_file(path));
    return j.value("precision", 64);
}

inline int cmd_eval(const std::string& checkpoint, const std::string& data_dir,
                    const std::string& out_dir) {
    const Dataset ds = load_dataset(data_dir);
    if (checkpoint_precision(checkpoint) == 32)
        return cmd_eval_typed(load_checkpoint<float>(checkpoint), ds, out_dir);
    return cmd_eval_typed(load_checkpoint<double>(checkpoint), ds, out_dir);
}

// ---- query ------------------------------------------------------------------------

inline std::vector<std::array<double, 2>> parse_resolution_grid(const std::string& resolution,
                                                                const BBox& box) {
    const auto xpos = resolution.find('x');
    if (xpos == std::string::npos) throw ConfigError("resolution must look like 100x40");
    const std::size_t nx = std::stoul(resolution.substr(0, xpos));
    const std::size_t ny = std::stoul(resolution.substr(xpos + 1));
    if (nx < 2 || ny < 2) throw ConfigError("resolution axes must be at least 2");
    return unit_grid(nx, ny, box);
}

inline std::vector<std::array<double, 2>> read_points_csv(const std::string& path) {
    const auto rows = read_csv(path);
    if (rows.size() < 2 || rows[0].size() < 2) throw IoError("points csv needs x,y columns: " + path);
    std::size_t cx = 0, cy = 1;
    for (std::size_t c = 0; c < rows[0].size(); ++c) {
        if (rows[0][c] == "x") cx = c;
        if (rows[0][c] == "y") cy = c;
    }
    std::vector<std::array<double, 2>> pts;
    for (std::size_t r = 1; r < rows.size(); ++r)
        pts.push_back({std::stod(rows[r][cx]), std::stod(rows[r][cy])});
    return pts;
}

template <class T>
int cmd_query_typed(const Model<T>& model, const Mesh& mesh,
                    const std::vector<std::array<double, 2>>& pts, const std::string& out_dir) {
    std::size_t outside = 0;
    for (auto& p : pts)
        if (!mesh.bbox().contains(p[0], p[1])) ++outside;
    if (outside > 0)
        std::cerr << "warning: " << outside << " query points lie outside the mesh bounding box\n";

    const auto pred = model.predict(mesh, pts);
    fs::create_directories(out_dir);
    std::vector<std::string> header = {"x", "y"};
    for (std::size_t j = 0; j < pred.shape[1]; ++j) header.push_back("pred_" + std::to_string(j));
    CsvWriter csv(header);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::vector<std::string> row = {num(pts[i][0]), num(pts[i][1])};
        for (std::size_t j = 0; j < pred.shape[1]; ++j) row.push_back(num(double(pred(i, j))));
        csv.row(row);
    }
    csv.save(out_dir + "/query.csv");
    return kOk;
}

inline int cmd_query(const std::string& checkpoint, const std::string& mesh_path,
                     const std::string& resolution, const std::string& points_file,
                     const std::string& out_dir) {
    const Mesh mesh = load_mesh(mesh_path);
    std::vector<std::array<double, 2>> pts;
    if (!points_file.empty()) pts = read_points_csv(points_file);
    else if (!resolution.empty()) pts = parse_resolution_grid(resolution, mesh.bbox());
    else throw ConfigError("query: provide --resolution or --points");

    if (checkpoint_precision(checkpoint) == 32)
        return cmd_query_typed(load_checkpoint<float>(checkpoint), mesh, pts, out_dir);
    return cmd_query_typed(load_checkpoint<double>(checkpoint), mesh, pts, out_dir);
}

// ---- attention export -----------------------------------------------------------------

template <class T>
int cmd_export_attn_typed(const Model<T>& model, const Mesh& mesh,
                          const std::vector<std::array<double, 2>>& pts,
                          const std::string& out_dir) {
    if (model.config().attention != AttentionKind::dot_product)
        throw ConfigError("export-attn: attention weights are only defined for dot_product kind");
    AttentionCapture capture;
    model.predict(mesh, pts, &capture);
    fs::create_directories(out_dir);
    CsvWriter csv({"layer", "head", "query", "token", "weight"});
    for (const auto& e : capture.entries)
        for (std::size_t q = 0; q < e.weights.shape[0]; ++q)
            for (std::size_t k = 0; k < e.weights.shape[1]; ++k)
                csv.row({std::to_string(e.layer), std::to_string(e.head), std::to_string(q),
                         std::to_string(k), num(e.weights(q, k))});
    csv.save(out_dir + "/attention.csv");
    return kOk;
}

inline int cmd_export_attn(const std::string& checkpoint, const std::string& mesh_path,
                           const std::string& resolution, const std::string& points_file,
                           const std::string& out_dir) {
    const Mesh mesh = load_mesh(mesh_path);
    std::vector<std::array<double, 2>> pts;
    if (!points_file.empty()) pts = read_points_csv(points_file);
    else if (!resolution.empty()) pts = parse_resolution_grid(resolution, mesh.bbox());
    else throw ConfigError("export-attn: provide --resolution or --points");

    if (checkpoint_precision(checkpoint) == 32)
        return cmd_export_attn_typed(load_checkpoint<float>(checkpoint), mesh, pts, out_dir);
    return cmd_export_attn_typed(load_checkpoint<double>(checkpoint), mesh, pts, out_dir);
}

// ---- ablations -------------------------------------------------------------------------

/// Embedding comparison on the boundary-ambiguity set: plain
/// single-vector MLP, MLP with a type indicator, and the gated layer,
/// trained identically and scored per half.
inline int cmd_ablate_gce(RunConfig rc, bool quiet) {
    if (rc.benchmark != "ambiguity") rc = default_run_config("ambiguity");
    const Dataset ds = rc.data_dir.empty() ? default_dataset(rc) : load_dataset(rc.data_dir);

    fs::create_directories(rc.out_dir);
    CsvWriter csv({"embedding", "half", "rel_l2"});
    for (const EmbeddingKind kind :
         {EmbeddingKind::bc_vector, EmbeddingKind::bc_vector_type, EmbeddingKind::gated}) {
        RunConfig variant = rc;
        variant.model.embedding = kind;
        Model<double> model(variant.model, variant.condition_schema(), variant.seed);
        auto result = train(model, ds.train, ds.test, variant.train);
        Model<double> best(variant.model, variant.condition_schema(), result.best_params);

        for (const std::string half : {"ambiguity-D", "ambiguity-N"}) {
            std::vector<PDEInstance> part;
            for (auto& inst : ds.test)
                if (inst.tag == half && !inst.eval_points.empty()) part.push_back(inst);
            const double err = evaluate_rel_l2(best, part, field_column(0));
            if (!quiet) std::cout << to_string(kind) << " " << half << " " << err << "\n";
            csv.row({to_string(kind), half, num(err)});
        }
    }
    csv.save(rc.out_dir + "/gce_ablation.csv");
    return kOk;
}

/// Patch-size sweep: token counts, the quadratic attention-buffer
/// estimate, one timed encoder pass, and (when epochs > 0) a short
/// training run scored on the test split.
inline int cmd_ablate_patch(RunConfig rc, const std::vector<std::size_t>& sizes, bool quiet) {
    if (rc.benchmark != "beam2d") rc = default_run_config("beam2d");
    Dataset ds;
    if (rc.data_dir.empty()) {
        BeamSpec spec;
        const Mesh mesh = beam_mesh(rc.seed);
        ds.benchmark = "beam2d";
        ds.train.push_back(beam_instance(mesh, spec, 256, rc.seed + 1));
        ds.test.push_back(beam_instance(mesh, spec, 1024, rc.seed + 2));
    } else {
        ds = load_dataset(rc.data_dir);
    }

    fs::create_directories(rc.out_dir);
    CsvWriter csv({"patch_size", "tokens", "attn_buffer_bytes", "encode_ms", "rel_l2"});
    for (const std::size_t p : sizes) {
        RunConfig variant = rc;
        variant.model.patch_size = p;
        Model<double> model(variant.model, variant.condition_schema(), variant.seed);

        const auto& mesh = ds.train.front().mesh;
        const std::size_t tokens = (mesh.size() + p - 1) / p;
        const double buffer_bytes = double(tokens) * double(tokens) *
                                    double(variant.model.n_head) * sizeof(double) *
                                    double(variant.model.n_encoder);

        const auto t0 = std::chrono::steady_clock::now();
        {
            GradientTape<double> tape;
            TapeVars<double> vars(tape, model.params());
            encode(tape, vars, mesh, variant.model);
        }
        const double encode_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

        double err = std::numeric_limits<double>::quiet_NaN();
        if (variant.train.epochs > 0) {
            auto result = train(model, ds.train, ds.test, variant.train);
            Model<double> best(variant.model, variant.condition_schema(), result.best_params);
            err = evaluate_rel_l2(best, ds.test, field_column(0), 512);
        } else {
            err = evaluate_rel_l2(model, ds.test, field_column(0), 512);
        }
        if (!quiet)
            std::cout << "patch " << p << " tokens " << tokens << " encode_ms " << encode_ms
                      << " rel_l2 " << err << "\n";
        csv.row({std::to_string(p), std::to_string(tokens), num(buffer_bytes), num(encode_ms),
                 num(err)});
    }
    csv.save(rc.out_dir + "/patch_ablation.csv");
    return kOk;
}

// ---- entry point --------------------------------------------------------------------------

inline int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"transformer surrogates for PDE fields on unstructured meshes"};
    app.require_subcommand(1);

    std::string config_path, benchmark = "poisson", out_dir, data_dir, checkpoint, mesh_path;
    std::string resolution, points_file, kind = "gce", sizes_arg = "1,2,4,8,128";
    std::uint64_t seed = 0;
    bool seed_set = false, quiet = false;
    int precision = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration JSON");
        cmd->add_option("--benchmark", benchmark, "benchmark name when no config is given");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--seed", seed, "seed override")->each([&](const std::string&) { seed_set = true; });
        cmd->add_option("--precision", precision, "32 or 64");
        cmd->add_flag("--quiet", quiet, "suppress progress output");
    };

    auto* gen = app.add_subcommand("gen", "generate a benchmark dataset");
    GenOptions gopt;
    add_common(gen);
    gen->add_option("--train-count", gopt.train_count);
    gen->add_option("--test-count", gopt.test_count);
    gen->add_option("--train-points", gopt.train_points);
    gen->add_option("--test-points", gopt.test_points);

    auto* tr = app.add_subcommand("train", "train a model");
    add_common(tr);
    tr->add_option("--data", data_dir, "dataset directory from gen");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(ev);
    ev->add_option("--checkpoint", checkpoint)->required();
    ev->add_option("--data", data_dir, "dataset directory")->required();

    auto* qu = app.add_subcommand("query", "predict at arbitrary points");
    add_common(qu);
    qu->add_option("--checkpoint", checkpoint)->required();
    qu->add_option("--mesh", mesh_path, "context mesh file")->required();
    qu->add_option("--resolution", resolution, "grid like 100x40 over the mesh box");
    qu->add_option("--points", points_file, "csv with x,y columns");

    auto* ab = app.add_subcommand("ablate", "run an ablation study");
    add_common(ab);
    ab->add_option("--kind", kind, "gce or patch")->required();
    ab->add_option("--sizes", sizes_arg, "patch sizes, comma separated");
    ab->add_option("--data", data_dir, "dataset directory");

    auto* ex = app.add_subcommand("export-attn", "dump decoder attention weights");
    add_common(ex);
    ex->add_option("--checkpoint", checkpoint)->required();
    ex->add_option("--mesh", mesh_path)->required();
    ex->add_option("--resolution", resolution);
    ex->add_option("--points", points_file);

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfigExit;
    }

    try {
        RunConfig rc = config_path.empty() ? default_run_config(benchmark) : load_run_config(config_path);
        if (seed_set) rc.seed = seed;
        if (!out_dir.empty()) rc.out_dir = out_dir;
        if (!data_dir.empty()) rc.data_dir = data_dir;
        if (precision != 0) {
            if (precision != 32 && precision != 64) throw ConfigError("precision must be 32 or 64");
            rc.precision = precision;
        }

        if (gen->parsed()) {
            cmd_gen(rc, gopt);
            return kOk;
        }
        if (tr->parsed()) return cmd_train(rc, quiet);
        if (ev->parsed()) return cmd_eval(checkpoint, rc.data_dir, rc.out_dir);
        if (qu->parsed()) return cmd_query(checkpoint, mesh_path, resolution, points_file, rc.out_dir);
        if (ex->parsed())
            return cmd_export_attn(checkpoint, mesh_path, resolution, points_file, rc.out_dir);
        if (ab->parsed()) {
            if (kind == "gce") return cmd_ablate_gce(rc, quiet);
            if (kind == "patch") {
                std::vector<std::size_t> sizes;
                std::size_t pos = 0;
                while (pos < sizes_arg.size()) {
                    const auto comma = sizes_arg.find(',', pos);
                    sizes.push_back(std::stoul(sizes_arg.substr(pos, comma - pos)));
                    if (comma == std::string::npos) break;
                    pos = comma + 1;
                }
                return cmd_ablate_patch(rc, sizes, quiet);
            }
            throw ConfigError("ablate: kind must be gce or patch");
        }
        return kConfigExit;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigExit;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumericExit;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kIoExit;
    }
}

}  // namespace meshfield::cli
