#include "seedlab/cli/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "seedlab/distill/distill.hpp"
#include "seedlab/error.hpp"
#include "seedlab/eval/eval.hpp"
#include "seedlab/log.hpp"
#include "seedlab/numerics/checkpoint.hpp"
#include "seedlab/quant/quant.hpp"
#include "seedlab/toydata/io.hpp"
#include "seedlab/toydata/pipeline.hpp"
#include "seedlab/trainer/trainer.hpp"

namespace seedlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Missing or unreadable input files.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what) : std::runtime_error("input error: " + what) {}
};

constexpr std::uint64_t kHeldoutIdOffset = std::uint64_t{1} << 32;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string checkpoint;
    std::string data;
    std::string schemes;
    std::string baseline;
};

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json read_json_file(const fs::path& p, const char* what) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError(std::string("cannot read ") + what + " " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(std::string(what) + " " + p.string() + " is not valid JSON: " + e.what());
    }
}

// --- configuration ---------------------------------------------------------

const json& section(const json& root, const char* name) {
    static const json kEmpty = json::object();
    return root.contains(name) ? root.at(name) : kEmpty;
}

void reject_unknown(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [k, _] : obj.items())
        if (std::find_if(keys.begin(), keys.end(), [&](const char* s) { return k == s; }) == keys.end())
            throw ConfigError(where + ": unknown key '" + k + "'");
}

template <class T>
T take(const json& o, const char* key, T fallback, const std::string& where) {
    if (!o.contains(key)) return fallback;
    try {
        return o.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

json load_config(const Options& o) {
    if (o.config.empty()) return json::object();
    json j = read_json_file(o.config, "config");
    reject_unknown(j, {"data", "model", "train", "distill", "quant", "eval", "sweep"}, "config");
    return j;
}

struct DataConfig {
    toy::SourceKind source = toy::SourceKind::traditional_op;
    std::vector<toy::OpKind> ops{toy::OpKind::shift_content};
    std::vector<std::size_t> dims{8};
    std::size_t train_records = 4096;
    std::size_t heldout_records = 512;
    bool reverse_augment = false;
};

DataConfig data_config(const json& j) {
    const std::string where = "data";
    reject_unknown(j, {"source_kind", "ops", "dims", "train_records", "heldout_records", "reverse_augment"}, where);
    DataConfig c;
    try {
        if (j.contains("source_kind")) c.source = toy::parse_source_kind(j.at("source_kind").get<std::string>());
        if (j.contains("ops")) {
            c.ops.clear();
            for (const auto& s : j.at("ops")) c.ops.push_back(toy::parse_op_kind(s.get<std::string>()));
        }
    } catch (const std::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
    c.dims = take(j, "dims", c.dims, where);
    c.train_records = take(j, "train_records", c.train_records, where);
    c.heldout_records = take(j, "heldout_records", c.heldout_records, where);
    c.reverse_augment = take(j, "reverse_augment", c.reverse_augment, where);
    if (c.dims.empty()) throw ConfigError("data.dims must be nonempty");
    for (std::size_t d : c.dims)
        if (!toy::is_supported_dim(d)) throw ConfigError("data.dims: unsupported dim " + std::to_string(d));
    if (c.train_records == 0 || c.heldout_records == 0) throw ConfigError("data: record counts must be positive");
    return c;
}

ordered_json to_json(const DataConfig& c) {
    ordered_json j;
    j["source_kind"] = toy::to_string(c.source);
    j["ops"] = json::array();
    for (auto op : c.ops) j["ops"].push_back(toy::to_string(op));
    j["dims"] = c.dims;
    j["train_records"] = c.train_records;
    j["heldout_records"] = c.heldout_records;
    j["reverse_augment"] = c.reverse_augment;
    return j;
}

struct EvalConfig {
    std::size_t teacher_steps = 75;
    std::size_t student_steps = 8;
    double w_image = 1.0;
    double w_text = 1.0;
    std::string noise = "auto";  // auto | fresh | reference
};

EvalConfig eval_config(const json& j) {
    const std::string where = "eval";
    reject_unknown(j, {"teacher_steps", "student_steps", "w_image", "w_text", "noise"}, where);
    EvalConfig c;
    c.teacher_steps = take(j, "teacher_steps", c.teacher_steps, where);
    c.student_steps = take(j, "student_steps", c.student_steps, where);
    c.w_image = take(j, "w_image", c.w_image, where);
    c.w_text = take(j, "w_text", c.w_text, where);
    c.noise = take(j, "noise", c.noise, where);
    if (c.teacher_steps == 0 || c.student_steps == 0) throw ConfigError("eval: steps must be positive");
    if (!(c.w_image >= 1.0 && c.w_text >= 1.0)) throw ConfigError("eval: guidance scales must be >= 1");
    if (c.noise != "auto" && c.noise != "fresh" && c.noise != "reference")
        throw ConfigError("eval.noise must be auto, fresh or reference");
    return c;
}

ordered_json to_json(const EvalConfig& c) {
    return {{"teacher_steps", c.teacher_steps},
            {"student_steps", c.student_steps},
            {"w_image", c.w_image},
            {"w_text", c.w_text},
            {"noise", c.noise}};
}

struct SweepConfig {
    std::vector<double> w_image{1.0};
    std::vector<double> w_text{1.0, 1.5, 2.0, 3.0, 4.5, 6.0};
};

SweepConfig sweep_config(const json& j) {
    const std::string where = "sweep";
    reject_unknown(j, {"w_image", "w_text"}, where);
    SweepConfig c;
    c.w_image = take(j, "w_image", c.w_image, where);
    c.w_text = take(j, "w_text", c.w_text, where);
    if (c.w_image.empty() || c.w_text.empty()) throw ConfigError("sweep grids must be nonempty");
    for (double w : c.w_image)
        if (!(w >= 1.0)) throw ConfigError("sweep.w_image: scales must be >= 1");
    for (double w : c.w_text)
        if (!(w >= 1.0)) throw ConfigError("sweep.w_text: scales must be >= 1");
    return c;
}

model::ModelConfig model_config(const json& j, std::vector<std::size_t> dims) {
    const std::string where = "model";
    reject_unknown(j, {"width", "depth"}, where);
    model::ModelConfig c;
    c.dims = std::move(dims);
    c.width = take(j, "width", c.width, where);
    c.depth = take(j, "depth", c.depth, where);
    if (c.width == 0 || c.depth == 0) throw ConfigError("model: width and depth must be positive");
    return c;
}

// --- run bookkeeping -------------------------------------------------------

class Run {
public:
    Run(std::string subcommand, const Options& o) : out_(o.out) {
        manifest_["tool"] = kToolVersion;
        manifest_["dataset_generator"] = toy::kGeneratorVersion;
        manifest_["checkpoint_version"] = num::kCheckpointVersion;
        manifest_["subcommand"] = std::move(subcommand);
        manifest_["seed"] = o.seed.value_or(0);
        std::error_code ec;
        fs::create_directories(out_, ec);
        if (ec || !fs::is_directory(out_)) throw InputError("cannot create output directory " + out_.string());
    }

    void config(ordered_json c) { manifest_["config"] = std::move(c); }
    void input(const fs::path& p) { inputs_.push_back(p); }

    fs::path path(const std::string& name) const { return out_ / name; }

    void write_text(const std::string& name, const std::string& text) {
        std::ofstream f(path(name), std::ios::binary);
        f << text;
        if (!f) throw std::runtime_error("cannot write " + path(name).string());
        outputs_.push_back(name);
    }
    void produced(const std::string& name) { outputs_.push_back(name); }

    void finish() {
        ordered_json in = ordered_json::object(), out = ordered_json::object();
        for (const auto& p : inputs_) in[p.filename().string()] = hex64(file_hash(p));
        for (const auto& n : outputs_) out[n] = hex64(file_hash(path(n)));
        manifest_["inputs"] = in;
        manifest_["outputs"] = out;
        std::ofstream f(path("manifest.json"), std::ios::binary);
        f << manifest_.dump(2) << '\n';
        if (!f) throw std::runtime_error("cannot write manifest");
    }

private:
    fs::path out_;
    ordered_json manifest_;
    std::vector<fs::path> inputs_;
    std::vector<std::string> outputs_;
};

toy::Dataset load_dataset(Run& run, const std::string& p) {
    if (!fs::is_regular_file(p)) throw InputError("dataset not found: " + p);
    run.input(p);
    try {
        return toy::read_dataset(p);
    } catch (const ContractError& e) {
        throw InputError("dataset " + p + ": " + e.what());
    }
}

struct Loaded {
    num::CheckpointHeader header;
    std::optional<model::VelocityModel> model;
    std::optional<distill::NoiseRefNet> noise_ref;
};

Loaded load_model(Run& run, const std::string& p) {
    run.input(p);
    auto ck = num::load_checkpoint(p);
    Loaded l;
    l.header = ck.header;
    if (ck.header.student) {
        auto b = distill::split_student(ck.params);
        l.model.emplace(std::move(b.student));
        l.noise_ref.emplace(std::move(b.noise_ref));
    } else {
        l.model.emplace(model::VelocityModel::from_params(std::move(ck.params)));
    }
    return l;
}

std::optional<quant::SchemeTable> load_schemes(Run& run, const std::string& p) {
    if (p.empty()) return std::nullopt;
    run.input(p);
    return quant::scheme_table_from_json(read_json_file(p, "scheme table"));
}

eval::SampleSpec sample_spec(const Loaded& l, const EvalConfig& c, std::uint64_t seed) {
    eval::SampleSpec s;
    s.seed = seed;
    s.steps = l.header.student ? c.student_steps : c.teacher_steps;
    if (l.header.student) {
        s.trained_range = l.header.guidance_range;
        if (c.noise != "fresh") s.noise_ref = &*l.noise_ref;
    } else if (c.noise == "reference") {
        throw ContractError("eval.noise = reference needs a student checkpoint");
    }
    return s;
}

std::string samples_jsonl(const toy::Dataset& data, const eval::Samples& s) {
    std::string out;
    for (std::size_t i = 0; i < data.size(); ++i) {
        ordered_json j;
        j["id"] = data[i].id;
        j["x"] = s.outputs[i];
        out += j.dump();
        out += '\n';
    }
    return out;
}

// --- subcommands -----------------------------------------------------------

void cmd_gen_data(const Options& o, const json& cfg) {
    Run run("gen-data", o);
    const auto c = data_config(section(cfg, "data"));
    run.config({{"data", to_json(c)}});
    const std::uint64_t seed = o.seed.value_or(0);
    const num::Rng rng(seed);
    toy::GenOptions g;
    g.ops = c.ops;
    auto train = toy::gen_pairs(c.source, c.train_records, c.dims, rng, g);
    if (c.reverse_augment) train = toy::augment_reverse(train);
    g.id_offset = kHeldoutIdOffset;
    const auto held = toy::gen_pairs(c.source, c.heldout_records, c.dims, rng, g);
    const std::pair<const char*, const toy::Dataset*> outputs[] = {{"train.jsonl", &train}, {"heldout.jsonl", &held}};
    for (const auto& [name, ds] : outputs) {
        toy::write_dataset(run.path(name), *ds);
        toy::write_manifest(run.path(name), toy::summarize(*ds, seed));
        run.produced(name);
        run.produced(std::string(name) + ".manifest.json");
    }
    log::info("gen-data: " + std::to_string(train.size()) + " train and " + std::to_string(held.size()) +
              " held-out records");
    run.finish();
}

void cmd_train(const Options& o, const json& cfg) {
    Run run("train", o);
    const auto data = load_dataset(run, o.data);
    auto sc = train::stage_config_from_json(section(cfg, "train"));
    if (o.seed) sc.seed = *o.seed;

    std::set<std::size_t> dim_set;
    for (const auto& p : data) dim_set.insert(p.source.dim());
    std::optional<model::VelocityModel> m;
    if (!o.checkpoint.empty()) {
        auto l = load_model(run, o.checkpoint);
        if (l.header.student) throw ContractError("train continues teachers only; got a student checkpoint");
        m = std::move(l.model);
    } else {
        m.emplace(model::VelocityModel::init(
            model_config(section(cfg, "model"), {dim_set.begin(), dim_set.end()}), sc.seed));
    }
    run.config({{"train", train::to_json(sc)},
                {"model", {{"width", m->config().width}, {"depth", m->config().depth}, {"dims", m->config().dims}}}});

    train::TimestepDistribution dist;
    std::ostringstream metrics;
    const auto rep = train::train_stage(*m, data, sc, dist, &metrics);
    num::save_checkpoint(run.path("teacher.sedl"), m->params());
    run.produced("teacher.sedl");
    run.write_text("metrics.jsonl", metrics.str());
    run.write_text("timestep.json", dist.to_json().dump(2) + "\n");
    ordered_json r;
    r["steps"] = rep.steps;
    r["final_loss"] = rep.final_loss;
    r["records_used"] = rep.records_used;
    r["t2i_batches"] = rep.t2i_batches;
    run.write_text("train_report.json", r.dump(2) + "\n");
    log::info("train: " + std::to_string(rep.steps) + " steps, final loss " + eval::format_number(rep.final_loss));
    run.finish();
}

void cmd_distill(const Options& o, const json& cfg) {
    Run run("distill", o);
    const auto data = load_dataset(run, o.data);
    auto l = load_model(run, o.checkpoint);
    if (l.header.student) throw ContractError("distill needs a teacher checkpoint; got a student");
    auto dc = distill::distill_config_from_json(section(cfg, "distill"));
    if (o.seed) dc.seed = dc.noise.seed = *o.seed;
    run.config({{"distill", distill::to_json(dc)}});
    const auto& teacher = *l.model;

    log::info("distill: fitting noise reference");
    const auto nr = distill::train_noise_ref(teacher, data, dc.noise);
    auto student = teacher.with_guidance(dc.seed);
    log::info("distill: guidance distillation");
    const auto cfg_rep = distill::distill_cfg(teacher, student, data, dc);
    log::info("distill: few-step distillation");
    const auto few = distill::distill_fewstep(teacher, student, nr.net, data, dc);
    num::save_checkpoint(run.path("student.sedl"), distill::bundle_student(student, nr.net),
                         distill::student_header(dc));
    run.produced("student.sedl");

    auto first_last = [](const std::vector<double>& v) {
        return v.empty() ? ordered_json(nullptr) : ordered_json{{"first", v.front()}, {"last", v.back()}};
    };
    ordered_json r;
    r["noise_ref_epoch_mse"] = nr.epoch_mse;
    r["cfg_loss"] = first_last(cfg_rep.losses);
    r["fewstep_loss"] = first_last(few.losses);
    r["teacher_checksum"] = hex64(cfg_rep.teacher_checksum_before);
    r["teacher_frozen"] = cfg_rep.teacher_checksum_before == few.teacher_checksum_after;
    run.write_text("distill_report.json", r.dump(2) + "\n");
    run.finish();
}

void cmd_quantize(const Options& o, const json& cfg) {
    Run run("quantize", o);
    const auto data = load_dataset(run, o.data);
    auto l = load_model(run, o.checkpoint);
    auto qc = quant::quant_config_from_json(section(cfg, "quant"));
    if (o.seed) qc.calib.seed = *o.seed;
    if (l.header.student) {
        const auto& g = l.header.guidance_range;
        qc.calib.guidance_range = {g[0], g[1], g[2], g[3]};
    }
    run.config({{"quant", quant::to_json(qc)}});
    const auto calib = quant::calibrate(*l.model, data, qc.calib);
    const auto res = quant::quantize_model(*l.model, calib, qc);
    run.write_text("schemes.json", quant::to_json(res.table).dump(2) + "\n");
    ordered_json layers = ordered_json::array();
    std::size_t sensitive = 0;
    for (const auto& r : res.layers) {
        sensitive += r.sensitive ? 1 : 0;
        layers.push_back({{"layer", r.layer},
                          {"sensitive", r.sensitive},
                          {"mse_default", r.mse_default},
                          {"mse_searched", r.mse_searched},
                          {"mse_final", r.mse_final},
                          {"float_mean_sq", r.float_mean_sq}});
    }
    run.write_text("quant_report.json", ordered_json{{"layers", layers}}.dump(2) + "\n");
    log::info("quantize: " + std::to_string(res.layers.size()) + " layers, " + std::to_string(sensitive) +
              " sensitive");
    run.finish();
}

struct SampleJob {
    toy::Dataset data;
    Loaded model;
    std::optional<quant::SchemeTable> schemes;
    EvalConfig ec;
};

SampleJob prepare_sampling(Run& run, const Options& o, const json& cfg) {
    SampleJob j{load_dataset(run, o.data), load_model(run, o.checkpoint), std::nullopt,
                eval_config(section(cfg, "eval"))};
    j.schemes = load_schemes(run, o.schemes);
    return j;
}

eval::Samples run_sampling(const SampleJob& job, std::uint64_t seed, double w_image, double w_text) {
    auto spec = sample_spec(job.model, job.ec, seed);
    std::optional<quant::QuantHook> hook;
    if (job.schemes) {
        hook.emplace(*job.schemes);
        spec.hook = &*hook;
    }
    return eval::sample_dataset(*job.model.model, job.data, w_image, w_text, spec);
}

void cmd_sample(const Options& o, const json& cfg) {
    Run run("sample", o);
    const auto job = prepare_sampling(run, o, cfg);
    run.config({{"eval", to_json(job.ec)}, {"quantized", job.schemes.has_value()}});
    const auto s = run_sampling(job, o.seed.value_or(0), job.ec.w_image, job.ec.w_text);
    run.write_text("samples.jsonl", samples_jsonl(job.data, s));
    run.finish();
}

void cmd_eval(const Options& o, const json& cfg) {
    Run run("eval", o);
    const auto job = prepare_sampling(run, o, cfg);
    run.config({{"eval", to_json(job.ec)}, {"quantized", job.schemes.has_value()}});
    const auto s = run_sampling(job, o.seed.value_or(0), job.ec.w_image, job.ec.w_text);
    const auto recs = eval::evaluate(job.data, s.outputs);
    const auto sum = eval::summarize(recs);
    ordered_json r = eval::to_json(sum);
    r["nfe"] = s.eval_count;
    run.write_text("eval_report.json", r.dump(2) + "\n");
    run.write_text("eval_records.csv", eval::records_csv(recs));
    log::info("eval: mean oracle error " + eval::format_number(sum.mean_oracle_error) + " over " +
              std::to_string(sum.n_records - sum.n_degenerate) + " records");
    run.finish();
}

void cmd_sweep(const Options& o, const json& cfg) {
    Run run("sweep", o);
    const auto job = prepare_sampling(run, o, cfg);
    const auto sc = sweep_config(section(cfg, "sweep"));
    run.config({{"eval", to_json(job.ec)}, {"sweep", {{"w_image", sc.w_image}, {"w_text", sc.w_text}}}});
    auto spec = sample_spec(job.model, job.ec, o.seed.value_or(0));
    std::optional<quant::QuantHook> hook;
    if (job.schemes) {
        hook.emplace(*job.schemes);
        spec.hook = &*hook;
    }
    const auto rows = eval::sweep_cfg(*job.model.model, job.data, sc.w_image, sc.w_text, spec);
    run.write_text("sweep.csv", eval::sweep_csv(rows));
    run.finish();
}

void cmd_bench(const Options& o, const json& cfg) {
    Run run("bench", o);
    const auto ec = eval_config(section(cfg, "eval"));
    const auto l = load_model(run, o.checkpoint);
    const auto schemes = load_schemes(run, o.schemes);
    std::optional<toy::Dataset> data;
    if (!o.data.empty()) data = load_dataset(run, o.data);
    run.config({{"eval", to_json(ec)}, {"quantized", schemes.has_value()}});

    const std::size_t dim = data && !data->empty() ? data->front().source.dim() : l.model->config().dims.front();
    const auto spec = sample_spec(l, ec, o.seed.value_or(0));
    const auto mode = l.header.student ? flow::SamplerMode::student_distilled : flow::SamplerMode::teacher_cfg;
    auto cost = quant::sampling_cost(*l.model, dim, spec.steps * flow::evals_per_step(mode),
                                     schemes ? &*schemes : nullptr);
    if (data) {
        SampleJob job{*data, l, schemes, ec};
        const auto t0 = std::chrono::steady_clock::now();
        (void)run_sampling(job, o.seed.value_or(0), ec.w_image, ec.w_text);
        cost.wall_clock_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    ordered_json r;
    r["dim"] = dim;
    r["model"] = quant::to_json(cost);
    if (!o.baseline.empty()) {
        const auto b = load_model(run, o.baseline);
        if (b.header.student) throw ContractError("bench baseline must be a teacher checkpoint");
        const auto bc = quant::sampling_cost(*b.model, dim, ec.teacher_steps * 3);
        r["baseline"] = quant::to_json(bc);
        r["weighted_mac_reduction"] = bc.weighted_macs / cost.weighted_macs;
    }
    run.write_text("cost_report.json", r.dump(2) + "\n");
    run.finish();
}

struct Command {
    const char* name;
    const char* help;
    void (*fn)(const Options&, const json&);
    bool needs_data, needs_checkpoint, takes_schemes, takes_baseline, data_optional;
};

const Command kCommands[] = {
    {"gen-data", "Generate train and held-out edit pairs", cmd_gen_data, false, false, false, false, false},
    {"train", "Train a teacher on a dataset", cmd_train, true, false, false, false, false},
    {"distill", "Distill a teacher into a few-step guided student", cmd_distill, true, true, false, false, false},
    {"quantize", "Calibrate and search quantization schemes", cmd_quantize, true, true, false, false, false},
    {"sample", "Sample edits for every record", cmd_sample, true, true, true, false, false},
    {"eval", "Sample and score a held-out set", cmd_eval, true, true, true, false, false},
    {"sweep", "Guidance trade-off sweep", cmd_sweep, true, true, true, false, false},
    {"bench", "Cost model and wall clock", cmd_bench, false, true, true, true, true},
};

}  // namespace

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t file_hash(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a(bytes);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Instruction-editing flow model toolkit", "seedlab"};
    app.require_subcommand(1, 1);
    app.set_version_flag("--version", kToolVersion);
    Options o;
    std::vector<std::pair<CLI::App*, const Command*>> subs;
    for (const auto& c : kCommands) {
        auto* s = app.add_subcommand(c.name, c.help);
        s->add_option("--config", o.config, "JSON config file");
        s->add_option("--seed", o.seed, "Master seed");
        s->add_option("--out", o.out, "Output directory")->required();
        auto* ck = s->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
        if (c.needs_checkpoint) ck->required();
        if (c.needs_data || c.data_optional) {
            auto* d = s->add_option("--data", o.data, "Dataset (JSONL)");
            if (c.needs_data) d->required();
        }
        if (c.takes_schemes) s->add_option("--schemes", o.schemes, "Quantization scheme table");
        if (c.takes_baseline) s->add_option("--baseline", o.baseline, "Float teacher checkpoint for comparison");
        subs.emplace_back(s, &c);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "seedlab: usage error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    const Command* cmd = nullptr;
    for (const auto& [s, c] : subs)
        if (s->parsed()) cmd = c;

    try {
        const json cfg = load_config(o);
        cmd->fn(o, cfg);
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "seedlab " << cmd->name << ": " << e.what() << '\n';
        return kExitConfig;
    } catch (const num::CheckpointError& e) {
        err << "seedlab " << cmd->name << ": checkpoint error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const InputError& e) {
        err << "seedlab " << cmd->name << ": " << e.what() << '\n';
        return kExitConfig;
    } catch (const json::exception& e) {
        err << "seedlab " << cmd->name << ": config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ContractError& e) {
        err << "seedlab " << cmd->name << ": " << e.what() << '\n';
        return kExitContract;
    } catch (const ShapeError& e) {
        err << "seedlab " << cmd->name << ": " << e.what() << '\n';
        return kExitContract;
    } catch (const std::exception& e) {
        err << "seedlab " << cmd->name << ": internal error: " << e.what() << '\n';
        return kExitInternal;
    }
}

}  // namespace seedlab::cli
