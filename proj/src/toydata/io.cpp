#include "seedlab/toydata/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "seedlab/error.hpp"
#include "seedlab/toydata/edits.hpp"

namespace seedlab::toy {

namespace {

void put_double(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

void put_array(std::string& out, std::span<const double> values) {
    out += '[';
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        put_double(out, values[i]);
    }
    out += ']';
}

void put_key(std::string& out, const char* key) {
    out += '"';
    out += key;
    out += "\":";
}

std::string quoted(std::string_view s) { return "\"" + std::string(s) + "\""; }

}  // namespace

std::string to_json_line(const EditPair& p) {
    std::string out = "{";
    put_key(out, "id");
    out += std::to_string(p.id);
    out += ',';
    put_key(out, "source_kind");
    out += quoted(to_string(p.meta.source_kind));
    out += ',';
    put_key(out, "task_label");
    out += quoted(to_string(p.meta.task_label));
    out += ',';
    put_key(out, "tags");
    out += '[';
    bool first = true;
    for (std::size_t t = 0; t < kTagCount; ++t) {
        if (!p.meta.tags.has(static_cast<Tag>(t))) continue;
        if (!first) out += ',';
        out += quoted(to_string(static_cast<Tag>(t)));
        first = false;
    }
    out += "],";
    put_key(out, "op_kind");
    out += quoted(to_string(p.instruction.op));
    out += ',';
    put_key(out, "params");
    put_array(out, p.instruction.params);
    out += ',';
    put_key(out, "quality");
    put_double(out, p.quality);
    out += ',';
    put_key(out, "importance");
    put_double(out, p.importance);
    out += ',';
    put_key(out, "reverse_of");
    out += p.reverse_of ? std::to_string(*p.reverse_of) : "null";
    out += ',';
    put_key(out, "dim");
    out += std::to_string(p.source.dim());
    out += ',';
    put_key(out, "source");
    put_array(out, p.source.values);
    out += ',';
    put_key(out, "target");
    put_array(out, p.target.values);
    out += '}';
    return out;
}

EditPair from_json_line(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ContractError(std::string("dataset line is not JSON: ") + e.what());
    }
    try {
        EditPair p;
        p.id = j.at("id").get<std::uint64_t>();
        p.meta.source_kind = parse_source_kind(j.at("source_kind").get<std::string>());
        p.meta.task_label = parse_task_label(j.at("task_label").get<std::string>());
        for (const auto& t : j.at("tags")) p.meta.tags.set(parse_tag(t.get<std::string>()));
        p.instruction.op = parse_op_kind(j.at("op_kind").get<std::string>());
        const auto params = j.at("params").get<std::vector<double>>();
        if (params.size() != 4) throw ContractError("params must have 4 entries");
        std::copy(params.begin(), params.end(), p.instruction.params.begin());
        p.quality = j.at("quality").get<double>();
        p.importance = j.at("importance").get<double>();
        if (!j.at("reverse_of").is_null()) p.reverse_of = j.at("reverse_of").get<std::uint64_t>();
        const auto dim = j.at("dim").get<std::size_t>();
        p.source.values = j.at("source").get<std::vector<double>>();
        p.target.values = j.at("target").get<std::vector<double>>();
        if (!is_supported_dim(dim) || p.source.dim() != dim || p.target.dim() != dim) {
            throw ContractError("record dim inconsistent with its vectors");
        }
        attach_direction(p.instruction, p.source);
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ContractError(std::string("malformed dataset record: ") + e.what());
    }
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write dataset " + path.string());
    for (const auto& p : dataset) out << to_json_line(p) << '\n';
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read dataset " + path.string());
    Dataset out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(from_json_line(line));
    }
    return out;
}

DatasetManifest summarize(const Dataset& dataset, std::uint64_t seed) {
    DatasetManifest m;
    m.seed = seed;
    m.records = dataset.size();
    for (const auto& p : dataset) ++m.per_source_kind[static_cast<std::size_t>(p.meta.source_kind)];
    return m;
}

namespace {
std::filesystem::path manifest_path(const std::filesystem::path& dataset_path) {
    return dataset_path.string() + ".manifest.json";
}
}  // namespace

void write_manifest(const std::filesystem::path& dataset_path, const DatasetManifest& m) {
    nlohmann::ordered_json j;
    j["generator_version"] = m.generator_version;
    j["seed"] = m.seed;
    j["records"] = m.records;
    nlohmann::ordered_json counts;
    for (std::size_t k = 0; k < kSourceKindCount; ++k)
        counts[std::string(to_string(static_cast<SourceKind>(k)))] = m.per_source_kind[k];
    j["per_source_kind"] = counts;
    std::ofstream out(manifest_path(dataset_path), std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write dataset manifest");
    out << j.dump(2) << '\n';
}

DatasetManifest read_manifest(const std::filesystem::path& dataset_path) {
    std::ifstream in(manifest_path(dataset_path));
    if (!in) throw std::runtime_error("cannot read dataset manifest");
    const auto j = nlohmann::json::parse(in);
    DatasetManifest m;
    m.generator_version = j.at("generator_version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.records = j.at("records").get<std::size_t>();
    for (std::size_t k = 0; k < kSourceKindCount; ++k)
        m.per_source_kind[k] =
            j.at("per_source_kind").at(std::string(to_string(static_cast<SourceKind>(k)))).get<std::size_t>();
    return m;
}

}  // namespace seedlab::toy
