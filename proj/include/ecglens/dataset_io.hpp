#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "ecglens/csv.hpp"
#include "ecglens/types.hpp"

namespace ecglens {

namespace detail {

inline nlohmann::json instance_meta(const TimeSeriesInstance& inst) {
    nlohmann::json j;
    j["id"] = inst.id;
    j["sample_rate_hz"] = inst.sample_rate_hz;
    j["label"] = inst.label;
    if (inst.age) j["age"] = *inst.age;
    if (inst.sex) j["sex"] = *inst.sex;
    return j;
}

inline void apply_instance_meta(TimeSeriesInstance& inst, const nlohmann::json& j) {
    inst.id = j.at("id").get<std::string>();
    inst.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    inst.label = j.at("label").get<int>();
    if (j.contains("age")) inst.age = j.at("age").get<double>();
    if (j.contains("sex")) inst.sex = j.at("sex").get<int>();
}

}  // namespace detail

inline void save_instance_csv(const TimeSeriesInstance& inst, const std::string& path) {
    check_rectangular(inst.values, "save_instance_csv");
    CsvTable t;
    t.header = inst.lead_names;
    const std::size_t n = inst.n_samples();
    t.rows.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        t.rows[r].reserve(inst.n_leads());
        for (std::size_t l = 0; l < inst.n_leads(); ++l)
            t.rows[r].push_back(format_double(inst.values[l][r]));
    }
    write_csv(path, t);
}

inline TimeSeriesInstance load_instance_csv(const std::string& path) {
    const CsvTable t = read_csv(path);
    TimeSeriesInstance inst;
    inst.lead_names = t.header;
    inst.values.assign(t.header.size(), Signal(t.rows.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        for (std::size_t l = 0; l < t.header.size(); ++l)
            inst.values[l][r] = parse_double(t.rows[r][l],
                                             path + " row " + std::to_string(r + 2));
    return inst;
}

enum class DatasetFormat { csv_dir, bundle };

inline void save_dataset(const Dataset& ds, const std::string& path,
                         DatasetFormat format = DatasetFormat::csv_dir) {
    namespace fs = std::filesystem;
    if (format == DatasetFormat::csv_dir) {
        fs::create_directories(path);
        for (const auto& inst : ds.instances) {
            save_instance_csv(inst, (fs::path(path) / (inst.id + ".csv")).string());
            std::ofstream meta(fs::path(path) / (inst.id + ".meta.json"));
            meta << detail::instance_meta(inst).dump(2) << "\n";
            if (!meta) throw std::runtime_error("cannot write metadata for " + inst.id);
        }
        return;
    }
    nlohmann::json root;
    root["instances"] = nlohmann::json::array();
    for (const auto& inst : ds.instances) {
        nlohmann::json j = detail::instance_meta(inst);
        j["lead_names"] = inst.lead_names;
        j["values"] = inst.values;
        root["instances"].push_back(std::move(j));
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << root.dump() << "\n";
}

inline Dataset load_dataset(const std::string& path,
                            DatasetFormat format = DatasetFormat::csv_dir) {
    namespace fs = std::filesystem;
    Dataset ds;
    if (format == DatasetFormat::csv_dir) {
        if (!fs::is_directory(path)) throw std::runtime_error("not a directory: " + path);
        std::vector<fs::path> csvs;
        for (const auto& entry : fs::directory_iterator(path))
            if (entry.path().extension() == ".csv") csvs.push_back(entry.path());
        std::sort(csvs.begin(), csvs.end());
        if (csvs.empty())
            std::cerr << "warning: no instances found in " << path << "\n";
        for (const auto& csv : csvs) {
            TimeSeriesInstance inst = load_instance_csv(csv.string());
            fs::path meta_path = csv;
            meta_path.replace_extension(".meta.json");
            std::ifstream meta(meta_path);
            if (!meta)
                throw std::runtime_error("parse error: missing metadata sidecar " + meta_path.string());
            nlohmann::json j;
            meta >> j;
            detail::apply_instance_meta(inst, j);
            ds.instances.push_back(std::move(inst));
        }
        return ds;
    }
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    nlohmann::json root;
    in >> root;
    for (const auto& j : root.at("instances")) {
        TimeSeriesInstance inst;
        detail::apply_instance_meta(inst, j);
        inst.lead_names = j.at("lead_names").get<std::vector<std::string>>();
        inst.values = j.at("values").get<LeadMatrix>();
        check_rectangular(inst.values, ("bundle instance " + inst.id).c_str());
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

inline void save_split_tags(const Dataset& ds, const std::string& path) {
    CsvTable t;
    t.header = {"id", "tag"};
    for (std::size_t i = 0; i < ds.instances.size(); ++i)
        t.rows.push_back({ds.instances[i].id, to_string(ds.tags.at(i))});
    write_csv(path, t);
}

inline void load_split_tags(Dataset& ds, const std::string& path) {
    const CsvTable t = read_csv(path);
    ds.tags.assign(ds.instances.size(), SplitTag{});
    for (const auto& row : t.rows) {
        bool found = false;
        for (std::size_t i = 0; i < ds.instances.size(); ++i) {
            if (ds.instances[i].id == row[0]) {
                ds.tags[i] = split_tag_from_string(row[1]);
                found = true;
                break;
            }
        }
        if (!found)
            throw std::runtime_error("split tags refer to unknown instance id " + row[0]);
    }
}

}  // namespace ecglens
