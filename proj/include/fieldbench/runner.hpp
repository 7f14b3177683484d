/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fieldbench/census.hpp"
#include "fieldbench/metrics.hpp"
#include "fieldbench/sim_backend.hpp"
#include "fieldbench/workload.hpp"

namespace fieldbench {

/// One fully pinned benchmark execution: everything `execute_manifest` needs,
/// and nothing it could still choose. Equal manifests on the simulated
/// backend produce byte-identical event logs.
struct RunManifest {
    BenchmarkConfig config;  // single values only; config.seed is this run's seed
    unsigned repetition = 0;
    BackendKind backend = BackendKind::Memory;
    ArenaKind arena = ArenaKind::Heap;
    SimTopology topology;  // server_node_count mirrors config.server_node_count
    std::string stem;      // output basename, no directory, no extension

    std::string log_filename() const { return stem + "_r" + std::to_string(repetition) + ".log"; }
    std::string census_filename() const {
        return stem + "_r" + std::to_string(repetition) + ".census.json";
    }
};

/// A parsed config document: scalar settings plus the sweepable axes, each of
/// which may hold several values. `expand_manifests` takes the cross product.
struct ConfigDocument {
    Pattern pattern = Pattern::A;
    Driver driver = Driver::FieldIo;
    FieldStoreMode mode = FieldStoreMode::Full;
    std::vector<unsigned> servers{1};
    std::vector<unsigned> clients;  // empty → 2x the server count
    std::vector<unsigned> procs_per_client{1};
    std::vector<unsigned> ios{1};
    std::vector<std::uint64_t> object_size{1u << 20};
    Contention contention = Contention::PerProcessForecastIndex;
    ObjectClass kv_class = ObjectClass::SX;
    ObjectClass array_class = ObjectClass::S1;
    unsigned repetitions = 1;
    std::uint64_t seed = 0;
    std::int64_t start_skew_ns = 0;
    BackendKind backend = BackendKind::Memory;
    ArenaKind arena = ArenaKind::Heap;
    SimTopology topology;  // server_node_count is taken from `servers` instead
};

namespace detail {

using nlohmann::json;

/// Wraps any enum-name parser so its complaint names the config field.
template <typename Fn>
auto parse_enum_field(const char* field, const std::string& text, Fn&& parse) {
    try {
        return parse(text);
    } catch (const Error& e) {
        throw ConfigError(std::string(field) + ": " + e.what());
    }
}

inline std::uint64_t to_count(const char* field, const json& v) {
    if (!v.is_number_unsigned())
        throw ConfigError(std::string(field) + ": expected a non-negative integer");
    return v.get<std::uint64_t>();
}

template <typename T>
std::vector<T> to_count_list(const char* field, const json& v) {
    std::vector<T> out;
    if (v.is_array()) {
        if (v.empty()) throw ConfigError(std::string(field) + ": sweep list is empty");
        for (const auto& item : v) out.push_back(static_cast<T>(to_count(field, item)));
    } else {
        out.push_back(static_cast<T>(to_count(field, v)));
    }
    return out;
}

inline void apply_topology(SimTopology& topo, const json& obj) {
    if (!obj.is_object()) throw ConfigError("topology: expected an object");
    for (const auto& [key, value] : obj.items()) {
        if (key == "engines_per_node")
            topo.engines_per_node = static_cast<unsigned>(to_count("topology.engines_per_node", value));
        else if (key == "targets_per_engine")
            topo.targets_per_engine =
                static_cast<unsigned>(to_count("topology.targets_per_engine", value));
        else if (key == "per_target_bandwidth")
            topo.per_target_bandwidth = to_count("topology.per_target_bandwidth", value);
        else if (key == "per_target_read_bandwidth")
            topo.per_target_read_bandwidth = to_count("topology.per_target_read_bandwidth", value);
        else if (key == "per_interface_bandwidth")
            topo.per_interface_bandwidth = to_count("topology.per_interface_bandwidth", value);
        else if (key == "client_interface_bandwidth")
            topo.client_interface_bandwidth =
                to_count("topology.client_interface_bandwidth", value);
        else if (key == "interfaces_per_client_node")
            topo.interfaces_per_client_node =
                static_cast<unsigned>(to_count("topology.interfaces_per_client_node", value));
        else if (key == "per_op_latency_ns")
            topo.per_op_latency_ns = to_count("topology.per_op_latency_ns", value);
        else if (key == "stripe_cell_bytes")
            topo.stripe_cell_bytes = to_count("topology.stripe_cell_bytes", value);
        else
            throw ConfigError("topology." + key + ": unknown field");
    }
}

/// Applies one named setting to the document. Shared between the JSON loader
/// and command-line overrides so both accept exactly the same names.
inline void apply_setting(ConfigDocument& doc, const std::string& key, const json& value) {
    auto text = [&]() -> std::string {
        if (!value.is_string()) throw ConfigError(key + ": expected a string");
        return value.get<std::string>();
    };
    if (key == "pattern")
        doc.pattern = parse_enum_field("pattern", text(), pattern_from_string);
    else if (key == "driver")
        doc.driver = parse_enum_field("driver", text(), driver_from_string);
    else if (key == "mode")
        doc.mode = parse_enum_field("mode", text(), field_store_mode_from_string);
    else if (key == "servers")
        doc.servers = to_count_list<unsigned>("servers", value);
    else if (key == "clients")
        doc.clients = to_count_list<unsigned>("clients", value);
    else if (key == "procs_per_client")
        doc.procs_per_client = to_count_list<unsigned>("procs_per_client", value);
    else if (key == "ios")
        doc.ios = to_count_list<unsigned>("ios", value);
    else if (key == "object_size")
        doc.object_size = to_count_list<std::uint64_t>("object_size", value);
    else if (key == "contention")
        doc.contention = parse_enum_field("contention", text(), contention_from_string);
    else if (key == "kv_class")
        doc.kv_class = parse_enum_field("kv_class", text(), object_class_from_string);
    else if (key == "array_class")
        doc.array_class = parse_enum_field("array_class", text(), object_class_from_string);
    else if (key == "repetitions")
        doc.repetitions = static_cast<unsigned>(to_count("repetitions", value));
    else if (key == "seed")
        doc.seed = to_count("seed", value);
    else if (key == "start_skew_ns")
        doc.start_skew_ns = static_cast<std::int64_t>(to_count("start_skew_ns", value));
    else if (key == "backend")
        doc.backend = parse_enum_field("backend", text(), backend_kind_from_string);
    else if (key == "arena")
        doc.arena = parse_enum_field("arena", text(), arena_kind_from_string);
    else if (key == "topology")
        apply_topology(doc.topology, value);
    else
        throw ConfigError(key + ": unknown config field");
}

}  // namespace detail

/// Parses a JSON config document. Unknown fields and wrong types are
/// config errors naming the field; malformed JSON is a config error too.
inline ConfigDocument parse_config_document(const std::string& json_text) {
    detail::json doc_json;
    try {
        doc_json = detail::json::parse(json_text);
    } catch (const detail::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc_json.is_object()) throw ConfigError("config root must be a JSON object");
    ConfigDocument doc;
    for (const auto& [key, value] : doc_json.items()) detail::apply_setting(doc, key, value);
    return doc;
}

inline ConfigDocument load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("config file '" + path + "' is not readable");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config_document(text.str());
}

/// Command-line overrides: same setting names as the config file, values
/// given as strings. Numbers and sweep lists use JSON syntax ("4" or
/// "[1,2,4]"); enum settings take their bare name ("fieldio").
inline void apply_overrides(ConfigDocument& doc,
                            const std::map<std::string, std::string>& overrides) {
    for (const auto& [key, raw] : overrides) {
        detail::json value = detail::json::parse(raw, nullptr, false);
        if (value.is_discarded()) value = raw;  // unquoted enum name
        detail::apply_setting(doc, key, value);
    }
}

/// Expands the sweep axes (servers x clients x procs x ios x object size,
/// then repetitions) into concrete manifests. A missing `clients` axis
/// follows the server axis at twice the node count. Repetition k of a
/// group runs with seed `doc.seed + k`.
inline std::vector<RunManifest> expand_manifests(const ConfigDocument& doc) {
    if (doc.repetitions == 0) throw ConfigError("repetitions must be positive");
    std::vector<RunManifest> manifests;
    const std::vector<unsigned> derived_clients{0};  // marker: follow servers
    const std::vector<unsigned>& clients = doc.clients.empty() ? derived_clients : doc.clients;

    for (unsigned servers : doc.servers)
        for (unsigned clients_raw : clients)
            for (unsigned procs : doc.procs_per_client)
                for (unsigned ios : doc.ios)
                    for (std::uint64_t object_size : doc.object_size) {
                        const unsigned client_nodes =
                            clients_raw == 0 ? 2 * servers : clients_raw;
                        BenchmarkConfig cfg;
                        cfg.pattern = doc.pattern;
                        cfg.driver = doc.driver;
                        cfg.mode = doc.mode;
                        cfg.server_node_count = servers;
                        cfg.client_node_count = client_nodes;
                        cfg.processes_per_client_node = procs;
                        cfg.ios_per_process = ios;
                        cfg.object_size = object_size;
                        cfg.contention = doc.contention;
                        cfg.kv_object_class = doc.kv_class;
                        cfg.array_object_class = doc.array_class;
                        cfg.repetitions = 1;
                        cfg.start_skew_ns = doc.start_skew_ns;
                        cfg.validate();

                        std::string stem = std::string(to_string(cfg.driver)) + "_" +
                                           to_string(cfg.pattern);
                        if (cfg.driver == Driver::FieldIo)
                            stem += std::string("_") + to_string(cfg.mode);
                        stem += "_s" + std::to_string(servers) + "_c" +
                                std::to_string(client_nodes) + "_p" + std::to_string(procs);

                        for (unsigned rep = 0; rep < doc.repetitions; ++rep) {
                            RunManifest m;
                            m.config = cfg;
                            m.config.seed = doc.seed + rep;
                            m.repetition = rep;
                            m.backend = doc.backend;
                            m.arena = doc.arena;
                            m.topology = doc.topology;
                            m.topology.server_node_count = servers;
                            m.stem = stem;
                            manifests.push_back(std::move(m));
                        }
                    }
    return manifests;
}

/// Runs one manifest on a fresh pool and returns its event log, optionally
/// reporting the post-run object census.
inline EventLog execute_manifest(const RunManifest& manifest,
                                 CensusReport* census_out = nullptr) {
    auto backend = create_pool(manifest.backend, manifest.topology,
                               manifest.config.client_node_count, make_arena(manifest.arena));
    EventLog log = run_benchmark(backend, manifest.config);
    if (census_out) *census_out = take_census(backend->snapshot());
    return log;
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::internal, "cannot open '" + path.string() + "' for writing");
    out << content;
    if (!out) throw Error(Errc::internal, "short write to '" + path.string() + "'");
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("'" + path + "' is not readable");
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
}

inline json census_to_json(const CensusReport& census) {
    return json{{"containers", census.containers},
                {"key_values", census.key_values},
                {"arrays", census.arrays},
                {"unreferenced_arrays", census.unreferenced_arrays}};
}

inline CensusReport census_from_json(const json& doc) {
    CensusReport census;
    census.containers = doc.at("containers").get<std::uint64_t>();
    census.key_values = doc.at("key_values").get<std::uint64_t>();
    census.arrays = doc.at("arrays").get<std::uint64_t>();
    census.unreferenced_arrays = doc.at("unreferenced_arrays").get<std::uint64_t>();
    return census;
}

inline json report_to_json(const MetricsReport& report) {
    json phases = json::object();
    for (const auto& [phase, m] : report.phases) {
        json p{{"io_count", m.io_count},
               {"total_bytes", m.total_bytes},
               {"total_parallel_wallclock_ns", m.total_parallel_wallclock_ns},
               {"global_timing_bandwidth", m.global_timing_bandwidth},
               {"iteration_wallclock_ns", m.iteration_wallclock_ns},
               {"off0_ns", m.off0_ns},
               {"offf_ns", m.offf_ns},
               {"off0_fraction", m.off0_fraction},
               {"offf_fraction", m.offf_fraction}};
        if (m.synchronous_bandwidth) p["synchronous_bandwidth"] = *m.synchronous_bandwidth;
        phases[to_string(phase)] = std::move(p);
    }
    json doc{{"phases", std::move(phases)}};
    if (report.po0_ns) doc["po0_ns"] = *report.po0_ns;
    if (report.pof_ns) doc["pof_ns"] = *report.pof_ns;
    if (report.po0_fraction) doc["po0_fraction"] = *report.po0_fraction;
    if (report.pof_fraction) doc["pof_fraction"] = *report.pof_fraction;
    if (report.aggregated_bandwidth) doc["aggregated_bandwidth"] = *report.aggregated_bandwidth;
    return doc;
}

inline std::string rows_to_csv(const std::vector<MetricRow>& rows) {
    std::ostringstream out;
    out << "metric,phase,value,unit\n";
    out.precision(17);
    for (const auto& r : rows)
        out << r.name << ',' << r.phase << ',' << r.value << ',' << r.unit << '\n';
    return out.str();
}

/// "fieldio_a_full_s2_c4_p6_r3.log" → ("fieldio_a_full_s2_c4_p6", 3).
inline std::pair<std::string, std::optional<unsigned>> split_repetition(
    const std::string& filename) {
    std::string stem = std::filesystem::path(filename).stem().string();
    auto pos = stem.rfind("_r");
    if (pos == std::string::npos || pos + 2 >= stem.size()) return {stem, std::nullopt};
    for (std::size_t i = pos + 2; i < stem.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(stem[i]))) return {stem, std::nullopt};
    return {stem.substr(0, pos),
            static_cast<unsigned>(std::stoul(stem.substr(pos + 2)))};
}

}  // namespace detail

/// Executes every manifest of the config (file plus overrides), writing one
/// event log and one census JSON per run into `out_dir`, with a one-line
/// summary per run to `summary`.
inline std::vector<RunManifest> cmd_run(const std::string& config_path,
                                        const std::map<std::string, std::string>& overrides,
                                        const std::string& out_dir, std::ostream& summary) {
    ConfigDocument doc =
        config_path.empty() ? ConfigDocument{} : load_config_file(config_path);
    apply_overrides(doc, overrides);
    std::vector<RunManifest> manifests = expand_manifests(doc);

    std::filesystem::path dir(out_dir.empty() ? "." : out_dir);
    std::filesystem::create_directories(dir);
    for (const RunManifest& manifest : manifests) {
        CensusReport census;
        EventLog log = execute_manifest(manifest, &census);
        detail::write_text_file(dir / manifest.log_filename(), serialize_log(log));
        detail::write_text_file(dir / manifest.census_filename(),
                                detail::census_to_json(census).dump(2) + "\n");
        std::uint64_t bytes = 0;
        for (const auto& r : log.records)
            if (r.event == EventType::TransferEnd) bytes += r.size_bytes;
        summary << (dir / manifest.log_filename()).string() << ": " << log.records.size()
                << " records, " << bytes << " bytes transferred\n";
    }
    return manifests;
}

/// Analyzes event logs: one metrics JSON + CSV per log, plus one aggregate
/// CSV with the mean and max of every metric across repetitions, grouped by
/// the configuration part of the file name.
inline void cmd_analyze(const std::vector<std::string>& log_paths, const std::string& out_dir,
                        std::ostream& summary) {
    if (log_paths.empty()) throw ConfigError("analyze: no log files given");
    std::filesystem::path dir(out_dir.empty() ? "." : out_dir);
    std::filesystem::create_directories(dir);

    // group → metric key (name, phase, unit) → values across repetitions
    std::map<std::string, std::map<std::tuple<std::string, std::string, std::string>,
                                   std::vector<double>>>
        groups;
    for (const std::string& path : log_paths) {
        EventLog log;
        try {
            log = parse_log(detail::read_text_file(path));
        } catch (const ParseError& e) {
            throw ParseError(path + ": " + e.what());
        }
        MetricsReport report = build_report(log);
        std::vector<MetricRow> rows = report_rows(report);

        auto [stem, repetition] = detail::split_repetition(path);
        detail::write_text_file(
            dir / (stem + (repetition ? "_r" + std::to_string(*repetition) : "") +
                   ".metrics.json"),
            detail::report_to_json(report).dump(2) + "\n");
        detail::write_text_file(
            dir / (stem + (repetition ? "_r" + std::to_string(*repetition) : "") +
                   ".metrics.csv"),
            detail::rows_to_csv(rows));
        for (const MetricRow& r : rows)
            groups[stem][{r.name, r.phase, r.unit}].push_back(r.value);
    }

    std::ostringstream agg;
    agg.precision(17);
    agg << "group,metric,phase,unit,repetitions,mean,max\n";
    for (const auto& [group, metrics] : groups)
        for (const auto& [key, values] : metrics) {
            const auto& [name, phase, unit] = key;
            double sum = 0.0, top = values.front();
            for (double v : values) {
                sum += v;
                top = std::max(top, v);
            }
            agg << group << ',' << name << ',' << phase << ',' << unit << ','
                << values.size() << ',' << sum / static_cast<double>(values.size()) << ','
                << top << '\n';
        }
    detail::write_text_file(dir / "aggregate.csv", agg.str());
    summary << (dir / "aggregate.csv").string() << ": " << groups.size() << " config group"
            << (groups.size() == 1 ? "" : "s") << " aggregated from " << log_paths.size()
            << " log" << (log_paths.size() == 1 ? "" : "s") << "\n";
}

/// Prints an object census. Either reads a census JSON written by cmd_run,
/// or — given a config — runs the benchmark and censuses the resulting pool.
inline CensusReport cmd_census(const std::string& census_json_path,
                               const std::string& config_path,
                               const std::map<std::string, std::string>& overrides,
                               std::ostream& out) {
    CensusReport census;
    if (!census_json_path.empty()) {
        try {
            census = detail::census_from_json(
                detail::json::parse(detail::read_text_file(census_json_path)));
        } catch (const detail::json::exception& e) {
            throw ParseError(census_json_path + ": not a census document: " + e.what());
        }
    } else {
        ConfigDocument doc =
            config_path.empty() ? ConfigDocument{} : load_config_file(config_path);
        apply_overrides(doc, overrides);
        std::vector<RunManifest> manifests = expand_manifests(doc);
        if (manifests.size() != 1)
            throw ConfigError(
                "census: the config expands to " + std::to_string(manifests.size()) +
                " runs; census needs exactly one (no sweeps, repetitions = 1)");
        execute_manifest(manifests.front(), &census);
    }
    out << "containers            " << census.containers << "\n"
        << "key_values            " << census.key_values << "\n"
        << "arrays                " << census.arrays << "\n"
        << "unreferenced_arrays   " << census.unreferenced_arrays << "\n";
    return census;
}

}  // namespace fieldbench
