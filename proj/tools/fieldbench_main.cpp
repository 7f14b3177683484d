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

#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "fieldbench/runner.hpp"

namespace {

/// Flags shared by `run` and `census`: every config-file setting can be
/// overridden by the flag of the same name. Values are passed through as
/// text; list-valued sweeps use JSON syntax, e.g. --servers "[1,2,4,8]".
struct OverrideFlags {
    std::vector<std::pair<std::string, std::string>> values;

    void attach(CLI::App* cmd) {
        add(cmd, "--pattern", "pattern", "access pattern {a,b}");
        add(cmd, "--driver", "driver", "workload driver {fieldio,ior}");
        add(cmd, "--mode", "mode", "store layout {full,nocontainers,noindex}");
        add(cmd, "--servers", "servers", "server node count (number or JSON list)");
        add(cmd, "--clients", "clients",
            "client node count (number or JSON list; default 2x servers)");
        add(cmd, "--procs-per-client", "procs_per_client",
            "processes per client node (number or JSON list)");
        add(cmd, "--ios", "ios", "I/Os per process (number or JSON list)");
        add(cmd, "--object-size", "object_size", "bytes per object (number or JSON list)");
        add(cmd, "--contention", "contention", "forecast index sharing {shared,perproc}");
        add(cmd, "--backend", "backend", "pool backend {memory,sim}");
        add(cmd, "--seed", "seed", "base random seed (repetition k adds k)");
        add(cmd, "--repetitions", "repetitions", "repetitions per configuration");
        add(cmd, "--start-skew-ns", "start_skew_ns", "max seeded worker start jitter, ns");
        add(cmd, "--kv-class", "kv_class", "object class for key-values {S1,S2,SX}");
        add(cmd, "--array-class", "array_class", "object class for arrays {S1,S2,SX}");
    }

    std::map<std::string, std::string> as_map() const {
        return {values.begin(), values.end()};
    }

  private:
    void add(CLI::App* cmd, const char* flag, std::string key, const char* help) {
        cmd->add_option_function<std::string>(
            flag,
            [this, key = std::move(key)](const std::string& v) {
                values.emplace_back(key, v);
            },
            help);
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weather-field object store benchmark"};
    app.require_subcommand(1);

    std::string run_config, run_out = ".";
    OverrideFlags run_overrides;
    CLI::App* run = app.add_subcommand("run", "execute benchmark runs and write event logs");
    run->add_option("--config", run_config, "JSON config file");
    run->add_option("--out", run_out, "output directory")->capture_default_str();
    run_overrides.attach(run);

    std::vector<std::string> analyze_logs;
    std::string analyze_out = ".";
    CLI::App* analyze =
        app.add_subcommand("analyze", "compute metrics reports and the aggregate table");
    analyze->add_option("logs", analyze_logs, "event log files")->required();
    analyze->add_option("--out", analyze_out, "output directory")->capture_default_str();

    std::string census_input, census_config;
    OverrideFlags census_overrides;
    CLI::App* census =
        app.add_subcommand("census", "count containers, key-values, and arrays");
    census->add_option("census_json", census_input, "census JSON written by run");
    census->add_option("--config", census_config, "JSON config: run it, then census the pool");
    census_overrides.attach(census);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(fieldbench::Errc::config_invalid);
    }

    try {
        if (run->parsed())
            fieldbench::cmd_run(run_config, run_overrides.as_map(), run_out, std::cout);
        else if (analyze->parsed())
            fieldbench::cmd_analyze(analyze_logs, analyze_out, std::cout);
        else if (census->parsed())
            fieldbench::cmd_census(census_input, census_config, census_overrides.as_map(),
                                   std::cout);
    } catch (const fieldbench::Error& e) {
        std::cerr << fieldbench::to_string(e.code()) << ": " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "internal: " << e.what() << "\n";
        return static_cast<int>(fieldbench::Errc::internal);
    }
    return 0;
}
