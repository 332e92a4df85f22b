#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "sbc/cli.hpp"

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw sbc::ValidationError("cannot write " + path.string());
    out << content;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Verify safety and reach-avoid properties of stochastic discrete-time systems"};
    std::string scenario_path, command, certificate, condition, out_dir;
    unsigned threads = 1;
    bool quiet = false, json = false;
    app.add_option("--scenario", scenario_path, "Scenario file (YAML)")->required();
    app.add_option("--command", command, "Command to run")
        ->required()
        ->check(CLI::IsMember(sbc::command_names()));
    app.add_option("--certificate", certificate, "Certificate file for verify");
    app.add_option("--condition", condition, "Condition kind (safety-lower, unsafe-reach-upper, ra-lower-a1, "
                                              "ra-lower-discounted, liveness-upper-discounted, ra-lower-pair)");
    app.add_option("--out", out_dir, "Directory for report.txt, report.json, CSV fields and certificates");
    app.add_option("--threads", threads, "Worker threads")->check(CLI::Range(1U, 256U));
    app.add_flag("--quiet", quiet, "Print nothing on success");
    app.add_flag("--json", json, "Print the machine-readable report instead of text");
    CLI11_PARSE(app, argc, argv);

    try {
        sbc::Scenario sc = sbc::load_scenario(scenario_path);
        sbc::RunOptions opt;
        opt.threads = threads;
        if (!certificate.empty()) opt.certificate = certificate;
        if (!condition.empty()) opt.condition = sbc::parse_condition_kind(condition);
        sbc::Report rep = sbc::run(command, sc, opt);

        if (!out_dir.empty()) {
            fs::create_directories(out_dir);
            for (const auto& f : rep.files) write_file(fs::path(out_dir) / f.name, f.content);
            write_file(fs::path(out_dir) / "report.txt", rep.text());
            write_file(fs::path(out_dir) / "report.json", rep.json().dump(2) + "\n");
        }
        if (!quiet || rep.exit_code != sbc::ExitOk) {
            if (json) std::cout << rep.json().dump(2) << '\n';
            else std::cout << rep.text();
        }
        return rep.exit_code;
    } catch (const sbc::ScenarioError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return sbc::ExitValidation;
    } catch (const sbc::ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return sbc::ExitValidation;
    } catch (const sbc::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return sbc::ExitValidation;
    } catch (const sbc::VerificationError& e) {
        std::cerr << "verification failed: " << e.what() << '\n';
        return sbc::ExitVerification;
    } catch (const sbc::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return sbc::ExitNumeric;
    } catch (const sbc::EvalError& e) {
        std::cerr << "evaluation failure: " << e.what() << '\n';
        return sbc::ExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
