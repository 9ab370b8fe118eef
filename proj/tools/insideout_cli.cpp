// Command-line front end over the C API.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "insideout/insideout.h"

namespace {

int report(io_status status) {
  if (status != IO_OK) {
    std::fprintf(stderr, "error[%s]: %s\n", io_status_name(status), io_last_error());
    return static_cast<int>(status);
  }
  std::fputs(io_last_output(), stdout);
  return 0;
}

const char* c_or_null(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

// "name=kind:path", "kind:path" or "path" (slam).
io_eval_source split_source(const std::string& spec, std::vector<std::string>& storage) {
  std::string name, kind = "slam", path = spec;
  auto eq = path.find('=');
  if (eq != std::string::npos) {
    name = path.substr(0, eq);
    path = path.substr(eq + 1);
  }
  auto colon = path.find(':');
  if (colon != std::string::npos) {
    kind = path.substr(0, colon);
    path = path.substr(colon + 1);
  }
  if (name.empty()) name = kind;
  storage.push_back(name);
  storage.push_back(kind);
  storage.push_back(path);
  const auto n = storage.size();
  return {storage[n - 3].c_str(), storage[n - 2].c_str(), storage[n - 1].c_str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inside-out tracking toolkit: simulation, visual odometry, calibration, "
               "synchronization, ultrasound compounding and evaluation."};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(io_version()));

  std::optional<std::uint64_t> seed;
  std::string config, output = ".", format = "text";
  app.add_option("--seed", seed, "Master seed (overrides the config)");
  app.add_option("--config", config, "Experiment configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--output", output, "Output directory");
  app.add_option("--format", format, "Summary format")->check(CLI::IsMember({"text", "csv"}));

  auto* simulate = app.add_subcommand("simulate", "Simulate scene, ground truth, sensor streams and US frames");

  std::string observations, rig;
  auto* track = app.add_subcommand("track", "Stereo visual odometry over an observation stream");
  track->add_option("--observations", observations, "Observation CSV")->required()->check(CLI::ExistingFile);
  track->add_option("--rig", rig, "Stereo rig JSON (defaults to the config rig)")->check(CLI::ExistingFile);

  auto* calibrate = app.add_subcommand("calibrate", "Offline calibration");
  calibrate->require_subcommand(1);
  std::string pairs, views, points;
  bool eye_on_base = false;
  std::vector<double> spacing{0.5, 0.5};
  auto* handeye = calibrate->add_subcommand("handeye", "AX = XB from motion pairs");
  handeye->add_option("--pairs", pairs, "Motion pair CSV")->required()->check(CLI::ExistingFile);
  handeye->add_flag("--eye-on-base", eye_on_base, "Pairs come from an external tracker");
  auto* camera = calibrate->add_subcommand("camera", "Intrinsics from planar target views");
  camera->add_option("--views", views, "Planar view CSV")->required()->check(CLI::ExistingFile);
  auto* us = calibrate->add_subcommand("us", "US image plane from stylus points");
  us->add_option("--points", points, "Stylus point CSV")->required()->check(CLI::ExistingFile);
  us->add_option("--spacing", spacing, "Pixel spacing sx sy (mm)")->expected(2);

  std::string ref, target;
  auto* sync = app.add_subcommand("sync", "Time offset between two pose streams");
  sync->add_option("--ref", ref, "Reference pose stream")->required()->check(CLI::ExistingFile);
  sync->add_option("--target", target, "Lagging pose stream")->required()->check(CLI::ExistingFile);

  std::string frames, tracking, calibration, volume;
  std::optional<double> iso;
  auto* comp = app.add_subcommand("compound", "Compound tracked US frames into a volume");
  comp->add_option("--frames", frames, "US frame index CSV")->required()->check(CLI::ExistingFile);
  comp->add_option("--tracking", tracking, "Probe pose stream")->required()->check(CLI::ExistingFile);
  comp->add_option("--calibration", calibration, "US calibration or rig JSON")->check(CLI::ExistingFile);
  comp->add_option("--volume", volume, "Volume spec JSON")->required()->check(CLI::ExistingFile);
  bool fit = false;
  comp->add_flag("--fit-sphere", fit, "Fit a sphere to the compounded volume");
  comp->add_option("--iso", iso, "Iso level for the sphere fit (default: phantom intensity midpoint)");

  std::string gt, chain, sequence;
  std::vector<std::string> sources;
  auto* evaluate = app.add_subcommand("evaluate", "Tracking error against robot ground truth");
  evaluate->add_option("--gt", gt, "Robot flange pose stream")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--source", sources, "[name=]kind:path, kind in slam|aruco|ots")->required();
  evaluate->add_option("--chain", chain, "Frame chain JSON")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--sequence", sequence, "Sequence name");

  for (auto* sub : {simulate, track, calibrate, sync, comp, evaluate}) sub->fallthrough();
  for (auto* sub : {handeye, camera, us}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error[invalid_argument]: %s\n", e.what());
    return IO_INVALID_ARGUMENT;
  }

  io_run_options run{};
  run.config_path = c_or_null(config);
  run.output_dir = output.c_str();
  run.format_csv = format == "csv" ? 1 : 0;
  run.has_seed = seed ? 1 : 0;
  run.seed = seed.value_or(0);

  if (simulate->parsed()) return report(io_cmd_simulate(&run));
  if (track->parsed()) return report(io_cmd_track(&run, observations.c_str(), c_or_null(rig)));
  if (handeye->parsed()) return report(io_cmd_calibrate_handeye(&run, pairs.c_str(), eye_on_base ? 1 : 0));
  if (camera->parsed()) return report(io_cmd_calibrate_camera(&run, views.c_str()));
  if (us->parsed()) return report(io_cmd_calibrate_us(&run, points.c_str(), spacing[0], spacing[1]));
  if (sync->parsed()) return report(io_cmd_sync(&run, ref.c_str(), target.c_str()));
  if (comp->parsed()) {
    return report(io_cmd_compound(&run, frames.c_str(), tracking.c_str(), c_or_null(calibration), volume.c_str(),
                                  fit || iso ? 1 : 0, iso ? 1 : 0, iso.value_or(0.0)));
  }
  if (evaluate->parsed()) {
    std::vector<std::string> storage;
    storage.reserve(3 * sources.size());
    std::vector<io_eval_source> srcs;
    for (const auto& s : sources) srcs.push_back(split_source(s, storage));
    return report(io_cmd_evaluate(&run, gt.c_str(), srcs.data(), srcs.size(), chain.c_str(), c_or_null(sequence)));
  }
  return 0;
}
