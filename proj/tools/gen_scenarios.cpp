// Regenerates the bundled synthetic scenario corpus (scenarios/) and the
// matching experiment configs (configs/). Everything is deterministic, so
// rerunning after generator changes keeps the corpus reviewable in git.
#include <filesystem>
#include <iostream>
#include <string>

#include <json.hpp>

#include "unicorn/cli.hpp"
#include "unicorn/scenariogen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace unicorn;

namespace {

void emit(const fs::path& path, const std::string& text) {
  write_text_file(path.string(), text);
  std::cout << "wrote " << path.string() << "\n";
}

json config_skeleton(const std::string& preset, double horizon_s, int iterations,
                     const std::string& out_dir) {
  json cfg;
  cfg["preset"] = preset;
  cfg["horizon_s"] = horizon_s;
  cfg["seed"] = 1;
  cfg["eval_episodes"] = 10;
  cfg["out_dir"] = out_dir;
  cfg["train"] = {{"iterations", iterations}};
  cfg["scenarios"] = json::array();
  return cfg;
}

json scenario_ref(const std::string& name, const std::string& difficulty) {
  return {{"name", name},
          {"network", "../scenarios/" + name + ".net.json"},
          {"flows", "../scenarios/" + name + ".flows.json"},
          {"difficulty", difficulty}};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path root = ".";
  for (int k = 1; k < argc; ++k) {
    const std::string arg = argv[k];
    if (arg == "--out" && k + 1 < argc) {
      root = argv[++k];
    } else {
      std::cerr << "usage: gen_scenarios [--out DIR]\n";
      return 2;
    }
  }

  try {
    fs::create_directories(root / "scenarios");
    fs::create_directories(root / "configs");

    const double kFlowEnd = 3600.0;

    emit(root / "scenarios/single_four_arm.net.json", serialize_network(make_grid_network(1, 1)));
    emit(root / "scenarios/single_four_arm.flows.json",
         serialize_flows(make_single_deterministic_flows(kFlowEnd)));

    emit(root / "scenarios/grid_2x2.net.json", serialize_network(make_grid_network(2, 2)));
    emit(root / "scenarios/grid_2x2.flows.json",
         serialize_flows(make_grid_through_flows(2, 2, 20.0, 0.0, kFlowEnd)));

    emit(root / "scenarios/grid_4x4.net.json", serialize_network(make_grid_network(4, 4)));
    emit(root / "scenarios/grid_4x4.flows.json",
         serialize_flows(make_grid_through_flows(4, 4, 48.0, 0.0, kFlowEnd)));

    emit(root / "scenarios/mixed_pair.net.json", serialize_network(make_mixed_pair_network()));
    emit(root / "scenarios/mixed_pair.flows.json",
         serialize_flows(make_mixed_pair_flows(16.0, 0.0, kFlowEnd)));

    json single = config_skeleton("resco", 900.0, 30, "out/single_four_arm");
    single["scenarios"].push_back(scenario_ref("single_four_arm", "easy"));
    emit(root / "configs/single_four_arm.json", single.dump(2) + "\n");

    json grid2 = config_skeleton("resco", 900.0, 60, "out/grid_2x2");
    grid2["scenarios"].push_back(scenario_ref("grid_2x2", "easy"));
    emit(root / "configs/grid_2x2.json", grid2.dump(2) + "\n");

    json grid4 = config_skeleton("resco", 900.0, 20, "out/grid_4x4");
    grid4["scenarios"].push_back(scenario_ref("grid_4x4", "medium"));
    emit(root / "configs/grid_4x4.json", grid4.dump(2) + "\n");

    json mixed = config_skeleton("ma2c", 900.0, 60, "out/mixed_pair");
    mixed["scenarios"].push_back(scenario_ref("mixed_pair", "medium"));
    emit(root / "configs/mixed_pair.json", mixed.dump(2) + "\n");

    json joint = config_skeleton("resco", 900.0, 40, "out/joint");
    joint["scenarios"].push_back(scenario_ref("grid_2x2", "easy"));
    joint["scenarios"].push_back(scenario_ref("mixed_pair", "medium"));
    emit(root / "configs/joint_grid_mixed.json", joint.dump(2) + "\n");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
