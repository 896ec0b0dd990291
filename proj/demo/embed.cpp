// Minimal embedding of the library: feed samples from stdin into a
// StreamProcessor and print anomaly events as they are produced.
//
//   odm synth --hours 8 --retrain-buckets 360 | odm_embed

#include <iostream>

#include "odm/detect.hpp"
#include "odm/orchestrate.hpp"
#include "odm/telemetry.hpp"

int main() {
  odm::EngineConfig cfg;
  cfg.retrain_interval_buckets = 360;  // one hour of 10 s buckets
  cfg.train.epochs = 20;

  odm::StreamProcessor proc(cfg);
  proc.on_swap = [](odm::NodeEngine& e) {
    std::cerr << e.node_id() << ": new model for interval " << e.interval_id() << '\n';
  };

  odm::SampleReader reader(std::cin);
  try {
    while (auto s = reader.next()) {
      for (const auto& ev : proc.push(*s).events) std::cout << odm::to_json_line(ev) << '\n';
    }
    for (const auto& ev : proc.finish().events) std::cout << odm::to_json_line(ev) << '\n';
  } catch (const odm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
