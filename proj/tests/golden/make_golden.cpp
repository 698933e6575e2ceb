// Regenerates the golden checkpoint and metrics report from golden.cfg.
// Usage: shiftdet_make_golden <golden dir> <scratch dir>

#include <filesystem>
#include <iostream>

#include "shiftdet/config.hpp"
#include "shiftdet/formats.hpp"
#include "shiftdet/synth.hpp"
#include "shiftdet/trainer.hpp"

namespace fs = std::filesystem;
using namespace shiftdet;

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: shiftdet_make_golden <golden dir> <scratch dir>\n";
    return 1;
  }
  const fs::path golden = argv[1], scratch = argv[2];
  try {
    const auto kv = KeyValueConfig::load(golden / "golden.cfg");
    fs::remove_all(scratch);
    generate_dataset(synth_spec_from(kv), scratch, 1);
    const auto ds = Dataset::load(scratch);
    const auto model = model_config_from(kv);
    const auto result = train(ds, model, train_config_from(kv));
    save_checkpoint(golden / "golden.srck", model, result.best);
    const auto report = evaluate(ds, "test", model, result.best);
    write_text_atomic(golden / "golden_report.jsonl", report.to_records());
    write_text_atomic(golden / "golden_report.txt", report.to_text());
    std::cout << report.to_text();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
