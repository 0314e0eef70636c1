// Builds a bank from clean synthetic frames and detects the pipe in a
// frame prompted with two clicks.

#include <iostream>

#include "ressam/ressam.hpp"

int main() {
  using namespace ressam;
  SceneSpec scene = parse_scene(R"(
    width=96
    height=96
    frame=clean_0
    frame=clean_1
    frame=clean_2
    frame=target
    anomaly=pipe,30,70,40,80
  )");
  const SynthResult data = synth_generate(scene, 3);

  std::vector<BScanFrame> frames;
  for (const auto& f : data.frames) frames.push_back(preprocess(f, PreprocessConfig{}));
  const std::vector<BScanFrame> clean(frames.begin(), frames.begin() + 3);

  ReservoirConfig rc;
  rc.n = 12;
  rc.lambda = 1.0;
  const ReservoirWeights w = build_reservoir(rc);
  const FeatureBank bank = build_bank(clean, w, {16, 16, 8}, rc.lambda);

  DetectConfig dc;
  dc.score_stride = 2;
  const DetectionResult r = detect(frames[3], parse_prompts("pos:50,52;48,60"), bank, w, dc);

  std::cout << "truth " << data.truths[0].rect.x1 << ".." << data.truths[0].rect.x2 << " x " << data.truths[0].rect.y1
            << ".." << data.truths[0].rect.y2 << "\n";
  for (const auto& f : r.finals) {
    std::cout << (f.primary ? "primary " : "region  ") << f.rect.x1 << ".." << f.rect.x2 << " x " << f.rect.y1
              << ".." << f.rect.y2 << "  iou " << iou(f.rect, data.truths[0].rect) << "\n";
  }
  if (r.finals.empty()) std::cout << "no anomaly confirmed\n";
}
