#ifndef RESSAM_DATASET_HPP
#define RESSAM_DATASET_HPP

#include <sstream>
#include <string>
#include <vector>

#include "ressam/eval.hpp"
#include "ressam/frame.hpp"
#include "ressam/io.hpp"

// On-disk dataset: DIR/frames/<id>.{f32,csv,pgm,png} plus an optional
// DIR/truth.csv with header frame_id,x1,x2,y1,y2,category.

namespace ressam {

inline std::string encode_truth_csv(const std::vector<GroundTruthRegion>& truths) {
  std::string out = "frame_id,x1,x2,y1,y2,category\n";
  for (const auto& t : truths) {
    out += t.frame_id + "," + std::to_string(t.rect.x1) + "," + std::to_string(t.rect.x2) + "," +
           std::to_string(t.rect.y1) + "," + std::to_string(t.rect.y2) + "," + std::string(to_string(t.category)) +
           "\n";
  }
  return out;
}

inline std::vector<GroundTruthRegion> decode_truth_csv(const std::string& text) {
  std::vector<GroundTruthRegion> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line.starts_with("frame_id"))) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() != 6) throw Error("truth line " + std::to_string(lineno) + ": expected 6 fields");
    try {
      out.push_back({cells[0],
                     {std::stoi(cells[1]), std::stoi(cells[2]), std::stoi(cells[3]), std::stoi(cells[4])},
                     parse_category(cells[5])});
    } catch (const std::logic_error&) {
      throw Error("truth line " + std::to_string(lineno) + ": bad coordinate");
    }
    if (!out.back().rect.valid()) throw Error("truth line " + std::to_string(lineno) + ": empty rectangle");
  }
  return out;
}

/// Frames in file-name order; truths checked against frame bounds.
inline Dataset load_dataset(const fs::path& dir) {
  Dataset data;
  for (const auto& path : list_frame_files(dir / "frames")) data.frames.push_back(load_frame(path));
  if (data.frames.empty()) throw Error("no frames under '" + (dir / "frames").string() + "'");
  const fs::path truth = dir / "truth.csv";
  if (fs::exists(truth)) data.truths = decode_truth_csv(read_file_bytes(truth));
  for (const auto& t : data.truths) {
    auto it = std::find_if(data.frames.begin(), data.frames.end(), [&](const BScanFrame& f) { return f.id == t.frame_id; });
    if (it == data.frames.end()) throw Error("truth refers to unknown frame '" + t.frame_id + "'");
    if (!t.rect.inside(it->width(), it->height())) {
      throw Error("truth rectangle for '" + t.frame_id + "' lies outside the frame");
    }
  }
  return data;
}

inline void save_dataset(const fs::path& dir, const Dataset& data) {
  fs::create_directories(dir / "frames");
  for (const auto& f : data.frames) write_file_bytes(dir / "frames" / (f.id + ".f32"), encode_f32(f));
  write_file_bytes(dir / "truth.csv", encode_truth_csv(data.truths));
}

}  // namespace ressam

#endif
