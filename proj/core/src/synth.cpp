#include "shiftdet/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "shiftdet/config.hpp"
#include "shiftdet/parallel.hpp"

namespace shiftdet {

namespace {

constexpr std::array<std::pair<MotionClass, std::string_view>, 6> kMotionNames{{
    {MotionClass::move_right, "move-right"},
    {MotionClass::move_left, "move-left"},
    {MotionClass::grow, "grow"},
    {MotionClass::shrink, "shrink"},
    {MotionClass::fall, "fall"},
    {MotionClass::still, "still"},
}};

struct Actor {
  int label = 0;  // 1..C
  std::vector<Box> track;
  std::array<double, 3> color_a{};
  std::array<double, 3> color_b{};
  int cell = 2;
  double phase_x = 0;
  double phase_y = 0;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool inside(const Box& b, double w, double h) { return b.x1 >= 0 && b.y1 >= 0 && b.x2 <= w && b.y2 <= h; }

bool overlaps(const Box& a, const Box& b) {
  return std::min(a.x2, b.x2) > std::max(a.x1, b.x1) && std::min(a.y2, b.y2) > std::max(a.y1, b.y1);
}

std::vector<Box> make_track(MotionClass motion, const SynthSpec& spec, std::mt19937_64& rng) {
  const int T = spec.frames_per_clip;
  const double W = spec.width, H = spec.height;
  const double span = T - 1;
  std::vector<Box> track(static_cast<std::size_t>(T));
  switch (motion) {
    case MotionClass::move_right:
    case MotionClass::move_left: {
      const double w = uniform(rng, spec.min_side, spec.max_side);
      const double h = uniform(rng, spec.min_side, spec.max_side);
      const double travel = spec.speed * span;
      const double y = uniform(rng, 0, H - h);
      const bool right = motion == MotionClass::move_right;
      const double x0 = right ? uniform(rng, 0, W - w - travel) : uniform(rng, travel, W - w);
      const double v = right ? spec.speed : -spec.speed;
      for (int t = 0; t < T; ++t) {
        const double x = x0 + v * t;
        track[static_cast<std::size_t>(t)] = {x, y, x + w, y + h};
      }
      break;
    }
    case MotionClass::grow:
    case MotionClass::shrink: {
      // Grow and shrink are time mirrors of each other.
      const double w0 = uniform(rng, 8.5, 12.5);
      const double h0 = uniform(rng, 8.5, 12.5);
      const double grown = spec.growth * span;
      const double cx = uniform(rng, (w0 + grown) / 2, W - (w0 + grown) / 2);
      const double cy = uniform(rng, (h0 + grown) / 2, H - (h0 + grown) / 2);
      for (int t = 0; t < T; ++t) {
        const double g = spec.growth * (motion == MotionClass::grow ? t : span - t);
        const double w = w0 + g, h = h0 + g;
        track[static_cast<std::size_t>(t)] = {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
      }
      break;
    }
    case MotionClass::fall: {
      // Starts upright, accelerates downward and ends lying flat.
      const double w0 = uniform(rng, 8.5, 12.0);
      const double h0 = uniform(rng, 16.0, spec.max_side);
      const double drop = 0.5 * spec.fall_accel * span * span;
      const double cx = uniform(rng, h0 / 2, W - h0 / 2);
      const double y0 = uniform(rng, 0, H - drop - w0);
      for (int t = 0; t < T; ++t) {
        const double p = t / span;
        const double w = w0 + (h0 - w0) * p;
        const double h = h0 + (w0 - h0) * p;
        const double y = y0 + 0.5 * spec.fall_accel * t * t;
        track[static_cast<std::size_t>(t)] = {cx - w / 2, y, cx + w / 2, y + h};
      }
      break;
    }
    case MotionClass::still: {
      const double w = uniform(rng, spec.min_side, spec.max_side);
      const double h = uniform(rng, spec.min_side, spec.max_side);
      const double x = uniform(rng, 0, W - w);
      const double y = uniform(rng, 0, H - h);
      std::fill(track.begin(), track.end(), Box{x, y, x + w, y + h});
      break;
    }
  }
  return track;
}

std::string clip_name(int index) {
  std::ostringstream os;
  os << "clip_";
  os.width(4);
  os.fill('0');
  os << index;
  return os.str();
}

double parse_finite(const nlohmann::json& j) {
  if (!j.is_number()) throw DataError("manifest: expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw DataError("manifest: non-finite number");
  return v;
}

}  // namespace

std::string_view motion_name(MotionClass c) {
  for (const auto& [m, name] : kMotionNames) {
    if (m == c) return name;
  }
  return "unknown";
}

MotionClass parse_motion(std::string_view name) {
  for (const auto& [m, n] : kMotionNames) {
    if (n == name) return m;
  }
  throw ConfigError("synth.classes: unknown class '" + std::string(name) +
                    "' (expected move-right, move-left, grow, shrink, fall or still)");
}

std::vector<std::string> SynthSpec::class_names() const {
  std::vector<std::string> out;
  for (auto c : classes) out.emplace_back(motion_name(c));
  return out;
}

void SynthSpec::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("synth." + field + ": " + why);
  };
  if (classes.empty()) fail("classes", "at least one class required");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (classes[i] == classes[j]) fail("classes", "duplicate class '" + std::string(motion_name(classes[i])) + "'");
    }
  }
  if (clips <= 0) fail("clips", "must be positive");
  if (actors_per_clip < 1 || actors_per_clip > 4) fail("actors_per_clip", "must be in 1..4");
  if (frames_per_clip < 8) fail("frames_per_clip", "must be at least 8");
  if (height < 32 || width < 32) fail("height", "image must be at least 32x32");
  if (!(noise_std >= 0)) fail("noise_std", "must be non-negative");
  if (!(train_fraction > 0 && train_fraction < 1)) fail("train_fraction", "must be in (0, 1)");
  if (!(min_side >= 8 && max_side >= min_side)) fail("min_side", "need 8 <= min_side <= max_side");
  if (!(speed > 0)) fail("speed", "must be positive");
  if (!(growth > 0)) fail("growth", "must be positive");
  if (!(fall_accel > 0)) fail("fall_accel", "must be positive");
  if (max_retries < 1) fail("max_retries", "must be positive");
  const double span = frames_per_clip - 1;
  if (max_side + speed * span > width) fail("speed", "moving actors leave the image");
  if (12.5 + growth * span > std::min(width, height)) fail("growth", "growing actors leave the image");
  if (0.5 * fall_accel * span * span + 12.0 > height || max_side > width) {
    fail("fall_accel", "falling actors leave the image");
  }
}

SynthSpec synth_spec_from(const KeyValueConfig& kv) {
  kv.require_known("synth", {"classes", "clips", "actors_per_clip", "frames_per_clip", "height", "width", "noise_std",
                             "seed", "train_fraction", "min_side", "max_side", "speed", "growth", "fall_accel",
                             "max_retries"});
  SynthSpec s;
  if (kv.has("synth.classes")) {
    s.classes.clear();
    for (const auto& name : kv.get_string_list("synth.classes", {})) s.classes.push_back(parse_motion(name));
  }
  s.clips = kv.get_int("synth.clips", s.clips);
  s.actors_per_clip = kv.get_int("synth.actors_per_clip", s.actors_per_clip);
  s.frames_per_clip = kv.get_int("synth.frames_per_clip", s.frames_per_clip);
  s.height = kv.get_int("synth.height", s.height);
  s.width = kv.get_int("synth.width", s.width);
  s.noise_std = kv.get_double("synth.noise_std", s.noise_std);
  s.seed = kv.get_u64("synth.seed", s.seed);
  s.train_fraction = kv.get_double("synth.train_fraction", s.train_fraction);
  s.min_side = kv.get_double("synth.min_side", s.min_side);
  s.max_side = kv.get_double("synth.max_side", s.max_side);
  s.speed = kv.get_double("synth.speed", s.speed);
  s.growth = kv.get_double("synth.growth", s.growth);
  s.fall_accel = kv.get_double("synth.fall_accel", s.fall_accel);
  s.max_retries = kv.get_int("synth.max_retries", s.max_retries);
  s.validate();
  return s;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

GeneratedClip generate_clip(const SynthSpec& spec, int index) {
  std::mt19937_64 rng(splitmix64(spec.seed ^ splitmix64(static_cast<std::uint64_t>(index))));
  const int T = spec.frames_per_clip, H = spec.height, W = spec.width;
  const int num_classes = static_cast<int>(spec.classes.size());

  std::vector<Actor> actors;
  for (int attempt = 0;; ++attempt) {
    if (attempt == spec.max_retries) {
      throw DataError("synth: could not place actors in " + clip_name(index) + " after " +
                      std::to_string(spec.max_retries) + " attempts");
    }
    actors.clear();
    bool ok = true;
    for (int a = 0; a < spec.actors_per_clip && ok; ++a) {
      Actor actor;
      const int c = std::uniform_int_distribution<int>(0, num_classes - 1)(rng);
      actor.label = c + 1;
      actor.track = make_track(spec.classes[static_cast<std::size_t>(c)], spec, rng);
      for (std::size_t t = 0; t < actor.track.size() && ok; ++t) {
        ok = inside(actor.track[t], W, H) && actor.track[t].width() >= 8 && actor.track[t].height() >= 8;
        for (const auto& other : actors) ok = ok && !overlaps(actor.track[t], other.track[t]);
      }
      actors.push_back(std::move(actor));
    }
    if (ok) break;
  }
  for (auto& actor : actors) {
    for (auto& ch : actor.color_a) ch = uniform(rng, 0.55, 1.0);
    for (auto& ch : actor.color_b) ch = uniform(rng, 0.55, 1.0);
    actor.cell = std::uniform_int_distribution<int>(2, 4)(rng);
    actor.phase_x = uniform(rng, 0, 2.0 * actor.cell);
    actor.phase_y = uniform(rng, 0, 2.0 * actor.cell);
  }

  // Static background of 8x8 gray-ish blocks.
  constexpr int kBlock = 8;
  const int bw = (W + kBlock - 1) / kBlock, bh = (H + kBlock - 1) / kBlock;
  std::vector<double> blocks(static_cast<std::size_t>(bw * bh * 3));
  for (auto& v : blocks) v = uniform(rng, 0.1, 0.45);

  GeneratedClip clip;
  auto& video = clip.video;
  video.frames = static_cast<std::uint32_t>(T);
  video.height = static_cast<std::uint32_t>(H);
  video.width = static_cast<std::uint32_t>(W);
  video.channels = 3;
  video.samples.resize(static_cast<std::size_t>(T) * 3 * H * W);
  std::normal_distribution<double> noise(0.0, spec.noise_std > 0 ? spec.noise_std : 1.0);
  std::vector<double> canvas(static_cast<std::size_t>(3 * H * W));
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          canvas[static_cast<std::size_t>((c * H + y) * W + x)] =
              blocks[static_cast<std::size_t>(((y / kBlock) * bw + x / kBlock) * 3 + c)];
        }
      }
    }
    for (const auto& actor : actors) {
      const Box& b = actor.track[static_cast<std::size_t>(t)];
      for (int y = 0; y < H; ++y) {
        const double py = y + 0.5;
        if (py < b.y1 || py >= b.y2) continue;
        for (int x = 0; x < W; ++x) {
          const double px = x + 0.5;
          if (px < b.x1 || px >= b.x2) continue;
          const auto cx = static_cast<long>(std::floor((px - b.x1 + actor.phase_x) / actor.cell));
          const auto cy = static_cast<long>(std::floor((py - b.y1 + actor.phase_y) / actor.cell));
          const auto& color = ((cx + cy) % 2 == 0) ? actor.color_a : actor.color_b;
          for (int c = 0; c < 3; ++c) canvas[static_cast<std::size_t>((c * H + y) * W + x)] = color[c];
        }
      }
    }
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          double v = canvas[static_cast<std::size_t>((c * H + y) * W + x)];
          if (spec.noise_std > 0) v += noise(rng);
          v = std::clamp(v, 0.0, 1.0);
          video.samples[video.index(static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(c),
                                    static_cast<std::uint32_t>(y), static_cast<std::uint32_t>(x))] =
              static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
      }
    }
  }

  auto& rec = clip.record;
  rec.id = clip_name(index);
  rec.frames = T;
  rec.height = H;
  rec.width = W;
  rec.frame_file = "clips/" + rec.id + ".srvf";
  rec.split = "train";
  for (int t = 0; t < T; ++t) {
    FrameAnnotation ann;
    ann.frame = t;
    for (const auto& actor : actors) {
      ann.boxes.boxes.push_back(actor.track[static_cast<std::size_t>(t)]);
      ann.boxes.labels.push_back(actor.label);
    }
    rec.annotations.push_back(std::move(ann));
  }
  return clip;
}

std::vector<std::string> assign_splits(const SynthSpec& spec) {
  std::vector<int> order(static_cast<std::size_t>(spec.clips));
  for (int i = 0; i < spec.clips; ++i) order[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(splitmix64(spec.seed ^ 0x5f1175eedull));
  std::shuffle(order.begin(), order.end(), rng);
  const auto train = static_cast<int>(std::lround(spec.train_fraction * spec.clips));
  std::vector<std::string> split(static_cast<std::size_t>(spec.clips), "test");
  for (int i = 0; i < train; ++i) split[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = "train";
  return split;
}

std::string manifest_line(const ClipRecord& r) {
  using nlohmann::json;
  json anns = json::array();
  for (const auto& a : r.annotations) {
    json boxes = json::array();
    for (std::size_t i = 0; i < a.boxes.size(); ++i) {
      const auto& b = a.boxes.boxes[i];
      boxes.push_back(json::array({b.x1, b.y1, b.x2, b.y2, a.boxes.labels[i]}));
    }
    anns.push_back(json{{"frame", a.frame}, {"boxes", boxes}});
  }
  json rec{{"schema", 1},         {"id", r.id},       {"frames", r.frames},
           {"height", r.height},  {"width", r.width}, {"frame_file", r.frame_file},
           {"split", r.split},    {"annotations", anns}};
  return rec.dump();
}

ClipRecord parse_manifest_line(std::string_view line) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  try {
    if (j.at("schema").get<int>() != 1) throw DataError("manifest: unsupported schema");
    ClipRecord r;
    r.id = j.at("id").get<std::string>();
    r.frames = j.at("frames").get<int>();
    r.height = j.at("height").get<int>();
    r.width = j.at("width").get<int>();
    r.frame_file = j.at("frame_file").get<std::string>();
    r.split = j.at("split").get<std::string>();
    if (r.frames <= 0 || r.height <= 0 || r.width <= 0) throw DataError("manifest: clip " + r.id + " has bad extents");
    if (std::filesystem::path(r.frame_file).is_absolute() || r.frame_file.find("..") != std::string::npos) {
      throw DataError("manifest: clip " + r.id + " frame_file must be a relative path inside the dataset");
    }
    for (const auto& a : j.at("annotations")) {
      FrameAnnotation ann;
      ann.frame = a.at("frame").get<int>();
      for (const auto& b : a.at("boxes")) {
        if (!b.is_array() || b.size() != 5) throw DataError("manifest: clip " + r.id + " box must have 5 entries");
        Box box{parse_finite(b[0]), parse_finite(b[1]), parse_finite(b[2]), parse_finite(b[3])};
        if (!box.valid()) throw DataError("manifest: clip " + r.id + " has a degenerate box");
        ann.boxes.boxes.push_back(box);
        ann.boxes.labels.push_back(b[4].get<int>());
      }
      r.annotations.push_back(std::move(ann));
    }
    if (static_cast<int>(r.annotations.size()) != r.frames) {
      throw DataError("manifest: clip " + r.id + " needs one annotation entry per frame");
    }
    for (int t = 0; t < r.frames; ++t) {
      if (r.annotations[static_cast<std::size_t>(t)].frame != t) {
        throw DataError("manifest: clip " + r.id + " annotations out of order");
      }
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
}

DatasetSummary generate_dataset(const SynthSpec& spec, const std::filesystem::path& root, int threads) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(root / "clips", ec);
  if (ec) throw DataError("cannot create '" + (root / "clips").string() + "': " + ec.message());

  const auto splits = assign_splits(spec);
  std::vector<ClipRecord> records(static_cast<std::size_t>(spec.clips));
  parallel_for(spec.clips, threads, [&](std::int64_t i) {
    auto clip = generate_clip(spec, static_cast<int>(i));
    clip.record.split = splits[static_cast<std::size_t>(i)];
    write_file_atomic(root / clip.record.frame_file, encode_frame_container(clip.video));
    records[static_cast<std::size_t>(i)] = std::move(clip.record);
  });

  DatasetSummary summary;
  summary.clips = spec.clips;
  summary.actors_per_class.assign(spec.classes.size(), 0);
  std::string manifest;
  for (const auto& r : records) {
    manifest += manifest_line(r);
    manifest += '\n';
    (r.split == "train" ? summary.train_clips : summary.test_clips) += 1;
    for (int label : r.annotations.front().boxes.labels) ++summary.actors_per_class[static_cast<std::size_t>(label - 1)];
  }
  std::string classes;
  for (const auto& name : spec.class_names()) classes += name + "\n";
  write_text_atomic(root / "classes.txt", classes);
  write_text_atomic(root / "manifest.jsonl", manifest);
  return summary;
}

Dataset Dataset::load(const std::filesystem::path& root) {
  Dataset d;
  d.root_ = root;
  std::ifstream classes(root / "classes.txt");
  if (!classes) throw DataError("dataset: missing '" + (root / "classes.txt").string() + "'");
  for (std::string line; std::getline(classes, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) d.classes_.push_back(line);
  }
  if (d.classes_.empty()) throw DataError("dataset: classes.txt is empty");

  std::ifstream manifest(root / "manifest.jsonl");
  if (!manifest) throw DataError("dataset: missing '" + (root / "manifest.jsonl").string() + "'");
  for (std::string line; std::getline(manifest, line);) {
    if (line.empty()) continue;
    auto rec = parse_manifest_line(line);
    for (const auto& a : rec.annotations) {
      for (int label : a.boxes.labels) {
        if (label < 1 || label > static_cast<int>(d.classes_.size())) {
          throw DataError("dataset: clip " + rec.id + " has label " + std::to_string(label) +
                          " outside classes.txt");
        }
      }
    }
    d.clips_.push_back(std::move(rec));
  }
  if (d.clips_.empty()) throw DataError("dataset: manifest has no clips");
  return d;
}

std::vector<int> Dataset::split(std::string_view name) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < clips_.size(); ++i) {
    if (clips_[i].split == name) out.push_back(static_cast<int>(i));
  }
  return out;
}

FrameContainer Dataset::read_video(int clip) const {
  const auto& rec = clips_.at(static_cast<std::size_t>(clip));
  FrameContainer video;
  try {
    video = decode_frame_container(read_file_bytes(root_ / rec.frame_file));
  } catch (const FormatError& e) {
    throw DataError("clip " + rec.id + ": " + e.what());
  }
  if (static_cast<int>(video.frames) != rec.frames || static_cast<int>(video.height) != rec.height ||
      static_cast<int>(video.width) != rec.width || video.channels != 3) {
    throw DataError("clip " + rec.id + ": frame container does not match the manifest");
  }
  return video;
}

std::vector<int> sample_frames(int length, int count, SampleMode mode, std::mt19937_64& rng) {
  if (length < 1 || count < 1) throw ContractError("sample_frames: length and count must be positive");
  std::vector<int> out(static_cast<std::size_t>(count));
  const auto T = static_cast<std::int64_t>(length), N = static_cast<std::int64_t>(count);
  for (std::int64_t s = 0; s < N; ++s) {
    if (mode == SampleMode::infer) {
      out[static_cast<std::size_t>(s)] = static_cast<int>((2 * s + 1) * T / (2 * N));
    } else {
      const std::int64_t lo = s * T / N;
      const std::int64_t hi = std::max(lo, (s + 1) * T / N - 1);
      out[static_cast<std::size_t>(s)] = static_cast<int>(std::uniform_int_distribution<std::int64_t>(lo, hi)(rng));
    }
  }
  return out;
}

TensorF resize_frames(const TensorF& frames, int height, int width, std::vector<BoxSet>* boxes) {
  if (frames.rank() != 4) throw ContractError("resize_frames: expected [K,C,H,W]");
  if (height <= 0 || width <= 0) throw ContractError("resize_frames: target size must be positive");
  const auto K = frames.dim(0), C = frames.dim(1), H = frames.dim(2), W = frames.dim(3);
  const double sy = static_cast<double>(height) / H, sx = static_cast<double>(width) / W;
  if (boxes) {
    for (auto& set : *boxes) {
      for (auto& b : set.boxes) b = scale_box(b, sx, sy);
    }
  }
  if (H == height && W == width) return frames;

  struct Tap {
    std::int64_t i0, i1;
    double w1;
  };
  auto taps = [](std::int64_t out, std::int64_t in) {
    std::vector<Tap> t(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (std::int64_t o = 0; o < out; ++o) {
      const double src = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::int64_t>(std::floor(src));
      const auto i1 = std::min(i0 + 1, in - 1);
      t[static_cast<std::size_t>(o)] = {i0, i1, src - i0};
    }
    return t;
  };
  const auto ty = taps(height, H), tx = taps(width, W);
  TensorF out({K, C, height, width});
  for (std::int64_t k = 0; k < K; ++k) {
    for (std::int64_t c = 0; c < C; ++c) {
      for (int y = 0; y < height; ++y) {
        const auto& a = ty[static_cast<std::size_t>(y)];
        for (int x = 0; x < width; ++x) {
          const auto& b = tx[static_cast<std::size_t>(x)];
          const double top = frames.at(k, c, a.i0, b.i0) * (1 - b.w1) + frames.at(k, c, a.i0, b.i1) * b.w1;
          const double bot = frames.at(k, c, a.i1, b.i0) * (1 - b.w1) + frames.at(k, c, a.i1, b.i1) * b.w1;
          out.at(k, c, y, x) = static_cast<float>(top * (1 - a.w1) + bot * a.w1);
        }
      }
    }
  }
  return out;
}

ClipBatch make_batch(const FrameContainer& video, const std::vector<FrameAnnotation>& annotations,
                     const std::vector<int>& frame_indices, int height, int width, std::string clip_id) {
  const auto K = static_cast<std::int64_t>(frame_indices.size());
  const auto C = static_cast<std::int64_t>(video.channels);
  const auto H = static_cast<std::int64_t>(video.height), W = static_cast<std::int64_t>(video.width);
  TensorF frames({K, C, H, W});
  std::vector<BoxSet> truth;
  for (std::int64_t k = 0; k < K; ++k) {
    const int t = frame_indices[static_cast<std::size_t>(k)];
    if (t < 0 || t >= static_cast<int>(video.frames)) throw ContractError("make_batch: frame index out of range");
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t y = 0; y < H; ++y) {
        for (std::int64_t x = 0; x < W; ++x) {
          frames.at(k, c, y, x) =
              video.samples[video.index(static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(c),
                                        static_cast<std::uint32_t>(y), static_cast<std::uint32_t>(x))] /
              255.0f;
        }
      }
    }
    truth.push_back(t < static_cast<int>(annotations.size()) ? annotations[static_cast<std::size_t>(t)].boxes
                                                             : BoxSet{});
  }
  ClipBatch batch;
  batch.frames = resize_frames(frames, height, width, &truth);
  batch.truth = std::move(truth);
  batch.frame_indices = frame_indices;
  batch.clip_id = std::move(clip_id);
  return batch;
}

ClipBatch load_clip(const Dataset& dataset, int clip, int count, SampleMode mode, std::mt19937_64& rng, int height,
                    int width) {
  const auto& rec = dataset.clips().at(static_cast<std::size_t>(clip));
  const auto video = dataset.read_video(clip);
  const auto indices = sample_frames(rec.frames, count, mode, rng);
  return make_batch(video, rec.annotations, indices, height, width, rec.id);
}

}  // namespace shiftdet
