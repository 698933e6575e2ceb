#include "shiftdet/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "shiftdet/tensor.hpp"

namespace shiftdet {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ConfigError("config key '" + std::string(key) + "': expected " + expected + ", got '" + std::string(value) +
                    "'");
}

template <typename T>
T parse_number(std::string_view key, std::string_view text, const char* expected) {
  text = trim(text);
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) bad_value(key, text, expected);
  return value;
}

double parse_double(std::string_view key, std::string_view text) {
  const std::string s(trim(text));
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) bad_value(key, text, "a finite number");
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, text, "a finite number");
  }
}

template <typename T>
std::string list_to_string(const std::vector<T>& v) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << v[i];
  }
  return os.str();
}

std::string number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  text = trim(text);
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    out.emplace_back(trim(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig kv;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'section.key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty() || key.find('.') == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": key '" + std::string(key) +
                        "' must have the form section.key");
    }
    kv.entries_[std::string(key)] = std::string(trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool KeyValueConfig::has(std::string_view key) const { return entries_.find(key) != entries_.end(); }

std::optional<std::string> KeyValueConfig::get(std::string_view key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void KeyValueConfig::set(std::string key, std::string value) { entries_[std::move(key)] = std::move(value); }

std::string KeyValueConfig::get_string(std::string_view key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

int KeyValueConfig::get_int(std::string_view key, int fallback) const {
  auto v = get(key);
  return v ? parse_number<int>(key, *v, "an integer") : fallback;
}

std::uint64_t KeyValueConfig::get_u64(std::string_view key, std::uint64_t fallback) const {
  auto v = get(key);
  return v ? parse_number<std::uint64_t>(key, *v, "an unsigned integer") : fallback;
}

double KeyValueConfig::get_double(std::string_view key, double fallback) const {
  auto v = get(key);
  return v ? parse_double(key, *v) : fallback;
}

bool KeyValueConfig::get_bool(std::string_view key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  bad_value(key, *v, "true or false");
}

std::vector<int> KeyValueConfig::get_int_list(std::string_view key, const std::vector<int>& fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::vector<int> out;
  for (const auto& item : split_list(*v)) out.push_back(parse_number<int>(key, item, "a list of integers"));
  return out;
}

std::vector<double> KeyValueConfig::get_double_list(std::string_view key, const std::vector<double>& fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(*v)) out.push_back(parse_double(key, item));
  return out;
}

std::vector<std::string> KeyValueConfig::get_string_list(std::string_view key,
                                                         const std::vector<std::string>& fallback) const {
  auto v = get(key);
  return v ? split_list(*v) : fallback;
}

void KeyValueConfig::require_known(std::string_view section, const std::vector<std::string_view>& known) const {
  const std::string prefix = std::string(section) + ".";
  for (const auto& [key, value] : entries_) {
    if (key.compare(0, prefix.size(), prefix) != 0) continue;
    const std::string_view name = std::string_view(key).substr(prefix.size());
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
}

int BackboneConfig::total_stride() const {
  int s = stem_stride;
  for (int st : stage_strides) s *= st;
  return s;
}

int BackboneConfig::block_count() const {
  int n = 0;
  for (int b : blocks_per_stage) n += b;
  return n;
}

void BackboneConfig::validate() const {
  if (stage_channels.empty()) throw ContractError("backbone: at least one stage required");
  if (blocks_per_stage.size() != stage_channels.size() || stage_strides.size() != stage_channels.size()) {
    throw ContractError("backbone: stage_channels, blocks_per_stage and stage_strides must have equal length");
  }
  for (std::size_t s = 0; s < stage_channels.size(); ++s) {
    if (stage_channels[s] <= 0 || blocks_per_stage[s] <= 0 || stage_strides[s] <= 0) {
      throw ContractError("backbone: stage parameters must be positive");
    }
    shift.fold(stage_channels[s]);  // throws when the shifted channel count is fractional
  }
  if (stem_stride <= 0) throw ContractError("backbone: stem_stride must be positive");
  shift.validate();
}

void RpnConfig::validate() const {
  if (anchor_scales.empty() || anchor_ratios.empty()) throw ContractError("rpn: anchors need scales and ratios");
  for (double v : anchor_scales) {
    if (!(v > 0)) throw ContractError("rpn: anchor scales must be positive");
  }
  for (double v : anchor_ratios) {
    if (!(v > 0)) throw ContractError("rpn: anchor ratios must be positive");
  }
  if (!(negative_iou <= positive_iou) || sample_size <= 0 || !(positive_fraction > 0 && positive_fraction <= 1) ||
      pre_nms_top <= 0 || train_proposals <= 0 || infer_proposals <= 0) {
    throw ContractError("rpn: invalid sampling or proposal settings");
  }
}

void RoiHeadConfig::validate() const {
  if (pooled_size <= 0 || sampling_ratio <= 0 || hidden <= 0 || rois_per_frame <= 0 ||
      !(foreground_fraction > 0 && foreground_fraction <= 1)) {
    throw ContractError("roi head: invalid settings");
  }
}

int ModelConfig::feature_height() const { return image_height / backbone.total_stride(); }
int ModelConfig::feature_width() const { return image_width / backbone.total_stride(); }

void ModelConfig::validate() const {
  if (classes.empty()) throw ContractError("model: class list is empty");
  backbone.validate();
  rpn.validate();
  roi.validate();
  const int s = backbone.total_stride();
  if (image_height <= 0 || image_width <= 0 || image_height % s != 0 || image_width % s != 0) {
    throw ContractError("model: image size " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                        " not divisible by stride " + std::to_string(s));
  }
}

std::string ModelConfig::canonical() const {
  std::ostringstream os;
  os << "model.classes = " << join(classes, ",") << "\n";
  os << "model.image_height = " << image_height << "\n";
  os << "model.image_width = " << image_width << "\n";
  os << "model.stage_channels = " << list_to_string(backbone.stage_channels) << "\n";
  os << "model.blocks_per_stage = " << list_to_string(backbone.blocks_per_stage) << "\n";
  os << "model.stage_strides = " << list_to_string(backbone.stage_strides) << "\n";
  os << "model.stem_stride = " << backbone.stem_stride << "\n";
  os << "model.num_frames = " << backbone.shift.num_frames << "\n";
  os << "model.shift_fraction = " << backbone.shift.shift_fraction.to_string() << "\n";
  os << "model.anchor_scales = " << list_to_string(rpn.anchor_scales) << "\n";
  os << "model.anchor_ratios = " << list_to_string(rpn.anchor_ratios) << "\n";
  os << "model.rpn_positive_iou = " << number(rpn.positive_iou) << "\n";
  os << "model.rpn_negative_iou = " << number(rpn.negative_iou) << "\n";
  os << "model.rpn_sample_size = " << rpn.sample_size << "\n";
  os << "model.rpn_positive_fraction = " << number(rpn.positive_fraction) << "\n";
  os << "model.rpn_pre_nms_top = " << rpn.pre_nms_top << "\n";
  os << "model.rpn_nms_iou = " << number(rpn.nms_iou) << "\n";
  os << "model.train_proposals = " << rpn.train_proposals << "\n";
  os << "model.infer_proposals = " << rpn.infer_proposals << "\n";
  os << "model.min_proposal_size = " << number(rpn.min_size) << "\n";
  os << "model.pooled_size = " << roi.pooled_size << "\n";
  os << "model.sampling_ratio = " << roi.sampling_ratio << "\n";
  os << "model.head_hidden = " << roi.hidden << "\n";
  os << "model.rois_per_frame = " << roi.rois_per_frame << "\n";
  os << "model.foreground_fraction = " << number(roi.foreground_fraction) << "\n";
  os << "model.foreground_iou = " << number(roi.foreground_iou) << "\n";
  os << "model.background_iou = " << number(roi.background_iou) << "\n";
  return os.str();
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t ModelConfig::digest() const {
  const auto text = canonical();
  return fnv1a64(text.data(), text.size());
}

ModelConfig model_config_from(const KeyValueConfig& kv) {
  kv.require_known("model", {"classes", "image_height", "image_width", "stage_channels", "blocks_per_stage",
                             "stage_strides", "stem_stride", "num_frames", "shift_fraction", "anchor_scales",
                             "anchor_ratios", "rpn_positive_iou", "rpn_negative_iou", "rpn_sample_size",
                             "rpn_positive_fraction", "rpn_pre_nms_top", "rpn_nms_iou", "train_proposals",
                             "infer_proposals", "min_proposal_size", "pooled_size", "sampling_ratio", "head_hidden",
                             "rois_per_frame", "foreground_fraction", "foreground_iou", "background_iou"});
  ModelConfig c;
  c.classes = kv.get_string_list("model.classes", c.classes);
  c.image_height = kv.get_int("model.image_height", c.image_height);
  c.image_width = kv.get_int("model.image_width", c.image_width);
  auto& bb = c.backbone;
  bb.stage_channels = kv.get_int_list("model.stage_channels", bb.stage_channels);
  bb.blocks_per_stage = kv.get_int_list("model.blocks_per_stage", bb.blocks_per_stage);
  bb.stage_strides = kv.get_int_list("model.stage_strides", bb.stage_strides);
  bb.stem_stride = kv.get_int("model.stem_stride", bb.stem_stride);
  bb.shift.num_frames = kv.get_int("model.num_frames", bb.shift.num_frames);
  if (auto f = kv.get("model.shift_fraction")) {
    try {
      bb.shift.shift_fraction = Fraction::parse(*f);
    } catch (const ContractError& e) {
      throw ConfigError("config key 'model.shift_fraction': " + std::string(e.what()));
    }
  }
  auto& rpn = c.rpn;
  rpn.anchor_scales = kv.get_double_list("model.anchor_scales", rpn.anchor_scales);
  rpn.anchor_ratios = kv.get_double_list("model.anchor_ratios", rpn.anchor_ratios);
  rpn.positive_iou = kv.get_double("model.rpn_positive_iou", rpn.positive_iou);
  rpn.negative_iou = kv.get_double("model.rpn_negative_iou", rpn.negative_iou);
  rpn.sample_size = kv.get_int("model.rpn_sample_size", rpn.sample_size);
  rpn.positive_fraction = kv.get_double("model.rpn_positive_fraction", rpn.positive_fraction);
  rpn.pre_nms_top = kv.get_int("model.rpn_pre_nms_top", rpn.pre_nms_top);
  rpn.nms_iou = kv.get_double("model.rpn_nms_iou", rpn.nms_iou);
  rpn.train_proposals = kv.get_int("model.train_proposals", rpn.train_proposals);
  rpn.infer_proposals = kv.get_int("model.infer_proposals", rpn.infer_proposals);
  rpn.min_size = kv.get_double("model.min_proposal_size", rpn.min_size);
  auto& roi = c.roi;
  roi.pooled_size = kv.get_int("model.pooled_size", roi.pooled_size);
  roi.sampling_ratio = kv.get_int("model.sampling_ratio", roi.sampling_ratio);
  roi.hidden = kv.get_int("model.head_hidden", roi.hidden);
  roi.rois_per_frame = kv.get_int("model.rois_per_frame", roi.rois_per_frame);
  roi.foreground_fraction = kv.get_double("model.foreground_fraction", roi.foreground_fraction);
  roi.foreground_iou = kv.get_double("model.foreground_iou", roi.foreground_iou);
  roi.background_iou = kv.get_double("model.background_iou", roi.background_iou);
  return c;
}

ModelConfig parse_model_config_text(std::string_view text) {
  return model_config_from(KeyValueConfig::parse(text));
}

}  // namespace shiftdet
