#include "moincl/syndata.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "moincl/error.hpp"
#include "moincl/rng.hpp"
#include "moincl/text.hpp"

namespace moincl {
namespace {

constexpr std::array<std::string_view, 4> kOrdinals{"first", "second", "third", "fourth"};

std::string noun(Color c, Shape s) { return std::string(word(c)) + " " + std::string(word(s)); }

bool is_above(const SceneObject& a, const SceneObject& b) { return a.row < b.row; }

std::string_view relation_phrase(const SceneObject& a, const SceneObject& b) {
  return is_above(a, b) ? "above" : "left of";
}

ImageScene random_image(Rng& rng) {
  const int n = 1 + rng.uniform_int(kMaxObjects);
  std::vector<int> colors{0, 1, 2, 3}, shapes{0, 1, 2, 3}, cells(kGridSize * kGridSize);
  std::iota(cells.begin(), cells.end(), 0);
  rng.shuffle(colors);
  rng.shuffle(shapes);
  rng.shuffle(cells);
  ImageScene img;
  for (int k = 0; k < n; ++k) {
    img.objects.push_back({static_cast<Color>(colors[k]), static_cast<Shape>(shapes[k]),
                           cells[k] / kGridSize, cells[k] % kGridSize});
  }
  std::sort(img.objects.begin(), img.objects.end(), [](const auto& a, const auto& b) {
    return std::make_pair(a.row, a.col) < std::make_pair(b.row, b.col);
  });
  return img;
}

AudioClip random_audio(Rng& rng) {
  AudioClip clip;
  for (auto& e : clip.events) {
    e.sound = static_cast<Sound>(rng.uniform_int(4));
    e.loudness = static_cast<Loudness>(rng.uniform_int(2));
  }
  return clip;
}

VideoClip random_video(Rng& rng) {
  for (;;) {
    const int n = 1 + rng.uniform_int(2);
    std::vector<int> colors{0, 1, 2, 3}, shapes{0, 1, 2, 3}, dirs{0, 1, 2, 3};
    rng.shuffle(colors);
    rng.shuffle(shapes);
    rng.shuffle(dirs);
    VideoClip clip;
    for (int k = 0; k < n; ++k) {
      MovingObject m{static_cast<Color>(colors[k]), static_cast<Shape>(shapes[k]),
                     static_cast<Direction>(dirs[k]), 0, 0};
      const int lane = rng.uniform_int(kGridSize);
      const int edge = kGridSize - 1;
      switch (m.direction) {
        case Direction::Up: m.start_row = edge; m.start_col = lane; break;
        case Direction::Down: m.start_row = 0; m.start_col = lane; break;
        case Direction::Left: m.start_row = lane; m.start_col = edge; break;
        case Direction::Right: m.start_row = lane; m.start_col = 0; break;
      }
      clip.movers.push_back(m);
    }
    try {
      validate_scene(clip);
      return clip;
    } catch (const Error&) {
      // Movers collide in some frame; draw again.
    }
  }
}

struct Question {
  std::vector<std::string> words;
  bool is(std::size_t i, std::string_view w) const { return i < words.size() && words[i] == w; }
};

std::optional<Color> color_of(std::string_view w) {
  for (int c = 0; c < 4; ++c) {
    if (word(static_cast<Color>(c)) == w) return static_cast<Color>(c);
  }
  return std::nullopt;
}
std::optional<Shape> shape_of(std::string_view w) {
  for (int s = 0; s < 4; ++s) {
    if (word(static_cast<Shape>(s)) == w) return static_cast<Shape>(s);
  }
  return std::nullopt;
}
std::optional<Direction> direction_of(std::string_view w) {
  for (int d = 0; d < 4; ++d) {
    if (word(static_cast<Direction>(d)) == w) return static_cast<Direction>(d);
  }
  return std::nullopt;
}
std::optional<int> ordinal_of(std::string_view w) {
  for (int k = 0; k < 4; ++k) {
    if (kOrdinals[static_cast<std::size_t>(k)] == w) return k;
  }
  return std::nullopt;
}

std::optional<std::string> answer_image(const ImageScene& img, const Question& q) {
  const auto& w = q.words;
  // what color is the <shape> ?
  if (w.size() == 6 && q.is(0, "what") && q.is(1, "color") && q.is(2, "is") && q.is(3, "the")) {
    const auto s = shape_of(w[4]);
    for (const auto& o : img.objects) {
      if (s && o.shape == *s) return std::string(word(o.color));
    }
    return std::nullopt;
  }
  // what shape is the <color> object ?
  if (w.size() == 7 && q.is(0, "what") && q.is(1, "shape") && q.is(5, "object")) {
    const auto c = color_of(w[4]);
    for (const auto& o : img.objects) {
      if (c && o.color == *c) return std::string(word(o.shape));
    }
    return std::nullopt;
  }
  // what is above a <color> <shape> ?  /  what is left of a <color> <shape> ?
  if (q.is(0, "what") && q.is(1, "is") && (q.is(2, "above") || q.is(2, "left"))) {
    const bool above = q.is(2, "above");
    const std::size_t off = above ? 3 : 4;
    if (w.size() != off + 4 || !q.is(off, "a") || (!above && !q.is(3, "of"))) return std::nullopt;
    const auto c = color_of(w[off + 1]);
    const auto s = shape_of(w[off + 2]);
    for (std::size_t k = 1; k < img.objects.size(); ++k) {
      const auto& t = img.objects[k];
      if (c && s && t.color == *c && t.shape == *s) {
        const auto& prev = img.objects[k - 1];
        if (is_above(prev, t) == above) return noun(prev.color, prev.shape);
        return std::nullopt;
      }
    }
    return std::nullopt;
  }
  return std::nullopt;
}

std::optional<std::string> answer_audio(const AudioClip& clip, const Question& q) {
  const auto& w = q.words;
  if (w.size() == 6 && q.is(0, "what") && q.is(1, "is") && q.is(2, "the") && q.is(4, "sound")) {
    if (auto k = ordinal_of(w[3])) return std::string(word(clip.events[static_cast<std::size_t>(*k)].sound));
  }
  if (w.size() == 7 && q.is(0, "how") && q.is(1, "loud") && q.is(5, "sound")) {
    if (auto k = ordinal_of(w[4])) {
      return std::string(word(clip.events[static_cast<std::size_t>(*k)].loudness));
    }
  }
  return std::nullopt;
}

std::optional<std::string> answer_video(const VideoClip& clip, const Question& q) {
  const auto& w = q.words;
  if (w.size() == 6 && q.is(0, "what") && q.is(1, "color") && q.is(3, "the")) {
    const auto s = shape_of(w[4]);
    for (const auto& m : clip.movers) {
      if (s && m.shape == *s) return std::string(word(m.color));
    }
    return std::nullopt;
  }
  if (w.size() == 6 && q.is(0, "where") && q.is(1, "does") && q.is(4, "move")) {
    const auto s = shape_of(w[3]);
    for (const auto& m : clip.movers) {
      if (s && m.shape == *s) return std::string(word(m.direction));
    }
    return std::nullopt;
  }
  if (w.size() == 4 && q.is(0, "what") && q.is(1, "moves")) {
    const auto d = direction_of(w[2]);
    for (const auto& m : clip.movers) {
      if (d && m.direction == *d) return noun(m.color, m.shape);
    }
    return std::nullopt;
  }
  return std::nullopt;
}

std::vector<QaPair> qa_candidates(const Scene& scene) {
  std::vector<QaPair> out;
  if (const auto* img = std::get_if<ImageScene>(&scene)) {
    for (const auto& o : img->objects) {
      out.push_back({"what color is the " + std::string(word(o.shape)) + " ?", std::string(word(o.color))});
    }
    for (const auto& o : img->objects) {
      out.push_back({"what shape is the " + std::string(word(o.color)) + " object ?",
                     std::string(word(o.shape))});
    }
    for (std::size_t k = 1; k < img->objects.size(); ++k) {
      const auto& a = img->objects[k - 1];
      const auto& b = img->objects[k];
      out.push_back({"what is " + std::string(relation_phrase(a, b)) + " a " + noun(b.color, b.shape) + " ?",
                     noun(a.color, a.shape)});
    }
  } else if (const auto* aud = std::get_if<AudioClip>(&scene)) {
    for (std::size_t k = 0; k < kAudioEvents; ++k) {
      out.push_back({"what is the " + std::string(kOrdinals[k]) + " sound ?",
                     std::string(word(aud->events[k].sound))});
    }
    for (std::size_t k = 0; k < kAudioEvents; ++k) {
      out.push_back({"how loud is the " + std::string(kOrdinals[k]) + " sound ?",
                     std::string(word(aud->events[k].loudness))});
    }
  } else {
    const auto& vid = std::get<VideoClip>(scene);
    for (const auto& m : vid.movers) {
      out.push_back({"what color is the " + std::string(word(m.shape)) + " ?", std::string(word(m.color))});
    }
    for (const auto& m : vid.movers) {
      out.push_back({"where does the " + std::string(word(m.shape)) + " move ?",
                     std::string(word(m.direction))});
    }
    for (const auto& m : vid.movers) {
      out.push_back({"what moves " + std::string(word(m.direction)) + " ?", noun(m.color, m.shape)});
    }
  }
  return out;
}

std::uint64_t descriptor_hash(const TaskDescriptor& d) {
  std::uint64_t h = 1469598103934665603ULL;
  const std::string key = d.label() + "|" + d.dataset_id + "|" + std::to_string(d.index);
  for (char c : key) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

Sample make_sample(const TaskDescriptor& d, Scene scene, Rng& rng) {
  Sample s;
  s.caption = render_caption(scene);
  if (d.task_type == TaskType::Captioning) {
    s.input_text = caption_instruction(d.modality);
    s.target_text = s.caption;
  } else {
    const auto qa = render_qa(scene, rng.uniform_int(qa_variant_count(scene)));
    s.input_text = qa.question;
    s.target_text = qa.answer;
  }
  s.modality_input = std::move(scene);
  return s;
}

}  // namespace

Scene generate_scene(Modality modality, std::uint64_t seed) {
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(modality) + 11));
  switch (modality) {
    case Modality::Image: return random_image(rng);
    case Modality::Audio: return random_audio(rng);
    case Modality::Video: return random_video(rng);
  }
  throw Error("unknown modality");
}

std::string render_caption(const Scene& scene) {
  std::string out;
  if (const auto* img = std::get_if<ImageScene>(&scene)) {
    for (std::size_t k = 0; k < img->objects.size(); ++k) {
      const auto& o = img->objects[k];
      if (k > 0) out += " " + std::string(relation_phrase(img->objects[k - 1], o)) + " ";
      out += "a " + noun(o.color, o.shape);
    }
  } else if (const auto* aud = std::get_if<AudioClip>(&scene)) {
    for (std::size_t k = 0; k < kAudioEvents; ++k) {
      if (k > 0) out += " then ";
      out += "a " + std::string(word(aud->events[k].loudness)) + " " +
             std::string(word(aud->events[k].sound));
    }
  } else {
    const auto& vid = std::get<VideoClip>(scene);
    for (std::size_t k = 0; k < vid.movers.size(); ++k) {
      const auto& m = vid.movers[k];
      if (k > 0) out += " and ";
      out += "a " + noun(m.color, m.shape) + " moves " + std::string(word(m.direction));
    }
  }
  return out;
}

int qa_variant_count(const Scene& scene) { return static_cast<int>(qa_candidates(scene).size()); }

QaPair render_qa(const Scene& scene, int variant) {
  const auto all = qa_candidates(scene);
  const int n = static_cast<int>(all.size());
  return all[static_cast<std::size_t>(((variant % n) + n) % n)];
}

std::optional<std::string> answer_question(const Scene& scene, std::string_view question) {
  Question q{split_words(normalize_text(question))};
  if (q.words.empty() || q.words.back() != "?") return std::nullopt;
  if (const auto* img = std::get_if<ImageScene>(&scene)) return answer_image(*img, q);
  if (const auto* aud = std::get_if<AudioClip>(&scene)) return answer_audio(*aud, q);
  return answer_video(std::get<VideoClip>(scene), q);
}

std::string caption_instruction(Modality modality) {
  return "describe the " + std::string(modality_word(modality));
}

TaskDataset generate_task_dataset(const TaskDescriptor& descriptor, SplitSizes sizes,
                                  std::uint64_t seed) {
  descriptor.validate();
  if (sizes.train < 1 || sizes.val < 1 || sizes.test < 1) throw Error("split sizes must be positive");
  TaskDataset ds;
  ds.descriptor = descriptor;
  ds.seed = seed;
  Rng rng(mix_seed(seed, descriptor_hash(descriptor)));
  const int total = sizes.train + sizes.val + sizes.test;
  std::set<std::string> seen;
  int attempts = 0;
  while (static_cast<int>(seen.size()) < total) {
    if (++attempts > 200 * total) throw Error("scene space exhausted for " + descriptor.label());
    Scene scene = generate_scene(descriptor.modality, rng.next());
    if (!seen.insert(canonical_scene_key(scene)).second) continue;
    const int k = static_cast<int>(seen.size()) - 1;
    auto& split = k < sizes.train ? ds.train : (k < sizes.train + sizes.val ? ds.val : ds.test);
    split.push_back(make_sample(descriptor, std::move(scene), rng));
  }
  return ds;
}

std::vector<TaskDataset> generate_benchmark(const std::vector<TaskDescriptor>& order,
                                            SplitSizes sizes, std::uint64_t data_seed) {
  std::vector<TaskDataset> out;
  out.reserve(order.size());
  for (const auto& t : order) {
    out.push_back(generate_task_dataset(t, sizes, mix_seed(data_seed, static_cast<std::uint64_t>(t.index))));
  }
  return out;
}

std::string dataset_filename(const TaskDescriptor& d) {
  return "task" + std::to_string(d.index) + "_" + d.label() + ".jsonl";
}

std::string serialize_dataset(const TaskDataset& ds) {
  std::string out;
  auto emit = [&](const std::vector<Sample>& split, const char* name) {
    for (const auto& s : split) {
      nlohmann::ordered_json j;
      j["task"] = ds.descriptor.index;
      j["modality"] = to_string(ds.descriptor.modality);
      j["task_type"] = to_string(ds.descriptor.task_type);
      j["split"] = name;
      j["scene"] = to_json(s.modality_input);
      j["input_text"] = s.input_text;
      j["target_text"] = s.target_text;
      j["caption"] = s.caption;
      out += j.dump();
      out += '\n';
    }
  };
  emit(ds.train, "train");
  emit(ds.val, "val");
  emit(ds.test, "test");
  return out;
}

TaskDataset parse_dataset(const TaskDescriptor& descriptor, std::string_view jsonl) {
  TaskDataset ds;
  ds.descriptor = descriptor;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Sample s;
      s.modality_input = scene_from_json(j.at("scene"));
      if (modality_of(s.modality_input) != descriptor.modality) throw Error("modality mismatch");
      s.input_text = j.at("input_text").get<std::string>();
      s.target_text = j.at("target_text").get<std::string>();
      s.caption = j.value("caption", render_caption(s.modality_input));
      const auto split = j.at("split").get<std::string>();
      if (split == "train") ds.train.push_back(std::move(s));
      else if (split == "val") ds.val.push_back(std::move(s));
      else if (split == "test") ds.test.push_back(std::move(s));
      else throw Error("unknown split " + split);
    } catch (const std::exception& e) {
      throw Error("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ds;
}

void write_dataset(const TaskDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset: " + path.string());
  out << serialize_dataset(dataset);
}

TaskDataset read_dataset(const TaskDescriptor& descriptor, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_dataset(descriptor, buf.str());
}

std::vector<std::string> grammar_terminals() {
  std::vector<std::string> out{"a"};
  for (int c = 0; c < 4; ++c) out.emplace_back(word(static_cast<Color>(c)));
  for (int s = 0; s < 4; ++s) out.emplace_back(word(static_cast<Shape>(s)));
  for (const char* w : {"above", "left", "of", "then"}) out.emplace_back(w);
  for (int l = 0; l < 2; ++l) out.emplace_back(word(static_cast<Loudness>(l)));
  for (int s = 0; s < 4; ++s) out.emplace_back(word(static_cast<Sound>(s)));
  out.emplace_back("moves");
  for (int d = 0; d < 4; ++d) out.emplace_back(word(static_cast<Direction>(d)));
  for (const char* w : {"and", "describe", "the", "image", "audio", "video", "what", "color", "is",
                        "?", "shape", "object", "how", "sound"}) {
    out.emplace_back(w);
  }
  for (auto o : kOrdinals) out.emplace_back(o);
  for (const char* w : {"where", "does", "move"}) out.emplace_back(w);
  std::vector<std::string> unique;
  std::set<std::string> seen;
  for (auto& w : out) {
    if (seen.insert(w).second) unique.push_back(std::move(w));
  }
  return unique;
}

}  // namespace moincl
