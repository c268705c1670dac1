#include "moincl/scene.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "moincl/error.hpp"

namespace moincl {
namespace {

template <class E, std::size_t N>
E parse_word(std::string_view w, const std::array<E, N>& all, const char* what) {
  for (E e : all) {
    if (word(e) == w) return e;
  }
  throw Error(std::string("unknown ") + what + ": " + std::string(w));
}

constexpr std::array<Color, 4> kColors{Color::Red, Color::Blue, Color::Green, Color::Yellow};
constexpr std::array<Shape, 4> kShapes{Shape::Circle, Shape::Square, Shape::Triangle, Shape::Star};
constexpr std::array<Sound, 4> kSounds{Sound::Bark, Sound::Horn, Sound::Bell, Sound::Splash};
constexpr std::array<Loudness, 2> kLoudness{Loudness::Soft, Loudness::Loud};
constexpr std::array<Direction, 4> kDirections{Direction::Up, Direction::Down, Direction::Left,
                                               Direction::Right};

bool in_grid(int r, int c) { return r >= 0 && r < kGridSize && c >= 0 && c < kGridSize; }

void validate_image(const ImageScene& img) {
  if (img.objects.empty() || img.objects.size() > kMaxObjects) {
    throw Error("image scene must hold 1-3 objects");
  }
  std::set<int> cells, colors, shapes;
  for (const auto& o : img.objects) {
    if (!in_grid(o.row, o.col)) throw Error("object outside the grid");
    if (!cells.insert(o.row * kGridSize + o.col).second) throw Error("two objects share a cell");
    if (!colors.insert(static_cast<int>(o.color)).second) throw Error("repeated colour in scene");
    if (!shapes.insert(static_cast<int>(o.shape)).second) throw Error("repeated shape in scene");
  }
}

nlohmann::ordered_json object_json(const SceneObject& o) {
  nlohmann::ordered_json j;
  j["color"] = word(o.color);
  j["shape"] = word(o.shape);
  j["row"] = o.row;
  j["col"] = o.col;
  return j;
}

nlohmann::ordered_json image_json(const ImageScene& img) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& o : img.objects) arr.push_back(object_json(o));
  return arr;
}

ImageScene image_from_json(const nlohmann::json& arr) {
  ImageScene img;
  for (const auto& o : arr) {
    img.objects.push_back({parse_word(o.at("color").get<std::string>(), kColors, "color"),
                           parse_word(o.at("shape").get<std::string>(), kShapes, "shape"),
                           o.at("row").get<int>(), o.at("col").get<int>()});
  }
  return img;
}

}  // namespace

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::Image: return "IMG";
    case Modality::Audio: return "AUD";
    case Modality::Video: return "VID";
  }
  return "?";
}

std::string_view modality_word(Modality m) {
  switch (m) {
    case Modality::Image: return "image";
    case Modality::Audio: return "audio";
    case Modality::Video: return "video";
  }
  return "?";
}

Modality parse_modality(std::string_view s) {
  std::string u(s);
  std::transform(u.begin(), u.end(), u.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (u == "IMG" || u == "IMAGE") return Modality::Image;
  if (u == "AUD" || u == "AUDIO") return Modality::Audio;
  if (u == "VID" || u == "VIDEO") return Modality::Video;
  throw Error("unknown modality: " + std::string(s));
}

std::string_view word(Color c) {
  static constexpr std::array<std::string_view, 4> w{"red", "blue", "green", "yellow"};
  return w[static_cast<std::size_t>(c)];
}
std::string_view word(Shape s) {
  static constexpr std::array<std::string_view, 4> w{"circle", "square", "triangle", "star"};
  return w[static_cast<std::size_t>(s)];
}
std::string_view word(Sound s) {
  static constexpr std::array<std::string_view, 4> w{"bark", "horn", "bell", "splash"};
  return w[static_cast<std::size_t>(s)];
}
std::string_view word(Loudness l) { return l == Loudness::Soft ? "soft" : "loud"; }
std::string_view word(Direction d) {
  static constexpr std::array<std::string_view, 4> w{"up", "down", "left", "right"};
  return w[static_cast<std::size_t>(d)];
}

std::array<ImageScene, kVideoFrames> VideoClip::frames() const {
  std::array<ImageScene, kVideoFrames> out;
  for (int f = 0; f < kVideoFrames; ++f) {
    for (const auto& m : movers) {
      int r = m.start_row, c = m.start_col;
      switch (m.direction) {
        case Direction::Up: r -= f; break;
        case Direction::Down: r += f; break;
        case Direction::Left: c -= f; break;
        case Direction::Right: c += f; break;
      }
      out[static_cast<std::size_t>(f)].objects.push_back({m.color, m.shape, r, c});
    }
  }
  return out;
}

Modality modality_of(const Scene& scene) {
  switch (scene.index()) {
    case 0: return Modality::Image;
    case 1: return Modality::Audio;
    default: return Modality::Video;
  }
}

void validate_scene(const Scene& scene) {
  if (const auto* img = std::get_if<ImageScene>(&scene)) {
    validate_image(*img);
    for (std::size_t k = 1; k < img->objects.size(); ++k) {
      const auto& a = img->objects[k - 1];
      const auto& b = img->objects[k];
      if (std::make_pair(a.row, a.col) >= std::make_pair(b.row, b.col)) {
        throw Error("image objects must be stored in (row, col) order");
      }
    }
  } else if (const auto* vid = std::get_if<VideoClip>(&scene)) {
    if (vid->movers.empty() || vid->movers.size() > 2) throw Error("video must hold 1-2 movers");
    std::set<int> dirs;
    for (const auto& m : vid->movers) {
      if (!dirs.insert(static_cast<int>(m.direction)).second) throw Error("repeated direction in video");
    }
    for (const auto& frame : vid->frames()) validate_image(frame);
  }
}

nlohmann::ordered_json to_json(const Scene& scene) {
  nlohmann::ordered_json j;
  j["modality"] = to_string(modality_of(scene));
  if (const auto* img = std::get_if<ImageScene>(&scene)) {
    j["objects"] = image_json(*img);
  } else if (const auto* aud = std::get_if<AudioClip>(&scene)) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& e : aud->events) {
      nlohmann::ordered_json ej;
      ej["sound"] = word(e.sound);
      ej["loudness"] = word(e.loudness);
      arr.push_back(ej);
    }
    j["events"] = arr;
  } else {
    const auto& vid = std::get<VideoClip>(scene);
    auto movers = nlohmann::ordered_json::array();
    for (const auto& m : vid.movers) {
      nlohmann::ordered_json mj;
      mj["color"] = word(m.color);
      mj["shape"] = word(m.shape);
      mj["direction"] = word(m.direction);
      mj["start_row"] = m.start_row;
      mj["start_col"] = m.start_col;
      movers.push_back(mj);
    }
    j["movers"] = movers;
    auto frames = nlohmann::ordered_json::array();
    for (const auto& f : vid.frames()) frames.push_back(image_json(f));
    j["frames"] = frames;
  }
  return j;
}

Scene scene_from_json(const nlohmann::json& j) {
  const Modality m = parse_modality(j.at("modality").get<std::string>());
  Scene scene;
  switch (m) {
    case Modality::Image: scene = image_from_json(j.at("objects")); break;
    case Modality::Audio: {
      AudioClip clip;
      const auto& arr = j.at("events");
      if (arr.size() != kAudioEvents) throw Error("audio clip must hold 4 events");
      for (std::size_t k = 0; k < kAudioEvents; ++k) {
        clip.events[k] = {parse_word(arr[k].at("sound").get<std::string>(), kSounds, "sound"),
                          parse_word(arr[k].at("loudness").get<std::string>(), kLoudness, "loudness")};
      }
      scene = clip;
      break;
    }
    case Modality::Video: {
      VideoClip clip;
      for (const auto& mj : j.at("movers")) {
        clip.movers.push_back(
            {parse_word(mj.at("color").get<std::string>(), kColors, "color"),
             parse_word(mj.at("shape").get<std::string>(), kShapes, "shape"),
             parse_word(mj.at("direction").get<std::string>(), kDirections, "direction"),
             mj.at("start_row").get<int>(), mj.at("start_col").get<int>()});
      }
      scene = clip;
      break;
    }
  }
  validate_scene(scene);
  return scene;
}

std::string canonical_scene_key(const Scene& scene) { return to_json(scene).dump(); }

}  // namespace moincl
