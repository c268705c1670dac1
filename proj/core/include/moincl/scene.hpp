#pragma once

#include <array>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace moincl {

enum class Modality { Image, Audio, Video };
inline constexpr std::array<Modality, 3> kAllModalities{Modality::Image, Modality::Audio,
                                                        Modality::Video};

/// "IMG", "AUD", "VID".
std::string_view to_string(Modality m);
/// Accepts the short codes and the words "image", "audio", "video" (any case).
Modality parse_modality(std::string_view s);
/// "image", "audio", "video".
std::string_view modality_word(Modality m);

enum class Color { Red, Blue, Green, Yellow };
enum class Shape { Circle, Square, Triangle, Star };
enum class Sound { Bark, Horn, Bell, Splash };
enum class Loudness { Soft, Loud };
enum class Direction { Up, Down, Left, Right };

inline constexpr int kGridSize = 4;
inline constexpr int kAudioEvents = 4;
inline constexpr int kVideoFrames = 4;
inline constexpr int kMaxObjects = 3;

std::string_view word(Color c);
std::string_view word(Shape s);
std::string_view word(Sound s);
std::string_view word(Loudness l);
std::string_view word(Direction d);

struct SceneObject {
  Color color = Color::Red;
  Shape shape = Shape::Circle;
  int row = 0;
  int col = 0;
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

/// Still image: 1-3 objects on the grid, stored in (row, col) order.
struct ImageScene {
  std::vector<SceneObject> objects;
  friend bool operator==(const ImageScene&, const ImageScene&) = default;
};

struct AudioEvent {
  Sound sound = Sound::Bark;
  Loudness loudness = Loudness::Soft;
  friend bool operator==(const AudioEvent&, const AudioEvent&) = default;
};

struct AudioClip {
  std::array<AudioEvent, kAudioEvents> events{};
  friend bool operator==(const AudioClip&, const AudioClip&) = default;
};

/// One object travelling one cell per frame in a fixed direction.
struct MovingObject {
  Color color = Color::Red;
  Shape shape = Shape::Circle;
  Direction direction = Direction::Down;
  int start_row = 0;
  int start_col = 0;
  friend bool operator==(const MovingObject&, const MovingObject&) = default;
};

/// Four frames of 1-2 moving objects. Frame objects keep mover order so a
/// slot index tracks the same object across frames.
struct VideoClip {
  std::vector<MovingObject> movers;
  std::array<ImageScene, kVideoFrames> frames() const;
  friend bool operator==(const VideoClip&, const VideoClip&) = default;
};

using Scene = std::variant<ImageScene, AudioClip, VideoClip>;

Modality modality_of(const Scene& scene);

/// Throws moincl::Error when a scene breaks its invariants.
void validate_scene(const Scene& scene);

nlohmann::ordered_json to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);
/// Compact canonical JSON; doubles as the scene identity for split disjointness.
std::string canonical_scene_key(const Scene& scene);

}  // namespace moincl
