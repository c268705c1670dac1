#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "moincl/config.hpp"
#include "moincl/types.hpp"

namespace moincl {

Scene generate_scene(Modality modality, std::uint64_t seed);

/// Template caption. Images: "a red circle above a blue square"; audio:
/// "a loud bark then a soft horn ..."; video: "a red circle moves down and ...".
std::string render_caption(const Scene& scene);

struct QaPair {
  std::string question;
  std::string answer;
  friend bool operator==(const QaPair&, const QaPair&) = default;
};

/// Number of distinct question forms available for a scene.
int qa_variant_count(const Scene& scene);
/// `variant` is taken modulo qa_variant_count. Variant 0 asks for the colour
/// of the first object (images, video) or the first sound (audio).
QaPair render_qa(const Scene& scene, int variant = 0);

/// Ground-truth oracle: answers a question by reading the scene record.
/// Returns nullopt for questions the grammar cannot resolve uniquely.
std::optional<std::string> answer_question(const Scene& scene, std::string_view question);

/// "describe the image" / "describe the audio" / "describe the video".
std::string caption_instruction(Modality modality);

struct TaskDataset {
  TaskDescriptor descriptor;
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
  std::uint64_t seed = 0;
};

/// Scene-disjoint splits; deterministic in (descriptor, sizes, seed).
TaskDataset generate_task_dataset(const TaskDescriptor& descriptor, SplitSizes sizes,
                                  std::uint64_t seed);

/// Datasets for every task of an order, seeded from `data_seed` and the task index.
std::vector<TaskDataset> generate_benchmark(const std::vector<TaskDescriptor>& order,
                                            SplitSizes sizes, std::uint64_t data_seed);

/// Line-delimited records {task, modality, task_type, split, scene, input_text,
/// target_text, caption}.
std::string serialize_dataset(const TaskDataset& dataset);
TaskDataset parse_dataset(const TaskDescriptor& descriptor, std::string_view jsonl);
void write_dataset(const TaskDataset& dataset, const std::filesystem::path& path);
TaskDataset read_dataset(const TaskDescriptor& descriptor, const std::filesystem::path& path);
std::string dataset_filename(const TaskDescriptor& descriptor);

/// Terminal words of the caption/question/instruction grammar, in a fixed order.
std::vector<std::string> grammar_terminals();

}  // namespace moincl
