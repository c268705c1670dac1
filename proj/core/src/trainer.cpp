#include "moincl/trainer.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "moincl/checkpoint.hpp"
#include "moincl/error.hpp"
#include "moincl/optim.hpp"
#include "moincl/rng.hpp"

namespace moincl {
namespace {

SequenceLayout sample_layout(const Scene& scene, std::string_view prompt, std::string_view target,
                             const Vocabulary& vocab, const ModelDims& dims) {
  const auto p = vocab.encode(prompt);
  const auto t = vocab.encode(target);
  return make_multimodal_layout(scene, p, t, dims);
}

// Mean CE over `layouts` (weight w per item), gradients scaled by `scale`.
double ce_term(const ModelState& model, const SequenceLayout& layout, double scale,
               const TrainableSelection& sel, GradMap* grads) {
  if (grads == nullptr) return cross_entropy_seq(forward(model, layout), layout.targets);
  TrainingPass pass(model, layout);
  auto lg = cross_entropy_seq_grad(pass.distribution(), layout.targets);
  lg.dlogits *= scale;
  pass.backward(lg.dlogits, sel, *grads);
  return lg.value;
}

double kl_term(const ModelState& model, FrozenOutputs& old, const SequenceLayout& layout,
               double scale, const TrainableSelection& sel, GradMap* grads) {
  const auto& q = old(layout);
  if (grads == nullptr) return kl_divergence_seq(forward(model, layout), q);
  TrainingPass pass(model, layout);
  auto lg = kl_divergence_seq_grad(pass.distribution(), q);
  lg.dlogits *= scale;
  pass.backward(lg.dlogits, sel, *grads);
  return lg.value;
}

// CE and KL share one forward pass of the current model.
std::pair<double, double> pseudo_terms(const ModelState& model, FrozenOutputs& old,
                                       const SequenceLayout& layout, double w_ce, double w_kl,
                                       const TrainableSelection& sel, GradMap* grads) {
  const auto& q = old(layout);
  if (grads == nullptr) {
    const auto p = forward(model, layout);
    return {cross_entropy_seq(p, layout.targets), kl_divergence_seq(p, q)};
  }
  TrainingPass pass(model, layout);
  auto ce = cross_entropy_seq_grad(pass.distribution(), layout.targets);
  auto kl = kl_divergence_seq_grad(pass.distribution(), q);
  Matrix d = w_ce * ce.dlogits + w_kl * kl.dlogits;
  pass.backward(d, sel, *grads);
  return {ce.value, kl.value};
}

std::vector<std::string> prompt_template_corpus() {
  std::vector<std::string> out = qa_prompt_corpus();
  for (Modality m : kAllModalities) {
    out.push_back(caption_instruction(m));
    out.push_back(pseudo_caption_instruction(m));
  }
  return out;
}

bool needs_old(Method m) {
  return m == Method::Moincl || m == Method::Lwf || m == Method::Ewf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

}  // namespace

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const auto& r : steps) {
    nlohmann::ordered_json j;
    j["task"] = r.task;
    j["step"] = r.step;
    j["L_main"] = r.l_main;
    j["L_p"] = r.l_p;
    j["L_ins"] = r.l_ins;
    j["aux"] = r.aux;
    j["total"] = r.total;
    j["lr"] = r.lr;
    j["pseudo_count"] = r.pseudo_count;
    out += j.dump() + "\n";
  }
  for (std::size_t i = 0; i < task_seconds.size(); ++i) {
    nlohmann::ordered_json j;
    j["task"] = i + 1;
    j["wall_seconds"] = task_seconds[i];
    out += j.dump() + "\n";
  }
  return out;
}

TrainableSelection task_selection(Modality m) {
  TrainableSelection sel;
  sel.adapters = true;
  sel.projection = m;
  return sel;
}

StepLosses step_objective(const ModelState& model, const ModelState* old, const Vocabulary& vocab,
                          const StepTerms& terms, const TrainableSelection& selection,
                          GradMap* grads) {
  if (old == nullptr) return step_objective(model, static_cast<FrozenOutputs*>(nullptr), vocab, terms, selection, grads);
  FrozenOutputs outputs(*old, false);
  return step_objective(model, &outputs, vocab, terms, selection, grads);
}

StepLosses step_objective(const ModelState& model, FrozenOutputs* old, const Vocabulary& vocab,
                          const StepTerms& terms, const TrainableSelection& selection,
                          GradMap* grads) {
  if (terms.batch.empty()) throw Error("empty training batch");
  const bool want_old = !terms.pseudo.empty() || !terms.instructions.empty() || terms.lwf_weight > 0.0;
  if (want_old && old == nullptr) throw Error("previous-model snapshot required for this objective");
  const ModelDims& dims = model.dims();
  StepLosses L;

  const double nb = static_cast<double>(terms.batch.size());
  for (const auto& s : terms.batch) {
    const auto layout = sample_layout(s.modality_input, s.input_text, s.target_text, vocab, dims);
    L.l_main += ce_term(model, layout, 1.0 / nb, selection, grads) / nb;
    if (terms.lwf_weight > 0.0) {
      L.aux += terms.lwf_weight *
               kl_term(model, *old, layout, terms.lwf_weight / nb, selection, grads) / nb;
    }
  }

  if (!terms.pseudo.empty()) {
    const double np = static_cast<double>(terms.pseudo.size());
    for (const auto& ps : terms.pseudo) {
      const auto layout = sample_layout(ps.modality_input, ps.pseudo_input_text,
                                        ps.pseudo_target_text, vocab, dims);
      const auto [ce, kl] = pseudo_terms(model, *old, layout, terms.lambda_p / np,
                                         terms.lambda_p_prime / np, selection, grads);
      L.l_p += (terms.lambda_p * ce + terms.lambda_p_prime * kl) / np;
    }
  }

  if (!terms.instructions.empty()) {
    L.l_ins = grads == nullptr ? ikd_loss(model, *old, terms.instructions)
                               : ikd_loss_grad(model, *old, terms.instructions, selection, *grads);
  }

  if (terms.fisher != nullptr && !terms.fisher->empty()) {
    L.aux += grads == nullptr ? ewc_penalty(model, *terms.fisher, terms.ewc_lambda)
                              : ewc_penalty_grad(model, *terms.fisher, terms.ewc_lambda, *grads);
  }
  L.total = L.l_main + L.l_p + L.l_ins + L.aux;
  return L;
}

FisherDiag estimate_fisher(const ModelState& model, const TaskDataset& dataset,
                           const Vocabulary& vocab, int n_batches, int batch_size,
                           std::uint64_t seed) {
  if (dataset.train.empty()) throw Error("cannot estimate Fisher on an empty dataset");
  const auto sel = task_selection(dataset.descriptor.modality);
  FisherDiag f;
  Rng rng(mix_seed(seed, 0xf15e));
  const int n = static_cast<int>(dataset.train.size());
  for (int b = 0; b < n_batches; ++b) {
    std::vector<Sample> batch;
    for (int k = 0; k < batch_size; ++k) batch.push_back(dataset.train[static_cast<std::size_t>(rng.uniform_int(n))]);
    GradMap g = model.zero_grads(sel);
    StepTerms terms;
    terms.batch = batch;
    step_objective(model, static_cast<const ModelState*>(nullptr), vocab, terms, sel, &g);
    for (auto& [name, grad] : g) {
      Matrix sq = grad.array().square().matrix() / static_cast<double>(n_batches);
      auto it = f.importance.find(name);
      if (it == f.importance.end()) {
        f.importance.emplace(name, std::move(sq));
      } else {
        it->second += sq;
      }
    }
  }
  for (const auto& [name, imp] : f.importance) f.anchor.emplace(name, model.at(name));
  return f;
}

InstructionSet run_instructions(const RunConfig& cfg) {
  if (!cfg.instruction_path.empty()) return InstructionSet::load(cfg.instruction_path);
  return InstructionSet::bundled(cfg.instruction_count, 0);
}

Vocabulary run_vocabulary(const InstructionSet& instructions) {
  std::vector<std::string> corpus = grammar_terminals();
  const auto prompts = prompt_template_corpus();
  corpus.insert(corpus.end(), prompts.begin(), prompts.end());
  corpus.insert(corpus.end(), instructions.instructions().begin(), instructions.instructions().end());
  return build_vocabulary(corpus);
}

BaseModel prepare_base(const RunConfig& cfg, TrainLog* log) {
  cfg.dims.validate();
  auto instructions = run_instructions(cfg);
  auto vocab = run_vocabulary(instructions);
  auto state = ModelState::initialize(cfg.dims, vocab.size(), mix_seed(cfg.seed, 0xba5e));

  const auto encoded = encode_instructions(instructions.instructions(), vocab, cfg.dims);
  if (encoded.empty()) throw Error("no instruction fits the context");
  TrainableSelection sel;
  sel.adapters = false;
  sel.lm_base = true;
  AdamW opt(0.0);
  Rng rng(mix_seed(cfg.seed, 0x9e7));
  const int n = static_cast<int>(encoded.size());
  for (int step = 0; step < cfg.pretrain_steps; ++step) {
    const double lr = cosine_lr(cfg.pretrain_learning_rate, step, cfg.pretrain_steps);
    GradMap g = state.zero_grads(sel);
    double loss = 0.0;
    const double scale = 1.0 / cfg.pretrain_batch_size;
    for (int k = 0; k < cfg.pretrain_batch_size; ++k) {
      const auto layout = make_text_layout(encoded[static_cast<std::size_t>(rng.uniform_int(n))], cfg.dims);
      loss += ce_term(state, layout, scale, sel, &g) * scale;
    }
    opt.step(state, g, lr);
    if (log != nullptr) log->steps.push_back({0, step, loss, 0.0, 0.0, 0.0, loss, lr, 0});
  }
  return {std::move(vocab), std::move(instructions), std::move(state)};
}

void train_task(ModelState& model, const Snapshot& old, const TaskContext& ctx,
                StrategyState& strategy, TrainLog& log) {
  const auto& cfg = ctx.cfg;
  const auto& task = ctx.task;
  const int i = task.index;
  if (ctx.dataset.descriptor.label() != task.label()) throw Error("dataset does not match task " + task.label());
  if (ctx.dataset.train.empty()) throw Error("empty training split for task " + task.label());
  if (i > 1 && needs_old(cfg.method) && !old) {
    throw Error("task " + std::to_string(i) + " needs the previous-model snapshot");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto sel = task_selection(task.modality);
  const FusionMode fusion = cfg.effective_fusion_mode();
  const bool moincl = cfg.method == Method::Moincl && i > 1;
  const double alpha = cfg.alpha_for(i);
  const auto backend = QaGeneratorBackend::grammar_oracle(mix_seed(cfg.seed, 0x97d0 + static_cast<std::uint64_t>(i)));
  if (cfg.qa_backend == QaBackendKind::LmPrompted && moincl) {
    throw Error("LM_PROMPTED backend is not supported during training; use GRAMMAR_ORACLE");
  }

  const int n = static_cast<int>(ctx.dataset.train.size());
  const int per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const long total = static_cast<long>(per_epoch) * cfg.epochs_per_task;
  AdamW opt(cfg.weight_decay);
  Rng rng(mix_seed(cfg.seed, 0x7a5c00 + static_cast<std::uint64_t>(i)));
  std::vector<int> order(static_cast<std::size_t>(n));
  long step = 0;
  std::optional<FrozenOutputs> old_outputs;
  if (old) old_outputs.emplace(*old);

  for (int epoch = 0; epoch < cfg.epochs_per_task; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (int b = 0; b < per_epoch; ++b) {
      std::vector<Sample> batch;
      for (int k = b * cfg.batch_size; k < std::min(n, (b + 1) * cfg.batch_size); ++k) {
        batch.push_back(ctx.dataset.train[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])]);
      }
      if (ctx.observer) ctx.observer(i, batch);

      StepTerms terms;
      terms.batch = batch;
      if (moincl) {
        terms.pseudo = generate_pseudo_batch(batch, ctx.learned, task, backend);
        terms.lambda_p = cfg.lambda_p_for(i);
        terms.lambda_p_prime = cfg.lambda_p_prime_for(i);
        const auto texts = ctx.instructions.sample(cfg.batch_size, rng);
        terms.instructions = encode_instructions(texts, ctx.vocab, cfg.dims);
      }
      if (cfg.method == Method::Lwf && i > 1) terms.lwf_weight = cfg.lwf_weight;
      if (cfg.method == Method::Ewc) {
        terms.fisher = &strategy.fisher;
        terms.ewc_lambda = cfg.ewc_lambda;
      }

      const double lr = cosine_lr(cfg.learning_rate, step, total);
      GradMap g = model.zero_grads(sel);
      const auto L = step_objective(model, old_outputs ? &*old_outputs : nullptr, ctx.vocab,
                                    terms, sel, &g);
      opt.step(model, g, lr);
      if (moincl && fusion == FusionMode::PerStep) fuse_adapters(model, *old, alpha);
      log.steps.push_back({i, step, L.l_main, L.l_p, L.l_ins, L.aux, L.total, lr,
                           static_cast<int>(terms.pseudo.size())});
      ++step;
    }
  }

  if (i > 1 && fusion == FusionMode::EndOfTask &&
      (cfg.method == Method::Moincl || cfg.method == Method::Ewf)) {
    fuse_adapters(model, *old, alpha);
  }
  if (cfg.method == Method::Ewc) {
    auto f = estimate_fisher(model, ctx.dataset, ctx.vocab, cfg.fisher_batches, cfg.batch_size,
                             mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    for (auto& [name, imp] : f.importance) {
      auto it = strategy.fisher.importance.find(name);
      if (it == strategy.fisher.importance.end()) {
        strategy.fisher.importance.emplace(name, imp);
      } else {
        it->second += imp;
      }
    }
    for (const auto& [name, imp] : strategy.fisher.importance) {
      strategy.fisher.anchor[name] = model.at(name);
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (log.task_seconds.size() < static_cast<std::size_t>(i)) log.task_seconds.resize(static_cast<std::size_t>(i));
  log.task_seconds[static_cast<std::size_t>(i - 1)] = secs;
}

double evaluate_task(const ModelState& model, const TaskDataset& dataset, const Vocabulary& vocab,
                     int max_len) {
  if (dataset.test.empty()) throw Error("empty test split for " + dataset.descriptor.label());
  std::vector<std::string> predictions;
  std::vector<std::string> answers;
  for (const auto& s : dataset.test) {
    const auto prompt = vocab.encode(s.input_text);
    const auto out = generate_greedy(model, &s.modality_input, prompt, max_len);
    predictions.push_back(vocab.decode(out));
    answers.push_back(s.target_text);
  }
  if (dataset.descriptor.task_type == TaskType::QA) return qa_accuracy(predictions, answers);
  std::vector<std::vector<std::string>> refs;
  refs.reserve(answers.size());
  for (auto& a : answers) refs.push_back({a});
  return cider(predictions, refs).corpus * 100.0;
}

RunResult run_order(const RunConfig& cfg, const RunOptions& options) {
  cfg.validate();
  std::optional<BaseModel> own_base;
  if (options.base == nullptr) own_base = prepare_base(cfg);
  const BaseModel& base = options.base != nullptr ? *options.base : *own_base;

  std::vector<TaskDataset> own_data;
  if (options.datasets == nullptr) own_data = generate_benchmark(cfg.task_order, cfg.sizes, cfg.data_seed);
  const auto& datasets = options.datasets != nullptr ? *options.datasets : own_data;
  if (datasets.size() != cfg.task_order.size()) throw Error("dataset count does not match the task order");

  std::vector<TaskMeta> meta;
  for (const auto& t : cfg.task_order) meta.push_back({t.label(), t.task_type});
  RunResult result{base.state, ScoreMatrix(meta), {}, {}};
  result.scores.info()["method"] = std::string(to_string(cfg.method));
  result.scores.info()["seed"] = std::to_string(cfg.seed);

  if (options.out_dir) std::filesystem::create_directories(*options.out_dir);
  StrategyState strategy;
  for (std::size_t k = 0; k < cfg.task_order.size(); ++k) {
    const auto& task = cfg.task_order[k];
    const Snapshot old = snapshot(result.model);
    const LearnedState start = update_learned_state(result.learned, task, TaskPhase::Start);
    TaskContext ctx{task, datasets[k], start, cfg, base.vocab, base.instructions, options.observer};
    train_task(result.model, old, ctx, strategy, result.log);
    result.learned = update_learned_state(start, task, TaskPhase::End);

    const int step = static_cast<int>(k) + 1;
    for (int i = 1; i <= step; ++i) {
      result.scores.set(i, step,
                        evaluate_task(result.model, datasets[static_cast<std::size_t>(i - 1)],
                                      base.vocab, cfg.eval_max_len));
    }
    if (options.out_dir && options.checkpoints) {
      CheckpointManifest m{cfg.dims, base.vocab.size(), base.vocab.fingerprint(), step,
                           std::string(to_string(cfg.method))};
      save_checkpoint(*options.out_dir / ("checkpoint_task" + std::to_string(step) + ".ckpt"),
                      result.model, m);
    }
    if (options.on_task_done) options.on_task_done(step, result.scores);
  }

  if (options.out_dir) {
    write_text(*options.out_dir / "score_matrix.json", result.scores.to_json());
    write_text(*options.out_dir / "train_log.jsonl", result.log.to_jsonl());
    base.vocab.save(*options.out_dir / "vocab.txt");
    save_run_config(cfg, *options.out_dir / "config.json");
  }
  return result;
}

}  // namespace moincl
