// Copyright 2026 The tscil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tscil/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <ostream>

#include "tscil/error.hpp"
#include "tscil/random.hpp"

namespace tscil {

namespace {

struct MethodEntry {
  Method method;
  std::string_view name;
};

constexpr MethodEntry kMethods[] = {
    {Method::kFull, "FULL"},
    {Method::kFinetune, "FINETUNE"},
    {Method::kBase, "BASE"},
    {Method::kBaseUct, "BASE_UCT"},
    {Method::kSdc, "SDC"},
    {Method::kDcnS1Only, "DCN_S1_ONLY"},
    {Method::kDcnS2Only, "DCN_S2_ONLY"},
    {Method::kDcnS1LossS2, "DCN_S1LOSS_S2"},
    {Method::kDefaultNoUpdate, "DEFAULT_NO_UPDATE"},
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<Tensor> fingerprint(std::span<const Tensor> params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p.detach());
  return out;
}

std::vector<Tensor> model_sections(const ModelState& m) {
  auto out = m.backbone().weights();
  for (const auto& p : m.adapter_parameters()) out.push_back(p);
  for (const auto& p : m.heads().parameters()) out.push_back(p);
  return out;
}

Tensor gather_rows(const Tensor& m, std::span<const std::size_t> idx) {
  const std::size_t d = m.cols();
  std::vector<float> out(idx.size() * d);
  auto src = m.data();
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(src.begin() + idx[i] * d, d, out.begin() + i * d);
  return Tensor::from({idx.size(), d}, std::move(out));
}

void emit(RunLog* log, nlohmann::json e) {
  if (log) log->event(e);
}

// Stage 1: adapters + current head (+ DCN), minimizing
// L_cos + alpha L_kd + beta L_dc.
void stage1(RunState& st, const Task& task, const StrategyConfig& cfg, const MethodTraits& tr,
            RunLog* log) {
  const bool has_old = st.old_model.has_value();
  ModelState& model = st.model;
  model.set_adapters_trainable(true);
  if (tr.local_heads) {
    model.heads().set_trainable_only(task.id);
  } else {
    model.heads().set_trainable(true);
  }
  const bool use_kd = has_old && tr.kd && cfg.alpha > 0.0f;
  const bool use_dc = has_old && tr.dc_in_stage1;
  st.dcn = dcn_init(model.feature_dim());
  if (use_dc) st.dcn.set_trainable(true);

  Tensor old_features;
  if (use_kd || use_dc) old_features = extract_all(*st.old_model, task.train);

  std::vector<Tensor> frozen_heads;
  if (tr.local_heads) {
    for (const auto& h : model.heads().heads())
      if (h.task != task.id) frozen_heads.push_back(h.weights.detach());
  }

  const std::size_t n = task.train.size();
  const std::size_t bs = cfg.batch_size;
  const std::size_t batches = (n + bs - 1) / bs;
  OneCycleSgd opt(cfg.sgd(cfg.epochs_s1), std::max<std::size_t>(1, batches * cfg.epochs_s1));
  auto rng = make_rng(st.seed, 0x51000 + static_cast<std::uint64_t>(task.id));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  std::vector<TimeSeriesSample> batch;
  std::vector<ClassId> labels;
  for (std::size_t epoch = 0; epoch < cfg.epochs_s1; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum_total = 0.0, sum_cos = 0.0, sum_kd = 0.0, sum_dc = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const auto idx = std::span(order).subspan(b * bs, std::min(bs, n - b * bs));
      batch.clear();
      labels.clear();
      for (auto i : idx) {
        batch.push_back(task.train[i]);
        labels.push_back(task.train[i].label);
      }
      const Tensor f_new = model.features(batch);
      const auto& bank = model.heads();
      Tensor loss = tr.local_heads
                        ? loss_cos(f_new, labels, bank, bank.logit_scale(), bank.margin(), task.id)
                        : loss_cos_all(f_new, labels, bank, bank.logit_scale(), bank.margin());
      sum_cos += loss.item() * double(idx.size());
      Tensor f_old;
      if (use_kd || use_dc) f_old = gather_rows(old_features, idx);
      if (use_kd) {
        const Tensor kd = loss_kd(f_old, f_new);
        sum_kd += kd.item() * double(idx.size());
        loss = add(loss, scale(kd, cfg.alpha));
      }
      if (use_dc) {
        const Tensor dc = loss_dc(st.dcn, f_old, f_new);
        sum_dc += dc.item() * double(idx.size());
        loss = add(loss, scale(dc, cfg.beta));
      }
      sum_total += loss.item() * double(idx.size());

      std::vector<Tensor> params = model.adapter_parameters();
      if (tr.local_heads) {
        params.push_back(model.heads().head_for_task(task.id).weights);
      } else {
        for (const auto& p : model.heads().parameters()) params.push_back(p);
      }
      if (use_dc) params.push_back(st.dcn.weight);
      const auto grads = grad(loss, params);
      opt.step(params, grads);
    }
    emit(log, {{"event", "epoch"},
               {"stage", 1},
               {"task", task.id},
               {"epoch", epoch + 1},
               {"loss", sum_total / double(n)},
               {"loss_cos", sum_cos / double(n)},
               {"loss_kd", sum_kd / double(n)},
               {"loss_dc", sum_dc / double(n)}});
  }

  if (tr.local_heads) {
    std::vector<Tensor> now;
    for (const auto& h : model.heads().heads())
      if (h.task != task.id) now.push_back(h.weights);
    check_frozen(frozen_heads, now, "stage 1 (earlier heads)", st);
  }
  model.set_adapters_trainable(false);
  model.heads().set_trainable(false);
  if (use_dc) ++st.dcn_trainings;
}

// Stage 2: both extractors frozen, only the DCN moves.
void stage2(RunState& st, const Task& task, const StrategyConfig& cfg, const MethodTraits& tr,
            RunLog* log) {
  const auto before = fingerprint(model_sections(st.model));
  if (tr.reinit_before_stage2) st.dcn = dcn_init(st.model.feature_dim());
  DcnTrainLog dlog;
  st.dcn = train_stage2(st.dcn, *st.old_model, st.model, task.train, cfg.sgd(cfg.epochs_s2),
                        derive_seed(st.seed, 0x52000 + static_cast<std::uint64_t>(task.id)), &dlog);
  st.dcn.set_trainable(false);
  check_frozen(before, model_sections(st.model), "stage 2 (model sections)", st);
  for (std::size_t e = 0; e < dlog.epoch_losses.size(); ++e) {
    emit(log, {{"event", "epoch"},
               {"stage", 2},
               {"task", task.id},
               {"epoch", e + 1},
               {"loss", dlog.epoch_losses[e]}});
  }
  emit(log, {{"event", "stage2_done"},
             {"task", task.id},
             {"loss_before", dlog.loss_before},
             {"loss_after", dlog.loss_after}});
}

std::vector<TimeSeriesSample> concat_train(std::span<const Task> tasks) {
  std::vector<TimeSeriesSample> out;
  for (const auto& t : tasks) out.insert(out.end(), t.train.begin(), t.train.end());
  return out;
}

}  // namespace

void check_frozen(std::span<const Tensor> before, std::span<const Tensor> now,
                     const std::string& what, RunState& state) {
  if (before.size() != now.size()) throw InvariantError(what + ": parameter count changed");
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (!bit_equal(before[i], now[i])) {
      throw InvariantError(what + ": frozen parameter section " + std::to_string(i) + " changed");
    }
  }
  ++state.freeze_checks;
}

std::string_view method_name(Method m) {
  for (const auto& e : kMethods)
    if (e.method == m) return e.name;
  return "UNKNOWN";
}

std::optional<Method> parse_method(std::string_view name) {
  for (const auto& e : kMethods)
    if (e.name == name) return e.method;
  return std::nullopt;
}

std::vector<Method> all_methods() {
  std::vector<Method> out;
  for (const auto& e : kMethods) out.push_back(e.method);
  return out;
}

std::string method_names() {
  std::string out;
  for (const auto& e : kMethods) {
    if (!out.empty()) out += ", ";
    out += e.name;
  }
  return out;
}

MethodTraits method_traits(Method m) {
  MethodTraits t;
  switch (m) {
    case Method::kFull:
      t.dc_in_stage1 = true;
      t.stage2 = true;
      t.update = PrototypeUpdate::kDcn;
      t.uct = true;
      break;
    case Method::kFinetune:
      t.local_heads = false;
      t.kd = false;
      break;
    case Method::kBase:
      break;
    case Method::kBaseUct:
      t.uct = true;
      break;
    case Method::kSdc:
      t.update = PrototypeUpdate::kSdc;
      t.uct = true;
      break;
    case Method::kDcnS1Only:
      t.dc_in_stage1 = true;
      t.update = PrototypeUpdate::kDcn;
      t.uct = true;
      break;
    case Method::kDcnS2Only:
      t.stage2 = true;
      t.update = PrototypeUpdate::kDcn;
      t.uct = true;
      break;
    case Method::kDcnS1LossS2:
      t.dc_in_stage1 = true;
      t.stage2 = true;
      t.reinit_before_stage2 = true;
      t.update = PrototypeUpdate::kDcn;
      t.uct = true;
      break;
    case Method::kDefaultNoUpdate:
      // Same training as FULL; stored prototypes are left as they are.
      t.dc_in_stage1 = true;
      t.stage2 = true;
      t.uct = true;
      break;
  }
  return t;
}

void StrategyConfig::validate() const {
  require(alpha >= 0.0f && beta >= 0.0f, "StrategyConfig: alpha and beta must be non-negative");
  require(adapter_scale >= 0.0f, "StrategyConfig: adapter scale must be non-negative");
  require(logit_scale > 0.0f, "StrategyConfig: logit scale must be positive");
  require(epochs_s1 >= 1, "StrategyConfig: stage-1 epochs must be positive");
  sgd(1).validate();
}

SgdConfig StrategyConfig::sgd(std::size_t epochs) const {
  return {max_lr, batch_size, epochs, momentum};
}

void JsonlRunLog::event(const nlohmann::json& e) { os_ << e.dump() << '\n'; }

RunState make_run_state(const ModelConfig& model_cfg, const StrategyConfig& cfg,
                        std::uint64_t seed) {
  cfg.validate();
  ModelConfig mc = model_cfg;
  mc.adapter_scale = cfg.adapter_scale;
  mc.logit_scale = cfg.logit_scale;
  mc.margin = cfg.margin;
  // Backbone weights come from model_cfg.seed alone; adapters and heads
  // vary with the run seed.
  ModelState base(mc);
  std::vector<Adapter> adapters;
  for (std::size_t i = 0; i < mc.n_blocks; ++i) {
    adapters.push_back(Adapter::init(mc.embed_dim, mc.bottleneck_dim(), mc.adapter_scale,
                                     mc.adapter_init_std, derive_seed(seed, 100 + i)));
  }
  RunState st;
  st.model = ModelState(base.backbone_ptr(), std::move(adapters), HeadBank(mc.logit_scale, mc.margin));
  st.dcn = dcn_init(mc.embed_dim);
  st.dcn.set_trainable(false);
  st.seed = seed;
  st.backbone_fingerprint = fingerprint(st.model.backbone().weights());
  return st;
}

std::vector<double> evaluate_tasks(const ModelState& model, std::span<const Task> tasks) {
  std::vector<double> row;
  for (const auto& t : tasks) {
    const auto pred = predict_batch(model, t.test);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == t.test[i].label;
    row.push_back(double(correct) / double(t.test.size()));
  }
  return row;
}

HeadBank retrain_unified(const HeadBank& bank, const PrototypeStore& store,
                         std::size_t samples_per_class, const StrategyConfig& cfg,
                         std::uint64_t seed, RunLog* log) {
  if (store.empty()) throw ContractError("retrain_unified: empty prototype store");
  require(samples_per_class >= 1, "retrain_unified: S_n must be at least 1");
  const auto seen = bank.seen_classes();
  if (store.classes() != seen) {
    throw ContractError("retrain_unified: prototype store does not cover the seen classes");
  }
  HeadBank out(bank.logit_scale(), bank.margin());
  const std::size_t dim = store.at(seen.front()).dim();
  for (const auto& h : bank.heads()) {
    Tensor w = h.weights.clone();
    if (cfg.reinit_heads_for_uct) {
      auto rng = make_rng(seed, 0x3E1 + static_cast<std::uint64_t>(h.task));
      std::normal_distribution<float> normal(0.0f, 1.0f / std::sqrt(float(dim)));
      for (auto& v : w.mutable_data()) v = normal(rng);
    }
    w.set_requires_grad(true);
    out.heads().push_back({h.task, h.classes, w});
  }

  // V^t: S_n draws per class, labels are positions in the seen-class list.
  std::vector<float> feats;
  std::vector<std::size_t> labels;
  for (std::size_t k = 0; k < seen.size(); ++k) {
    const Tensor v = sample_features(store.at(seen[k]), samples_per_class,
                                     derive_seed(seed, 0x5A0000 + static_cast<std::uint64_t>(seen[k])));
    feats.insert(feats.end(), v.data().begin(), v.data().end());
    labels.insert(labels.end(), samples_per_class, k);
  }
  const std::size_t n = labels.size();
  const Tensor all = Tensor::from({n, dim}, std::move(feats));

  const std::size_t bs = cfg.batch_size;
  const std::size_t batches = (n + bs - 1) / bs;
  const std::size_t epochs = std::max<std::size_t>(1, cfg.epochs_s3);
  OneCycleSgd opt(cfg.sgd(epochs), batches * epochs);
  auto rng = make_rng(seed, 0x53000);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> batch_labels;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const auto idx = std::span(order).subspan(b * bs, std::min(bs, n - b * bs));
      batch_labels.clear();
      for (auto i : idx) batch_labels.push_back(labels[i]);
      const Tensor loss = loss_ce_unified(gather_rows(all, idx), batch_labels, out);
      total += loss.item() * double(idx.size());
      std::vector<Tensor> params = out.parameters();
      const auto grads = grad(loss, params);
      opt.step(params, grads);
    }
    emit(log, {{"event", "epoch"}, {"stage", 3}, {"epoch", epoch + 1}, {"loss", total / double(n)}});
  }
  out.set_trainable(false);
  return out;
}

void run_task(RunState& st, const Task& task, std::span<const Task> history,
              const StrategyConfig& cfg, RunLog* log) {
  cfg.validate();
  const auto seen = st.model.heads().seen_classes();
  for (ClassId c : task.classes) {
    if (std::binary_search(seen.begin(), seen.end(), c)) {
      throw ContractError("task " + std::to_string(task.id) + " repeats class " +
                          std::to_string(c) + " seen in an earlier task");
    }
  }
  require(!task.train.empty(), "run_task: task has no training data");
  require(st.old_model.has_value() == !history.empty(),
          "run_task: a previous model must exist exactly when earlier tasks exist");
  const MethodTraits tr = method_traits(cfg.method);
  const bool has_old = st.old_model.has_value();
  emit(log, {{"event", "task_start"},
             {"task", task.id},
             {"method", method_name(cfg.method)},
             {"classes", task.classes}});

  std::vector<Tensor> old_before;
  if (has_old) old_before = fingerprint(model_sections(*st.old_model));

  StageTiming timing;
  timing.task = task.id;
  st.model.heads().add_head(task.id, task.classes, st.model.feature_dim(),
                            derive_seed(st.seed, 0x4E000));

  auto t0 = Clock::now();
  stage1(st, task, cfg, tr, log);
  timing.stage1_s = seconds_since(t0);

  t0 = Clock::now();
  if (has_old && tr.stage2) {
    stage2(st, task, cfg, tr, log);
    if (!tr.dc_in_stage1) ++st.dcn_trainings;
  }
  timing.stage2_s = seconds_since(t0);

  t0 = Clock::now();
  const auto adapters_before = fingerprint(st.model.adapter_parameters());
  const Tensor dcn_before = st.dcn.weight.detach();

  // Calibrate old prototypes into the new feature space.
  if (has_old) {
    switch (tr.update) {
      case PrototypeUpdate::kDcn:
        st.store = update_with_dcn(st.store, st.dcn);
        break;
      case PrototypeUpdate::kSdc: {
        SdcReport rep;
        st.store = sdc_update(st.store, *st.old_model, st.model, task.train, cfg.sdc_kernel_sigma,
                              &rep);
        if (!rep.fallback_classes.empty()) {
          emit(log, {{"event", "sdc_fallback"},
                     {"task", task.id},
                     {"classes", rep.fallback_classes}});
        }
        break;
      }
      case PrototypeUpdate::kNone:
        break;
    }
    // D^t: metric-only access to earlier tasks' data under the new model.
    const auto old_data = concat_train(history);
    PrototypeStore real;
    const auto real_protos = compute_prototypes(st.model, old_data, task.id);
    real.merge(real_protos);
    const double dist = prototype_distance(st.store, real);
    st.drift_log.push_back(dist);
    emit(log, {{"event", "drift"}, {"task", task.id}, {"D", dist}});
  } else {
    st.drift_log.push_back(std::nullopt);
  }

  const auto fresh = compute_prototypes(st.model, task.train, task.id);
  st.store.merge(fresh);

  if (tr.uct) {
    st.model.heads() = retrain_unified(st.model.heads(), st.store, cfg.samples_per_class, cfg,
                                       derive_seed(st.seed, 0x53000 + std::uint64_t(task.id)), log);
  }
  check_frozen(adapters_before, st.model.adapter_parameters(), "stage 3 (adapters)", st);
  const Tensor dcn_after[1] = {st.dcn.weight};
  const Tensor dcn_prev[1] = {dcn_before};
  check_frozen(dcn_prev, dcn_after, "stage 3 (dcn)", st);
  timing.stage3_s = seconds_since(t0);

  check_frozen(st.backbone_fingerprint, st.model.backbone().weights(), "backbone", st);
  if (has_old) check_frozen(old_before, model_sections(*st.old_model), "previous model", st);

  st.old_model = st.model.snapshot();
  st.timings.push_back(timing);
  emit(log, {{"event", "task_end"},
             {"task", task.id},
             {"stage1_s", timing.stage1_s},
             {"stage2_s", timing.stage2_s},
             {"stage3_s", timing.stage3_s}});
}

RunReport run_stream(const TaskStream& stream, const ModelConfig& model_cfg,
                     const StrategyConfig& cfg, std::uint64_t seed, RunLog* log) {
  validate_stream(stream);
  require(!stream.tasks.empty(), "run_stream: empty task stream");
  RunState st = make_run_state(model_cfg, cfg, seed);
  emit(log, {{"event", "run_start"},
             {"method", method_name(cfg.method)},
             {"seed", seed},
             {"tasks", stream.tasks.size()}});
  const std::span<const Task> tasks(stream.tasks);
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    run_task(st, tasks[t], tasks.subspan(0, t), cfg, log);
    auto row = evaluate_tasks(st.model, tasks.subspan(0, t + 1));
    emit(log, {{"event", "accuracy"}, {"task", t + 1}, {"row", row}});
    st.accuracy.append_row(std::move(row));
  }
  RunReport r;
  r.config = cfg;
  r.seed = seed;
  r.accuracy = st.accuracy;
  r.metrics = summarize(st.accuracy);
  r.drift = st.drift_log;
  r.dcn_trainings = st.dcn_trainings;
  r.freeze_checks = st.freeze_checks;
  r.timings = st.timings;
  emit(log, {{"event", "run_end"},
             {"method", method_name(cfg.method)},
             {"A_T", r.metrics.final_accuracy},
             {"A_cur", r.metrics.learning_accuracy}});
  return r;
}

std::vector<SweepPoint> sweep(std::span<const float> scales, std::span<const float> alphas,
                              const TaskStream& stream, const ModelConfig& model_cfg,
                              const StrategyConfig& base, std::uint64_t seed, RunLog* log) {
  require(!scales.empty() && !alphas.empty(), "sweep: empty grid");
  std::vector<SweepPoint> out;
  for (float s : scales) {
    for (float a : alphas) {
      StrategyConfig cfg = base;
      cfg.adapter_scale = s;
      cfg.alpha = a;
      out.push_back({s, a, run_stream(stream, model_cfg, cfg, seed, log)});
    }
  }
  return out;
}

}  // namespace tscil
