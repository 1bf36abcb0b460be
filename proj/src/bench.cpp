#include "axis/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "axis/calibrate.hpp"
#include "axis/container.hpp"
#include "axis/perturb.hpp"
#include "axis/rng.hpp"

namespace axis::bench {

namespace {

void apply_transform(const TaskTransform& t, std::vector<double>& x) {
  for (const auto& rot : t.rotations) {
    const double c = std::cos(rot.angle);
    const double s = std::sin(rot.angle);
    const double xi = x[rot.i];
    const double xj = x[rot.j];
    x[rot.i] = c * xi - s * xj;
    x[rot.j] = s * xi + c * xj;
  }
}

std::vector<TaskTransform::PlaneRotation> draw_planes(
    axis::rng::Xoshiro256& gen, std::size_t count, std::size_t dim,
    double angle) {
  std::vector<TaskTransform::PlaneRotation> out;
  for (std::size_t p = 0; p < count; ++p) {
    const auto i = static_cast<std::size_t>(rng::uniform_below(gen, dim));
    auto j = static_cast<std::size_t>(rng::uniform_below(gen, dim - 1));
    if (j >= i) ++j;
    out.push_back({i, j, angle});
  }
  return out;
}

Dataset draw_dataset(const FamilyConfig& cfg, const Matrix& prototypes,
                     const TaskTransform& transform, std::size_t samples,
                     std::uint64_t stream_seed) {
  rng::Xoshiro256 gen(stream_seed);
  Dataset data;
  data.inputs = Matrix(samples, cfg.input_dim);
  data.labels.resize(samples);
  std::vector<double> x(cfg.input_dim);
  for (std::size_t row = 0; row < samples; ++row) {
    const auto label =
        static_cast<std::size_t>(rng::uniform_below(gen, cfg.classes));
    data.labels[row] = label;
    for (std::size_t c = 0; c < cfg.input_dim; ++c) {
      x[c] = prototypes(label, c) + cfg.noise_std * rng::normal(gen);
    }
    apply_transform(transform, x);
    // Shifts act in observed-input space, after the rotation.
    for (std::size_t c = 0; c < cfg.input_dim; ++c) {
      const double shift =
          transform.shifts.empty()
              ? 0.0
              : transform.shifts[label * cfg.input_dim + c];
      data.inputs(row, c) = x[c] + shift;
    }
  }
  return data;
}

}  // namespace

TaskFamily gen_tasks(const FamilyConfig& cfg) {
  if (cfg.tasks < 2 || cfg.input_dim < 2 || cfg.classes < 2 ||
      cfg.train_samples < 1 || cfg.test_samples < 1) {
    throw Error(ErrorCode::InvalidInput, "degenerate family configuration");
  }

  TaskFamily family;
  family.config = cfg;

  rng::Xoshiro256 proto_gen(rng::derive_seed(cfg.seed, "prototypes"));
  family.prototypes = Matrix(cfg.classes, cfg.input_dim);
  for (double& v : family.prototypes.data()) {
    v = cfg.prototype_scale * rng::normal(proto_gen);
  }

  rng::Xoshiro256 shared_gen(rng::derive_seed(cfg.seed, "shared_structure"));
  const auto shared_planes =
      draw_planes(shared_gen, cfg.shared_rotation_planes, cfg.input_dim,
                  cfg.shared_rotation_angle);
  std::vector<double> concept_dir(cfg.input_dim, 0.0);
  double dir_norm = 0.0;
  for (double& v : concept_dir) {
    v = rng::normal(shared_gen);
    dir_norm += v * v;
  }
  dir_norm = std::sqrt(dir_norm);
  for (double& v : concept_dir) v /= dir_norm;
  std::vector<double> concept_coef(cfg.classes);
  for (double& s : concept_coef) {
    s = rng::uniform_below(shared_gen, 2) == 0 ? -1.0 : 1.0;
  }

  std::vector<TaskTransform> transforms;
  for (std::size_t t = 0; t < cfg.tasks; ++t) {
    rng::Xoshiro256 gen(
        rng::derive_seed(cfg.seed, "transform" + std::to_string(t)));
    TaskTransform transform;
    transform.rotations =
        draw_planes(gen, cfg.rotation_planes, cfg.input_dim, cfg.rotation_angle);
    const double angle_scale =
        1.0 + cfg.shared_rotation_spread * (2.0 * rng::uniform_double(gen) - 1.0);
    for (TaskTransform::PlaneRotation rot : shared_planes) {
      rot.angle *= angle_scale;
      transform.rotations.push_back(rot);
    }
    const double concept_mag =
        cfg.concept_shift_scale *
        (1.0 + cfg.concept_shift_spread * (2.0 * rng::uniform_double(gen) - 1.0));
    transform.shifts.resize(cfg.classes * cfg.input_dim);
    for (std::size_t c = 0; c < cfg.classes; ++c) {
      for (std::size_t k = 0; k < cfg.input_dim; ++k) {
        transform.shifts[c * cfg.input_dim + k] =
            cfg.prototype_shift * rng::normal(gen) +
            concept_mag * concept_coef[c] * concept_dir[k];
      }
    }
    transforms.push_back(std::move(transform));
  }
  if (cfg.force_identical) {
    for (std::size_t t = 1; t < cfg.tasks; ++t) transforms[t] = transforms[0];
  }

  for (std::size_t t = 0; t < cfg.tasks; ++t) {
    TaskData task;
    task.transform = transforms[t];
    task.train = draw_dataset(
        cfg, family.prototypes, task.transform, cfg.train_samples,
        rng::derive_seed(cfg.seed, "train" + std::to_string(t)));
    task.test = draw_dataset(
        cfg, family.prototypes, task.transform, cfg.test_samples,
        rng::derive_seed(cfg.seed, "test" + std::to_string(t)));
    family.tasks.push_back(std::move(task));
  }
  return family;
}

Dataset base_dataset(const TaskFamily& family, std::size_t samples,
                     const std::string& stream) {
  TaskTransform identity;
  return draw_dataset(family.config, family.prototypes, identity, samples,
                      rng::derive_seed(family.config.seed, stream));
}

ParamSet sgd_full(const MlpSpec& spec, const ParamSet& start,
                  const Dataset& data, const TrainConfig& cfg) {
  if (data.inputs.rows() == 0) {
    throw Error(ErrorCode::EmptyInput, "empty training set");
  }
  ParamSet params = start;
  const std::size_t num_samples = data.inputs.rows();
  const std::size_t d_in = data.inputs.cols();
  std::vector<std::size_t> order(num_samples);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng::Xoshiro256 gen(rng::derive_seed(cfg.seed, epoch));
    rng::shuffle(order, gen);
    for (std::size_t start_idx = 0; start_idx < num_samples;
         start_idx += cfg.batch_size) {
      const std::size_t stop = std::min(start_idx + cfg.batch_size, num_samples);
      Batch batch;
      batch.inputs = Matrix(stop - start_idx, d_in);
      batch.labels.resize(stop - start_idx);
      for (std::size_t i = start_idx; i < stop; ++i) {
        for (std::size_t c = 0; c < d_in; ++c) {
          batch.inputs(i - start_idx, c) = data.inputs(order[i], c);
        }
        batch.labels[i - start_idx] = data.labels[order[i]];
      }
      const LossGrads lg = loss_and_grads(spec, params, batch);
      if (!std::isfinite(lg.loss)) {
        throw Error(ErrorCode::DivergenceDetected,
                    "non-finite loss at epoch " + std::to_string(epoch));
      }
      ParamSet next;
      for (const auto& [name, tensor] : params.entries()) {
        Tensor updated = tensor;
        auto git = lg.grads.find(name);
        if (git != lg.grads.end()) {
          for (std::size_t i = 0; i < updated.values.size(); ++i) {
            updated.values[i] -= cfg.learning_rate * git->second.values[i];
          }
        }
        next.insert(name, std::move(updated));
      }
      params = std::move(next);
    }
  }
  return params;
}

FinetuneResult finetune_sources(const TaskFamily& family,
                                const ParamSet& theta_pre, const MlpSpec& spec,
                                const TrainConfig& cfg) {
  FinetuneResult result;
  for (std::size_t t = 0; t < family.tasks.size(); ++t) {
    const std::string source_id = "task" + std::to_string(t);
    TrainConfig task_cfg = cfg;
    task_cfg.seed = rng::derive_seed(cfg.seed, "finetune" + std::to_string(t));
    try {
      const ParamSet tuned =
          sgd_full(spec, theta_pre, family.tasks[t].train, task_cfg);
      if (cfg.epochs > 0) {
        const double acc = evaluate(spec, tuned, family.tasks[t].train);
        if (acc < 0.9) {
          char buf[128];
          std::snprintf(buf, sizeof(buf),
                        "source %zu train accuracy %.4f below 0.9", t, acc);
          result.warnings.push_back(buf);
        }
      }
      result.vectors.push_back(task_vector(tuned, theta_pre, source_id));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DivergenceDetected) throw;
      result.warnings.push_back("source " + std::to_string(t) +
                                " diverged: " + e.what());
      result.vectors.push_back(task_vector(theta_pre, theta_pre, source_id));
    }
  }
  return result;
}

BenchConfig BenchConfig::from_config(const Config& cfg) {
  BenchConfig out;
  out.family.tasks = static_cast<std::size_t>(cfg.get_int("tasks", 6));
  out.family.input_dim = static_cast<std::size_t>(cfg.get_int("input_dim", 64));
  out.family.classes = static_cast<std::size_t>(cfg.get_int("classes", 8));
  out.family.train_samples =
      static_cast<std::size_t>(cfg.get_int("train_samples", 2000));
  out.family.test_samples =
      static_cast<std::size_t>(cfg.get_int("test_samples", 500));
  out.family.seed = cfg.get_seed("seed", 42);
  const FamilyConfig defaults;
  out.family.prototype_scale =
      cfg.get_double("prototype_scale", defaults.prototype_scale);
  out.family.noise_std = cfg.get_double("noise_std", defaults.noise_std);
  out.family.prototype_shift =
      cfg.get_double("prototype_shift", defaults.prototype_shift);
  out.family.rotation_planes = static_cast<std::size_t>(
      cfg.get_int("rotation_planes", defaults.rotation_planes));
  out.family.rotation_angle =
      cfg.get_double("rotation_angle", defaults.rotation_angle);
  out.family.shared_rotation_planes = static_cast<std::size_t>(
      cfg.get_int("shared_rotation_planes", defaults.shared_rotation_planes));
  out.family.shared_rotation_angle = cfg.get_double(
      "shared_rotation_angle", defaults.shared_rotation_angle);
  out.family.shared_rotation_spread = cfg.get_double(
      "shared_rotation_spread", defaults.shared_rotation_spread);
  out.family.concept_shift_scale =
      cfg.get_double("concept_shift_scale", defaults.concept_shift_scale);
  out.family.concept_shift_spread =
      cfg.get_double("concept_shift_spread", defaults.concept_shift_spread);
  out.family.force_identical = cfg.get_bool("force_identical", false);

  out.hidden_dims = cfg.get_counts("hidden_dims", {64, 32});

  out.pretrain_samples =
      static_cast<std::size_t>(cfg.get_int("pretrain_samples", 4000));
  out.pretrain_epochs =
      static_cast<std::size_t>(cfg.get_int("pretrain_epochs", 4));
  out.pretrain_lr = cfg.get_double("pretrain_lr", 0.05);
  out.pretrain_batch = static_cast<std::size_t>(cfg.get_int("pretrain_batch", 32));

  out.finetune_epochs =
      static_cast<std::size_t>(cfg.get_int("finetune_epochs", 10));
  out.finetune_lr = cfg.get_double("finetune_lr", 0.05);
  out.finetune_batch = static_cast<std::size_t>(cfg.get_int("finetune_batch", 32));

  out.strategy = cfg.get_string("strategy", "top");
  out.k = cfg.get_string("k", "0.10");
  out.rank_tol = cfg.get_double("rank_tol", 1e-10);
  out.skip_final_svd = cfg.get_bool("skip_final_svd", false);
  out.rescale = cfg.get_bool("rescale", true);

  out.n_fraction = cfg.get_double("n_fraction", 0.10);
  out.epochs = static_cast<std::size_t>(cfg.get_int("epochs", 10));
  out.lr = cfg.get_double("lr", 0.1);
  out.batch_size = static_cast<std::size_t>(cfg.get_int("batch_size", 32));

  if (cfg.contains("source_counts")) {
    out.source_counts = cfg.get_counts("source_counts", {});
  }
  out.train_fraction = cfg.get_double("train_fraction", 1.0);
  out.perturbation = cfg.get_string("perturbation", "none");
  out.corrupt_ratio = cfg.get_double("corrupt_ratio", 0.5);
  out.corrupt_index = static_cast<std::size_t>(cfg.get_int("corrupt_index", 0));
  out.prune_sparsity = cfg.get_double("prune_sparsity", 0.95);
  out.patch_size = static_cast<std::size_t>(cfg.get_int("patch_size", 8));
  out.patch_fraction = cfg.get_double("patch_fraction", 0.3);
  out.measure_time = cfg.get_bool("measure_time", true);

  if (out.perturbation != "none" && out.perturbation != "corrupt_one" &&
      out.perturbation != "prune_all" && out.perturbation != "patch_dropout") {
    throw Error(ErrorCode::InvalidInput,
                "unknown perturbation: " + out.perturbation);
  }
  return out;
}

MlpSpec BenchConfig::mlp_spec() const {
  MlpSpec spec;
  spec.layer_dims.push_back(family.input_dim);
  for (std::size_t h : hidden_dims) spec.layer_dims.push_back(h);
  spec.layer_dims.push_back(family.classes);
  spec.validate();
  return spec;
}

std::map<std::string, std::string> BenchConfig::echo() const {
  auto fmt_double = [](double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
  };
  auto fmt_counts = [](const std::vector<std::size_t>& counts) {
    std::string out;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      out += (i ? "," : "") + std::to_string(counts[i]);
    }
    return out;
  };
  std::map<std::string, std::string> echo;
  echo["tasks"] = std::to_string(family.tasks);
  echo["input_dim"] = std::to_string(family.input_dim);
  echo["classes"] = std::to_string(family.classes);
  echo["train_samples"] = std::to_string(family.train_samples);
  echo["test_samples"] = std::to_string(family.test_samples);
  echo["seed"] = std::to_string(family.seed);
  echo["prototype_scale"] = fmt_double(family.prototype_scale);
  echo["noise_std"] = fmt_double(family.noise_std);
  echo["prototype_shift"] = fmt_double(family.prototype_shift);
  echo["rotation_planes"] = std::to_string(family.rotation_planes);
  echo["rotation_angle"] = fmt_double(family.rotation_angle);
  echo["shared_rotation_planes"] = std::to_string(family.shared_rotation_planes);
  echo["shared_rotation_angle"] = fmt_double(family.shared_rotation_angle);
  echo["shared_rotation_spread"] = fmt_double(family.shared_rotation_spread);
  echo["concept_shift_scale"] = fmt_double(family.concept_shift_scale);
  echo["concept_shift_spread"] = fmt_double(family.concept_shift_spread);
  echo["force_identical"] = family.force_identical ? "true" : "false";
  echo["hidden_dims"] = fmt_counts(hidden_dims);
  echo["pretrain_samples"] = std::to_string(pretrain_samples);
  echo["pretrain_epochs"] = std::to_string(pretrain_epochs);
  echo["pretrain_lr"] = fmt_double(pretrain_lr);
  echo["pretrain_batch"] = std::to_string(pretrain_batch);
  echo["finetune_epochs"] = std::to_string(finetune_epochs);
  echo["finetune_lr"] = fmt_double(finetune_lr);
  echo["finetune_batch"] = std::to_string(finetune_batch);
  echo["strategy"] = strategy;
  echo["k"] = k;
  echo["rank_tol"] = fmt_double(rank_tol);
  echo["skip_final_svd"] = skip_final_svd ? "true" : "false";
  echo["rescale"] = rescale ? "true" : "false";
  echo["n_fraction"] = fmt_double(n_fraction);
  echo["epochs"] = std::to_string(epochs);
  echo["lr"] = fmt_double(lr);
  echo["batch_size"] = std::to_string(batch_size);
  echo["source_counts"] = source_counts.empty() ? "all" : fmt_counts(source_counts);
  echo["train_fraction"] = fmt_double(train_fraction);
  echo["perturbation"] = perturbation;
  echo["corrupt_ratio"] = fmt_double(corrupt_ratio);
  echo["corrupt_index"] = std::to_string(corrupt_index);
  echo["prune_sparsity"] = fmt_double(prune_sparsity);
  echo["patch_size"] = std::to_string(patch_size);
  echo["patch_fraction"] = fmt_double(patch_fraction);
  echo["measure_time"] = measure_time ? "true" : "false";
  return echo;
}

namespace {

Dataset subsample(const Dataset& data, double fraction, std::uint64_t seed) {
  if (fraction >= 1.0) return data;
  if (!(fraction > 0.0)) {
    throw Error(ErrorCode::InvalidInput, "train_fraction must be in (0, 1]");
  }
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(
             fraction * static_cast<double>(data.inputs.rows()))));
  rng::Xoshiro256 gen(seed);
  const auto picked = rng::sample_indices(gen, data.inputs.rows(), keep);
  Dataset out;
  out.inputs = Matrix(picked.size(), data.inputs.cols());
  out.labels.resize(picked.size());
  for (std::size_t i = 0; i < picked.size(); ++i) {
    for (std::size_t c = 0; c < data.inputs.cols(); ++c) {
      out.inputs(i, c) = data.inputs(picked[i], c);
    }
    out.labels[i] = data.labels[picked[i]];
  }
  return out;
}

TaskVector mean_task_vector(const std::vector<TaskVector>& sources) {
  TaskVector mean = sources.front();
  mean.source_id = "mean";
  for (auto& [name, tensor] : mean.entries) {
    std::fill(tensor.values.begin(), tensor.values.end(), 0.0);
    for (const TaskVector& tv : sources) {
      const Tensor& src = tv.entries.at(name);
      for (std::size_t i = 0; i < tensor.values.size(); ++i) {
        tensor.values[i] += src.values[i];
      }
    }
    const double inv = 1.0 / static_cast<double>(sources.size());
    for (double& v : tensor.values) v *= inv;
  }
  return mean;
}

ParamSet apply_task_vector(const ParamSet& theta_pre, const TaskVector& tv,
                           double scale) {
  std::map<std::string, Matrix> matrix_deltas;
  std::map<std::string, Tensor> vector_deltas;
  for (const auto& [name, tensor] : tv.entries) {
    if (tensor.kind == Kind::MatrixKind) {
      matrix_deltas.emplace(name, tensor.as_matrix());
    } else {
      vector_deltas.emplace(name, tensor);
    }
  }
  return apply_delta(theta_pre, matrix_deltas, vector_deltas, scale);
}

}  // namespace

RunReport leave_one_out(const TaskFamily& family, const ParamSet& theta_pre,
                        const MlpSpec& spec, const BenchConfig& cfg,
                        BenchArtifacts* artifacts) {
  if (family.tasks.size() < 2) {
    throw Error(ErrorCode::InvalidInput, "leave-one-out needs >= 2 tasks");
  }
  const std::size_t num_tasks = family.tasks.size();
  const std::uint64_t seed = family.config.seed;

  TrainConfig ft_cfg;
  ft_cfg.epochs = cfg.finetune_epochs;
  ft_cfg.learning_rate = cfg.finetune_lr;
  ft_cfg.batch_size = cfg.finetune_batch;
  ft_cfg.seed = seed;
  const FinetuneResult tuned = finetune_sources(family, theta_pre, spec, ft_cfg);
  if (artifacts != nullptr) {
    artifacts->task_vectors = tuned.vectors;
    artifacts->finetune_warnings = tuned.warnings;
  }

  std::vector<std::size_t> counts = cfg.source_counts;
  if (counts.empty()) {
    for (std::size_t n = 1; n < num_tasks; ++n) counts.push_back(n);
  }
  for (std::size_t n : counts) {
    if (n < 1 || n > num_tasks - 1) {
      throw Error(ErrorCode::InvalidInput,
                  "source count out of range: " + std::to_string(n));
    }
  }

  const SelectionStrategy strategy = parse_strategy(cfg.strategy);
  const KSpec kspec = KSpec::parse(cfg.k);

  RunReport report;
  report.config_echo = cfg.echo();

  for (std::size_t target = 0; target < num_tasks; ++target) {
    const std::string target_name = "task" + std::to_string(target);

    // Sources: every other task, in fixed index order.
    std::vector<TaskVector> sources;
    for (std::size_t t = 0; t < num_tasks; ++t) {
      if (t != target) sources.push_back(tuned.vectors[t]);
    }
    if (cfg.perturbation == "corrupt_one") {
      const std::size_t idx = std::min(cfg.corrupt_index, sources.size() - 1);
      sources[idx] = gaussian_corrupt(sources[idx], cfg.corrupt_ratio,
                                      rng::derive_seed(seed, "corrupt"));
    } else if (cfg.perturbation == "prune_all") {
      for (TaskVector& tv : sources) {
        tv = magnitude_prune(tv, cfg.prune_sparsity);
      }
    }

    Dataset test = family.tasks[target].test;
    if (cfg.perturbation == "patch_dropout") {
      test = patch_dropout(test, cfg.patch_size, cfg.patch_fraction,
                           rng::derive_seed(seed, "patch"));
    }
    const Dataset train_data = subsample(
        family.tasks[target].train, cfg.train_fraction,
        rng::derive_seed(seed, "subsample" + std::to_string(target)));

    RunRow pre_row;
    pre_row.target = target_name;
    pre_row.num_sources = 0;
    pre_row.strategy = "pretrained";
    pre_row.k = "-";
    pre_row.n_fraction = 0.0;
    pre_row.perturbation = cfg.perturbation;
    pre_row.zero_shot_acc = evaluate(spec, theta_pre, test);
    pre_row.adapted_acc = std::nan("");
    report.rows.push_back(pre_row);

    RunRow mean_row = pre_row;
    mean_row.num_sources = sources.size();
    mean_row.strategy = "mean_merge";
    mean_row.zero_shot_acc = evaluate(
        spec, apply_task_vector(theta_pre, mean_task_vector(sources), 1.0),
        test);
    report.rows.push_back(mean_row);

    for (std::size_t n_src : counts) {
      const std::vector<TaskVector> subset(sources.begin(),
                                           sources.begin() + n_src);
      const std::uint64_t run_key = target * 4096 + n_src;
      MergedDelta merged = merge_pipeline(
          subset, strategy, kspec, cfg.rank_tol, cfg.skip_final_svd,
          rng::derive_seed(rng::derive_seed(seed, "merge"), run_key));
      if (cfg.rescale) {
        merged = spectral_rescale(merged, theta_pre).merged;
      }
      AdaptState state = split_learnable(merged, cfg.n_fraction);

      RunRow row;
      row.target = target_name;
      row.num_sources = n_src;
      row.strategy = cfg.strategy;
      row.k = cfg.k;
      row.n_fraction = cfg.n_fraction;
      row.perturbation = cfg.perturbation;
      row.learnable_params = state.learnable_count();
      row.zero_shot_acc = evaluate(spec, assemble_weights(state, theta_pre), test);

      TrainConfig adapt_cfg;
      adapt_cfg.epochs = cfg.epochs;
      adapt_cfg.learning_rate = cfg.lr;
      adapt_cfg.batch_size = cfg.batch_size;
      adapt_cfg.seed = rng::derive_seed(rng::derive_seed(seed, "adapt"), run_key);

      const auto start = std::chrono::steady_clock::now();
      const TrainResult trained =
          axis::train(state, theta_pre, spec, train_data, nullptr, adapt_cfg);
      const auto stop = std::chrono::steady_clock::now();
      row.wall_time_s =
          cfg.measure_time
              ? std::chrono::duration<double>(stop - start).count()
              : 0.0;
      row.adapted_acc =
          evaluate(spec, assemble_weights(trained.state, theta_pre), test);
      report.rows.push_back(row);
    }
  }
  return report;
}

namespace {

std::string csv_double(double v) {
  if (std::isnan(v)) return "";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

void write_report_csv(const RunReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot open " + path);
  }
  out << "target_task,num_sources,strategy,k,n_fraction,perturbation,"
         "zero_shot_acc,adapted_acc,wall_time,learnable_param_count\n";
  for (const RunRow& row : report.rows) {
    out << row.target << ',' << row.num_sources << ',' << row.strategy << ','
        << row.k << ',' << csv_double(row.n_fraction) << ','
        << row.perturbation << ',' << csv_double(row.zero_shot_acc) << ','
        << csv_double(row.adapted_acc) << ',' << csv_double(row.wall_time_s)
        << ',' << row.learnable_params << '\n';
  }
  if (!out.flush()) {
    throw Error(ErrorCode::IoError, "write failed: " + path);
  }
}

void write_report_json(const RunReport& report, const std::string& path) {
  nlohmann::json doc;
  doc["config"] = report.config_echo;
  nlohmann::json rows = nlohmann::json::array();
  for (const RunRow& row : report.rows) {
    nlohmann::json r;
    r["target_task"] = row.target;
    r["num_sources"] = row.num_sources;
    r["strategy"] = row.strategy;
    r["k"] = row.k;
    r["n_fraction"] = row.n_fraction;
    r["perturbation"] = row.perturbation;
    r["zero_shot_acc"] = row.zero_shot_acc;
    if (std::isnan(row.adapted_acc)) {
      r["adapted_acc"] = nullptr;
    } else {
      r["adapted_acc"] = row.adapted_acc;
    }
    r["wall_time"] = row.wall_time_s;
    r["learnable_param_count"] = row.learnable_params;
    rows.push_back(std::move(r));
  }
  doc["rows"] = std::move(rows);
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot open " + path);
  }
  out << doc.dump(2) << '\n';
  if (!out.flush()) {
    throw Error(ErrorCode::IoError, "write failed: " + path);
  }
}

void run_bench(const BenchConfig& cfg, const std::string& out_dir,
               bool export_artifacts) {
  std::filesystem::path dir(out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorCode::IoError, "cannot create directory: " + out_dir);
  }

  const TaskFamily family = gen_tasks(cfg.family);
  const MlpSpec spec = cfg.mlp_spec();

  const Dataset pretrain_data =
      base_dataset(family, cfg.pretrain_samples, "pretrain");
  TrainConfig pre_cfg;
  pre_cfg.epochs = cfg.pretrain_epochs;
  pre_cfg.learning_rate = cfg.pretrain_lr;
  pre_cfg.batch_size = cfg.pretrain_batch;
  pre_cfg.seed = rng::derive_seed(cfg.family.seed, "pretrain_sgd");
  const ParamSet theta_pre =
      sgd_full(spec, spec.init_params(rng::derive_seed(cfg.family.seed, "init")),
               pretrain_data, pre_cfg);

  BenchArtifacts artifacts;
  const RunReport report =
      leave_one_out(family, theta_pre, spec, cfg, &artifacts);
  write_report_csv(report, (dir / "report.csv").string());
  write_report_json(report, (dir / "report.json").string());

  if (export_artifacts) {
    io::write_container((dir / "pretrained.axtc").string(),
                        io::to_doc(theta_pre));
    for (std::size_t t = 0; t < artifacts.task_vectors.size(); ++t) {
      io::write_container(
          (dir / ("tv_task" + std::to_string(t) + ".axtc")).string(),
          io::to_doc(artifacts.task_vectors[t]));
    }
  }
  for (const std::string& w : artifacts.finetune_warnings) {
    std::fprintf(stderr, "warning: %s\n", w.c_str());
  }
}

}  // namespace axis::bench
