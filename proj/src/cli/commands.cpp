#include "flipbound/adversarial.hpp"
#include "flipbound/checkpoint.hpp"
#include "flipbound/cli.hpp"
#include "flipbound/csv.hpp"
#include "flipbound/features.hpp"
#include "flipbound/flip.hpp"
#include "flipbound/parallel.hpp"
#include "flipbound/path.hpp"
#include "flipbound/region.hpp"
#include "flipbound/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>

namespace flipbound::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kSelectorFile = "selector.txt";
constexpr const char* kCheckpointFile = "checkpoint.bin";
constexpr const char* kFlipPointsFile = "flip_points.csv";
constexpr const char* kBatchProducer = "CIFAR-10 binary batches (download them or run flipbound-surrogate)";

const std::vector<std::string>& batch_files() {
  static const std::vector<std::string> files{"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
                                              "data_batch_4.bin", "data_batch_5.bin", "test_batch.bin"};
  return files;
}

fs::path split_file(const ExperimentConfig& cfg, const std::string& split) { return cfg.out_dir / (split + ".csv"); }

void require(const fs::path& file, const std::string& producer) {
  if (!fs::is_regular_file(file)) throw DependencyError(file, producer);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

TrainConfig train_config(const ExperimentConfig& cfg) {
  TrainConfig tc;
  tc.learning_rate = cfg.learning_rate;
  tc.dropout_rate = cfg.dropout_rate;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.seed = stage_seed(cfg.seed, "train");
  tc.adam_beta1 = cfg.adam_beta1;
  tc.adam_beta2 = cfg.adam_beta2;
  tc.adam_eps = cfg.adam_eps;
  tc.train_sigma = cfg.train_sigma;
  return tc;
}

// Re-reads the raw image behind a "<file>:<record>" provenance tag.
std::optional<ImageTensor> raw_image(const ExperimentConfig& cfg, const std::string& provenance) {
  const auto colon = provenance.rfind(':');
  if (colon == std::string::npos) return std::nullopt;
  const fs::path file = cfg.data_dir / provenance.substr(0, colon);
  require(file, kBatchProducer);
  const auto record = static_cast<std::size_t>(std::stoull(provenance.substr(colon + 1)));
  std::ifstream in(file, std::ios::binary);
  in.seekg(static_cast<std::streamoff>(record * kCifarRecordBytes));
  std::vector<std::uint8_t> bytes(kCifarRecordBytes);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw FormatError(file.string() + ": record " + std::to_string(record) + " at byte offset " +
                      std::to_string(record * kCifarRecordBytes) + " is truncated");
  }
  const int label = bytes[0];
  const LabeledImages one = load_cifar_batch(bytes, {label, (label + 1) % 10});
  return one.images.front();
}

std::vector<Index> ids_prefix(const Dataset& data, long count) {
  std::vector<Index> ids(static_cast<std::size_t>(std::min<Index>(data.size(), count)));
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<Index>(i);
  return ids;
}

void write_ppm(const ImageTensor& image, const fs::path& path) {
  auto out = open_out(path);
  out << "P6\n" << kImageSide << ' ' << kImageSide << "\n255\n";
  for (Index r = 0; r < kImageSide; ++r) {
    for (Index c = 0; c < kImageSide; ++c) {
      for (Index ch = 0; ch < kImageChannels; ++ch) {
        const double v = std::clamp(image.at(r, c, ch), 0.0, 1.0);
        out.put(static_cast<char>(std::lround(255.0 * v)));
      }
    }
  }
}

struct StoredFlip {
  Index id = 0;
  FlipResult result;
};

void save_flip_points(const std::vector<StoredFlip>& flips, Index dim, const fs::path& path) {
  auto out = open_out(path);
  out << "id,status,distance";
  for (Index j = 0; j < dim; ++j) out << ",p" << j;
  out << '\n';
  for (const StoredFlip& f : flips) {
    out << f.id << ',' << to_string(f.result.status) << ',' << format_double(f.result.distance);
    for (Index j = 0; j < f.result.point.size(); ++j) out << ',' << format_double(f.result.point[j]);
    out << '\n';
  }
}

std::vector<StoredFlip> load_flip_points(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<StoredFlip> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < 3) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": too few fields");
    StoredFlip f;
    f.id = std::stol(fields[0]);
    f.result.status = fields[1] == to_string(FlipStatus::converged)        ? FlipStatus::converged
                      : fields[1] == to_string(FlipStatus::box_exit)       ? FlipStatus::box_exit
                      : fields[1] == to_string(FlipStatus::bracket_failed) ? FlipStatus::bracket_failed
                                                                           : FlipStatus::local_stationary;
    f.result.distance = parse_double(fields[2]);
    f.result.point.resize(static_cast<Index>(fields.size() - 3));
    for (std::size_t j = 3; j < fields.size(); ++j) f.result.point[static_cast<Index>(j - 3)] = parse_double(fields[j]);
    out.push_back(std::move(f));
  }
  return out;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::vector<fs::path> cmd_prepare(const ExperimentConfig& cfg, std::ostream& log) {
  for (const auto& name : batch_files()) require(cfg.data_dir / name, kBatchProducer);
  const std::pair<int, int> classes{cfg.class0, cfg.class1};

  std::vector<ImageTensor> train_images;
  std::vector<int> train_labels;
  std::vector<std::string> train_source;
  for (std::size_t b = 0; b + 1 < batch_files().size(); ++b) {
    LabeledImages batch = load_cifar_file((cfg.data_dir / batch_files()[b]).string(), classes);
    for (std::size_t i = 0; i < batch.images.size(); ++i) {
      train_images.push_back(std::move(batch.images[i]));
      train_labels.push_back(batch.labels[i]);
      train_source.push_back(batch_files()[b] + ":" + std::to_string(batch.records[i]));
    }
  }
  LabeledImages test = load_cifar_file((cfg.data_dir / batch_files().back()).string(), classes);
  if (train_images.empty()) throw InvalidInput("no training images of the configured classes in " + cfg.data_dir.string());
  log << "prepare: " << train_images.size() << " train and " << test.images.size() << " test images\n";

  // Selection sees the training set only.
  const CoefficientSelector sel = select_coefficients(coefficient_matrix(train_images), cfg.k);

  Dataset train = make_dataset(train_images, train_labels, sel);
  train.provenance = std::move(train_source);
  Dataset test_data = make_dataset(test.images, test.labels, sel);
  for (std::size_t r : test.records) test_data.provenance.push_back(batch_files().back() + ":" + std::to_string(r));
  train.class_names = test_data.class_names = {cfg.class0_name, cfg.class1_name};

  fs::create_directories(cfg.out_dir);
  const fs::path sel_path = cfg.out_dir / kSelectorFile;
  save_selector(sel, sel_path.string());
  save_dataset_csv(train, split_file(cfg, "train").string());
  save_dataset_csv(test_data, split_file(cfg, "test").string());
  return {sel_path, split_file(cfg, "train"), split_file(cfg, "test")};
}

std::vector<fs::path> cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  require(split_file(cfg, "train"), "prepare");
  require(split_file(cfg, "test"), "prepare");
  const Dataset train_data = load_dataset_csv(split_file(cfg, "train").string());
  const Dataset test_data = load_dataset_csv(split_file(cfg, "test").string());

  std::vector<Index> widths{train_data.feature_dim()};
  for (long h : cfg.hidden) widths.push_back(h);
  widths.push_back(2);
  const TrainConfig tc = train_config(cfg);
  TrainResult result = flipbound::train(init_network(widths, cfg.sigma_init, tc.seed), train_data, tc, &test_data);
  log << "train: train accuracy " << format_double(result.report.train_accuracy) << ", test accuracy "
      << format_optional(result.report.test_accuracy) << '\n';

  fs::create_directories(cfg.out_dir);
  const fs::path ckpt = cfg.out_dir / kCheckpointFile;
  const fs::path report = cfg.out_dir / "train_report.csv";
  save_checkpoint(result.net, ckpt);
  save_train_report_csv(result.report, report);
  return {ckpt, report};
}

std::vector<fs::path> cmd_recon(const ExperimentConfig& cfg, std::ostream& log) {
  require(cfg.out_dir / kSelectorFile, "prepare");
  require(split_file(cfg, "train"), "prepare");
  const CoefficientSelector sel = load_selector((cfg.out_dir / kSelectorFile).string());
  const Dataset train_data = load_dataset_csv(split_file(cfg, "train").string());

  Index row = cfg.recon_image;
  if (row < 0) {
    const auto it = std::find(train_data.labels.begin(), train_data.labels.end(), 1);
    row = it == train_data.labels.end() ? 0 : static_cast<Index>(it - train_data.labels.begin());
  }
  if (row >= train_data.size()) throw ConfigError("recon_image " + std::to_string(row) + " is past the training set");
  const auto image = raw_image(cfg, train_data.provenance[static_cast<std::size_t>(row)]);
  if (!image) throw InvalidInput("training row " + std::to_string(row) + " has no raw-image provenance");

  const fs::path dir = cfg.out_dir / "recon";
  fs::create_directories(dir);
  std::vector<fs::path> outputs;
  outputs.push_back(dir / "original.ppm");
  write_ppm(*image, outputs.back());

  const fs::path table = cfg.out_dir / "recon.csv";
  auto out = open_out(table);
  // Pixel error ignores the zero padding channel; the volume error (energy of
  // the dropped coefficients) is the one that must shrink as k grows.
  const Vector coeffs = haar3d_forward(*image).coeffs;
  out << "k,l2_error,max_abs_error,volume_l2_error\n";
  for (long k : cfg.recon_ks) {
    if (k > static_cast<long>(sel.size())) throw ConfigError("recon_ks entry " + std::to_string(k) + " exceeds the selector size");
    CoefficientSelector prefix;
    prefix.indices.assign(sel.indices.begin(), sel.indices.begin() + k);
    const ImageTensor rec = reconstruct_from_subset(*image, prefix);
    const Vector diff = rec.pixels - image->pixels;
    Vector dropped = coeffs;
    for (Index idx : prefix.indices) dropped[idx] = 0.0;
    out << k << ',' << format_double(diff.norm()) << ',' << format_double(diff.cwiseAbs().maxCoeff()) << ','
        << format_double(dropped.norm()) << '\n';
    outputs.push_back(dir / ("recon_k" + std::to_string(k) + ".ppm"));
    write_ppm(rec, outputs.back());
  }
  out.close();
  outputs.push_back(table);
  log << "recon: training row " << row << " at " << cfg.recon_ks.size() << " coefficient counts\n";
  return outputs;
}

std::vector<fs::path> cmd_flip(const ExperimentConfig& cfg, std::ostream& log) {
  require(cfg.out_dir / kCheckpointFile, "train");
  require(cfg.out_dir / kSelectorFile, "prepare");
  require(split_file(cfg, cfg.flip_split), "prepare");
  const Network net = load_checkpoint(cfg.out_dir / kCheckpointFile);
  const CoefficientSelector sel = load_selector((cfg.out_dir / kSelectorFile).string());
  const Dataset data = load_dataset_csv(split_file(cfg, cfg.flip_split).string());
  if (data.feature_dim() != net.input_dim()) throw ShapeError("dataset width does not match the checkpoint");

  const auto ids = ids_prefix(data, cfg.flip_count);
  struct Row {
    Index predicted = 0;
    Comparison cmp;
    FlipResult best;
    std::optional<Legitimacy> legit;
    bool box_fallback = false;
  };
  std::vector<Row> rows(ids.size());
  const std::uint64_t base_seed = stage_seed(cfg.seed, "flip");

  parallel_for(ids.size(), [&](std::size_t n) {
    const Index id = ids[n];
    const Vector x = data.row(id);
    Row& row = rows[n];
    row.predicted = argmax(forward(net, x).softmax);
    const ClassPair pair{row.predicted, 1 - row.predicted};
    FlipOptions opts;
    opts.restarts = cfg.flip_restarts;
    opts.seed = base_seed + static_cast<std::uint64_t>(id);
    row.cmp = compare(net, x, pair, opts);
    row.best = row.cmp.closest;
    if (!row.best.converged()) return;
    const auto image = raw_image(cfg, data.provenance[static_cast<std::size_t>(id)]);
    if (!image) return;
    const WaveletCoeffs base = haar3d_forward(*image);
    row.legit = check_legitimate_image(row.best.point, sel, base);
    if (!row.legit->legitimate) {
      // Fallback: solve again with the pixel bounds as constraints.
      FlipOptions boxed = opts;
      boxed.box = pixel_box(sel, base);
      FlipResult retry = closest_flip(net, x, pair, boxed);
      if (retry.converged()) {
        const Legitimacy l = check_legitimate_image(retry.point, sel, base);
        if (l.legitimate) {
          row.best = std::move(retry);
          row.legit = l;
          row.box_fallback = true;
        }
      }
    }
    row.best.legitimate_image = row.legit->legitimate;
  });

  fs::create_directories(cfg.out_dir);
  const fs::path flips_path = cfg.out_dir / "flips.csv";
  const fs::path scatter_path = cfg.out_dir / "flip_scatter.csv";
  const fs::path summary_path = cfg.out_dir / "flip_summary.csv";
  const fs::path points_path = cfg.out_dir / kFlipPointsFile;

  auto flips = open_out(flips_path);
  flips << "id,source,label,predicted,status,distance,equality_residual,dominance_margin,legitimate,max_violation,"
           "box_fallback,taylor_distance,beta,directional_status,directional_distance,directional_ratio,angle_deg,"
           "reseeded,outer_iterations\n";
  auto scatter = open_out(scatter_path);
  scatter << "id,distance,taylor_distance,beta,angle_deg\n";

  std::size_t converged = 0, checked = 0, legitimate = 0, fallbacks = 0;
  std::vector<double> betas, ratios;
  std::vector<StoredFlip> stored;
  for (std::size_t n = 0; n < ids.size(); ++n) {
    const Index id = ids[n];
    const Row& row = rows[n];
    const FlipResult& f = row.best;
    const auto& m = row.cmp.metrics;
    flips << id << ',' << data.provenance[static_cast<std::size_t>(id)] << ',' << data.labels[static_cast<std::size_t>(id)]
          << ',' << row.predicted << ',' << to_string(f.status) << ',' << format_double(f.distance) << ','
          << format_double(f.equality_residual) << ',' << format_double(f.dominance_margin) << ','
          << (row.legit ? (row.legit->legitimate ? "1" : "0") : "") << ','
          << (row.legit ? format_double(row.legit->max_violation) : "") << ',' << (row.box_fallback ? 1 : 0) << ','
          << (row.cmp.taylor ? format_double(row.cmp.taylor->distance) : "") << ',' << format_optional(m.beta) << ','
          << to_string(row.cmp.directional.status) << ','
          << (row.cmp.directional.converged() ? format_double(row.cmp.directional.distance) : "") << ','
          << format_optional(m.directional_ratio) << ',' << format_optional(m.angle_deg) << ','
          << (row.cmp.reseeded ? 1 : 0) << ',' << f.outer_iterations << '\n';
    stored.push_back({id, f});
    if (!f.converged()) continue;
    ++converged;
    if (row.legit) {
      ++checked;
      legitimate += row.legit->legitimate ? 1 : 0;
    }
    fallbacks += row.box_fallback ? 1 : 0;
    if (m.beta) betas.push_back(*m.beta);
    if (m.directional_ratio) ratios.push_back(*m.directional_ratio);
    scatter << id << ',' << format_double(f.distance) << ','
            << (row.cmp.taylor ? format_double(row.cmp.taylor->distance) : "") << ',' << format_optional(m.beta) << ','
            << format_optional(m.angle_deg) << '\n';
  }
  flips.close();
  scatter.close();
  save_flip_points(stored, net.input_dim(), points_path);

  const double total = static_cast<double>(ids.size());
  auto summary = open_out(summary_path);
  summary << "metric,value\n"
          << "count," << ids.size() << '\n'
          << "converged," << converged << '\n'
          << "converged_fraction," << format_double(total > 0 ? static_cast<double>(converged) / total : 0.0) << '\n'
          << "legitimacy_checked," << checked << '\n'
          << "legitimate," << legitimate << '\n'
          << "legitimate_fraction_of_checked,"
          << format_double(checked > 0 ? static_cast<double>(legitimate) / static_cast<double>(checked) : 0.0) << '\n'
          << "box_fallbacks," << fallbacks << '\n'
          << "beta_count," << betas.size() << '\n'
          << "beta_mean," << format_double(mean(betas)) << '\n'
          << "directional_ratio_count," << ratios.size() << '\n'
          << "directional_ratio_mean," << format_double(mean(ratios)) << '\n';
  summary.close();
  log << "flip: " << converged << "/" << ids.size() << " converged, " << legitimate << "/" << checked
      << " legitimate, beta mean " << format_double(mean(betas)) << '\n';
  return {flips_path, scatter_path, summary_path, points_path};
}

std::vector<fs::path> cmd_path(const ExperimentConfig& cfg, const PathRequest& req, std::ostream& log) {
  const bool to_flip = req.to < 0;
  if (to_flip && req.split != cfg.flip_split) {
    throw ConfigError("a path to a flip point uses the flip split '" + cfg.flip_split + "'");
  }
  require(cfg.out_dir / kCheckpointFile, "train");
  require(split_file(cfg, req.split), "prepare");
  if (to_flip) require(cfg.out_dir / kFlipPointsFile, "flip");
  const Network net = load_checkpoint(cfg.out_dir / kCheckpointFile);
  const Dataset data = load_dataset_csv(split_file(cfg, req.split).string());
  const auto check_id = [&](long id) {
    if (id < 0 || id >= data.size()) {
      throw ConfigError("image id " + std::to_string(id) + " is outside the " + req.split + " split");
    }
  };
  check_id(req.from);
  const Vector x = data.row(req.from);

  PathProfile profile;
  std::string name;
  if (to_flip) {
    const auto flips = load_flip_points(cfg.out_dir / kFlipPointsFile);
    const auto it = std::find_if(flips.begin(), flips.end(), [&](const StoredFlip& f) { return f.id == req.from; });
    if (it == flips.end()) throw InvalidInput("no flip point stored for image " + std::to_string(req.from));
    if (!it->result.converged()) throw InvalidInput("flip point of image " + std::to_string(req.from) + " did not converge");
    profile = profile_to_flip(net, x, it->result, cfg.overshoot, cfg.score_tol);
    name = "path_" + std::to_string(req.from) + "_flip.csv";
  } else {
    check_id(req.to);
    profile = sample_line(net, LineSegment{x, data.row(req.to)}, cfg.score_tol);
    name = "path_" + std::to_string(req.from) + "_" + std::to_string(req.to) + ".csv";
  }
  fs::create_directories(cfg.out_dir);
  const fs::path out = cfg.out_dir / name;
  save_profile_csv(profile, out);
  log << "path: " << profile.alphas.size() << " samples, " << profile.crossings.size() << " crossings"
      << (profile.capped ? " (sample cap reached)" : "") << '\n';
  return {out};
}

std::vector<fs::path> cmd_regions(const ExperimentConfig& cfg, std::ostream& log) {
  require(cfg.out_dir / kCheckpointFile, "train");
  require(split_file(cfg, cfg.region_split), "prepare");
  const Network net = load_checkpoint(cfg.out_dir / kCheckpointFile);
  const Dataset data = load_dataset_csv(split_file(cfg, cfg.region_split).string());
  AdjacencyGraph graph;
  const RegionReport report = region_report(net, data, cfg.region_class, cfg.region_max_points,
                                            stage_seed(cfg.seed, "regions"), cfg.score_tol, &graph);
  fs::create_directories(cfg.out_dir);
  const fs::path edges = cfg.out_dir / "edges.txt";
  const fs::path summary = cfg.out_dir / "region_summary.csv";
  save_edge_list(graph, edges);
  save_region_summary_csv(report, summary);
  log << "regions: " << report.node_count << " nodes, " << report.edge_count << " edges, "
      << report.component_count << " components\n";
  return {edges, summary};
}

std::vector<fs::path> cmd_attack(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.attack_split != cfg.flip_split) {
    throw ConfigError("attack_split must equal flip_split: attacks are compared against stored flip points");
  }
  require(cfg.out_dir / kCheckpointFile, "train");
  require(split_file(cfg, cfg.attack_split), "prepare");
  require(cfg.out_dir / kFlipPointsFile, "flip");
  const Network net = load_checkpoint(cfg.out_dir / kCheckpointFile);
  const Dataset data = load_dataset_csv(split_file(cfg, cfg.attack_split).string());
  const auto flips = load_flip_points(cfg.out_dir / kFlipPointsFile);

  std::vector<const StoredFlip*> targets;
  for (const StoredFlip& f : flips) {
    if (static_cast<long>(targets.size()) >= cfg.attack_count) break;
    if (f.result.converged()) targets.push_back(&f);
  }
  const std::size_t per_eps = targets.size();
  std::vector<AttackRow> rows(per_eps * cfg.attack_epsilons.size());
  const std::uint64_t base_seed = stage_seed(cfg.seed, "attack");
  parallel_for(rows.size(), [&](std::size_t n) {
    const StoredFlip& f = *targets[n % per_eps];
    const double eps = cfg.attack_epsilons[n / per_eps];
    const Vector x = data.row(f.id);
    const Index own = argmax(forward(net, x).softmax);
    AttackConfig ac;
    ac.epsilon = eps;
    ac.steps = cfg.attack_steps;
    ac.seed = base_seed + static_cast<std::uint64_t>(f.id);
    AttackRow& row = rows[n];
    row.id = std::to_string(f.id);
    row.epsilon = eps;
    row.attack = constrained_loss_attack(net, x, 1 - own, ac);
    row.comparison = compare_attack_vs_flip(net, x, row.attack, f.result);
  });

  std::vector<FlipResult> converged;
  for (const StoredFlip& f : flips) {
    if (f.result.converged()) converged.push_back(f.result);
  }

  fs::create_directories(cfg.out_dir);
  const fs::path attack_path = cfg.out_dir / "attack.csv";
  const fs::path summary_path = cfg.out_dir / "attack_summary.csv";
  const fs::path hist_path = cfg.out_dir / "flip_histogram.csv";
  save_attack_csv(rows, attack_path);
  save_histogram_csv(flip_distance_histogram(converged, cfg.histogram_bin_width), hist_path);

  auto summary = open_out(summary_path);
  summary << "epsilon,attempts,successes,success_rate\n";
  for (std::size_t e = 0; e < cfg.attack_epsilons.size(); ++e) {
    std::size_t wins = 0;
    for (std::size_t n = 0; n < per_eps; ++n) wins += rows[e * per_eps + n].attack.succeeded ? 1 : 0;
    summary << format_double(cfg.attack_epsilons[e]) << ',' << per_eps << ',' << wins << ','
            << format_double(per_eps > 0 ? static_cast<double>(wins) / static_cast<double>(per_eps) : 0.0) << '\n';
    log << "attack: epsilon " << format_double(cfg.attack_epsilons[e]) << " succeeded on " << wins << "/" << per_eps
        << '\n';
  }
  summary.close();
  return {attack_path, summary_path, hist_path};
}

}  // namespace flipbound::cli
