// Command-line front end: synth, train, train-segnet, transform, evaluate.
#include <opencv2/imgcodecs.hpp>

#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "structgan/checkpoint.hpp"
#include "structgan/config.hpp"
#include "structgan/data.hpp"
#include "structgan/evaluation.hpp"
#include "structgan/features.hpp"
#include "structgan/synthetic.hpp"
#include "structgan/training.hpp"

namespace fs = std::filesystem;
using namespace structgan;

namespace {

struct SynthArgs {
  fs::path out;
  std::string kind = "fog";
  double severity = 0.7;
  int train_count = 64;
  int test_count = 16;
  std::string size = "64";
  std::uint64_t seed = 7;
  fs::path base;
};

int run_synth(const SynthArgs& a) {
  CorruptionSpec spec{corruption_kind_from_string(a.kind), a.severity, a.seed};
  SyntheticDataset train, test;
  if (!a.base.empty()) {
    std::vector<cv::Mat> images;
    for (const auto& p : list_images(a.base)) images.push_back(read_image(p));
    if (images.size() < 8) throw std::runtime_error("--base needs at least 8 images");
    const auto n_test = std::min<std::size_t>(static_cast<std::size_t>(a.test_count), images.size() / 4);
    std::vector<cv::Mat> head(images.begin(), images.end() - static_cast<std::ptrdiff_t>(n_test));
    std::vector<cv::Mat> tail(images.end() - static_cast<std::ptrdiff_t>(n_test), images.end());
    train = synthesize_desk_dataset(head, spec);
    CorruptionSpec test_spec = spec;
    test_spec.seed = spec.seed + 1;
    test = synthesize_desk_dataset(tail, test_spec);
  } else {
    const auto size = parse_extent(a.size);
    train = synthesize_desk_dataset(a.train_count, size, spec, a.seed);
    CorruptionSpec test_spec = spec;
    test_spec.seed = spec.seed + 1;
    test = synthesize_desk_dataset(a.test_count, size, test_spec, a.seed + 1000003);
  }
  write_synthetic_dataset(a.out, train, test);
  std::cout << "wrote " << train.clean.size() << " training and " << test.clean.size()
            << " test pairs (" << a.kind << ", severity " << a.severity << ") to " << a.out << "\n";
  if (spec.kind == CorruptionKind::rain)
    std::cout << "note: train rain datasets with `flip = false`; streak direction is a domain cue\n";
  return 0;
}

UnpairedDataset open_domain(const fs::path& dir, Domain domain) {
  const auto sub = dir / subdir_name(domain, Split::train);
  return fs::is_directory(sub) ? load_image_folder(sub, domain) : load_image_folder(dir, domain);
}

struct TrainArgs {
  fs::path config;
  std::string preset;
  fs::path data, data_a, data_b, out;
  std::uint64_t seed = 0;
  std::string edge_detector;
  fs::path edge_weights, segnet, resume;
  int stop_after = -1;
};

Segmenter load_segmenter(const fs::path& path, int classes) {
  SegmenterSpec spec;
  spec.classes = classes;
  Segmenter net(spec);
  torch::load(net, path.string());
  freeze(*net);
  return net;
}

int run_train(const TrainArgs& a) {
  if (!a.config.empty() && !a.preset.empty())
    throw std::runtime_error("give either --config or --preset, not both");
  ExperimentConfig config = !a.config.empty()    ? load_experiment_config(a.config)
                            : !a.preset.empty() ? builtin_config(a.preset)
                                                : builtin_config("cycle");
  if (!a.edge_detector.empty()) {
    config.edge_detector = edge_backbone_from_string(a.edge_detector);
    config.validate();
  }
  const auto dir_a = a.data_a.empty() ? a.data : a.data_a;
  const auto dir_b = a.data_b.empty() ? a.data : a.data_b;
  if (dir_a.empty() || dir_b.empty()) throw std::runtime_error("need --data or both --data-a and --data-b");
  const auto ds_a = open_domain(dir_a, Domain::A);
  const auto ds_b = open_domain(dir_b, Domain::B);

  TrainOptions opt;
  opt.out_dir = a.out;
  opt.seed = a.seed;
  opt.stop_after_epoch = a.stop_after;
  if (!a.resume.empty()) opt.resume = a.resume;
  if (config.edge_detector == EdgeBackbone::hed_residual) {
    if (a.edge_weights.empty()) throw std::runtime_error("--edge-detector hed needs --edge-weights");
    auto ed = EdgeDetector::hed();
    ed.load_weights(a.edge_weights);
    opt.resources.edges = ed;
  }
  if (config.use_seg_discriminator) {
    if (a.segnet.empty()) throw std::runtime_error("use_seg_discriminator needs --segnet");
    opt.resources.segmenter = load_segmenter(a.segnet, config.seg_classes);
  }
  std::cout << "training '" << config.name << "' on " << ds_a.size() << " A / " << ds_b.size()
            << " B images, " << config.n_iter + config.n_iter_decay << " epochs\n";
  opt.on_epoch = [](const TrainState& s) {
    std::cout << "epoch " << s.epoch << "  step " << s.step << "  lr " << s.learning_rate() << std::endl;
  };
  const auto result = train(config, ds_a, ds_b, std::move(opt));
  std::cout << "done: " << result.epochs_completed << " epochs, " << result.steps << " steps, metrics in "
            << result.metrics << "\n";
  return 0;
}

int run_train_segnet(const fs::path& data, const fs::path& out, int steps, int classes,
                     std::uint64_t seed) {
  const auto images_dir = data / "trainB";
  const auto labels_dir = data / "labelsB";
  std::vector<torch::Tensor> images, labels;
  for (const auto& p : list_images(images_dir)) {
    const auto label_path = labels_dir / p.filename();
    cv::Mat ids = cv::imread(label_path.string(), cv::IMREAD_GRAYSCALE);
    if (ids.empty()) throw std::runtime_error("missing label map " + label_path.string());
    images.push_back(image_to_tensor(read_image(p)));
    labels.push_back(labels_to_onehot(ids, classes));
  }
  if (images.empty()) throw std::runtime_error("no training images in " + images_dir.string());
  torch::manual_seed(seed);
  SegmenterSpec spec;
  spec.classes = classes;
  Segmenter net(spec);
  const double loss = train_segmenter(*net, torch::stack(images), torch::stack(labels), steps, 1e-3, seed);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  torch::save(net, out.string());
  std::cout << "segmentation network: final BCE " << loss << ", saved to " << out << "\n";
  return 0;
}

int run_transform(const fs::path& checkpoint, const fs::path& in, const fs::path& out,
                  const std::string& direction) {
  auto fn = generator_transform(
      load_generator(checkpoint, direction == "b2a" ? Direction::b2a : Direction::a2b));
  fs::create_directories(out);
  torch::NoGradGuard no_grad;
  int n = 0;
  for (const auto& p : list_images(in)) {
    const auto y = fn(image_to_tensor(read_image(p)).unsqueeze(0));
    write_image(out / p.filename(), tensor_to_image(y));
    ++n;
  }
  std::cout << "transformed " << n << " images into " << out << "\n";
  return 0;
}

int run_evaluate(const std::vector<std::string>& checkpoints, const fs::path& testset_dir,
                 const fs::path& out, bool with_identity) {
  const auto testset = load_paired_testset(testset_dir);
  auto metric = make_metric_extractor();
  std::map<std::string, std::vector<PairDistance>> results;
  for (const auto& spec : checkpoints) {
    // NAME=PATH labels a checkpoint; a bare path uses the config name.
    const auto eq = spec.find('=');
    const fs::path path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    const std::string name =
        eq == std::string::npos ? read_checkpoint_info(path).config.name : spec.substr(0, eq);
    if (results.count(name)) throw std::runtime_error("duplicate configuration name '" + name + "'");
    results[name] = evaluate_config(generator_transform(load_generator(path)), testset, *metric);
    std::cout << name << ": mean distance " << mean_distance(results[name]) << "\n";
  }
  if (with_identity) {
    results["Untransformed"] = evaluate_config(identity_transform(), testset, *metric);
    std::cout << "Untransformed: mean distance " << mean_distance(results["Untransformed"]) << "\n";
  }
  write_report(results, out);
  std::cout << "report written to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cycle-consistent image enhancement with structural constraints"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Write a synthetic paired corruption dataset");
  synth->add_option("--out", sa.out, "Dataset root")->required();
  synth->add_option("--kind", sa.kind, "fog, night or rain")->check(CLI::IsMember({"fog", "night", "rain"}));
  synth->add_option("--severity", sa.severity)->check(CLI::Range(0.0, 1.0));
  synth->add_option("--train-count", sa.train_count, "Procedural training scenes");
  synth->add_option("--test-count", sa.test_count, "Procedural test scenes");
  synth->add_option("--size", sa.size, "Scene size, WxH or N");
  synth->add_option("--seed", sa.seed);
  synth->add_option("--base", sa.base, "Folder of clean images to degrade instead of procedural scenes");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train both generators and discriminators");
  tr->add_option("--config", ta.config, "Config file (key = value)");
  tr->add_option("--preset", ta.preset, "cycle, cycle+pdist or cycle+edge");
  tr->add_option("--data", ta.data, "Dataset root with trainA/ and trainB/");
  tr->add_option("--data-a", ta.data_a, "Degraded-domain images");
  tr->add_option("--data-b", ta.data_b, "Clean-domain images");
  tr->add_option("--out", ta.out, "Output folder for checkpoints and metrics.csv")->required();
  tr->add_option("--seed", ta.seed);
  tr->add_option("--edge-detector", ta.edge_detector)->check(CLI::IsMember({"sobel", "hed"}));
  tr->add_option("--edge-weights", ta.edge_weights, "Weights for the hed detector");
  tr->add_option("--segnet", ta.segnet, "Segmentation network (from train-segnet)");
  tr->add_option("--resume", ta.resume, "Checkpoint to continue from");
  tr->add_option("--stop-after-epoch", ta.stop_after, "Stop (with a checkpoint) after this epoch");

  fs::path sg_data, sg_out;
  int sg_steps = 300, sg_classes = kSceneClasses;
  std::uint64_t sg_seed = 0;
  auto* sg = app.add_subcommand("train-segnet", "Fit the segmentation network on labelsB/");
  sg->add_option("--data", sg_data, "Synthetic dataset root")->required();
  sg->add_option("--out", sg_out, "Output weight file")->required();
  sg->add_option("--steps", sg_steps);
  sg->add_option("--classes", sg_classes);
  sg->add_option("--seed", sg_seed);

  fs::path tf_ckpt, tf_in, tf_out;
  std::string tf_dir = "a2b";
  auto* tf = app.add_subcommand("transform", "Enhance a folder of images");
  tf->add_option("--checkpoint", tf_ckpt)->required();
  tf->add_option("--in", tf_in)->required();
  tf->add_option("--out", tf_out)->required();
  tf->add_option("--direction", tf_dir)->check(CLI::IsMember({"a2b", "b2a"}));

  std::vector<std::string> ev_ckpts;
  fs::path ev_testset, ev_out;
  bool ev_identity = false;
  auto* ev = app.add_subcommand("evaluate", "Perceptual distance to paired references");
  ev->add_option("--checkpoint", ev_ckpts, "Checkpoint, or NAME=PATH; repeatable")->required();
  ev->add_option("--testset", ev_testset, "Dataset root with pairs.csv")->required();
  ev->add_option("--out", ev_out, "Report folder")->required();
  ev->add_flag("--with-identity", ev_identity, "Also score the untransformed degraded inputs");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return run_synth(sa);
    if (*tr) return run_train(ta);
    if (*sg) return run_train_segnet(sg_data, sg_out, sg_steps, sg_classes, sg_seed);
    if (*tf) return run_transform(tf_ckpt, tf_in, tf_out, tf_dir);
    if (*ev) return run_evaluate(ev_ckpts, ev_testset, ev_out, ev_identity);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
