#include "cli_app.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "freconv/arch.hpp"
#include "freconv/cost.hpp"
#include "freconv/doe.hpp"
#include "freconv/executor.hpp"
#include "freconv/gradcheck.hpp"
#include "freconv/parallel.hpp"
#include "freconv/spectrum.hpp"
#include "freconv/tensor_io.hpp"
#include "freconv/train.hpp"

namespace freconv::cli {

namespace {

using nlohmann::json;

// Every run prints its fully resolved configuration, defaults included, so
// output artifacts can be reproduced from the log alone.
void print_resolved(std::ostream& out, const std::string& subcommand, const json& config) {
  out << "config: " << json{{"subcommand", subcommand}, {"flags", config}}.dump() << "\n";
}

std::array<std::int64_t, 3> parse_chw(const std::string& text) {
  std::array<std::int64_t, 3> shape{};
  char sep1 = 0, sep2 = 0;
  std::istringstream is(text);
  if (!(is >> shape[0] >> sep1 >> shape[1] >> sep2 >> shape[2]) || sep1 != 'x' || sep2 != 'x' ||
      !is.eof() || shape[0] < 1 || shape[1] < 1 || shape[2] < 1)
    throw ParamError("--input expects CxHxW (e.g. 3x224x224), got '" + text + "'");
  return shape;
}

KernelMode parse_mode(const std::string& s) {
  if (s == "dck") return KernelMode::kDck;
  if (s == "gck") return KernelMode::kGck;
  throw ParamError("--mode must be dck or gck");
}

SplitMode parse_split(const std::string& s) {
  if (s == "attention") return SplitMode::kAttention;
  if (s == "direct") return SplitMode::kDirect;
  throw ParamError("--split must be attention or direct");
}

BranchMode parse_branch(const std::string& s) {
  if (s == "asymmetric") return BranchMode::kAsymmetric;
  if (s == "same") return BranchMode::kSame;
  throw ParamError("--branch must be asymmetric or same");
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  os << text;
}

// Shared architecture/variant flag block for build and analyze.
struct ArchFlags {
  std::string arch = "resnet50";
  std::string variant = "baseline";
  std::string mode = "gck";
  std::int64_t n = 2;
  std::int64_t g1 = 2;
  std::int64_t attn_reduction = 16;
  std::string split = "attention";
  std::string branch = "asymmetric";
  std::string downsample = "strided";
  std::string input = "3x224x224";
  std::int64_t classes = 1000;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--arch", arch, "Architecture family")
        ->check(CLI::IsMember({"resnet50", "resnet101", "resnet152", "vgg16", "densenet121"}))
        ->capture_default_str();
    cmd->add_option("--variant", variant, "baseline or freconv")
        ->check(CLI::IsMember({"baseline", "freconv"}))
        ->capture_default_str();
    cmd->add_option("--mode", mode, "Large-kernel realization (freconv variant)")
        ->check(CLI::IsMember({"dck", "gck"}))
        ->capture_default_str();
    cmd->add_option("--n", n, "Feature-split count N")
        ->check(CLI::IsMember({2, 4, 8, 16}))
        ->capture_default_str();
    cmd->add_option("--g1", g1, "Base group g1")
        ->check(CLI::IsMember({2, 4, 8, 16}))
        ->capture_default_str();
    cmd->add_option("--attn-reduction", attn_reduction, "Attention bottleneck ratio")
        ->capture_default_str();
    cmd->add_option("--split", split, "Feature split mode (ablation)")
        ->check(CLI::IsMember({"attention", "direct"}))
        ->capture_default_str();
    cmd->add_option("--branch", branch, "Branch mode (ablation)")
        ->check(CLI::IsMember({"asymmetric", "same"}))
        ->capture_default_str();
    cmd->add_option("--downsample", downsample, "Max-pool handling (ablation)")
        ->check(CLI::IsMember({"strided", "pool"}))
        ->capture_default_str();
    cmd->add_option("--input", input, "Input shape as CxHxW")->capture_default_str();
    cmd->add_option("--classes", classes, "Classifier width")->capture_default_str();
  }

  json to_json() const {
    return {{"arch", arch},
            {"variant", variant},
            {"mode", mode},
            {"n", n},
            {"g1", g1},
            {"attn_reduction", attn_reduction},
            {"split", split},
            {"branch", branch},
            {"downsample", downsample},
            {"input", input},
            {"classes", classes}};
  }

  FreConvBuildOptions build_options() const {
    FreConvBuildOptions o;
    o.mode = parse_mode(mode);
    o.n_split = n;
    o.base_group = g1;
    o.attn_reduction = attn_reduction;
    o.split_mode = parse_split(split);
    o.branch_mode = parse_branch(branch);
    o.downsample = downsample == "pool" ? Downsample::kPool : Downsample::kStrided;
    return o;
  }

  ArchGraph build(ArchVariant v) const {
    const auto shape = parse_chw(input);
    if (shape[0] != 3) throw ParamError("family backbones expect 3 input channels");
    if (shape[1] != shape[2]) throw ParamError("--input expects square spatial extents");
    return build_arch(arch_family_from_name(arch), v, build_options(), classes, shape[1]);
  }
};

// ---------------------------------------------------------------------------

int cmd_build(const ArchFlags& flags, const std::string& out_path, std::ostream& out) {
  print_resolved(out, "build", flags.to_json());
  const ArchGraph graph = flags.build(flags.variant == "freconv" ? ArchVariant::kFreConv
                                                                 : ArchVariant::kBaseline);
  write_graph(out_path, graph);
  out << "wrote " << out_path << " (" << graph.nodes.size() << " nodes)\n";
  return 0;
}

int cmd_analyze(const ArchFlags& flags, const std::string& graph_path,
                const std::string& format, const std::string& flops,
                bool compare_baseline, const std::string& out_path, std::ostream& out) {
  json cfg = flags.to_json();
  cfg["graph"] = graph_path;
  cfg["format"] = format;
  cfg["flops_convention"] = flops;
  cfg["compare_baseline"] = compare_baseline;
  cfg["out"] = out_path;
  print_resolved(out, "analyze", cfg);

  const FlopsConvention convention =
      flops == "2mac" ? FlopsConvention::kTwoMac : FlopsConvention::kMac;

  ArchGraph graph;
  if (!graph_path.empty())
    graph = read_graph(graph_path);
  else
    graph = flags.build(flags.variant == "freconv" ? ArchVariant::kFreConv
                                                   : ArchVariant::kBaseline);
  const CostReport report = count_cost(graph, convention);

  std::ostringstream body;
  if (compare_baseline) {
    const ArchGraph base = flags.build(ArchVariant::kBaseline);
    const ReductionReport red = reduction_report(count_cost(base, convention), report);
    if (format == "json")
      body << reduction_report_json(red);
    else if (format == "csv")
      write_reduction_csv(body, red);
    else
      write_reduction_table(body, red);
  } else {
    if (format == "json")
      body << cost_report_json(report);
    else if (format == "csv")
      write_cost_csv(body, report);
    else
      write_cost_table(body, report);
  }
  if (out_path.empty())
    out << body.str();
  else
    write_text_file(out_path, body.str());
  return 0;
}

// Largest power-of-two divisor of `channels`, capped at 16.
std::int64_t auto_attn_reduction(std::int64_t channels) {
  std::int64_t r = 1;
  while (r < 16 && channels % (2 * r) == 0) r *= 2;
  return r;
}

int cmd_spectrum(const std::string& input, std::int64_t noise_count, std::int64_t noise_size,
                 std::int64_t noise_channels, std::uint64_t seed, const std::string& branch,
                 std::int64_t out_channels, std::int64_t n_split, const std::string& mode,
                 std::int64_t g1, std::vector<std::int64_t> kernels, double split_fraction,
                 std::int64_t bins, const std::string& map_path, const std::string& profile_path,
                 std::ostream& out) {
  json cfg = {{"input", input},         {"noise", noise_count},
              {"size", noise_size},     {"channels", noise_channels},
              {"seed", seed},           {"branch", branch},
              {"out_channels", out_channels}, {"n", n_split},
              {"mode", mode},           {"g1", g1},
              {"kernels", kernels},     {"split", split_fraction},
              {"bins", bins},           {"out_map", map_path},
              {"out_profile", profile_path}};
  print_resolved(out, "spectrum", cfg);

  Tensor<double> images;
  if (!input.empty()) {
    TensorVariant v = read_tensor(input);
    if (auto* f = std::get_if<Tensor<float>>(&v))
      images = tensor_cast<float, double>(*f);
    else
      images = std::get<Tensor<double>>(v);
  } else {
    if (noise_count < 1) throw ParamError("either --input or --noise N is required");
    images = Tensor<double>(noise_count, noise_channels, noise_size, noise_size);
    Rng rng(seed);
    seeded_fill(rng, images, Dist::normal(0.0, 1.0));
  }

  SpectrumAverager averager;
  std::string source = "input";
  if (branch == "none") {
    averager.add(images);
  } else {
    FreConvConfig fc;
    fc.in_channels = images.c();
    fc.out_channels = out_channels > 0 ? out_channels : images.c();
    fc.n_split = n_split;
    fc.kernel_set = kernels.empty() ? stage_kernel_schedule(1) : kernels;
    fc.mode = parse_mode(mode);
    fc.base_group = g1;
    fc.attn_reduction = auto_attn_reduction(fc.branch_channels());
    fc.validate();
    Rng rng(seed ^ 0x9E3779B9ull);
    FreConvParams<double> params = init_freconv_params<double>(fc, rng);
    auto [top, bottom] = feature_split(images, fc, params);
    Tensor<double> feat =
        branch == "hfe" ? hfe_forward(bottom, fc, params) : lfe_forward(top, fc, params);
    averager.add(feat);
    source = branch;
  }

  const SpectrumMap map = averager.mean(source);
  out << "planes: " << map.plane_count << "\n";
  char ratio[48];
  std::snprintf(ratio, sizeof(ratio), "%.6g", band_energy_ratio(map, split_fraction));
  out << "band_energy_ratio(" << split_fraction << "): " << ratio << "\n";
  if (!map_path.empty()) {
    std::ostringstream body;
    write_spectrum_csv(body, map);
    write_text_file(map_path, body.str());
    out << "wrote " << map_path << "\n";
  }
  if (!profile_path.empty()) {
    std::ostringstream body;
    write_profile_csv(body, radial_profile(map, bins));
    write_text_file(profile_path, body.str());
    out << "wrote " << profile_path << "\n";
  }
  return 0;
}

int cmd_init_dump(std::int64_t k, double sigma0, double sigma1, bool zero_dc,
                  const std::string& out_path, std::ostream& out) {
  DoEInit init = DoEInit::for_kernel(k);
  if (sigma0 > 0.0) init.sigma0 = sigma0;
  if (sigma1 > 0.0) init.sigma1 = sigma1;
  init.validate();
  json cfg = {{"k", k},           {"sigma0", init.sigma0}, {"sigma1", init.sigma1},
              {"zero_dc", zero_dc}, {"out", out_path}};
  print_resolved(out, "init-dump", cfg);

  const std::vector<double> taps = doe_composite_taps(init, zero_dc);
  Tensor<double> grid(1, 1, k, k);
  grid.data = taps;
  write_tensor(out_path, grid);

  char a0[32], a1[32], center[32];
  std::snprintf(a0, sizeof(a0), "%.12f", alpha_coeff(init.sigma0));
  std::snprintf(a1, sizeof(a1), "%.12f", alpha_coeff(init.sigma1));
  std::snprintf(center, sizeof(center), "%.12f",
                taps[static_cast<std::size_t>(((k - 1) / 2) * k + (k - 1) / 2)]);
  out << "alpha(sigma0)=" << a0 << " alpha(sigma1)=" << a1 << " center=" << center << "\n";
  out << "wrote " << out_path << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& format, const std::string& out_path,
                  std::ostream& out) {
  print_resolved(out, "gradcheck", {{"seed", seed}, {"format", format}, {"out", out_path}});
  const GradCheckReport report = grad_check_suite(seed);
  std::ostringstream body;
  if (format == "json")
    body << gradcheck_report_json(report);
  else
    write_gradcheck_table(body, report);
  if (out_path.empty())
    out << body.str();
  else
    write_text_file(out_path, body.str());
  return report.passed() ? 0 : 2;  // a failed check is an internal invariant breach
}

struct TrainFlags {
  std::int64_t size = 64;
  std::int64_t channels = 4;
  std::int64_t train_per_class = 1000;
  std::int64_t test_per_class = 250;
  double noise = 0.1;
  std::uint64_t data_seed = 7;
  std::int64_t epochs = 10;
  std::int64_t batch = 32;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 1;
  std::string split = "attention";
};

int cmd_train(const TrainFlags& f, const std::string& out_dir, bool dump_data,
              std::ostream& out) {
  json cfg = {{"size", f.size},       {"channels", f.channels},
              {"train_per_class", f.train_per_class}, {"test_per_class", f.test_per_class},
              {"noise", f.noise},     {"data_seed", f.data_seed},
              {"epochs", f.epochs},   {"batch", f.batch},
              {"lr", f.lr},           {"momentum", f.momentum},
              {"weight_decay", f.weight_decay},       {"seed", f.seed},
              {"split", f.split},     {"out_dir", out_dir},
              {"dump_data", dump_data}};
  print_resolved(out, "train", cfg);

  SynthSpec train_spec{f.size, f.channels, f.train_per_class, f.noise, f.data_seed};
  SynthSpec test_spec = train_spec;
  test_spec.samples_per_class = f.test_per_class;
  test_spec.seed = f.data_seed + 1;

  const SynthDataset<float> train_set = gen_synth_dataset<float>(train_spec);
  const SynthDataset<float> test_set = gen_synth_dataset<float>(test_spec);

  const ArchGraph graph = build_toy_net(train_spec, parse_split(f.split));
  GraphParams<float> params = init_graph_params<float>(graph, f.seed);

  TrainConfig tc;
  tc.epochs = f.epochs;
  tc.batch_size = f.batch;
  tc.learning_rate = f.lr;
  tc.momentum = f.momentum;
  tc.weight_decay = f.weight_decay;
  tc.seed = f.seed;
  const TrainResult result = train(graph, params, train_set, tc);

  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
    char line[64];
    std::snprintf(line, sizeof(line), "epoch %zu loss %.6f", e + 1, result.epoch_losses[e]);
    out << line << "\n";
  }
  const double train_acc = evaluate(graph, params, train_set);
  const double test_acc = evaluate(graph, params, test_set);
  char acc[80];
  std::snprintf(acc, sizeof(acc), "train_accuracy %.4f test_accuracy %.4f", train_acc, test_acc);
  out << acc << "\n";

  if (!out_dir.empty()) {
    save_checkpoint(out_dir, graph, params, tc, train_spec, result);
    std::ostringstream losses;
    losses << "epoch,loss\n";
    for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
      char line[64];
      std::snprintf(line, sizeof(line), "%zu,%.17g", e + 1, result.epoch_losses[e]);
      losses << line << "\n";
    }
    write_text_file(out_dir + "/loss_history.csv", losses.str());
    if (dump_data) {
      write_tensor(out_dir + "/train_images.frtn", train_set.images);
      write_labels(out_dir + "/train_labels.txt", train_set.labels);
      write_tensor(out_dir + "/test_images.frtn", test_set.images);
      write_labels(out_dir + "/test_labels.txt", test_set.labels);
    }
    out << "wrote checkpoint to " << out_dir << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint_dir, std::int64_t test_per_class, std::ostream& out) {
  print_resolved(out, "eval",
                 {{"checkpoint", checkpoint_dir}, {"test_per_class", test_per_class}});
  Checkpoint ck = load_checkpoint(checkpoint_dir);
  SynthSpec test_spec = ck.data_spec;
  test_spec.samples_per_class = test_per_class > 0 ? test_per_class
                                                   : std::max<std::int64_t>(
                                                         1, ck.data_spec.samples_per_class / 4);
  test_spec.seed = ck.data_spec.seed + 1;  // held-out set convention
  const SynthDataset<float> test_set = gen_synth_dataset<float>(test_spec);
  const double acc = evaluate(ck.graph, ck.params, test_set);
  char line[48];
  std::snprintf(line, sizeof(line), "test_accuracy %.4f", acc);
  out << line << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"FreConv kernel library: cost analysis, spectrum tools, and a training harness"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "Worker thread cap (1 = fully serial)")
      ->capture_default_str();

  // build
  ArchFlags build_flags;
  std::string build_out = "arch.json";
  auto* build_cmd = app.add_subcommand("build", "Emit an architecture description JSON");
  build_flags.add_to(build_cmd);
  build_cmd->add_option("--out", build_out, "Output path")->capture_default_str();

  // analyze
  ArchFlags analyze_flags;
  std::string analyze_graph, analyze_format = "table", analyze_flops = "mac", analyze_out;
  bool compare_baseline = false;
  auto* analyze_cmd = app.add_subcommand("analyze", "Parameter/MAC cost model and reductions");
  analyze_flags.add_to(analyze_cmd);
  analyze_cmd->add_option("--graph", analyze_graph,
                          "Analyze an architecture JSON instead of building one");
  analyze_cmd->add_option("--format", analyze_format, "Output format")
      ->check(CLI::IsMember({"json", "table", "csv"}))
      ->capture_default_str();
  analyze_cmd->add_option("--flops-convention", analyze_flops, "mac counts or doubled flops")
      ->check(CLI::IsMember({"mac", "2mac"}))
      ->capture_default_str();
  analyze_cmd->add_flag("--compare-baseline", compare_baseline,
                        "Emit a reduction report against the family baseline");
  analyze_cmd->add_option("--out", analyze_out, "Write the report to a file instead of stdout");

  // spectrum
  std::string sp_input, sp_branch = "none", sp_mode = "gck", sp_map, sp_profile;
  std::int64_t sp_noise = 0, sp_size = 32, sp_channels = 8, sp_out_channels = 0, sp_n = 2,
               sp_g1 = 2, sp_bins = 16;
  std::uint64_t sp_seed = 1;
  std::vector<std::int64_t> sp_kernels;
  double sp_split = 0.5;
  auto* sp_cmd = app.add_subcommand("spectrum", "Average energy spectrum maps and band ratios");
  sp_cmd->add_option("--input", sp_input, "FRTN tensor of images/features");
  sp_cmd->add_option("--noise", sp_noise, "Generate N white-noise images instead of --input");
  sp_cmd->add_option("--size", sp_size, "Noise image extent")->capture_default_str();
  sp_cmd->add_option("--channels", sp_channels, "Noise image channels")->capture_default_str();
  sp_cmd->add_option("--seed", sp_seed, "Noise / init seed")->capture_default_str();
  sp_cmd->add_option("--branch", sp_branch, "Pass input through a DoE-initialized branch")
      ->check(CLI::IsMember({"none", "hfe", "lfe"}))
      ->capture_default_str();
  sp_cmd->add_option("--out-channels", sp_out_channels, "Branch output channels (0 = input)")
      ->capture_default_str();
  sp_cmd->add_option("--n", sp_n, "Feature-split count")->capture_default_str();
  sp_cmd->add_option("--mode", sp_mode, "dck or gck")->check(CLI::IsMember({"dck", "gck"}))
      ->capture_default_str();
  sp_cmd->add_option("--g1", sp_g1, "Base group")->capture_default_str();
  sp_cmd->add_option("--kernels", sp_kernels, "Kernel set (default: stage-1 schedule)");
  sp_cmd->add_option("--split", sp_split, "Band split radius as a Nyquist fraction")
      ->capture_default_str();
  sp_cmd->add_option("--bins", sp_bins, "Radial profile bins")->capture_default_str();
  sp_cmd->add_option("--out-map", sp_map, "Energy map CSV path");
  sp_cmd->add_option("--out-profile", sp_profile, "Radial profile CSV path");

  // init-dump
  std::int64_t id_k = 9;
  double id_sigma0 = 0.0, id_sigma1 = 0.0;
  bool id_zero_dc = false;
  std::string id_out = "taps.frtn";
  auto* id_cmd = app.add_subcommand("init-dump", "Dump Difference-of-Exponential kernel taps");
  id_cmd->add_option("--k", id_k, "Kernel extent")->check(CLI::IsMember({3, 5, 7, 9}))
      ->capture_default_str();
  id_cmd->add_option("--sigma0", id_sigma0, "Wide scale (0 = derive from K)")
      ->capture_default_str();
  id_cmd->add_option("--sigma1", id_sigma1, "Pointwise scale (0 = default 0.25)")
      ->capture_default_str();
  id_cmd->add_flag("--zero-dc", id_zero_dc, "Rescale the subtrahend so the tap sum is 0");
  id_cmd->add_option("--out", id_out, "Output FRTN path")->capture_default_str();

  // gradcheck
  std::uint64_t gc_seed = 1;
  std::string gc_format = "table", gc_out;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every backward op");
  gc_cmd->add_option("--seed", gc_seed, "Case seed")->capture_default_str();
  gc_cmd->add_option("--format", gc_format, "Output format")
      ->check(CLI::IsMember({"json", "table"}))
      ->capture_default_str();
  gc_cmd->add_option("--out", gc_out, "Write the report to a file");

  // train
  TrainFlags tf;
  std::string train_out_dir;
  bool dump_data = false;
  auto* train_cmd = app.add_subcommand("train", "Train the toy FreConv net on the synthetic task");
  train_cmd->add_option("--size", tf.size, "Image extent")->capture_default_str();
  train_cmd->add_option("--channels", tf.channels, "Image channels")->capture_default_str();
  train_cmd->add_option("--train-per-class", tf.train_per_class, "Training samples per class")
      ->capture_default_str();
  train_cmd->add_option("--test-per-class", tf.test_per_class, "Test samples per class")
      ->capture_default_str();
  train_cmd->add_option("--noise", tf.noise, "Additive noise sigma")->capture_default_str();
  train_cmd->add_option("--data-seed", tf.data_seed, "Dataset seed")->capture_default_str();
  train_cmd->add_option("--epochs", tf.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--batch", tf.batch, "Batch size")->capture_default_str();
  train_cmd->add_option("--lr", tf.lr, "Learning rate")->capture_default_str();
  train_cmd->add_option("--momentum", tf.momentum, "SGD momentum")->capture_default_str();
  train_cmd->add_option("--weight-decay", tf.weight_decay, "Weight decay")
      ->capture_default_str();
  train_cmd->add_option("--seed", tf.seed, "Init/shuffle seed")->capture_default_str();
  train_cmd->add_option("--split", tf.split, "Feature split mode (ablation)")
      ->check(CLI::IsMember({"attention", "direct"}))
      ->capture_default_str();
  train_cmd->add_option("--out-dir", train_out_dir, "Checkpoint directory");
  train_cmd->add_flag("--dump-data", dump_data, "Also write the dataset next to the checkpoint");

  // eval
  std::string eval_checkpoint;
  std::int64_t eval_test_per_class = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a held-out synth set");
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--test-per-class", eval_test_per_class,
                       "Held-out samples per class (0 = train/4)")
      ->capture_default_str();

  std::vector<std::string> argv_vec = args;
  try {
    std::vector<const char*> argv;
    argv.push_back("freconv");
    for (const auto& a : argv_vec) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    set_num_threads(threads);
    if (build_cmd->parsed()) return cmd_build(build_flags, build_out, out);
    if (analyze_cmd->parsed())
      return cmd_analyze(analyze_flags, analyze_graph, analyze_format, analyze_flops,
                         compare_baseline, analyze_out, out);
    if (sp_cmd->parsed())
      return cmd_spectrum(sp_input, sp_noise, sp_size, sp_channels, sp_seed, sp_branch,
                          sp_out_channels, sp_n, sp_mode, sp_g1, sp_kernels, sp_split, sp_bins,
                          sp_map, sp_profile, out);
    if (id_cmd->parsed()) return cmd_init_dump(id_k, id_sigma0, id_sigma1, id_zero_dc, id_out, out);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc_seed, gc_format, gc_out, out);
    if (train_cmd->parsed()) return cmd_train(tf, train_out_dir, dump_data, out);
    if (eval_cmd->parsed()) return cmd_eval(eval_checkpoint, eval_test_per_class, out);
    err << "error: no subcommand\n";
    return 1;
  } catch (const Error& e) {
    // Library errors here stem from user-supplied flags, files, or configs.
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "internal failure: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace freconv::cli
