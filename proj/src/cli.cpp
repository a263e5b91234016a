#include "nestfuse/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "nestfuse/checkpoint.hpp"
#include "nestfuse/error.hpp"
#include "nestfuse/fusion.hpp"
#include "nestfuse/image_io.hpp"
#include "nestfuse/metrics.hpp"
#include "nestfuse/pipeline.hpp"
#include "nestfuse/training.hpp"

namespace nestfuse::cli {
namespace {

namespace fs = std::filesystem;

// Thrown for argument problems detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  atomic_write(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void require_dir(const fs::path& dir, const char* flag) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw UsageError(std::string(flag) + ": not a directory: " + dir.string());
}

void require_file(const fs::path& file, const char* flag) {
  std::error_code ec;
  if (!fs::is_regular_file(file, ec)) throw UsageError(std::string(flag) + ": no such file: " + file.string());
}

void require_writable_parent(const fs::path& file, const char* flag) {
  const fs::path parent = file.has_parent_path() ? file.parent_path() : fs::path(".");
  std::error_code ec;
  if (!fs::is_directory(parent, ec)) {
    throw UsageError(std::string(flag) + ": directory does not exist: " + parent.string());
  }
}

PoolingKind pooling_from(const std::string& name) {
  const auto kind = parse_pooling(name);
  if (!kind) throw UsageError("unknown pooling '" + name + "' (expected avg, max or nuclear)");
  return *kind;
}

// Image files of a directory keyed by file stem.
std::map<std::string, fs::path> images_by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (e.is_regular_file() && is_image_file(e.path())) out.emplace(e.path().stem().string(), e.path());
  }
  return out;
}

struct SourcePair {
  std::string stem;
  fs::path ir, vis;
};

// DIR/ir/<stem>.* matched with DIR/vis/<stem>.*; unmatched names go to `err`.
std::vector<SourcePair> find_pairs(const fs::path& dir, std::ostream& err) {
  require_dir(dir / "ir", "--pairs");
  require_dir(dir / "vis", "--pairs");
  const auto ir = images_by_stem(dir / "ir");
  const auto vis = images_by_stem(dir / "vis");
  std::vector<SourcePair> pairs;
  for (const auto& [stem, path] : ir) {
    const auto it = vis.find(stem);
    if (it == vis.end()) {
      err << "warning: " << path.string() << " has no visible counterpart; skipped\n";
      continue;
    }
    pairs.push_back({stem, path, it->second});
  }
  for (const auto& [stem, path] : vis) {
    if (!ir.contains(stem)) err << "warning: " << path.string() << " has no infrared counterpart; skipped\n";
  }
  return pairs;
}

NetworkState load_for_inference(const fs::path& ckpt, int head, std::ostream& err) {
  Checkpoint ck = load_checkpoint(ckpt);
  if (head != 0 && !ck.state.deep_supervision()) {
    throw UsageError("--head needs a checkpoint trained with deep supervision");
  }
  if (head == 0 && ck.state.deep_supervision()) {
    err << "warning: " << ckpt.string()
        << " carries deep-supervision heads; they are ignored for plain inference"
           " (the main output convolution is not trained by the deep-supervised loss; use --head 1|2|3)\n";
    ck.state.drop_heads();
  }
  return std::move(ck.state);
}

std::string format_lambda(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// ---- train -------------------------------------------------------------

struct TrainArgs {
  std::string corpus, out, loss_csv;
  double lambda = 100.0;
  int epochs = 2;
  int batch = 4;
  double lr = 1e-4;
  bool deep_supervision = false;
  std::uint64_t seed = 1;
  int image_size = 256;
  int checkpoint_every = 0;
  int log_every = 10;
};

void add_training_flags(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--lambda", a.lambda, "SSIM loss weight (> 0)")->capture_default_str();
  cmd->add_option("--epochs", a.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--batch", a.batch, "Batch size")->capture_default_str();
  cmd->add_option("--lr", a.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--seed", a.seed, "Initialisation and shuffling seed")->capture_default_str();
  cmd->add_option("--image-size", a.image_size, "Training resolution (multiple of 16)")->capture_default_str();
  cmd->add_option("--log-every", a.log_every, "Print the loss every N iterations (0: never)")
      ->capture_default_str();
}

TrainConfig config_from(const TrainArgs& a) {
  if (!(a.lambda > 0.0)) throw UsageError("--lambda must be > 0");
  TrainConfig c;
  c.corpus_dir = a.corpus;
  c.image_size = a.image_size;
  c.epochs = a.epochs;
  c.batch_size = a.batch;
  c.lambda = a.lambda;
  c.learning_rate = a.lr;
  c.seed = a.seed;
  c.deep_supervision = a.deep_supervision;
  c.checkpoint_every = a.checkpoint_every;
  c.checkpoint_path = a.out;
  try {
    c.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return c;
}

StepCallback progress(int every, std::ostream& out) {
  return [every, &out](const TrainStep& s) {
    if (every > 0 && s.iteration % every == 0) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "iter %lld  epoch %d  pixel %.6g  ssim %.6g  total %.6g\n", s.iteration,
                    s.epoch + 1, s.loss.pixel, s.loss.ssim, s.loss.total);
      out << buf << std::flush;
    }
  };
}

Corpus load_corpus(const std::string& dir, int size, std::ostream& err) {
  require_dir(dir, "--corpus");
  return prepare_corpus(dir, size, [&err](const std::string& m) { err << "warning: " << m << '\n'; });
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const TrainConfig config = config_from(a);
  require_writable_parent(a.out, "--out");
  const fs::path loss_csv = a.loss_csv.empty() ? fs::path(a.out + ".loss.csv") : fs::path(a.loss_csv);
  require_writable_parent(loss_csv, "--loss-csv");
  const Corpus corpus = load_corpus(a.corpus, a.image_size, err);
  out << "corpus: " << corpus.images.size() << " images, "
      << corpus.images.size() / static_cast<std::size_t>(a.batch) << " iterations per epoch\n";
  const TrainResult result = train(config, corpus, progress(a.log_every, out));
  save_checkpoint(result.state, config.lambda, a.out);
  std::ostringstream csv;
  write_loss_csv(csv, result.history);
  write_text(loss_csv, csv.str());
  out << "wrote " << a.out << " and " << loss_csv.string() << '\n';
  return kExitOk;
}

// ---- fuse / reconstruct ------------------------------------------------

struct FuseArgs {
  std::string ckpt, a, b, out, pooling = "avg";
  int head = 0;
};

int cmd_fuse(const FuseArgs& a, std::ostream& out, std::ostream& err) {
  const PoolingKind kind = pooling_from(a.pooling);
  require_file(a.ckpt, "--ckpt");
  require_file(a.a, "--a");
  require_file(a.b, "--b");
  require_writable_parent(a.out, "--out");
  const NetworkState state = load_for_inference(a.ckpt, a.head, err);
  const Image ia = load_image(a.a);
  const Image ib = load_image(a.b);
  if (!ia.same_shape(ib)) {
    throw UsageError("input sizes differ: " + ia.shape_string() + " vs " + ib.shape_string());
  }
  save_image(fuse_images(ia, ib, state, kind, {a.head}), a.out);
  out << "wrote " << a.out << '\n';
  return kExitOk;
}

struct ReconstructArgs {
  std::string ckpt, in, out;
  int head = 0;
};

int cmd_reconstruct(const ReconstructArgs& a, std::ostream& out, std::ostream& err) {
  require_file(a.ckpt, "--ckpt");
  require_file(a.in, "--in");
  require_writable_parent(a.out, "--out");
  const NetworkState state = load_for_inference(a.ckpt, a.head, err);
  save_image(reconstruct_image(load_image(a.in), state, {a.head}), a.out);
  out << "wrote " << a.out << '\n';
  return kExitOk;
}

// ---- eval --------------------------------------------------------------

struct EvalArgs {
  std::string pairs, fused, report;
};

constexpr const char* kMiNote =
    "note: MI is the fusion mutual information I(F;IR) + I(F;VIS); unlike some published tables it "
    "is not tied to 2 x En.\n";

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  require_dir(a.fused, "--fused");
  require_writable_parent(a.report, "--report");
  const auto pairs = find_pairs(a.pairs, err);
  const auto fused = images_by_stem(a.fused);
  std::vector<MetricsReport> reports;
  for (const SourcePair& p : pairs) {
    const auto it = fused.find(p.stem);
    if (it == fused.end()) {
      err << "warning: no fused image for pair " << p.stem << "; skipped\n";
      continue;
    }
    reports.push_back(evaluate_pair(p.stem, load_image(it->second), load_image(p.ir), load_image(p.vis)));
  }
  for (const auto& [stem, path] : fused) {
    const bool matched = std::any_of(pairs.begin(), pairs.end(), [&](const SourcePair& p) { return p.stem == stem; });
    if (!matched) err << "warning: " << path.string() << " matches no source pair; skipped\n";
  }
  if (reports.empty()) throw UsageError("no fused image matched a source pair");
  std::ostringstream csv;
  write_metrics_csv(csv, reports);
  write_text(a.report, csv.str());
  out << "evaluated " << reports.size() << " pairs; wrote " << a.report << '\n' << kMiNote;
  return kExitOk;
}

// ---- ablate ------------------------------------------------------------

struct AblateArgs {
  TrainArgs train;
  std::string pairs, out_dir, report;
  std::vector<double> lambdas{1.0, 10.0, 100.0, 1000.0};
  std::vector<std::string> poolings{"avg", "max", "nuclear"};
};

struct LoadedPair {
  std::string stem;
  Image ir, vis;
};

MetricsReport evaluate_model(const NetworkState& state, const std::vector<LoadedPair>& pairs, PoolingKind kind,
                             OutputSelect sel) {
  std::vector<MetricsReport> reports;
  for (const LoadedPair& p : pairs) {
    const Image f = fuse_images(p.ir, p.vis, state, kind, sel);
    reports.push_back(evaluate_pair(p.stem, f, p.ir, p.vis));
  }
  return aggregate(reports);
}

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
  if (a.lambdas.empty()) throw UsageError("--lambdas is empty");
  if (a.poolings.empty()) throw UsageError("--poolings is empty");
  std::vector<PoolingKind> kinds;
  for (const std::string& p : a.poolings) kinds.push_back(pooling_from(p));
  for (double l : a.lambdas) {
    if (!(l > 0.0)) throw UsageError("every lambda must be > 0");
  }
  TrainArgs ta = a.train;
  (void)config_from(ta);
  require_dir(a.out_dir, "--out-dir");
  const fs::path report = a.report.empty() ? fs::path(a.out_dir) / "ablation.csv" : fs::path(a.report);
  require_writable_parent(report, "--report");

  std::vector<LoadedPair> pairs;
  for (const SourcePair& p : find_pairs(a.pairs, err)) {
    LoadedPair lp{p.stem, load_image(p.ir), load_image(p.vis)};
    if (!lp.ir.same_shape(lp.vis)) {
      err << "warning: pair " << p.stem << " has mismatched sizes; skipped\n";
      continue;
    }
    pairs.push_back(std::move(lp));
  }
  if (pairs.empty()) throw UsageError("no usable source pairs in " + a.pairs);
  const Corpus corpus = load_corpus(ta.corpus, ta.image_size, err);

  std::ostringstream csv;
  csv << "model,lambda,pooling";
  for (const char* name : kMetricNames) csv << ',' << name;
  csv << '\n';
  auto row = [&csv, &out](const std::string& model, double lambda, PoolingKind kind, const MetricsReport& r) {
    std::ostringstream line;
    line << model << ',' << format_lambda(lambda) << ',' << to_string(kind);
    for (double v : r.values()) line << ',' << format_metric(v);
    csv << line.str() << '\n';
    out << line.str() << '\n';
  };

  auto train_cell = [&](double lambda, bool ds) {
    TrainArgs cell = ta;
    cell.lambda = lambda;
    cell.deep_supervision = ds;
    const fs::path ckpt = fs::path(a.out_dir) / ((ds ? "ds_lambda_" : "lambda_") + format_lambda(lambda) + ".ckpt");
    cell.out = ckpt.string();
    TrainConfig config = config_from(cell);
    config.checkpoint_every = 0;
    out << "training " << (ds ? "deep-supervised " : "") << "model, lambda " << format_lambda(lambda) << '\n';
    const TrainResult result = train(config, corpus, progress(ta.log_every, out));
    save_checkpoint(result.state, lambda, ckpt);
    return result.state;
  };

  for (double lambda : a.lambdas) {
    const NetworkState state = train_cell(lambda, false);
    for (PoolingKind kind : kinds) row("global", lambda, kind, evaluate_model(state, pairs, kind, {}));
  }
  if (ta.deep_supervision) {
    const bool has100 = std::find(a.lambdas.begin(), a.lambdas.end(), 100.0) != a.lambdas.end();
    const double lambda = has100 ? 100.0 : a.lambdas.front();
    const NetworkState state = train_cell(lambda, true);
    for (int head = 1; head <= 3; ++head) {
      for (PoolingKind kind : kinds) {
        row("O" + std::to_string(head), lambda, kind, evaluate_model(state, pairs, kind, {head}));
      }
    }
  }
  write_text(report, csv.str());
  out << "wrote " << report.string() << '\n' << kMiNote;
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"NestFuse infrared/visible image fusion"};
  app.name("nestfuse");
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train the auto-encoder on a directory of images");
  train_cmd->add_option("--corpus", ta.corpus, "Directory of training images")->required();
  train_cmd->add_option("--out", ta.out, "Checkpoint to write")->required();
  train_cmd->add_flag("--deep-supervision", ta.deep_supervision, "Train the three deep-supervision heads");
  train_cmd->add_option("--loss-csv", ta.loss_csv, "Loss history CSV (default: <out>.loss.csv)");
  train_cmd->add_option("--checkpoint-every", ta.checkpoint_every, "Also checkpoint every N iterations");
  add_training_flags(train_cmd, ta);

  FuseArgs fa;
  auto* fuse_cmd = app.add_subcommand("fuse", "Fuse an infrared and a visible image");
  fuse_cmd->add_option("--ckpt", fa.ckpt, "Checkpoint")->required();
  fuse_cmd->add_option("--a", fa.a, "First source (infrared)")->required();
  fuse_cmd->add_option("--b", fa.b, "Second source (visible)")->required();
  fuse_cmd->add_option("--out", fa.out, "Fused PNG")->required();
  fuse_cmd->add_option("--pooling", fa.pooling, "Channel attention pooling: avg, max or nuclear")
      ->capture_default_str();
  fuse_cmd->add_option("--head", fa.head, "Decode with deep-supervision head 1-3 instead of the main output");

  ReconstructArgs ra;
  auto* rec_cmd = app.add_subcommand("reconstruct", "Encode and decode one image");
  rec_cmd->add_option("--ckpt", ra.ckpt, "Checkpoint")->required();
  rec_cmd->add_option("--in", ra.in, "Input image")->required();
  rec_cmd->add_option("--out", ra.out, "Output PNG")->required();
  rec_cmd->add_option("--head", ra.head, "Decode with deep-supervision head 1-3");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Compute quality metrics for fused images");
  eval_cmd->add_option("--pairs", ea.pairs, "Directory with ir/ and vis/ subdirectories")->required();
  eval_cmd->add_option("--fused", ea.fused, "Directory of fused images named by pair stem")->required();
  eval_cmd->add_option("--report", ea.report, "CSV report to write")->required();

  AblateArgs aa;
  auto* abl_cmd = app.add_subcommand("ablate", "Lambda x pooling grid, optionally with deep supervision");
  abl_cmd->add_option("--corpus", aa.train.corpus, "Directory of training images")->required();
  abl_cmd->add_option("--pairs", aa.pairs, "Directory with ir/ and vis/ subdirectories")->required();
  abl_cmd->add_option("--out-dir", aa.out_dir, "Directory for checkpoints and the report")->required();
  abl_cmd->add_option("--report", aa.report, "Grid CSV (default: <out-dir>/ablation.csv)");
  abl_cmd->add_option("--lambdas", aa.lambdas, "Comma-separated lambda values")->delimiter(',')->capture_default_str();
  abl_cmd->add_option("--poolings", aa.poolings, "Comma-separated pooling kinds")->delimiter(',')->capture_default_str();
  abl_cmd->add_flag("--deep-supervision", aa.train.deep_supervision, "Add the O1/O2/O3 rows");
  add_training_flags(abl_cmd, aa.train);

  std::vector<const char*> argv{"nestfuse"};
  for (const std::string& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(ta, out, err);
    if (*fuse_cmd) return cmd_fuse(fa, out, err);
    if (*rec_cmd) return cmd_reconstruct(ra, out, err);
    if (*eval_cmd) return cmd_eval(ea, out, err);
    if (*abl_cmd) return cmd_ablate(aa, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    return e.code() == ErrorCode::kNumerical ? kExitNumerical : kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace nestfuse::cli
