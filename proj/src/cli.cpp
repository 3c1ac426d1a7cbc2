#include "motionforge/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "motionforge/aes.hpp"
#include "motionforge/errors.hpp"
#include "motionforge/metrics.hpp"
#include "motionforge/parallel.hpp"
#include "motionforge/ssd_lab.hpp"
#include "motionforge/synthgen.hpp"
#include "motionforge/tensor_io.hpp"
#include "motionforge/verify.hpp"

namespace motionforge::cli {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void require(bool condition, const std::string& message) {
  if (!condition) {
    throw InvalidParameter(message);
  }
}

std::ofstream open_output(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream out(path, std::ios::out | mode);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }
}

}  // namespace

void RunConfig::validate() const {
  require(count >= 1, "--count must be >= 1");
  require(height >= 8 && width >= 8, "image dimensions must be >= 8");
  require(height % 4 == 0 && width % 4 == 0, "image dimensions must be divisible by 4");
  require(std::isfinite(gamma) && gamma > 0.0, "--gamma must be positive");
  require(magnitude >= 0.0 && std::isfinite(magnitude), "--magnitude must be >= 0");
  if (command == "gen" && task == Task::sir) {
    require(magnitude <= gamma / 2.0, "SIR --magnitude must not exceed gamma / 2");
  } else if (command == "gen") {
    require(magnitude <= gamma, "RSC --magnitude must not exceed gamma");
  }
  require(noise_scale >= 0.0 && std::isfinite(noise_scale), "--noise-scale must be >= 0");
  require(timesteps >= 1, "--timesteps must be >= 1");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          "beta range must satisfy 0 < beta-start <= beta-end < 1");
  require(hidden >= 1, "--hidden must be >= 1");
  LossConfig{w_diff, w_cond, w_pct}.validate();
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), "--lr must be >= 0");
  require(momentum >= 0.0 && momentum < 1.0, "--momentum must lie in [0, 1)");
  require(epochs >= 0, "--epochs must be >= 0");
  require(batch_size >= 1, "--batch-size must be >= 1");
  require(steps >= 1 && steps <= timesteps, "--steps must lie in [1, T]");
  require(!steps_list.empty(), "--steps-list must not be empty");
  for (int s : steps_list) {
    require(s >= 1 && s <= timesteps, "--steps-list entries must lie in [1, T]");
  }
  require(!ensemble_k.empty(), "--k must not be empty");
  for (int k : ensemble_k) {
    require(k >= 1, "--k entries must be >= 1");
  }
  require(edge_band >= -1, "--edge-band must be >= 0");
  require(trend_margin >= 0.0 && flat_tolerance > 0.0, "trend thresholds must be positive");
  require(threads >= 0, "--threads must be >= 0");
}

int RunConfig::effective_edge_band(int h, int w) const {
  if (edge_band >= 0) {
    return edge_band;
  }
  return std::max(1, static_cast<int>(std::lround(16.0 * std::min(h, w) / 256.0)));
}

std::vector<std::pair<std::string, std::string>> parse_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read config file " + path.string());
  }
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line.erase(hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidParameter(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    std::ranges::replace(key, '_', '-');
    if (key.empty()) {
      throw InvalidParameter(path.string() + ":" + std::to_string(lineno) + ": empty key");
    }
    entries.emplace_back(key, value);
  }
  return entries;
}

RunLock::RunLock(const fs::path& dir) : path_(dir / "run.lock") {
  ensure_dir(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    const std::string reason = errno == EEXIST ? "another run holds it (remove it if stale)" : std::strerror(errno);
    throw IoError("cannot lock " + path_.string() + ": " + reason);
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// Checkpoints

void save_checkpoint(const fs::path& dir, const MotionModel& model, const TrainState& state, std::uint64_t seed,
                     int batch_size) {
  ensure_dir(dir / "params");
  const DenoiserModel& d = model.denoiser;
  for (const auto& block : d.layout()) {
    RawTensor raw;
    for (int v : block.dims) {
      raw.dims.push_back(static_cast<std::uint32_t>(v));
    }
    for (double v : d.block(block.name)) {
      raw.values.push_back(static_cast<float>(v));
    }
    write_stmt(dir / "params" / (block.name + ".stmt"), raw);
  }
  RawTensor velocity{{static_cast<std::uint32_t>(state.velocity.size())}, {}};
  for (double v : state.velocity) {
    velocity.values.push_back(static_cast<float>(v));
  }
  write_stmt(dir / "velocity.stmt", velocity);

  const DenoiserConfig& c = d.config();
  std::ostringstream meta;
  meta << "format = motionforge-checkpoint 1\n"
       << "task = " << task_name(model.task) << "\n"
       << "conditions = " << c.conditions << "\n"
       << "latent_channels = " << c.latent_channels << "\n"
       << "hidden = " << c.hidden << "\n"
       << "time_features = " << c.time_features << "\n"
       << "timesteps = " << c.timesteps << "\n"
       << "beta_start = " << num(c.beta_start) << "\n"
       << "beta_end = " << num(c.beta_end) << "\n"
       << "gamma = " << num(model.gamma) << "\n"
       << "latent_factor = " << model.latent_factor << "\n"
       << "step = " << state.step << "\n"
       << "seed = " << seed << "\n"
       << "batch_size = " << batch_size << "\n";
  // model.txt goes last so a readable checkpoint is always complete.
  auto out = open_output(dir / "model.txt");
  out << meta.str();
  if (!out) {
    throw IoError("cannot write " + (dir / "model.txt").string());
  }
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path meta_path = dir / "model.txt";
  if (!fs::exists(meta_path)) {
    throw IoError("no checkpoint in " + dir.string() + " (missing model.txt)");
  }
  std::map<std::string, std::string> meta;
  for (auto& [k, v] : parse_config_file(meta_path)) {
    meta[k] = v;
  }
  auto get = [&](const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) {
      throw IoError("checkpoint model.txt lacks " + key);
    }
    return it->second;
  };
  DenoiserConfig c;
  Checkpoint ck;
  try {
    c.conditions = std::stoi(get("conditions"));
    c.latent_channels = std::stoi(get("latent-channels"));
    c.hidden = std::stoi(get("hidden"));
    c.time_features = std::stoi(get("time-features"));
    c.timesteps = std::stoi(get("timesteps"));
    c.beta_start = std::stod(get("beta-start"));
    c.beta_end = std::stod(get("beta-end"));
    ck.model.task = parse_task(get("task"));
    ck.model.gamma = std::stod(get("gamma"));
    ck.model.latent_factor = std::stoi(get("latent-factor"));
    ck.state.step = std::stoll(get("step"));
    ck.seed = std::stoull(get("seed"));
    ck.batch_size = std::stoi(get("batch-size"));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError("corrupt checkpoint model.txt: " + std::string(e.what()));
  }
  ck.model.denoiser = DenoiserModel(c);
  ck.model.schedule = build_schedule(c.timesteps, c.beta_start, c.beta_end);
  for (const auto& block : ck.model.denoiser.layout()) {
    const RawTensor raw = read_stmt(dir / "params" / (block.name + ".stmt"));
    if (raw.element_count() != block.size()) {
      throw IoError("checkpoint tensor " + block.name + " has the wrong size");
    }
    auto dst = ck.model.denoiser.block(block.name);
    std::ranges::copy(raw.values, dst.begin());
  }
  const RawTensor velocity = read_stmt(dir / "velocity.stmt");
  if (velocity.element_count() != ck.model.denoiser.parameters().size()) {
    throw IoError("checkpoint velocity has the wrong size");
  }
  ck.state.velocity.assign(velocity.values.begin(), velocity.values.end());
  return ck;
}

namespace {

// Commands

std::vector<SampleRecord> load_records(const RunConfig& cfg, Task expected, std::vector<std::string>* ids) {
  require(!cfg.data_dir.empty(), "--data is required");
  std::vector<SampleRecord> records = read_dataset(cfg.data_dir);
  if (ids != nullptr) {
    for (const auto& p : list_samples(cfg.data_dir)) {
      ids->push_back(p.filename().string());
    }
  }
  for (const auto& r : records) {
    require(r.task == expected, "dataset task " + task_name(r.task) + " does not match " + task_name(expected));
    require(r.image_gt.height() % 4 == 0 && r.image_gt.width() % 4 == 0,
            "sample dimensions must be divisible by 4");
  }
  return records;
}

int cmd_gen(const RunConfig& cfg, std::ostream& out) {
  require(!cfg.out_dir.empty(), "--out is required");
  RunLock lock(cfg.out_dir);
  DatasetSpec spec;
  spec.task = cfg.task;
  spec.count = cfg.count;
  spec.seed = cfg.seed;
  spec.height = cfg.height;
  spec.width = cfg.width;
  spec.magnitude = cfg.magnitude;
  spec.noise_scale = cfg.noise_scale;
  spec.gamma = cfg.gamma;
  const auto records = generate_dataset(spec, cfg.threads);
  write_dataset(records, cfg.out_dir);
  out << "wrote " << records.size() << " " << task_name(cfg.task) << " samples to " << cfg.out_dir << "\n";
  return kOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  require(!cfg.out_dir.empty(), "--out is required");
  const auto records = load_records(cfg, cfg.task, nullptr);
  RunLock lock(cfg.out_dir);

  MotionModel model;
  TrainState state;
  if (cfg.resume) {
    Checkpoint ck = load_checkpoint(cfg.out_dir);
    require(ck.model.task == cfg.task, "checkpoint task differs from --task");
    require(ck.seed == cfg.seed && ck.batch_size == cfg.batch_size,
            "--resume needs the original --seed and --batch-size");
    require(ck.model.gamma == cfg.gamma, "--resume needs the original --gamma");
    model = std::move(ck.model);
    state = std::move(ck.state);
  } else {
    DenoiserConfig dc;
    dc.conditions = condition_count(cfg.task);
    dc.hidden = cfg.hidden;
    dc.timesteps = cfg.timesteps;
    dc.beta_start = cfg.beta_start;
    dc.beta_end = cfg.beta_end;
    model.denoiser = DenoiserModel::create(dc, cfg.seed);
    model.schedule = build_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);
    model.gamma = cfg.gamma;
    model.task = cfg.task;
  }

  std::vector<TrainingExample> data;
  data.reserve(records.size());
  for (const auto& r : records) {
    data.push_back(make_training_example(r, model.gamma, model.latent_factor));
  }
  const PerceptualProxy proxy;
  const LossContext ctx{model.schedule, proxy, LossConfig{cfg.w_diff, cfg.w_cond, cfg.w_pct}, model.gamma,
                        model.latent_factor};
  TrainOptions opt;
  opt.epochs = cfg.epochs;
  opt.batch_size = cfg.batch_size;
  opt.learning_rate = cfg.learning_rate;
  opt.momentum = cfg.momentum;
  opt.seed = cfg.seed;
  opt.threads = cfg.threads;

  // Keep the log rows that precede the checkpoint; a resumed run rewrites the rest.
  const fs::path log_path = fs::path(cfg.out_dir) / "train_log.csv";
  std::vector<std::string> kept;
  if (cfg.resume && fs::exists(log_path)) {
    std::ifstream in(log_path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (!line.empty() && std::stoll(line.substr(0, line.find(','))) < state.step) {
        kept.push_back(line);
      }
    }
  }
  auto log = open_output(log_path);
  log << "step,loss_total,loss_diff,loss_cond,loss_pct\n";
  for (const auto& line : kept) {
    log << line << "\n";
  }

  const int spe = steps_per_epoch(data.size(), cfg.batch_size);
  train(model.denoiser, data, ctx, opt, state, [&](const LossRecord& r) {
    log << r.step << "," << num(r.total) << "," << num(r.parts.diff) << "," << num(r.parts.cond) << ","
        << num(r.parts.pct) << "\n";
    if ((r.step + 1) % spe == 0) {
      log.flush();
      save_checkpoint(cfg.out_dir, model, state, cfg.seed, cfg.batch_size);
    }
  });
  log.flush();
  if (!log) {
    throw IoError("cannot write " + log_path.string());
  }
  save_checkpoint(cfg.out_dir, model, state, cfg.seed, cfg.batch_size);
  out << "trained to step " << state.step << "; checkpoint in " << cfg.out_dir << "\n";
  return kOk;
}

MotionModel load_model(const RunConfig& cfg) {
  require(!cfg.checkpoint_dir.empty(), "--checkpoint is required");
  return load_checkpoint(cfg.checkpoint_dir).model;
}

int cmd_infer(const RunConfig& cfg, std::ostream& out) {
  require(!cfg.out_dir.empty(), "--out is required");
  const MotionModel model = load_model(cfg);
  std::vector<std::string> ids;
  const auto records = load_records(cfg, model.task, &ids);
  require(cfg.steps <= model.schedule.steps(), "--steps exceeds the model's T");
  RunLock lock(cfg.out_dir);

  const std::size_t n = records.size();
  std::vector<double> psnrs(n), ssims(n), epes(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        const auto& rec = records[i];
        const Prediction pred = predict(model, rec, cfg.steps, sample_seed(cfg.seed, i));
        const fs::path dir = fs::path(cfg.out_dir) / ids[i];
        ensure_dir(dir);
        write_flo(dir / "flow.flo", pred.flow);
        write_png(dir / "warped.png", pred.warped);
        if (rec.task == Task::sir) {
          write_png(dir / "warped_mask.png", pred.warped_mask);
        }
        write_png(dir / "heatmap.png", heatmap(pred.warped, rec.image_gt));
        psnrs[i] = psnr(pred.warped, rec.image_gt);
        ssims[i] = ssim(pred.warped, rec.image_gt);
        epes[i] = flow_epe(pred.flow, rec.flow_gt);
      },
      cfg.threads);

  auto csv = open_output(fs::path(cfg.out_dir) / "metrics.csv");
  csv << "sample_id,psnr_db,ssim,flow_epe\n";
  double mean_psnr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    csv << ids[i] << "," << csv_num(psnr_for_csv(psnrs[i])) << "," << csv_num(ssims[i]) << "," << csv_num(epes[i])
        << "\n";
    mean_psnr += psnr_for_csv(psnrs[i]);
  }
  if (!csv) {
    throw IoError("cannot write metrics.csv");
  }
  out << "inferred " << n << " samples with " << cfg.steps << " step(s); mean PSNR "
      << csv_num(mean_psnr / static_cast<double>(n)) << " dB\n";
  return kOk;
}

int cmd_ensemble(const RunConfig& cfg, std::ostream& out) {
  require(!cfg.out_dir.empty(), "--out is required");
  const MotionModel model = load_model(cfg);
  if (model.task != Task::sir) {
    throw InvalidParameter(
        "ensemble refused: AES is defined for stitched image rectangling only (RSC outputs have no margin mask)");
  }
  std::vector<std::string> ids;
  const auto records = load_records(cfg, model.task, &ids);
  RunLock lock(cfg.out_dir);

  const int k_max = *std::ranges::max_element(cfg.ensemble_k);
  const std::size_t n = records.size();
  const std::size_t nk = cfg.ensemble_k.size();
  std::vector<std::vector<EnsembleOutcome>> outcomes(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        const auto& rec = records[i];
        std::vector<Prediction> members;
        for (int m = 0; m < k_max; ++m) {
          members.push_back(predict(model, rec, cfg.steps, member_seed(cfg.seed, i, static_cast<std::size_t>(m))));
        }
        const int band = cfg.effective_edge_band(rec.image_gt.height(), rec.image_gt.width());
        for (int k : cfg.ensemble_k) {
          const std::vector<Prediction> prefix(members.begin(), members.begin() + k);
          EnsembleOutcome o = fuse_predictions(rec, prefix, band);
          const fs::path dir = fs::path(cfg.out_dir) / ("k" + std::to_string(k));
          ensure_dir(dir);
          write_png(dir / (ids[i] + ".png"), o.fused);
          o.set = {};  // drop member images once fused
          outcomes[i].push_back(std::move(o));
        }
      },
      cfg.threads);

  auto csv = open_output(fs::path(cfg.out_dir) / "ensemble.csv");
  csv << "k,psnr_db,ssim\n";
  auto detail = open_output(fs::path(cfg.out_dir) / "ensemble_samples.csv");
  detail << "sample_id,k,psnr_db,ssim,fused_whiteness,max_member_whiteness,min_member_whiteness\n";
  for (std::size_t j = 0; j < nk; ++j) {
    double p = 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& o = outcomes[i][j];
      p += psnr_for_csv(o.psnr_db);
      s += o.ssim;
      detail << ids[i] << "," << cfg.ensemble_k[j] << "," << csv_num(psnr_for_csv(o.psnr_db)) << ","
             << csv_num(o.ssim) << "," << csv_num(o.fused_whiteness) << ","
             << csv_num(*std::ranges::max_element(o.member_whiteness)) << ","
             << csv_num(*std::ranges::min_element(o.member_whiteness)) << "\n";
    }
    csv << cfg.ensemble_k[j] << "," << csv_num(p / static_cast<double>(n)) << "," << csv_num(s / static_cast<double>(n))
        << "\n";
    out << "K=" << cfg.ensemble_k[j] << ": mean PSNR " << csv_num(p / static_cast<double>(n)) << " dB\n";
  }
  if (!csv || !detail) {
    throw IoError("cannot write ensemble CSVs");
  }
  return kOk;
}

int cmd_ssd(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require(!cfg.out_dir.empty(), "--out is required");
  const MotionModel model = load_model(cfg);
  const auto records = load_records(cfg, model.task, nullptr);
  for (int s : cfg.steps_list) {
    require(s <= model.schedule.steps(), "--steps-list entry exceeds the model's T");
  }
  RunLock lock(cfg.out_dir);
  const auto rows = ssd::steps_sweep(model, records, cfg.steps_list, cfg.seed, cfg.threads);
  auto csv = open_output(fs::path(cfg.out_dir) / "sweep.csv");
  csv << "steps,psnr_db,ssim,flow_epe,n_samples\n";
  for (const auto& r : rows) {
    csv << r.steps << "," << csv_num(r.psnr_db) << "," << csv_num(r.ssim) << "," << csv_num(r.flow_epe) << ","
        << r.samples << "\n";
    out << "steps=" << r.steps << ": PSNR " << csv_num(r.psnr_db) << " dB, SSIM " << csv_num(r.ssim) << ", EPE "
        << csv_num(r.flow_epe) << " px\n";
  }
  if (!csv) {
    throw IoError("cannot write sweep.csv");
  }

  const auto fewest = std::ranges::min_element(rows, {}, &ssd::SweepRow::steps);
  const auto most = std::ranges::max_element(rows, {}, &ssd::SweepRow::steps);
  int code = kOk;
  if (cfg.assert_trend) {
    bool ok = fewest->psnr_db >= most->psnr_db + cfg.trend_margin;
    for (const auto& r : rows) {
      ok = ok && fewest->psnr_db >= r.psnr_db;
    }
    if (!ok) {
      err << "trend assertion failed: PSNR(" << fewest->steps << ") = " << csv_num(fewest->psnr_db)
          << " dB must be the maximum and exceed PSNR(" << most->steps << ") = " << csv_num(most->psnr_db)
          << " dB by " << cfg.trend_margin << " dB\n";
      code = kAssertion;
    }
  }
  if (cfg.assert_flat) {
    const double gap = std::abs(fewest->psnr_db - most->psnr_db);
    if (!(gap < cfg.flat_tolerance)) {
      err << "flatness assertion failed: |PSNR(" << fewest->steps << ") - PSNR(" << most->steps
          << ")| = " << csv_num(gap) << " dB, tolerance " << cfg.flat_tolerance << " dB\n";
      code = kAssertion;
    }
  }
  return code;
}

int cmd_verify(const RunConfig& cfg, std::ostream& out) {
  VerifyOptions opt;
  opt.seed = cfg.seed == 0 ? 1 : cfg.seed;
  opt.corrupt_weights = cfg.corrupt_weights;
  opt.threads = cfg.threads;
  bool all = true;
  for (const auto& r : run_oracle_suite(opt)) {
    char line[256];
    std::snprintf(line, sizeof line, "%s %-38s %7.2fs  ", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds);
    out << line << r.detail << "\n";
    all = all && r.passed;
  }
  out << (all ? "all checks passed" : "some checks FAILED") << "\n";
  return all ? kOk : kAssertion;
}

bool has_flag(const std::vector<std::string>& args, const std::string& name) {
  const std::string flag = "--" + name;
  return std::ranges::any_of(args, [&](const std::string& a) { return a == flag || a.starts_with(flag + "="); });
}

// Expands --config FILE into flags placed before the command-line ones; flags
// given explicitly win.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
    } else if (args[i].starts_with("--config=")) {
      path = args[i].substr(9);
    }
  }
  if (path.empty() || args.size() < 2) {
    return args;
  }
  std::vector<std::string> injected;
  for (const auto& [key, value] : parse_config_file(path)) {
    if (key == "config") {
      throw InvalidParameter("config files cannot include other config files");
    }
    if (!has_flag(args, key)) {
      injected.push_back("--" + key + "=" + value);
    }
  }
  // Subcommand name is the first non-flag argument.
  auto pos = std::find_if(args.begin() + 1, args.end(), [](const std::string& a) { return !a.starts_with("-"); });
  if (pos == args.end()) {
    return args;
  }
  args.insert(pos + 1, injected.begin(), injected.end());
  return args;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  std::string task = "sir";
  std::string config_path;

  CLI::App app{"motionforge: diffusion-based motion estimation on synthetic rectification tasks", "motionforge"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value file; command-line flags override it");
    sub->add_option("--seed", cfg.seed, "Random seed");
    sub->add_option("--threads", cfg.threads, "Worker threads (0: MOTIONFORGE_THREADS or all cores)");
  };
  auto model_opts = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", cfg.checkpoint_dir, "Checkpoint directory")->required();
    sub->add_option("--data", cfg.data_dir, "Dataset directory")->required();
    sub->add_option("--out", cfg.out_dir, "Output directory")->required();
  };

  CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  common(gen);
  gen->add_option("--task", task, "sir or rsc");
  gen->add_option("--count", cfg.count, "Number of samples");
  gen->add_option("--height", cfg.height, "Image height");
  gen->add_option("--width", cfg.width, "Image width");
  gen->add_option("--magnitude", cfg.magnitude, "SIR max displacement / RSC bound on |a|+|b|H (px)");
  gen->add_option("--noise-scale", cfg.noise_scale, "RMS of the pseudo-label perturbation (px)");
  gen->add_option("--gamma", cfg.gamma, "Flow normalization constant");
  gen->add_option("--out", cfg.out_dir, "Output directory")->required();

  CLI::App* tr = app.add_subcommand("train", "Train a denoiser");
  common(tr);
  tr->add_option("--task", task, "sir or rsc");
  tr->add_option("--data", cfg.data_dir, "Dataset directory")->required();
  tr->add_option("--out", cfg.out_dir, "Checkpoint directory")->required();
  tr->add_option("--epochs", cfg.epochs, "Total epochs (a resumed run continues up to this count)");
  tr->add_option("--batch-size", cfg.batch_size, "Batch size");
  tr->add_option("--lr", cfg.learning_rate, "Learning rate");
  tr->add_option("--momentum", cfg.momentum, "SGD momentum");
  tr->add_option("--w-diff", cfg.w_diff, "Weight of the latent reconstruction loss");
  tr->add_option("--w-cond", cfg.w_cond, "Weight of the condition loss");
  tr->add_option("--w-pct", cfg.w_pct, "Weight of the perceptual loss");
  tr->add_option("--hidden", cfg.hidden, "Hidden channels");
  tr->add_option("--gamma", cfg.gamma, "Flow normalization constant");
  tr->add_option("--timesteps", cfg.timesteps, "Diffusion steps T");
  tr->add_option("--beta-start", cfg.beta_start, "First beta");
  tr->add_option("--beta-end", cfg.beta_end, "Last beta");
  tr->add_flag("--resume", cfg.resume, "Continue from the checkpoint in --out");

  CLI::App* inf = app.add_subcommand("infer", "Predict flows and rectified images");
  common(inf);
  model_opts(inf);
  inf->add_option("--steps", cfg.steps, "Sampling steps (1: one-step inference)");

  CLI::App* ens = app.add_subcommand("ensemble", "Adaptive ensemble over K seeded inferences");
  common(ens);
  model_opts(ens);
  ens->add_option("--k", cfg.ensemble_k, "Ensemble sizes, comma separated")->delimiter(',');
  ens->add_option("--edge-band", cfg.edge_band, "Edge band width in px (default 16 per 256 px)");
  ens->add_option("--steps", cfg.steps, "Sampling steps per member");

  CLI::App* sd = app.add_subcommand("ssd", "Sampling-steps sweep");
  common(sd);
  model_opts(sd);
  sd->add_option("--steps-list", cfg.steps_list, "Step counts, comma separated")->delimiter(',');
  sd->add_flag("--assert-trend", cfg.assert_trend, "Exit 2 unless the fewest-steps PSNR is highest and beats the most-steps PSNR by --trend-margin");
  sd->add_flag("--assert-flat", cfg.assert_flat, "Exit 2 unless PSNR at the fewest and most steps differ by less than --flat-tolerance");
  sd->add_option("--trend-margin", cfg.trend_margin, "dB");
  sd->add_option("--flat-tolerance", cfg.flat_tolerance, "dB");

  CLI::App* ver = app.add_subcommand("verify", "Run the built-in oracle suite");
  common(ver);
  ver->add_flag("--corrupt-weights", cfg.corrupt_weights, "Inject a NaN weight into the gradient check");

  std::vector<std::string> args;
  try {
    args = expand_config(raw_args);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << "run 'motionforge --help' for usage\n";
    return kUsage;
  }

  try {
    cfg.command = app.get_subcommands().front()->get_name();
    cfg.task = parse_task(task);
    cfg.validate();
    if (cfg.command == "gen") return cmd_gen(cfg, out);
    if (cfg.command == "train") return cmd_train(cfg, out);
    if (cfg.command == "infer") return cmd_infer(cfg, out);
    if (cfg.command == "ensemble") return cmd_ensemble(cfg, out);
    if (cfg.command == "ssd") return cmd_ssd(cfg, out, err);
    return cmd_verify(cfg, out);
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const InvalidParameter& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ShapeMismatch& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const DivergenceError& e) {
    err << "training failed: " << e.what() << "\n";
    return kAssertion;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, out, err);
}

}  // namespace motionforge::cli
