#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "julesz/errors.hpp"
#include "julesz/generators.hpp"
#include "julesz/grad_suite.hpp"
#include "julesz/fixtures.hpp"
#include "julesz/image_io.hpp"
#include "julesz/julesz_loss.hpp"
#include "julesz/key_value.hpp"
#include "julesz/ops.hpp"
#include "julesz/parallel.hpp"
#include "julesz/report.hpp"
#include "julesz/trainer.hpp"

#ifndef JULESZ_VERSION
#define JULESZ_VERSION "unknown"
#endif

namespace julesz::cli {

namespace fs = std::filesystem;

namespace {

// Bad arguments or configuration; maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Flags shared by both training commands. Unset optionals leave the config
// file's value in place.
struct TrainFlags {
  std::string style;
  std::string out;
  std::string config;
  std::string content_dir;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<double> temperature;
  std::optional<double> alpha;
  std::optional<double> learning_rate;
  std::optional<std::string> norm;
  std::optional<std::size_t> size;
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> batch;
};

void add_train_flags(CLI::App& cmd, TrainFlags& f, bool stylize) {
  cmd.add_option("--style", f.style, "Reference texture PNG")->required()->check(CLI::ExistingFile);
  cmd.add_option("--out", f.out, "Output directory")->required();
  cmd.add_option("--config", f.config, "key=value config file")->check(CLI::ExistingFile);
  cmd.add_option("--set", f.sets, "Override one config key (KEY=VALUE)");
  cmd.add_option("--seed", f.seed, "Run seed");
  cmd.add_option("--lambda", f.lambda, "Diversity weight");
  cmd.add_option("--temp", f.temperature, "Temperature T");
  cmd.add_option("--lr", f.learning_rate, "Learning rate");
  cmd.add_option("--norm", f.norm, "Normalization: in, bn or none")
      ->check(CLI::IsMember({"in", "bn", "none"}));
  cmd.add_option("--size", f.size, "Output extent in pixels");
  cmd.add_option("--iters", f.iterations, "Iteration budget");
  cmd.add_option("--batch", f.batch, "Batch size");
  if (stylize) {
    cmd.add_option("--content-dir", f.content_dir, "Directory of content PNGs")
        ->required()
        ->check(CLI::ExistingDirectory);
    cmd.add_option("--alpha", f.alpha, "Content weight");
  }
}

void apply_fields(TrainConfig& cfg, const KeyValues& kv) {
  for (const auto& [k, v] : kv) cfg.set_field(k, v);
}

TrainConfig resolve_config(const TrainFlags& f, bool stylize) {
  try {
    auto cfg = stylize ? TrainConfig::stylization_defaults() : TrainConfig{};
    if (!f.config.empty()) apply_fields(cfg, read_key_values(f.config));
    for (const auto& s : f.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects KEY=VALUE, got '" + s + "'");
      cfg.set_field(s.substr(0, eq), s.substr(eq + 1));
    }
    if (f.seed) cfg.seed = *f.seed;
    if (f.lambda) cfg.lambda = *f.lambda;
    if (f.temperature) cfg.temperature = *f.temperature;
    if (f.alpha) cfg.alpha = *f.alpha;
    if (f.learning_rate) cfg.learning_rate = *f.learning_rate;
    if (f.norm) cfg.norm = parse_norm_kind(*f.norm);
    if (f.size) cfg.out_size = *f.size;
    if (f.iterations) cfg.iterations = *f.iterations;
    if (f.batch) cfg.batch_size = *f.batch;
    cfg.validate();
    return cfg;
  } catch (const FormatError& e) {
    throw UsageError(e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (entry.is_regular_file() && ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

struct Artifacts {
  fs::path params, report, samples, target, manifest, stylized;
};

Artifacts artifacts_in(const fs::path& out, bool stylize) {
  Artifacts a;
  a.params = out / "params.bin";
  a.report = out / "report.csv";
  a.samples = out / "samples.png";
  a.target = out / "target.bin";
  a.manifest = out / "manifest.txt";
  if (stylize) a.stylized = out / "stylized.png";
  return a;
}

KeyValues build_manifest(const std::string& command, const TrainConfig& cfg, const fs::path& style,
                         const fs::path& content_dir, const std::vector<fs::path>& contents,
                         const Artifacts& a) {
  KeyValues m;
  m["command"] = command;
  m["tool.version"] = JULESZ_VERSION;
  for (const auto& [k, v] : cfg.to_fields()) m["config." + k] = v;
  m["seed"] = std::to_string(cfg.seed);
  m["input.style"] = fs::absolute(style).string();
  m["input.style.fnv1a"] = file_digest(style);
  if (!content_dir.empty()) {
    m["input.content_dir"] = fs::absolute(content_dir).string();
    m["input.content.count"] = std::to_string(contents.size());
    for (std::size_t i = 0; i < contents.size(); ++i) {
      const auto key = "input.content." + std::to_string(i);
      m[key] = contents[i].filename().string();
      m[key + ".fnv1a"] = file_digest(contents[i]);
    }
  }
  m["artifact.params"] = a.params.filename().string();
  m["artifact.report"] = a.report.filename().string();
  m["artifact.samples"] = a.samples.filename().string();
  m["artifact.target"] = a.target.filename().string();
  if (!a.stylized.empty()) m["artifact.stylized"] = a.stylized.filename().string();
  return m;
}

void print_summary(std::ostream& out, const TrainReport& r, const fs::path& dir) {
  out << "iterations logged: " << r.records.size() << "\n";
  out << "style loss: " << fmt_short(r.initial_style) << " -> " << fmt_short(r.final_style) << "\n";
  out << "diversity metric: " << fmt_short(r.initial_diversity) << " -> "
      << fmt_short(r.final_diversity) << "\n";
  out << "artifacts written to " << dir.string() << "\n";
}

int train(const std::string& command, const TrainConfig& cfg, const fs::path& style,
          const fs::path& content_dir, const fs::path& out_dir, std::ostream& out,
          std::ostream& err) {
  const bool stylize = command == "train-style";
  std::vector<fs::path> content_files;
  std::vector<Tensor> corpus;
  const auto reference = load_png(style);
  if (stylize) {
    content_files = list_pngs(content_dir);
    if (content_files.empty()) {
      throw std::runtime_error("content directory " + content_dir.string() + " has no PNG files");
    }
    for (const auto& p : content_files) corpus.push_back(load_png(p));
    if (cfg.alpha == 0.0) {
      err << "warning: alpha = 0 drops the content loss; training reduces to texture training\n";
    }
  }

  fs::create_directories(out_dir);
  const auto a = artifacts_in(out_dir, stylize);
  write_key_values(build_manifest(command, cfg, style, content_dir, content_files, a), a.manifest);

  const FilterBank bank(cfg.bank_seed);
  save_style_target(make_style_target(reference, bank), a.target);

  const auto result =
      stylize ? train_stylizer(cfg, reference, corpus) : train_texture(cfg, reference);
  save_params(result.params, a.params);
  write_report_csv(result.report, a.report);

  const auto eval_seed = derive_seed(cfg.seed, streams::eval);
  if (stylize) {
    save_png(tile_grid(generate_samples(result.params, cfg.eval_samples, eval_seed, cfg.out_size,
                                        corpus.front()),
                       8),
             a.samples);
    const std::size_t per_row = 4;
    std::vector<Tensor> rows;
    for (const auto& c : corpus) {
      rows.push_back(c);
      rows.push_back(generate_samples(result.params, per_row, eval_seed, cfg.out_size, c));
    }
    save_png(tile_grid(concat(rows, 0).detach(), per_row + 1), a.stylized);
  } else {
    save_png(tile_grid(generate_samples(result.params, cfg.eval_samples, eval_seed, cfg.out_size),
                       8),
             a.samples);
  }
  print_summary(out, result.report, out_dir);
  return kExitOk;
}

int cmd_sample(const std::string& params_path, std::size_t n, std::uint64_t seed,
               const std::string& content_path, const fs::path& out_dir, std::ostream& out) {
  const auto g = load_params(params_path);
  Tensor content;
  std::size_t extent = g.descriptor.out_size;
  if (g.descriptor.kind == GeneratorKind::stylizer) {
    if (content_path.empty()) throw UsageError("stylizer parameters need --content <png>");
    content = load_png(content_path);
    extent = content.dim(2);
  } else if (!content_path.empty()) {
    throw UsageError("--content only applies to stylizer parameters");
  }
  const auto samples = generate_samples(g, n, seed, extent, content);
  fs::create_directories(out_dir);
  const auto row = samples.size() / n;
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = samples.values().subspan(i * row, row);
    char name[32];
    std::snprintf(name, sizeof name, "sample_%03zu.png", i);
    save_png(Tensor({1, 3, samples.dim(2), samples.dim(3)}, {v.begin(), v.end()}), out_dir / name);
  }
  save_png(tile_grid(samples, std::min<std::size_t>(n, 8)), out_dir / "grid.png");
  out << "samples: " << n << " written to " << out_dir.string() << "\n";
  if (n >= 2) out << "diversity_metric: " << fmt(diversity_metric(samples)) << "\n";
  return kExitOk;
}

int cmd_gradcheck(double tol, const std::vector<std::string>& only, std::uint64_t seed,
                  std::ostream& out, std::ostream& err) {
  GradSuiteOptions options;
  options.tolerance = tol;
  options.only = only;
  std::vector<GradCheckReport> reports;
  try {
    reports = run_gradient_suite(options, seed);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %14s %10s  %s\n", "check", "max_rel_error", "tol",
                "result");
  out << line;
  const GradCheckReport* worst = nullptr;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-24s %14.3e %10.1e  %s\n", r.name.c_str(),
                  r.max_relative_error, r.tolerance, r.passed ? "PASS" : "FAIL");
    out << line;
    if (!r.passed && (!worst || r.max_relative_error > worst->max_relative_error)) worst = &r;
  }
  if (worst) {
    err << "gradcheck failed; worst offender: " << worst->name << " element " << worst->worst_index
        << " analytic " << fmt(worst->worst_analytic) << " numeric " << fmt(worst->worst_numeric)
        << " relative error " << fmt_short(worst->max_relative_error) << "\n";
    return kExitFailure;
  }
  out << "all " << reports.size() << " checks passed\n";
  return kExitOk;
}

std::vector<std::string> run_names(const std::vector<std::string>& paths) {
  std::vector<std::string> names;
  std::map<std::string, int> stems;
  for (const auto& p : paths) ++stems[fs::path(p).stem().string()];
  std::set<std::string> used;
  for (const auto& p : paths) {
    const fs::path path(p);
    auto name = path.stem().string();
    if (stems[name] > 1 && path.has_parent_path()) {
      name = path.parent_path().filename().string() + "/" + name;
    }
    auto unique = name;
    for (int k = 2; used.count(unique); ++k) unique = name + "#" + std::to_string(k);
    used.insert(unique);
    names.push_back(unique);
  }
  return names;
}

int cmd_report(const std::vector<std::string>& csvs, const fs::path& out_dir, std::ostream& out) {
  std::vector<std::vector<IterationRecord>> runs;
  for (const auto& p : csvs) runs.push_back(read_report_csv(p));
  const auto names = run_names(csvs);
  fs::create_directories(out_dir);

  std::ofstream merged(out_dir / "merged.csv", std::ios::trunc);
  std::ofstream dat(out_dir / "report.dat", std::ios::trunc);
  if (!merged || !dat) throw std::runtime_error("cannot write report files in " + out_dir.string());
  merged << "run," << kReportHeader << "\n";
  for (std::size_t r = 0; r < runs.size(); ++r) {
    dat << "# run " << names[r] << "\n# iteration objective style content diversity\n";
    for (const auto& rec : runs[r]) {
      merged << names[r] << "," << rec.iteration << "," << fmt(rec.style) << "," << fmt(rec.content)
             << "," << fmt(rec.diversity) << "," << fmt(rec.objective) << "," << fmt(rec.wall_ms)
             << "\n";
      dat << rec.iteration << " " << fmt(rec.objective) << " " << fmt(rec.style) << " "
          << fmt(rec.content) << " " << fmt(rec.diversity) << "\n";
    }
    dat << "\n\n";
  }

  std::ostringstream summary;
  summary << "summary: run rows final_objective final_style final_diversity\n";
  for (std::size_t r = 0; r < runs.size(); ++r) {
    summary << names[r] << " " << runs[r].size();
    if (runs[r].empty()) {
      summary << " - - -\n";
      continue;
    }
    const auto& last = runs[r].back();
    summary << " " << fmt_short(last.objective) << " " << fmt_short(last.style) << " "
            << fmt_short(last.diversity) << "\n";
  }
  std::istringstream lines(summary.str());
  for (std::string l; std::getline(lines, l);) dat << "# " << l << "\n";
  out << summary.str();
  out << "wrote " << (out_dir / "merged.csv").string() << " and " << (out_dir / "report.dat").string()
      << "\n";
  return kExitOk;
}

int cmd_replay(const fs::path& manifest_path, const fs::path& out_dir, std::ostream& out,
               std::ostream& err) {
  KeyValues m;
  try {
    m = read_key_values(manifest_path);
  } catch (const FormatError& e) {
    throw UsageError(e.what());
  }
  auto need = [&](const std::string& key) {
    const auto it = m.find(key);
    if (it == m.end()) throw UsageError(manifest_path.string() + ": missing '" + key + "'");
    return it->second;
  };
  const auto command = need("command");
  if (command != "train-texture" && command != "train-style") {
    throw UsageError(manifest_path.string() + ": cannot replay command '" + command + "'");
  }
  TrainConfig cfg;
  try {
    for (const auto& [k, v] : m) {
      if (k.rfind("config.", 0) == 0) cfg.set_field(k.substr(7), v);
    }
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(manifest_path.string() + ": " + e.what());
  }

  const fs::path style = need("input.style");
  if (file_digest(style) != need("input.style.fnv1a")) {
    throw std::runtime_error("replay: " + style.string() + " changed since the manifest was written");
  }
  fs::path content_dir;
  if (command == "train-style") {
    content_dir = need("input.content_dir");
    const auto files = list_pngs(content_dir);
    if (std::to_string(files.size()) != need("input.content.count")) {
      throw std::runtime_error("replay: content directory " + content_dir.string() +
                               " no longer matches the manifest");
    }
    for (std::size_t i = 0; i < files.size(); ++i) {
      const auto key = "input.content." + std::to_string(i);
      if (files[i].filename().string() != need(key) || file_digest(files[i]) != need(key + ".fnv1a")) {
        throw std::runtime_error("replay: content image " + files[i].string() +
                                 " differs from the manifest");
      }
    }
  }
  set_thread_count(0);
  return train(command, cfg, style, content_dir, out_dir, out, err);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Julesz ensemble texture and stylization generators", "julesz"};
  app.require_subcommand(1);
  app.set_version_flag("--version", JULESZ_VERSION);

  TrainFlags texture_flags, style_flags;
  auto* train_texture_cmd = app.add_subcommand("train-texture", "Train a texture generator");
  add_train_flags(*train_texture_cmd, texture_flags, false);
  auto* train_style_cmd = app.add_subcommand("train-style", "Train a residual stylizer");
  add_train_flags(*train_style_cmd, style_flags, true);

  std::string params_path, content_path, sample_out = "samples";
  std::size_t sample_n = 8;
  std::uint64_t sample_seed = 0;
  auto* sample_cmd = app.add_subcommand("sample", "Draw samples from trained parameters");
  sample_cmd->add_option("--params", params_path, "Parameter file")->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--n", sample_n, "Number of samples")->check(CLI::PositiveNumber);
  sample_cmd->add_option("--seed", sample_seed, "Noise seed");
  sample_cmd->add_option("--content", content_path, "Content PNG (stylizers)")->check(CLI::ExistingFile);
  sample_cmd->add_option("--out", sample_out, "Output directory");

  double tol = 1e-4;
  std::vector<std::string> only;
  std::uint64_t grad_seed = 0;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  grad_cmd->add_option("--tol", tol, "Maximum relative error")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--only", only, "Restrict to the named check (repeatable)");
  grad_cmd->add_option("--seed", grad_seed, "Seed of the random instances");

  std::vector<std::string> csvs;
  std::string report_out = ".";
  auto* report_cmd = app.add_subcommand("report", "Merge training CSVs into plot data");
  report_cmd->add_option("--csv", csvs, "Report CSV (repeatable)")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--out", report_out, "Output directory");

  std::string manifest_path, replay_out;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run a training command from its manifest");
  replay_cmd->add_option("--manifest", manifest_path, "manifest.txt of a previous run")
      ->required()
      ->check(CLI::ExistingFile);
  replay_cmd->add_option("--out", replay_out, "Output directory")->required();

  std::string fixtures_out = "data";
  auto* fixtures_cmd = app.add_subcommand("fixtures", "Write the bundled procedural PNGs");
  fixtures_cmd->add_option("--out", fixtures_out, "Output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: " << e.what() << "\n";
    err << "run 'julesz --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (train_texture_cmd->parsed()) {
      const auto cfg = resolve_config(texture_flags, false);
      return train("train-texture", cfg, texture_flags.style, {}, texture_flags.out, out, err);
    }
    if (train_style_cmd->parsed()) {
      const auto cfg = resolve_config(style_flags, true);
      return train("train-style", cfg, style_flags.style, style_flags.content_dir, style_flags.out,
                   out, err);
    }
    if (sample_cmd->parsed()) {
      return cmd_sample(params_path, sample_n, sample_seed, content_path, sample_out, out);
    }
    if (grad_cmd->parsed()) return cmd_gradcheck(tol, only, grad_seed, out, err);
    if (report_cmd->parsed()) return cmd_report(csvs, report_out, out);
    if (replay_cmd->parsed()) return cmd_replay(manifest_path, replay_out, out, err);
    if (fixtures_cmd->parsed()) {
      fixtures::write_all(fixtures_out);
      out << "fixtures written to " << fixtures_out << "\n";
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace julesz::cli
