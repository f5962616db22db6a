#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "owdetr/engine.hpp"

namespace owdetr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Bad input from the caller: exit code 1.
class UserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  int task = 1;
  std::string checkpoint;
  std::string split = "eval";
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct Context {
  RunConfig cfg;
  fs::path out;
  std::ostream& log;
};

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UserError("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

fs::path task_dir(const Context& ctx, int task) { return ctx.out / ("task" + std::to_string(task)); }

std::string artifact_header(const RunConfig& cfg, const std::string& kind) {
  json j;
  j["artifact"] = kind;
  j["config_hash"] = cfg.hash_hex();
  j["seed"] = cfg.seed;
  return j.dump();
}

void write_log(const fs::path& path, const RunConfig& cfg, const TrainLog& log) {
  write_file(path, artifact_header(cfg, "train_log") + "\n" + log.text());
}

/// Checkpoint plus its configuration sidecar.
void save_model(const Detector& model, const fs::path& path, const RunConfig& cfg) {
  fs::create_directories(path.parent_path());
  model.save(path, cfg.hash());
  fs::path conf = path;
  conf.replace_extension(".conf");
  write_file(conf, "# config_hash " + cfg.hash_hex() + "\n" + cfg.serialize());
}

Detector load_model(const fs::path& path, const RunConfig& cfg, const std::string& needed_by) {
  if (!fs::exists(path)) {
    throw UserError(needed_by + " needs checkpoint " + path.string() + ", which does not exist");
  }
  try {
    return Detector::load(path, cfg.hash());
  } catch (const CheckpointError& e) {
    throw UserError(e.what());
  }
}

void save_exemplars(const ExemplarStore& store, const fs::path& path, const RunConfig& cfg) {
  json j;
  j["config_hash"] = cfg.hash_hex();
  j["seed"] = cfg.seed;
  j["cap"] = store.cap;
  std::vector<int> ids;
  for (const auto& img : store.images) ids.push_back(img.id);
  j["image_ids"] = ids;
  for (const auto& [c, n] : store.instances) j["instances"][std::to_string(c)] = n;
  write_file(path, j.dump(2) + "\n");
}

ExemplarStore load_exemplars(const fs::path& path, const Dataset& data, const RunConfig& cfg) {
  if (!fs::exists(path)) throw UserError("missing exemplar store " + path.string());
  const json j = json::parse(read_file(path));
  if (j.at("config_hash").get<std::string>() != cfg.hash_hex()) {
    throw UserError("exemplar store " + path.string() + ": config hash mismatch");
  }
  ExemplarStore store;
  store.cap = j.at("cap").get<int>();
  for (int id : j.at("image_ids").get<std::vector<int>>()) store.images.push_back(data.image(id));
  if (j.contains("instances")) {
    for (const auto& [k, v] : j.at("instances").items()) store.instances[std::stoi(k)] = v.get<int>();
  }
  return store;
}

void check_task(const Context& ctx, int task) {
  if (task < 1 || task > ctx.cfg.data.num_tasks) {
    throw UserError("--task must lie in 1.." + std::to_string(ctx.cfg.data.num_tasks));
  }
}

int cmd_generate(Context& ctx) {
  const Dataset data = generate_synthetic(ctx.cfg.data);
  const fs::path dir = ctx.out / "data";
  save_dataset(data, dir);
  export_coco(data, data.manifest.eval_ids, dir / "eval_coco.json");
  write_file(dir / "config.conf", "# config_hash " + ctx.cfg.hash_hex() + "\n" + ctx.cfg.serialize());
  ctx.log << "wrote " << data.images.size() << " images to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_pretrain(Context& ctx, int task) {
  check_task(ctx, task);
  if (task != 1) throw UserError("pretrain runs task 1; later tasks use `incr`");
  const Dataset data = generate_synthetic(ctx.cfg.data);
  const auto& schedule = data.manifest.schedule;
  Detector model = make_detector(ctx.cfg, static_cast<std::size_t>(schedule.known_count(1)));
  TrainLog log;
  run_pretrain_stage(1, data.train(1), model, ctx.cfg, log);
  const fs::path dir = task_dir(ctx, 1);
  save_model(model, dir / "pretrain.ckpt", ctx.cfg);
  write_log(dir / "pretrain.log.jsonl", ctx.cfg, log);
  ctx.log << "pretrain: wrote " << (dir / "pretrain.ckpt").string() << "\n";
  return kExitOk;
}

int cmd_owl(Context& ctx, int task, const std::string& checkpoint) {
  check_task(ctx, task);
  if (task != 1) throw UserError("owl runs task 1; later tasks use `incr`");
  const fs::path dir = task_dir(ctx, 1);
  const fs::path from = checkpoint.empty() ? dir / "pretrain.ckpt" : fs::path(checkpoint);
  Detector model = load_model(from, ctx.cfg, "owl");
  const Dataset data = generate_synthetic(ctx.cfg.data);
  const auto& schedule = data.manifest.schedule;
  const auto train = data.train(1);
  ProposalCache proposals(ctx.cfg.ss);
  TrainLog log;
  run_owl_stage(1, train, model, ctx.cfg, proposals, log);
  const ExemplarStore store = refresh_exemplars({}, train, schedule, 1, ctx.cfg, log);
  save_model(model, dir / "model.ckpt", ctx.cfg);
  save_exemplars(store, dir / "exemplars.json", ctx.cfg);
  write_log(dir / "owl.log.jsonl", ctx.cfg, log);
  ctx.log << "owl: wrote " << (dir / "model.ckpt").string() << "\n";
  return kExitOk;
}

int cmd_incr(Context& ctx, int task, const std::string& checkpoint) {
  check_task(ctx, task);
  if (task < 2) throw UserError("incr needs --task >= 2");
  const fs::path prev = task_dir(ctx, task - 1);
  const fs::path from = checkpoint.empty() ? prev / "model.ckpt" : fs::path(checkpoint);
  Detector model = load_model(from, ctx.cfg, "incr");
  const Dataset data = generate_synthetic(ctx.cfg.data);
  const auto& schedule = data.manifest.schedule;
  if (static_cast<int>(model.num_known()) != schedule.known_count(task - 1)) {
    throw UserError("checkpoint " + from.string() + " is not a task " + std::to_string(task - 1) +
                    " model");
  }
  ExemplarStore store = load_exemplars(prev / "exemplars.json", data, ctx.cfg);
  ProposalCache proposals(ctx.cfg.ss);
  TrainLog log;
  run_incremental_step(static_cast<std::size_t>(task), data.train(static_cast<std::size_t>(task)),
                       model, store, schedule, ctx.cfg, proposals, log);
  const fs::path dir = task_dir(ctx, task);
  save_model(model, dir / "model.ckpt", ctx.cfg);
  save_exemplars(store, dir / "exemplars.json", ctx.cfg);
  write_log(dir / "incr.log.jsonl", ctx.cfg, log);
  ctx.log << "incr: wrote " << (dir / "model.ckpt").string() << "\n";
  return kExitOk;
}

std::string coco_results(std::span<const Detection> dets, std::size_t num_known, int image_size) {
  json arr = json::array();
  for (const auto& d : dets) {
    const auto b = cxcywh_to_xyxy(d.box);
    json j;
    j["image_id"] = d.image_id;
    j["category_id"] = d.label == kUnknownLabel ? static_cast<int>(num_known) + 1 : d.label;
    j["bbox"] = {b.x1 * image_size, b.y1 * image_size, (b.x2 - b.x1) * image_size,
                 (b.y2 - b.y1) * image_size};
    j["score"] = d.score;
    arr.push_back(j);
  }
  return arr.dump() + "\n";
}

int cmd_eval(Context& ctx, int task, const std::string& checkpoint, const std::string& split) {
  check_task(ctx, task);
  if (split != "eval" && split != "train") {
    throw UserError("unknown split '" + split + "' (expected eval or train)");
  }
  const fs::path dir = task_dir(ctx, task);
  const fs::path from = checkpoint.empty() ? dir / "model.ckpt" : fs::path(checkpoint);
  const Detector model = load_model(from, ctx.cfg, "eval");
  const Dataset data = generate_synthetic(ctx.cfg.data);
  const auto& schedule = data.manifest.schedule;
  if (static_cast<int>(model.num_known()) != schedule.known_count(task)) {
    throw UserError("checkpoint " + from.string() + " is not a task " + std::to_string(task) +
                    " model");
  }
  const auto images = split == "eval" ? data.eval() : data.train(static_cast<std::size_t>(task));
  std::vector<Detection> dets;
  const EvalReport report = evaluate_model(model, images, schedule, static_cast<std::size_t>(task),
                                           ctx.cfg, &dets);
  const std::map<std::string, std::string> extra = {
      {"config_hash", ctx.cfg.hash_hex()},
      {"seed", std::to_string(ctx.cfg.seed)},
      {"split", split},
      {"checkpoint", from.filename().string()}};
  write_file(dir / ("eval_" + split + ".json"), report_json(report, extra) + "\n");
  write_file(dir / ("eval_" + split + ".txt"),
             "# config_hash " + ctx.cfg.hash_hex() + " seed " + std::to_string(ctx.cfg.seed) +
                 "\n" + report_table(std::span(&report, 1)));
  write_file(dir / ("detections_" + split + ".json"),
             coco_results(dets, model.num_known(), ctx.cfg.data.image_size));
  ctx.log << report_table(std::span(&report, 1));
  return kExitOk;
}

int cmd_report(Context& ctx) {
  std::vector<std::pair<int, fs::path>> found;
  if (fs::is_directory(ctx.out)) {
    for (const auto& entry : fs::directory_iterator(ctx.out)) {
      const std::string name = entry.path().filename().string();
      if (!entry.is_directory() || name.rfind("task", 0) != 0) continue;
      const fs::path file = entry.path() / "eval_eval.json";
      if (!fs::exists(file)) continue;
      try {
        found.emplace_back(std::stoi(name.substr(4)), file);
      } catch (const std::exception&) {
      }
    }
  }
  if (found.empty()) throw UserError("no eval reports under " + ctx.out.string());
  std::sort(found.begin(), found.end());
  std::vector<EvalReport> reports;
  std::vector<std::string> hashes;
  std::string seed;
  for (const auto& [task, file] : found) {
    const std::string text = read_file(file);
    reports.push_back(report_from_json(text));
    const json j = json::parse(text);
    const std::string h = j.value("config_hash", "");
    if (std::find(hashes.begin(), hashes.end(), h) == hashes.end()) hashes.push_back(h);
    if (seed.empty()) seed = j.value("seed", "");
  }
  std::string header = "# config_hash";
  for (const auto& h : hashes) header += " " + h;
  header += " seed " + seed + "\n";
  const std::string table = report_table(reports);
  write_file(ctx.out / "report.txt", header + table);
  write_file(ctx.out / "report.csv", header + report_csv(reports));
  ctx.log << table;
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"owdetr: open-world detection training and evaluation"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "key = value configuration file");
    sub->add_option("--seed", opt.seed, "overrides the training seed");
    sub->add_option("--out", opt.out, std::string("output root (default $") + kOutEnv + " or ./runs)");
  };
  auto* generate = app.add_subcommand("generate", "write the synthetic dataset");
  auto* pretrain = app.add_subcommand("pretrain", "stage 1: supervised pre-training");
  auto* owl = app.add_subcommand("owl", "stage 2: open-world learning");
  auto* incr = app.add_subcommand("incr", "incremental step to a new task");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* report = app.add_subcommand("report", "aggregate eval reports of a run");
  for (auto* sub : {generate, pretrain, owl, incr, eval, report}) add_common(sub);
  for (auto* sub : {pretrain, owl, incr, eval}) sub->add_option("--task", opt.task, "task index");
  for (auto* sub : {owl, incr, eval}) {
    sub->add_option("--checkpoint", opt.checkpoint, "input checkpoint (default: from the run dir)");
  }
  eval->add_option("--split", opt.split, "eval or train");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUser;
  }

  try {
    RunConfig cfg;
    try {
      cfg = opt.config.empty() ? parse_config("") : load_config(opt.config);
      if (opt.seed) cfg.seed = *opt.seed;
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw UserError(e.what());
    }
    fs::path root = opt.out;
    if (root.empty()) {
      const char* env = std::getenv(kOutEnv);
      root = env && *env ? fs::path(env) : fs::path("runs");
    }
    Context ctx{cfg, root, out};
    if (*generate) return cmd_generate(ctx);
    if (*pretrain) return cmd_pretrain(ctx, opt.task);
    if (*owl) return cmd_owl(ctx, opt.task, opt.checkpoint);
    if (*incr) return cmd_incr(ctx, opt.task, opt.checkpoint);
    if (*eval) return cmd_eval(ctx, opt.task, opt.checkpoint, opt.split);
    return cmd_report(ctx);
  } catch (const UserError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace owdetr::cli
