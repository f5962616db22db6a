#include "owdetr/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>
#include <stdexcept>
#include <vector>

namespace owdetr {

namespace {

struct Field {
  const char* key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw std::invalid_argument("config: " + key + " expects a number, got '" + s + "'");
  }
  return v;
}

long long parse_int(const std::string& key, const std::string& s) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw std::invalid_argument("config: " + key + " expects an integer, got '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("config: " + key + " expects true/false, got '" + s + "'");
}

Field real(const char* key, double& ref) {
  return {key, [&ref] { return fmt(ref); }, [&ref, key](const std::string& s) { ref = parse_double(key, s); }};
}

template <typename Int>
Field integer(const char* key, Int& ref) {
  return {key, [&ref] { return std::to_string(ref); },
          [&ref, key](const std::string& s) {
            const long long v = parse_int(key, s);
            if constexpr (std::is_unsigned_v<Int>) {
              if (v < 0) throw std::invalid_argument(std::string("config: ") + key + " must be >= 0");
            }
            ref = static_cast<Int>(v);
          }};
}

Field flag(const char* key, bool& ref) {
  return {key, [&ref] { return std::string(ref ? "true" : "false"); },
          [&ref, key](const std::string& s) { ref = parse_bool(key, s); }};
}

Field text(const char* key, std::string& ref) {
  return {key, [&ref] { return ref; }, [&ref](const std::string& s) { ref = s; }};
}

std::vector<Field> fields(RunConfig& c) {
  return {
      integer("seed", c.seed),
      integer("data.seed", c.data.seed),
      integer("data.num_classes", c.data.num_classes),
      integer("data.num_tasks", c.data.num_tasks),
      integer("data.train_per_task", c.data.train_per_task),
      integer("data.eval_images", c.data.eval_images),
      integer("data.min_objects", c.data.min_objects),
      integer("data.max_objects", c.data.max_objects),
      integer("data.min_side", c.data.min_side),
      integer("data.max_side", c.data.max_side),
      integer("model.dim", c.detector.model_dim),
      integer("model.ffn_dim", c.detector.ffn_dim),
      integer("model.queries", c.detector.num_queries),
      integer("model.stem_channels", c.detector.stem_channels),
      integer("model.backbone_channels", c.detector.backbone_channels),
      real("model.class_prior", c.detector.class_prior),
      real("loss.cls", c.loss.cls),
      real("loss.l1", c.loss.l1),
      real("loss.giou", c.loss.giou),
      real("loss.b_cls", c.loss.b_cls),
      real("loss.con", c.loss.con),
      real("loss.feat", c.loss.feat),
      real("loss.cls_kd", c.loss.cls_kd),
      real("loss.feat_aug", c.loss.feat_aug),
      real("loss.cls_kd_aug", c.loss.cls_kd_aug),
      real("loss.focal_alpha", c.loss.focal_alpha),
      real("loss.focal_gamma", c.loss.focal_gamma),
      real("match.cls", c.cost.cls),
      real("match.l1", c.cost.l1),
      real("match.giou", c.cost.giou),
      real("pseudo.delta", c.pseudo.delta),
      integer("pseudo.k", c.pseudo.k),
      real("pseudo.nms_iou", c.pseudo.nms_iou),
      real("pseudo.overlap_iou", c.pseudo.overlap_iou),
      integer("pseudo.k_ss", c.pseudo.k_ss),
      real("pseudo.ss_max_area", c.pseudo.ss_max_area),
      real("pseudo.min_retention", c.pseudo.min_retention),
      real("ss.k", c.ss.k),
      integer("ss.min_size", c.ss.min_size),
      real("ss.sigma", c.ss.sigma),
      integer("ss.seed", c.ss.seed),
      text("train.optimizer", c.optimizer),
      real("train.lr", c.lr),
      real("train.weight_decay", c.weight_decay),
      real("train.clip_norm", c.clip_norm),
      real("train.lr_decay", c.lr_decay),
      integer("train.batch_size", c.batch_size),
      integer("train.pretrain_epochs", c.pretrain_epochs),
      integer("train.pretrain_decay_epoch", c.pretrain_decay_epoch),
      integer("train.owl_epochs", c.owl_epochs),
      integer("train.owl_decay_epoch", c.owl_decay_epoch),
      integer("train.finetune_epochs", c.finetune_epochs),
      integer("train.finetune_decay_epoch", c.finetune_decay_epoch),
      text("train.finetune_freeze", c.finetune_freeze),
      real("incr.teacher_threshold", c.teacher_threshold),
      integer("incr.exemplar_cap", c.exemplar_cap),
      flag("incr.kd", c.use_kd),
      flag("incr.replay", c.use_replay),
      integer("eval.top_k", c.top_k),
      real("eval.a_ose_score_floor", c.eval.a_ose_score_floor),
      real("eval.wi_recall_level", c.eval.wi_recall_level),
  };
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::validate() const {
  loss.validate();
  pseudo.validate();
  DetectorConfig d = detector;
  d.image_size = static_cast<std::size_t>(data.image_size);
  d.validate();
  Optimizer::parse(optimizer);
  if (!(lr > 0) || !(lr_decay > 0) || batch_size < 1) {
    throw std::invalid_argument("config: lr, lr_decay and batch_size must be positive");
  }
  if (pretrain_epochs < 0 || owl_epochs < 0 || finetune_epochs < 0) {
    throw std::invalid_argument("config: epoch counts must be >= 0");
  }
  if (!(teacher_threshold > 0 && teacher_threshold < 1)) {
    throw std::invalid_argument("config: incr.teacher_threshold must lie in (0,1)");
  }
  if (exemplar_cap < 1) throw std::invalid_argument("config: incr.exemplar_cap must be >= 1");
  if (finetune_freeze != "stage2" && finetune_freeze != "none") {
    throw std::invalid_argument("config: train.finetune_freeze must be stage2 or none");
  }
  if (top_k < 1) throw std::invalid_argument("config: eval.top_k must be >= 1");
  if (!(ss.k > 0) || ss.min_size < 1) throw std::invalid_argument("config: ss.k and ss.min_size must be positive");
  TaskSchedule::even(data.num_classes, data.num_tasks);
  // every annotated and pseudo target of a view needs its own query
  const std::size_t most_targets = static_cast<std::size_t>(data.max_objects + pseudo.k + pseudo.k_ss);
  if (detector.num_queries < most_targets) {
    throw std::invalid_argument("config: model.queries must be >= data.max_objects + pseudo.k + pseudo.k_ss (" +
                                std::to_string(most_targets) + ")");
  }
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  for (const auto& f : fields(const_cast<RunConfig&>(*this))) os << f.key << " = " << f.get() << "\n";
  return os.str();
}

std::uint64_t RunConfig::hash() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : serialize()) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string RunConfig::hash_hex() const {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (auto& f : fields(*this)) {
    if (key == f.key) {
      f.set(value);
      return;
    }
  }
  throw std::invalid_argument("config: unknown key '" + key + "'");
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream is(text);
  std::string line;
  int number = 0;
  while (std::getline(is, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(number) + ": expected key = value");
    }
    try {
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(number) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("config: cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

}  // namespace owdetr
