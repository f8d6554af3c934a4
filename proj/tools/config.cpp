#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "dlab/error.hpp"

namespace dlab::cli {

ConfigObject::ConfigObject(const json& j, std::string where) : j_(&j), where_(std::move(where)) {
  if (!j.is_object()) throw ConfigError((where_.empty() ? std::string("config") : where_) + ": expected an object");
}

bool ConfigObject::has(const std::string& key) const { return j_->contains(key); }

const json& ConfigObject::raw(const std::string& key) {
  used_.insert(key);
  return j_->at(key);
}

ConfigObject ConfigObject::child(const std::string& key) { return ConfigObject(raw(key), path(key)); }

double ConfigObject::number(const std::string& key, double fallback) {
  if (!has(key)) return fallback;
  const json& v = raw(key);
  if (!v.is_number()) throw ConfigError(path(key) + ": expected a number");
  return v.get<double>();
}

std::size_t ConfigObject::count(const std::string& key, std::size_t fallback) {
  if (!has(key)) return fallback;
  const json& v = raw(key);
  if (!v.is_number_unsigned()) throw ConfigError(path(key) + ": expected a non-negative integer");
  return v.get<std::size_t>();
}

bool ConfigObject::flag(const std::string& key, bool fallback) {
  if (!has(key)) return fallback;
  const json& v = raw(key);
  if (!v.is_boolean()) throw ConfigError(path(key) + ": expected true or false");
  return v.get<bool>();
}

std::string ConfigObject::text(const std::string& key, const std::string& fallback) {
  if (!has(key)) return fallback;
  const json& v = raw(key);
  if (!v.is_string()) throw ConfigError(path(key) + ": expected a string");
  return v.get<std::string>();
}

std::vector<std::size_t> ConfigObject::counts(const std::string& key, const std::vector<std::size_t>& fallback) {
  if (!has(key)) return fallback;
  const json& v = raw(key);
  if (!v.is_array()) throw ConfigError(path(key) + ": expected an array of non-negative integers");
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_unsigned()) throw ConfigError(path(key) + ": expected an array of non-negative integers");
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

void ConfigObject::finish() const {
  for (const auto& item : j_->items())
    if (!used_.count(item.key())) throw ConfigError(path(item.key()) + ": unknown key");
}

json load_config(const std::optional<std::filesystem::path>& path) {
  if (!path) return json::object();
  std::ifstream is(*path, std::ios::binary);
  if (!is) throw ConfigError("cannot open config file " + path->string());
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config " + path->string() + ": " + e.what());
  }
}

kd::NormScheme parse_norm(const json& j, const std::string& where) {
  try {
    if (j.is_string()) return {kd::parse_norm_kind(j.get<std::string>())};
    ConfigObject o(j, where);
    kd::NormScheme s;
    s.kind = kd::parse_norm_kind(o.text("kind", "none"));
    s.groups = o.count("groups", s.groups);
    s.epsilon = o.number("epsilon", s.epsilon);
    o.finish();
    return s;
  } catch (const InputError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

kd::DistanceSpec parse_distance(const json& j, const std::string& where) {
  try {
    kd::DistanceSpec s;
    if (j.is_string()) {
      s.kind = kd::parse_distance_kind(j.get<std::string>());
    } else {
      ConfigObject o(j, where);
      s.kind = kd::parse_distance_kind(o.text("kind", "frobenius"));
      s.alpha = o.number("alpha", s.alpha);
      s.tau = o.number("tau", s.tau);
      s.floor = o.number("floor", s.floor);
      o.finish();
    }
    s.validate();
    return s;
  } catch (const InputError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

lab::ProjectorSpec parse_projector(ConfigObject o, lab::ProjectorSpec base) {
  const std::string kind = o.text("kind", base.kind == lab::ProjectorKind::linear ? "linear" : "mlp");
  if (kind == "linear") {
    base.kind = lab::ProjectorKind::linear;
  } else if (kind == "mlp") {
    base.kind = lab::ProjectorKind::mlp;
  } else {
    throw ConfigError(o.path("kind") + ": expected linear or mlp, got '" + kind + "'");
  }
  base.depth = o.count("depth", base.kind == lab::ProjectorKind::linear ? 1 : base.depth);
  base.hidden = o.count("hidden", base.hidden);
  const std::string init = o.text("init", base.init == lab::ProjectorInit::orthogonal ? "orthogonal" : "gaussian");
  if (init == "orthogonal") {
    base.init = lab::ProjectorInit::orthogonal;
  } else if (init == "gaussian") {
    base.init = lab::ProjectorInit::gaussian;
  } else {
    throw ConfigError(o.path("init") + ": expected orthogonal or gaussian, got '" + init + "'");
  }
  if (base.kind == lab::ProjectorKind::mlp && base.depth < 2) throw ConfigError(o.path("depth") + ": MLP needs depth >= 2");
  o.finish();
  return base;
}

void read_experiment_spec(ConfigObject& o, lab::ExperimentSpec& s) {
  if (o.has("task")) {
    ConfigObject t = o.child("task");
    s.task.input_dim = t.count("input_dim", s.task.input_dim);
    s.task.classes = t.count("classes", s.task.classes);
    s.task.teacher_hidden = t.counts("teacher_hidden", s.task.teacher_hidden);
    s.task.teacher_dim = t.count("teacher_dim", s.task.teacher_dim);
    s.task.teacher_scale_decay = t.number("teacher_scale_decay", s.task.teacher_scale_decay);
    s.task.train_size = t.count("train_size", s.task.train_size);
    s.task.test_size = t.count("test_size", s.task.test_size);
    t.finish();
  }
  s.student_hidden = o.counts("student_hidden", s.student_hidden);
  s.student_dim = o.count("student_dim", s.student_dim);
  if (o.has("projector")) s.projector = parse_projector(o.child("projector"), s.projector);
  if (o.has("norm")) s.norm = parse_norm(o.raw("norm"), o.path("norm"));
  if (o.has("distance")) s.distance = parse_distance(o.raw("distance"), o.path("distance"));
  if (o.has("placement")) {
    try {
      s.placement = kd::parse_norm_placement(o.text("placement", ""));
    } catch (const InputError& e) {
      throw ConfigError(o.path("placement") + ": " + e.what());
    }
  }
  s.distill_weight = o.number("distill_weight", s.distill_weight);
  s.learning_rate = o.number("learning_rate", s.learning_rate);
  s.weight_decay = o.number("weight_decay", s.weight_decay);
  s.steps = o.count("steps", s.steps);
  s.record_every = o.count("record_every", s.record_every);
  s.batch_size = o.count("batch_size", s.batch_size);
  if (o.has("seeds")) {
    const auto seeds = o.counts("seeds", {});
    s.seeds.assign(seeds.begin(), seeds.end());
  }
}

void read_equivariance_spec(ConfigObject& o, lab::EquivarianceSpec& s) {
  s.channels = o.count("channels", s.channels);
  s.grid_h = o.count("grid_h", s.grid_h);
  s.grid_w = o.count("grid_w", s.grid_w);
  s.prefix = o.count("prefix", s.prefix);
  s.classes = o.count("classes", s.classes);
  s.kernel_radius = o.count("kernel_radius", s.kernel_radius);
  s.train_size = o.count("train_size", s.train_size);
  s.batch_size = o.count("batch_size", s.batch_size);
  s.steps = o.count("steps", s.steps);
  s.learning_rate = o.number("learning_rate", s.learning_rate);
  s.pos_bias_scale = o.number("pos_bias_scale", s.pos_bias_scale);
  if (o.has("norm")) s.norm = parse_norm(o.raw("norm"), o.path("norm"));
  if (o.has("distance")) s.distance = parse_distance(o.raw("distance"), o.path("distance"));
  s.distill_weight = o.number("distill_weight", s.distill_weight);
  s.eval_batches = o.count("eval_batches", s.eval_batches);
  s.eval_batch_size = o.count("eval_batch_size", s.eval_batch_size);
  if (s.channels == 0 || s.grid_h == 0 || s.grid_w == 0 || s.classes < 2 || s.eval_batches == 0 || s.eval_batch_size == 0) {
    throw ConfigError("equivariance: channels, grid, eval sizes must be positive and classes >= 2");
  }
}

gc::SuiteOptions parse_gradcheck(const json& j) {
  ConfigObject o(j, "");
  gc::SuiteOptions s;
  s.instances = o.count("instances", s.instances);
  s.tolerance = o.number("tolerance", s.tolerance);
  s.velocity_instances = o.count("velocity_instances", s.velocity_instances);
  s.velocity_tolerance = o.number("velocity_tolerance", s.velocity_tolerance);
  s.h = o.number("h", s.h);
  s.seed = o.count("seed", s.seed);
  o.finish();
  if (!(s.h > 0.0)) throw ConfigError("h: must be positive");
  if (!(s.tolerance >= 0.0) || !(s.velocity_tolerance >= 0.0)) throw ConfigError("tolerance: must be non-negative");
  if (s.instances == 0 || s.velocity_instances == 0) throw ConfigError("instances: must be positive");
  return s;
}

}  // namespace dlab::cli
