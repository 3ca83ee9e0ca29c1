#include "bernflow/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "bernflow/errors.hpp"

namespace bernflow {

namespace {

using nlohmann::json;

json tensor_to_json(const Tensor& t) {
  return json{{"rows", t.rows()}, {"cols", t.cols()}, {"data", t.data()}};
}

Tensor tensor_from_json(const json& j, const std::string& id) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) {
    throw DataError("checkpoint: tensor '" + id + "' has " +
                    std::to_string(data.size()) + " values for " +
                    std::to_string(rows) + "x" + std::to_string(cols));
  }
  return Tensor(rows, cols, data);
}

json params_to_json(const std::vector<ad::ParameterPtr>& params) {
  json out = json::object();
  for (const auto& p : params) out[p->id] = tensor_to_json(p->value);
  return out;
}

void params_from_json(const json& j, const std::vector<ad::ParameterPtr>& params) {
  std::size_t used = 0;
  for (const auto& p : params) {
    const auto it = j.find(p->id);
    if (it == j.end()) {
      throw DataError("checkpoint: missing parameter '" + p->id + "'");
    }
    Tensor t = tensor_from_json(*it, p->id);
    if (!t.same_shape(p->value)) {
      throw DataError("checkpoint: parameter '" + p->id + "' shape mismatch");
    }
    p->value = std::move(t);
    ++used;
  }
  if (used != j.size()) {
    throw DataError("checkpoint: file contains parameters the model does not have");
  }
}

json scaler_to_json(const Scaler& s) {
  return json{{"x_min", s.x_min},
              {"x_scale", s.x_scale},
              {"y_min", s.y_min},
              {"y_scale", s.y_scale},
              {"constant_columns", s.constant_columns}};
}

Scaler scaler_from_json(const json& j) {
  Scaler s;
  s.x_min = j.at("x_min").get<std::vector<double>>();
  s.x_scale = j.at("x_scale").get<std::vector<double>>();
  s.y_min = j.at("y_min").get<double>();
  s.y_scale = j.at("y_scale").get<double>();
  s.constant_columns = j.at("constant_columns").get<std::vector<std::size_t>>();
  if (s.x_min.size() != s.x_scale.size()) {
    throw DataError("checkpoint: scaler column counts disagree");
  }
  return s;
}

void write_atomically(const std::string& path, const std::string& body) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp + "'");
    out << body;
    if (!out) throw DataError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::remove(tmp.c_str());
    throw DataError("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const TransformationModel& model,
                     const Scaler& scaler) {
  const ModelConfig& c = model.config();
  json j{{"format_version", kCheckpointVersion},
         {"kind", "dl_mlt"},
         {"input_dim", model.input_dim()},
         {"model",
          {{"order", c.order},
           {"hidden_layers", c.hidden_layers},
           {"activation", c.activation},
           {"l2", c.l2},
           {"constant_groups",
            std::vector<std::string>(c.constant_groups.begin(), c.constant_groups.end())},
           {"use_f3", c.use_f3},
           {"seed", c.seed}}},
         {"scaler", scaler_to_json(scaler)},
         {"parameters", params_to_json(model.parameters())}};
  write_atomically(path, j.dump(2) + "\n");
}

void save_checkpoint(const std::string& path, const LtmModel& model,
                     const Scaler& scaler) {
  json j{{"format_version", kCheckpointVersion},
         {"kind", "ltm"},
         {"input_dim", model.input_dim()},
         {"model", {{"order", model.basis().order()}, {"l2", model.l2()}}},
         {"scaler", scaler_to_json(scaler)},
         {"parameters", params_to_json(model.parameters())}};
  write_atomically(path, j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }

  const int version = j.at("format_version").get<int>();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint '" + path + "' has format_version " +
                    std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }

  Checkpoint out;
  out.kind = j.at("kind").get<std::string>();
  out.scaler = scaler_from_json(j.at("scaler"));
  const auto input_dim = j.at("input_dim").get<std::size_t>();
  const json& jm = j.at("model");

  if (out.kind == "dl_mlt") {
    ModelConfig c;
    c.order = jm.at("order").get<std::size_t>();
    c.hidden_layers = jm.at("hidden_layers").get<std::vector<std::size_t>>();
    c.activation = jm.at("activation").get<std::string>();
    c.l2 = jm.at("l2").get<double>();
    for (const auto& grp : jm.at("constant_groups")) {
      c.constant_groups.insert(grp.get<std::string>());
    }
    c.use_f3 = jm.at("use_f3").get<bool>();
    c.seed = jm.at("seed").get<std::uint64_t>();
    out.dl = std::make_unique<TransformationModel>(c, input_dim);
    params_from_json(j.at("parameters"), out.dl->parameters());
  } else if (out.kind == "ltm") {
    out.ltm = std::make_unique<LtmModel>(input_dim, jm.at("order").get<std::size_t>(),
                                         jm.at("l2").get<double>());
    params_from_json(j.at("parameters"), out.ltm->parameters());
  } else {
    throw DataError("checkpoint '" + path + "' has unknown kind '" + out.kind + "'");
  }
  return out;
}

}  // namespace bernflow
