#include "scdc/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "scdc/error.hpp"

namespace scdc {

using nlohmann::json;
using Eigen::Index;

namespace {

constexpr const char* kFormat = "scdc-checkpoint";
constexpr int kVersion = 1;

template <typename M>
json matrix_json(const M& m) {
  json values = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", values}};
}

Eigen::MatrixXd matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Index>(), cols = j.at("cols").get<Index>();
  const json& v = j.at("values");
  if (rows < 0 || cols < 0 || v.size() != static_cast<std::size_t>(rows * cols)) {
    throw ParseError("checkpoint: matrix shape does not match its values");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(r * cols + c)].get<double>();
  }
  return m;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

json mlp_json(const nn::Mlp& net) {
  const nn::MlpSpec& s = net.spec();
  json heads = json::array();
  for (const nn::HeadSpec& h : s.heads) {
    json c = nullptr;
    if (h.clamp) c = {h.clamp->first, h.clamp->second};
    heads.push_back({{"name", h.name}, {"width", h.width}, {"clamp", c}});
  }
  json params = json::array();
  for (const nn::Parameter* p : net.parameters()) {
    json m = matrix_json(p->value);
    m["name"] = p->name;
    params.push_back(m);
  }
  return {{"input", s.input}, {"hidden", s.hidden}, {"heads", heads}, {"skip", s.skip}, {"parameters", params}};
}

void load_parameter(nn::Parameter& p, const json& j) {
  const Eigen::MatrixXd m = matrix_from(j);
  if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
    throw ParseError("checkpoint: parameter " + p.name + " has the wrong shape");
  }
  p.value = m;
  p.zero_grad();
}

nn::Mlp mlp_from(const json& j) {
  nn::MlpSpec s;
  s.input = j.at("input").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  for (const json& h : j.at("heads")) {
    nn::HeadSpec hs{h.at("name").get<std::string>(), h.at("width").get<std::size_t>(), std::nullopt};
    if (!h.at("clamp").is_null()) hs.clamp = std::make_pair(h.at("clamp")[0].get<double>(), h.at("clamp")[1].get<double>());
    s.heads.push_back(hs);
  }
  s.skip = j.value("skip", false);
  std::mt19937_64 rng(0);
  nn::Mlp net(s, rng);
  const json& params = j.at("parameters");
  std::vector<nn::Parameter*> ps = net.parameters();
  if (params.size() != ps.size()) throw ParseError("checkpoint: network parameter count mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (params[i].at("name").get<std::string>() != ps[i]->name) {
      throw ParseError("checkpoint: expected parameter " + ps[i]->name);
    }
    load_parameter(*ps[i], params[i]);
  }
  return net;
}

json beta_json(const WorkerBeta& w) { return {{"alpha", {w.alpha.tau1(), w.alpha.tau2()}}, {"beta", {w.beta.tau1(), w.beta.tau2()}}}; }

WorkerBeta beta_from(const json& j) {
  return {expfam::BetaNat::from_shape(j.at("alpha")[0].get<double>(), j.at("alpha")[1].get<double>()),
          expfam::BetaNat::from_shape(j.at("beta")[0].get<double>(), j.at("beta")[1].get<double>())};
}

json niw_json(const expfam::NiwNat& n) {
  return {{"h1", vector_json(n.h1)}, {"h2", matrix_json(n.h2)}, {"h3", n.h3}, {"h4", n.h4}};
}

expfam::NiwNat niw_from(const json& j) {
  expfam::NiwNat n;
  n.h1 = vector_from(j.at("h1"));
  n.h2 = matrix_from(j.at("h2"));
  n.h3 = j.at("h3").get<double>();
  n.h4 = j.at("h4").get<double>();
  return n;
}

json bayes_json(const vmp::BayesModel& m) {
  const MixturePrior& p = m.prior;
  json prior = {{"K", p.K},           {"d", p.d},           {"alpha0", p.alpha0},
                {"m", vector_json(p.niw.m)}, {"kappa", p.niw.kappa}, {"S", matrix_json(p.niw.S)},
                {"nu", p.niw.nu}};
  json comps = json::array();
  for (const auto& c : m.globals.components) comps.push_back(niw_json(c));
  json workers = json::array();
  for (const auto& w : m.globals.workers) workers.push_back(beta_json(w));
  return {{"prior", prior},
          {"worker_prior", beta_json(m.worker_prior)},
          {"globals", {{"pi", vector_json(m.globals.pi.eta)}, {"components", comps}, {"workers", workers}}},
          {"networks", {{"recognition", mlp_json(m.recognition)}, {"decoder", mlp_json(m.decoder)}}}};
}

vmp::BayesModel bayes_from(const json& j) {
  vmp::BayesModel m;
  const json& p = j.at("prior");
  m.prior.K = p.at("K").get<std::size_t>();
  m.prior.d = p.at("d").get<std::size_t>();
  m.prior.alpha0 = p.at("alpha0").get<double>();
  m.prior.niw.m = vector_from(p.at("m"));
  m.prior.niw.kappa = p.at("kappa").get<double>();
  m.prior.niw.S = matrix_from(p.at("S"));
  m.prior.niw.nu = p.at("nu").get<double>();
  m.worker_prior = beta_from(j.at("worker_prior"));
  const json& g = j.at("globals");
  m.globals.pi.eta = vector_from(g.at("pi"));
  for (const json& c : g.at("components")) m.globals.components.push_back(niw_from(c));
  for (const json& w : g.at("workers")) m.globals.workers.push_back(beta_from(w));
  m.recognition = mlp_from(j.at("networks").at("recognition"));
  m.decoder = mlp_from(j.at("networks").at("decoder"));
  m.prior.validate();
  m.globals.validate();
  if (m.globals.K() != m.prior.K || m.globals.d() != m.prior.d) throw ParseError("checkpoint: globals do not match the prior");
  return m;
}

json scdc_json(const amortized::ScdcModel& m) {
  const amortized::PointParams& p = m.point;
  return {{"point",
           {{"pi_logits", matrix_json(p.pi_logits.value)},
            {"means", matrix_json(p.means.value)},
            {"log_vars", matrix_json(p.log_vars.value)},
            {"worker_logits", matrix_json(p.worker_logits.value)}}},
          {"networks",
           {{"encoder_z", mlp_json(m.posterior.encoder_z)},
            {"encoder_x", mlp_json(m.posterior.encoder_x)},
            {"decoder", mlp_json(m.decoder)}}}};
}

amortized::ScdcModel scdc_from(const json& j) {
  amortized::ScdcModel m;
  const json& p = j.at("point");
  m.point.pi_logits = nn::Parameter("pi_logits", matrix_from(p.at("pi_logits")));
  m.point.means = nn::Parameter("means", matrix_from(p.at("means")));
  m.point.log_vars = nn::Parameter("log_vars", matrix_from(p.at("log_vars")));
  m.point.worker_logits = nn::Parameter("worker_logits", matrix_from(p.at("worker_logits")));
  if (m.point.pi_logits.value.rows() != 1 || m.point.pi_logits.value.cols() != m.point.means.value.rows() ||
      m.point.log_vars.value.rows() != m.point.means.value.rows() ||
      m.point.log_vars.value.cols() != m.point.means.value.cols() || m.point.worker_logits.value.cols() != 2) {
    throw ParseError("checkpoint: inconsistent point-parameter shapes");
  }
  const json& n = j.at("networks");
  m.posterior.encoder_z = mlp_from(n.at("encoder_z"));
  m.posterior.encoder_x = mlp_from(n.at("encoder_x"));
  m.decoder = mlp_from(n.at("decoder"));
  return m;
}

}  // namespace

std::string checkpoint_to_string(const Checkpoint& c) {
  json j = {{"format", kFormat}, {"version", kVersion}, {"model", c.model}};
  if (c.model == "bayes") {
    if (!c.bayes) throw InvalidParameter("checkpoint: bayes model missing");
    j["bayes"] = bayes_json(*c.bayes);
  } else if (c.model == "scdc") {
    if (!c.scdc) throw InvalidParameter("checkpoint: scdc model missing");
    j["scdc"] = scdc_json(*c.scdc);
  } else {
    throw InvalidParameter("checkpoint: unknown model tag '" + c.model + "'");
  }
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_string(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != kFormat) throw ParseError("not a checkpoint document");
    if (j.at("version").get<int>() != kVersion) throw ParseError("unsupported checkpoint version");
    Checkpoint c;
    c.model = j.at("model").get<std::string>();
    if (c.model == "bayes") {
      c.bayes = bayes_from(j.at("bayes"));
    } else if (c.model == "scdc") {
      c.scdc = scdc_from(j.at("scdc"));
    } else {
      throw ParseError("unknown model tag '" + c.model + "'");
    }
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  } catch (const InvalidParameter& e) {
    throw ParseError(std::string("invalid checkpoint contents: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string text = checkpoint_to_string(checkpoint);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << text;
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return checkpoint_from_string(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace scdc
