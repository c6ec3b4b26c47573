#include "graphix/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace graphix {

Matrix& ParamStore::add(const std::string& name, Matrix m) {
  if (params_.count(name))
    throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
  order_.push_back(name);
  return params_.emplace(name, std::move(m)).first->second;
}

Matrix& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::out_of_range("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

const Matrix& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::out_of_range("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

bool ParamStore::contains(const std::string& name) const {
  return params_.count(name) > 0;
}

void ParamStore::set(const std::string& name, const Matrix& m) {
  Matrix& dst = at(name);
  if (!dst.same_shape(m))
    throw std::invalid_argument("ParamStore: shape mismatch for '" + name + "': have " +
                                std::to_string(dst.rows()) + "x" + std::to_string(dst.cols()) +
                                ", got " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()));
  dst = m;
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& [k, v] : params_) n += v.size();
  return n;
}

static void write_u64_le(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

static std::uint64_t read_u64_le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void ParamStore::save(const std::string& path) const {
  nlohmann::ordered_json manifest;
  manifest["format"] = "graphix-checkpoint-v1";
  manifest["seed"] = seed_;
  manifest["init"] = init_tag_;
  manifest["meta"] = meta_;
  auto params = nlohmann::ordered_json::array();
  for (const std::string& name : order_) {
    const Matrix& m = params_.at(name);
    params.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  }
  manifest["params"] = params;
  const std::string header = manifest.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  write_u64_le(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const std::string& name : order_)
    for (double v : params_.at(name).data())
      write_u64_le(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

ParamStore ParamStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  const std::uint64_t hlen = read_u64_le(is);
  std::string header(hlen, '\0');
  is.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw std::runtime_error("checkpoint: truncated manifest in '" + path + "'");

  nlohmann::ordered_json manifest;
  try {
    manifest = nlohmann::ordered_json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: bad manifest in '" + path + "': " + e.what());
  }
  if (manifest.value("format", "") != "graphix-checkpoint-v1")
    throw std::runtime_error("checkpoint: unrecognized format in '" + path + "'");

  ParamStore store(manifest.value("seed", std::uint64_t{0}),
                   manifest.value("init", "xavier_uniform"));
  store.meta_ = manifest.value("meta", nlohmann::ordered_json::object());
  for (const auto& p : manifest.at("params")) {
    Matrix m(p.at("rows").get<std::size_t>(), p.at("cols").get<std::size_t>());
    for (double& v : m.data()) v = std::bit_cast<double>(read_u64_le(is));
    store.add(p.at("name").get<std::string>(), std::move(m));
  }
  return store;
}

double grad_check(const std::function<double(const ParamStore&)>& f,
                  ParamStore& params,
                  const std::map<std::string, Matrix>& analytic_grads,
                  double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3))
    throw std::invalid_argument("grad_check: epsilon must lie in [1e-7, 1e-3]");
  double max_rel = 0.0;
  for (const std::string& name : params.names()) {
    auto it = analytic_grads.find(name);
    if (it == analytic_grads.end())
      throw std::invalid_argument("grad_check: missing analytic gradient for '" + name + "'");
    Matrix& value = params.at(name);
    const Matrix& analytic = it->second;
    if (!value.same_shape(analytic))
      throw std::invalid_argument("grad_check: gradient shape mismatch for '" + name + "'");
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + epsilon;
      const double fp = f(params);
      value.data()[i] = saved - epsilon;
      const double fm = f(params);
      value.data()[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::domain_error("grad_check: non-finite objective at '" + name + "'");
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double rel = std::abs(analytic.data()[i] - numeric) /
                         std::max(1.0, std::abs(numeric));
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

}  // namespace graphix
