#include "mdx/channel.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "mdx/numerics.hpp"

namespace mdx {

namespace {

constexpr double kPmfTol = 1e-12;
// Tolerance for deciding whether two metric values are "equal" when looking
// for outputs the metric can actually distinguish.
constexpr double kMetricEqTol = 1e-12;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void ChannelTriple::validate() const {
  const int X = W.rows(), Y = W.cols();
  if (X == 0 || Y == 0) throw std::invalid_argument("channel: empty matrix");
  if (!W.same_shape(q))
    throw std::invalid_argument("channel: metric shape mismatch");
  if (static_cast<int>(Q.size()) != X)
    throw std::invalid_argument("channel: Q length mismatch");
  for (int x = 0; x < X; ++x) {
    double sum = 0.0;
    for (int y = 0; y < Y; ++y) {
      if (W(x, y) < 0.0)
        throw std::invalid_argument("channel: negative entry W(" +
                                    std::to_string(x) + "," + std::to_string(y) + ")");
      sum += W(x, y);
    }
    if (std::abs(sum - 1.0) > kPmfTol)
      throw std::invalid_argument("channel: row " + std::to_string(x) +
                                  " not stochastic (sum = " + fmt(sum) + ")");
  }
  for (int x = 0; x < X; ++x)
    for (int y = 0; y < Y; ++y)
      if (q(x, y) < 0.0)
        throw std::invalid_argument("channel: negative metric q(" +
                                    std::to_string(x) + "," + std::to_string(y) + ")");
  double qsum = 0.0;
  for (int x = 0; x < X; ++x)
    for (int y = 0; y < Y; ++y) qsum += q(x, y);
  if (qsum <= 0.0) throw std::invalid_argument("channel: metric identically zero");
  double sumQ = 0.0;
  for (int x = 0; x < X; ++x) {
    if (Q[x] < 0.0)
      throw std::invalid_argument("channel: negative Q(" + std::to_string(x) + ")");
    sumQ += Q[x];
  }
  if (std::abs(sumQ - 1.0) > kPmfTol)
    throw std::invalid_argument("channel: Q not a pmf (sum = " + fmt(sumQ) + ")");
  bool any = false;
  for (int x = 0; x < X; ++x) any = any || Q[x] > 0.0;
  if (!any) throw std::invalid_argument("channel: Q has empty support");
}

void ChannelTriple::normalize() {
  validate();
  const int X = W.rows(), Y = W.cols();
  for (int x = 0; x < X; ++x) {
    double sum = 0.0;
    for (int y = 0; y < Y; ++y) sum += W(x, y);
    for (int y = 0; y < Y; ++y) W(x, y) /= sum;
  }
  double sumQ = 0.0;
  for (double v : Q) sumQ += v;
  for (double& v : Q) v /= sumQ;
}

JointDist ChannelTriple::joint() const {
  const int X = W.rows(), Y = W.cols();
  JointDist d{Matrix(X, Y), Q, std::vector<double>(Y, 0.0)};
  for (int x = 0; x < X; ++x)
    for (int y = 0; y < Y; ++y) {
      d.joint(x, y) = Q[x] * W(x, y);
      d.py[y] += d.joint(x, y);
    }
  return d;
}

AssumptionReport ChannelTriple::assumptions() const {
  const int X = W.rows(), Y = W.cols();
  AssumptionReport rep;
  rep.regularity_ok = true;
  for (int x = 0; x < X && rep.regularity_ok; ++x) {
    if (Q[x] <= 0.0) continue;
    for (int y = 0; y < Y; ++y) {
      if ((q(x, y) > 0.0) != (W(x, y) > 0.0)) {
        rep.regularity_ok = false;
        break;
      }
    }
  }
  for (int y = 0; y < Y; ++y) {
    bool informative = false;
    for (int x = 0; x < X && !informative; ++x) {
      if (Q[x] <= 0.0 || W(x, y) <= 0.0) continue;
      for (int xb = x + 1; xb < X; ++xb) {
        if (Q[xb] <= 0.0 || W(xb, y) <= 0.0) continue;
        if (!nearly_equal(q(x, y), q(xb, y), kMetricEqTol)) {
          informative = true;
          break;
        }
      }
    }
    if (informative) rep.informative_outputs.push_back(y);
  }
  rep.nonsingular = !rep.informative_outputs.empty();
  return rep;
}

ChannelTriple ml_triple(Matrix W, std::vector<double> Q) {
  ChannelTriple t{W, W, std::move(Q)};
  t.normalize();
  return t;
}

ChannelTriple hamming_triple(Matrix W, double delta, std::vector<double> Q) {
  if (W.rows() != W.cols())
    throw std::invalid_argument("channel: hamming metric needs square alphabets");
  if (!(delta > 0.0 && delta < 0.5))
    throw std::invalid_argument("channel: hamming delta outside (0, 0.5)");
  Matrix q(W.rows(), W.cols(), delta);
  for (int x = 0; x < W.rows(); ++x) q(x, x) = 1.0 - 2.0 * delta;
  ChannelTriple t{std::move(W), std::move(q), std::move(Q)};
  t.normalize();
  return t;
}

namespace {

Matrix matrix_from_json(const nlohmann::json& j, const std::string& name) {
  if (!j.is_array() || j.empty())
    throw std::invalid_argument("config: " + name + " must be a nonempty array of rows");
  std::vector<std::vector<double>> rows;
  for (const auto& r : j) {
    if (!r.is_array())
      throw std::invalid_argument("config: " + name + " rows must be arrays");
    rows.push_back(r.get<std::vector<double>>());
  }
  return Matrix::from_rows(rows);
}

}  // namespace

ChannelTriple parse_channel_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  if (!j.contains("W")) throw std::invalid_argument("config: missing W");
  if (!j.contains("Q")) throw std::invalid_argument("config: missing Q");
  Matrix W = matrix_from_json(j["W"], "W");
  std::vector<double> Q;
  if (!j["Q"].is_array()) throw std::invalid_argument("config: Q must be an array");
  Q = j["Q"].get<std::vector<double>>();

  ChannelTriple t;
  if (!j.contains("q") || (j["q"].is_string() && j["q"].get<std::string>() == "ML")) {
    t = ChannelTriple{W, W, Q};
  } else if (j["q"].is_object()) {
    const auto& o = j["q"];
    if (!o.contains("hamming") || !o["hamming"].is_number())
      throw std::invalid_argument("config: metric object must be {\"hamming\": delta}");
    return hamming_triple(std::move(W), o["hamming"].get<double>(), std::move(Q));
  } else if (j["q"].is_array()) {
    t = ChannelTriple{W, matrix_from_json(j["q"], "q"), Q};
  } else {
    throw std::invalid_argument("config: q must be rows, \"ML\", or {\"hamming\": delta}");
  }
  t.normalize();
  return t;
}

ChannelTriple load_channel_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_channel_config(ss.str());
}

double mutual_information(const ChannelTriple& t) {
  JointDist d = t.joint();
  double I = 0.0;
  for (int x = 0; x < t.num_inputs(); ++x)
    for (int y = 0; y < t.num_outputs(); ++y) {
      double p = d.joint(x, y);
      if (p > 0.0) I += p * std::log(p / (d.px[x] * d.py[y]));
    }
  return I;
}

}  // namespace mdx
