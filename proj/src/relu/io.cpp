#include "flatpi/error.hpp"
#include "flatpi/relu.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace flatpi::relu {
namespace {

constexpr const char* kMagic = "flatpi-relu-net";
constexpr int kVersion = 1;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void put_row(std::ostringstream& os, const VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? " " : "") << num(v[i]);
  os << '\n';
}

class Reader {
 public:
  explicit Reader(const std::string& text) : is_(text) {}

  std::string word() {
    std::string w;
    if (!(is_ >> w)) throw Error(ErrorCode::FormatError, "weight file truncated");
    return w;
  }
  void expect(const std::string& key) {
    const std::string w = word();
    if (w != key) throw Error(ErrorCode::FormatError, "expected '" + key + "', found '" + w + "'");
  }
  double real() {
    const std::string w = word();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(w.c_str(), &end);
    if (end == w.c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(v))
      throw Error(ErrorCode::FormatError, "bad number '" + w + "'");
    return v;
  }
  int integer() {
    const std::string w = word();
    char* end = nullptr;
    const long v = std::strtol(w.c_str(), &end, 10);
    if (end == w.c_str() || *end != '\0' || v < 0 || v > 1000000)
      throw Error(ErrorCode::FormatError, "bad integer '" + w + "'");
    return static_cast<int>(v);
  }
  bool done() {
    std::string w;
    return !(is_ >> w);
  }

 private:
  std::istringstream is_;
};

}  // namespace

std::string format_net(const ReluNet& net, const std::optional<ApproxCert>& cert) {
  net.validate();
  std::ostringstream os;
  os << kMagic << '\n' << "version " << kVersion << '\n' << "n0 " << net.n0() << '\n' << "n1 " << net.n1() << '\n';
  os << "W1\n";
  for (int k = 0; k < net.n1(); ++k) put_row(os, net.W1.row(k).transpose());
  os << "b1\n";
  put_row(os, net.b1);
  os << "W2\n";
  put_row(os, net.W2);
  os << "b2\n" << num(net.b2) << '\n';
  if (cert) {
    os << "cert\n";
    os << "eps " << num(cert->eps) << '\n';
    os << "max_deviation " << num(cert->max_deviation) << '\n';
    os << "grid " << cert->grid_points_per_dim << '\n';
    os << "margin_factor " << num(cert->margin_factor) << '\n';
    os << "workspace_lo ";
    put_row(os, cert->workspace.lo);
    os << "workspace_hi ";
    put_row(os, cert->workspace.hi);
  }
  os << "end\n";
  return os.str();
}

void save_net(const std::string& path, const ReluNet& net, const std::optional<ApproxCert>& cert) {
  const std::string text = format_net(net, cert);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::FormatError, "cannot write weight file " + path);
  out << text;
  if (!out) throw Error(ErrorCode::FormatError, "write failed for " + path);
}

NetFile parse_net(const std::string& text, std::optional<int> expected_n0) {
  Reader r(text);
  r.expect(kMagic);
  r.expect("version");
  const int version = r.integer();
  if (version != kVersion) throw Error(ErrorCode::FormatError, "unsupported weight file version " + std::to_string(version));
  r.expect("n0");
  const int n0 = r.integer();
  r.expect("n1");
  const int n1 = r.integer();
  if (n0 < 1 || n1 < 1) throw Error(ErrorCode::FormatError, "n0 and n1 must be positive");
  if (expected_n0 && n0 != *expected_n0)
    throw Error(ErrorCode::FormatError,
                "weight file has n0 = " + std::to_string(n0) + ", model expects " + std::to_string(*expected_n0));

  NetFile f;
  f.net.W1.resize(n1, n0);
  f.net.b1.resize(n1);
  f.net.W2.resize(n1);
  r.expect("W1");
  for (int k = 0; k < n1; ++k)
    for (int j = 0; j < n0; ++j) f.net.W1(k, j) = r.real();
  r.expect("b1");
  for (int k = 0; k < n1; ++k) f.net.b1[k] = r.real();
  r.expect("W2");
  for (int k = 0; k < n1; ++k) f.net.W2[k] = r.real();
  r.expect("b2");
  f.net.b2 = r.real();

  std::string w = r.word();
  if (w == "cert") {
    ApproxCert c;
    r.expect("eps");
    c.eps = r.real();
    r.expect("max_deviation");
    c.max_deviation = r.real();
    r.expect("grid");
    c.grid_points_per_dim = r.integer();
    r.expect("margin_factor");
    c.margin_factor = r.real();
    r.expect("workspace_lo");
    c.workspace.lo.resize(n0);
    for (int j = 0; j < n0; ++j) c.workspace.lo[j] = r.real();
    r.expect("workspace_hi");
    c.workspace.hi.resize(n0);
    for (int j = 0; j < n0; ++j) c.workspace.hi[j] = r.real();
    f.cert = c;
    w = r.word();
  }
  if (w != "end") throw Error(ErrorCode::FormatError, "expected 'end', found '" + w + "'");
  if (!r.done()) throw Error(ErrorCode::FormatError, "trailing content after 'end'");
  f.net.validate();
  return f;
}

NetFile load_net(const std::string& path, std::optional<int> expected_n0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FormatError, "cannot open weight file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_net(ss.str(), expected_n0);
}

}  // namespace flatpi::relu
