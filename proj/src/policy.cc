#include "alphamine/policy.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace alphamine {

namespace {

constexpr const char* kCheckpointMagic = "alphamine-policy-v1";

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y = W x (+ y), W row-major [rows x cols].
void MatVecAdd(const double* w, const double* x, int rows, int cols, double* y) {
  for (int r = 0; r < rows; ++r) {
    const double* row = w + static_cast<std::size_t>(r) * cols;
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int c = 0;
    for (; c + 4 <= cols; c += 4) {
      s0 += row[c] * x[c];
      s1 += row[c + 1] * x[c + 1];
      s2 += row[c + 2] * x[c + 2];
      s3 += row[c + 3] * x[c + 3];
    }
    for (; c < cols; ++c) s0 += row[c] * x[c];
    y[r] += (s0 + s1) + (s2 + s3);
  }
}

// x += W^T y
void MatTVecAdd(const double* w, const double* y, int rows, int cols, double* x) {
  for (int r = 0; r < rows; ++r) {
    const double* row = w + static_cast<std::size_t>(r) * cols;
    const double yr = y[r];
    if (yr == 0) continue;
    for (int c = 0; c < cols; ++c) x[c] += row[c] * yr;
  }
}

// G += y x^T
void OuterAdd(const double* y, const double* x, int rows, int cols, double* g) {
  for (int r = 0; r < rows; ++r) {
    const double yr = y[r];
    if (yr == 0) continue;
    double* row = g + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) row[c] += yr * x[c];
  }
}

// Activations of one recurrent step, kept for the backward pass.
struct StepCache {
  int input = 0;
  std::vector<double> h_prev, z, r, un, n, h;
};

class Cell {
 public:
  explicit Cell(const PolicyParams& p) : p_(p), L_(p.layout) {}

  void Step(int input, const std::vector<double>& h_prev, StepCache& c) const {
    const int e = L_.embed, h = L_.hidden;
    const double* v = p_.values.data();
    const double* x = v + L_.emb + static_cast<std::size_t>(input) * e;
    c.input = input;
    c.h_prev = h_prev;
    c.z.assign(v + L_.bz, v + L_.bz + h);
    c.r.assign(v + L_.br, v + L_.br + h);
    c.un.assign(h, 0.0);
    std::vector<double> an(v + L_.bn, v + L_.bn + h);
    MatVecAdd(v + L_.wz, x, h, e, c.z.data());
    MatVecAdd(v + L_.uz, h_prev.data(), h, h, c.z.data());
    MatVecAdd(v + L_.wr, x, h, e, c.r.data());
    MatVecAdd(v + L_.ur, h_prev.data(), h, h, c.r.data());
    MatVecAdd(v + L_.un, h_prev.data(), h, h, c.un.data());
    MatVecAdd(v + L_.wn, x, h, e, an.data());
    c.n.resize(h);
    c.h.resize(h);
    for (int k = 0; k < h; ++k) {
      c.z[k] = Sigmoid(c.z[k]);
      c.r[k] = Sigmoid(c.r[k]);
      c.n[k] = std::tanh(an[k] + c.r[k] * c.un[k]);
      c.h[k] = (1 - c.z[k]) * c.n[k] + c.z[k] * h_prev[k];
    }
  }

  std::vector<double> Logits(const std::vector<double>& h) const {
    const double* v = p_.values.data();
    std::vector<double> logits(v + L_.bo, v + L_.bo + L_.vocab);
    MatVecAdd(v + L_.wo, h.data(), L_.vocab, L_.hidden, logits.data());
    return logits;
  }

 private:
  const PolicyParams& p_;
  const PolicyLayout& L_;
};

std::vector<double> MaskedSoftmax(const std::vector<double>& logits,
                                  std::span<const std::uint8_t> mask, int step) {
  double top = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (!mask[k]) continue;
    any = true;
    if (!std::isfinite(logits[k])) {
      throw PolicyError("non-finite logit at step " + std::to_string(step), step);
    }
    top = std::max(top, logits[k]);
  }
  if (!any) throw PolicyError("empty action mask at step " + std::to_string(step), step);
  std::vector<double> p(logits.size(), 0.0);
  double sum = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (!mask[k]) continue;
    p[k] = std::exp(logits[k] - top);
    sum += p[k];
  }
  for (double& x : p) x /= sum;
  return p;
}

template <typename Choose>
Rollout Decode(const PolicyParams& params, const Grammar& grammar, Choose&& choose) {
  if (static_cast<std::size_t>(params.layout.vocab) != grammar.vocab().size()) {
    throw PolicyError("policy vocabulary does not match the grammar", 0);
  }
  Cell cell(params);
  Rollout out;
  StackState state = grammar.Initial();
  std::vector<double> h(params.layout.hidden, 0.0);
  int input = grammar.vocab().begin_id();
  const int sep = grammar.vocab().separator_id();
  StepCache c;
  for (int step = 0; step < grammar.max_len() - 1; ++step) {
    cell.Step(input, h, c);
    h = c.h;
    const auto& mask = grammar.LegalActions(state);
    const std::vector<double> pi = MaskedSoftmax(cell.Logits(h), mask, step);
    const int a = choose(pi);
    out.actions.push_back(a);
    out.log_probs.push_back(std::log(pi[static_cast<std::size_t>(a)]));
    out.masks.push_back(mask);
    if (a == sep) return out;
    state = Grammar::Apply(state, grammar.vocab().token(a));
    input = a;
  }
  throw PolicyError("rollout exceeded the length limit", grammar.max_len() - 1);
}

// Replays a rollout, returning per-step caches and probability vectors.
void Replay(const PolicyParams& params, const Rollout& rollout, std::vector<StepCache>& caches,
            std::vector<std::vector<double>>& probs) {
  Cell cell(params);
  const std::size_t T = rollout.actions.size();
  caches.resize(T);
  probs.resize(T);
  std::vector<double> h(params.layout.hidden, 0.0);
  int input = params.layout.vocab;  // BEG
  for (std::size_t t = 0; t < T; ++t) {
    cell.Step(input, h, caches[t]);
    h = caches[t].h;
    for (double x : h) {
      if (!std::isfinite(x)) {
        throw PolicyError("non-finite hidden state at step " + std::to_string(t),
                          static_cast<int>(t));
      }
    }
    probs[t] = MaskedSoftmax(cell.Logits(h), rollout.masks[t], static_cast<int>(t));
    input = rollout.actions[t];
  }
}

void AppendDouble(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

PolicyLayout PolicyLayout::For(int vocab, int embed, int hidden) {
  PolicyLayout L;
  L.vocab = vocab;
  L.embed = embed;
  L.hidden = hidden;
  std::size_t at = 0;
  auto take = [&](std::size_t n) {
    const std::size_t here = at;
    at += n;
    return here;
  };
  const std::size_t he = static_cast<std::size_t>(hidden) * embed;
  const std::size_t hh = static_cast<std::size_t>(hidden) * hidden;
  L.emb = take(static_cast<std::size_t>(vocab + 1) * embed);
  L.wz = take(he);
  L.wr = take(he);
  L.wn = take(he);
  L.uz = take(hh);
  L.ur = take(hh);
  L.un = take(hh);
  L.bz = take(hidden);
  L.br = take(hidden);
  L.bn = take(hidden);
  L.wo = take(static_cast<std::size_t>(vocab) * hidden);
  L.bo = take(vocab);
  L.total = at;
  return L;
}

PolicyParams PolicyParams::Init(int vocab, const PolicyConfig& config, std::uint64_t seed) {
  PolicyParams p;
  p.layout = PolicyLayout::For(vocab, config.embed, config.hidden);
  p.values.resize(p.layout.total);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-config.init_scale, config.init_scale);
  for (double& v : p.values) v = u(rng);
  return p;
}

PolicyParams PolicyParams::ZerosLike() const {
  PolicyParams p;
  p.layout = layout;
  p.values.assign(values.size(), 0.0);
  return p;
}

bool PolicyParams::AllFinite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::string PolicyParams::ConfigHash() const {
  // FNV-1a over the shape.
  std::uint64_t h = 1469598103934665603ull;
  for (int x : {layout.vocab, layout.embed, layout.hidden}) {
    for (int b = 0; b < 4; ++b) {
      h ^= static_cast<std::uint64_t>((x >> (8 * b)) & 0xff);
      h *= 1099511628211ull;
    }
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

double Rollout::LogProb() const {
  return std::accumulate(log_probs.begin(), log_probs.end(), 0.0);
}

std::vector<double> Distribution(const PolicyParams& params, std::span<const int> prefix,
                                 std::span<const std::uint8_t> mask) {
  Cell cell(params);
  std::vector<double> h(params.layout.hidden, 0.0);
  StepCache c;
  cell.Step(params.layout.vocab, h, c);
  for (int a : prefix) {
    h = c.h;
    cell.Step(a, h, c);
  }
  return MaskedSoftmax(cell.Logits(c.h), mask, static_cast<int>(prefix.size()));
}

Rollout SampleRollout(const PolicyParams& params, const Grammar& grammar, std::mt19937_64& rng) {
  return Decode(params, grammar, [&](const std::vector<double>& pi) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double draw = u(rng);
    double acc = 0;
    int last = -1;
    for (std::size_t k = 0; k < pi.size(); ++k) {
      if (pi[k] <= 0) continue;
      last = static_cast<int>(k);
      acc += pi[k];
      if (draw < acc) return last;
    }
    return last;
  });
}

Rollout GreedyRollout(const PolicyParams& params, const Grammar& grammar) {
  return Decode(params, grammar, [](const std::vector<double>& pi) {
    // max_element returns the first maximum, i.e. the lowest id.
    return static_cast<int>(std::max_element(pi.begin(), pi.end()) - pi.begin());
  });
}

void AccumulateScoreGradient(const PolicyParams& params, const Rollout& rollout, double coeff,
                             std::vector<double>& grad) {
  const PolicyLayout& L = params.layout;
  if (grad.size() != L.total) grad.assign(L.total, 0.0);
  std::vector<StepCache> caches;
  std::vector<std::vector<double>> probs;
  Replay(params, rollout, caches, probs);

  const int e = L.embed, H = L.hidden, V = L.vocab;
  const double* v = params.values.data();
  double* g = grad.data();
  std::vector<double> dh_next(H, 0.0), dh(H), dz(H), dr(H), dan(H), dun(H), dx(e);
  for (std::size_t ti = rollout.actions.size(); ti-- > 0;) {
    const StepCache& c = caches[ti];
    std::vector<double> dlogit(V);
    for (int k = 0; k < V; ++k) dlogit[k] = -coeff * probs[ti][k];
    dlogit[rollout.actions[ti]] += coeff;

    OuterAdd(dlogit.data(), c.h.data(), V, H, g + L.wo);
    for (int k = 0; k < V; ++k) g[L.bo + k] += dlogit[k];
    dh = dh_next;
    MatTVecAdd(v + L.wo, dlogit.data(), V, H, dh.data());

    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    for (int k = 0; k < H; ++k) {
      const double dn = dh[k] * (1 - c.z[k]);
      dz[k] = dh[k] * (c.h_prev[k] - c.n[k]) * c.z[k] * (1 - c.z[k]);
      dh_next[k] = dh[k] * c.z[k];
      dan[k] = dn * (1 - c.n[k] * c.n[k]);
      dr[k] = dan[k] * c.un[k] * c.r[k] * (1 - c.r[k]);
      dun[k] = dan[k] * c.r[k];
    }
    const double* x = v + L.emb + static_cast<std::size_t>(c.input) * e;
    OuterAdd(dz.data(), x, H, e, g + L.wz);
    OuterAdd(dr.data(), x, H, e, g + L.wr);
    OuterAdd(dan.data(), x, H, e, g + L.wn);
    OuterAdd(dz.data(), c.h_prev.data(), H, H, g + L.uz);
    OuterAdd(dr.data(), c.h_prev.data(), H, H, g + L.ur);
    OuterAdd(dun.data(), c.h_prev.data(), H, H, g + L.un);
    for (int k = 0; k < H; ++k) {
      g[L.bz + k] += dz[k];
      g[L.br + k] += dr[k];
      g[L.bn + k] += dan[k];
    }
    MatTVecAdd(v + L.uz, dz.data(), H, H, dh_next.data());
    MatTVecAdd(v + L.ur, dr.data(), H, H, dh_next.data());
    MatTVecAdd(v + L.un, dun.data(), H, H, dh_next.data());
    std::fill(dx.begin(), dx.end(), 0.0);
    MatTVecAdd(v + L.wz, dz.data(), H, e, dx.data());
    MatTVecAdd(v + L.wr, dr.data(), H, e, dx.data());
    MatTVecAdd(v + L.wn, dan.data(), H, e, dx.data());
    double* gx = g + L.emb + static_cast<std::size_t>(c.input) * e;
    for (int k = 0; k < e; ++k) gx[k] += dx[k];
  }
  for (std::size_t k = 0; k < L.total; ++k) {
    if (!std::isfinite(g[k])) {
      throw PolicyError("non-finite gradient", static_cast<int>(rollout.actions.size()) - 1);
    }
  }
}

std::vector<double> LogitScore(const PolicyParams& params, const Rollout& rollout) {
  std::vector<StepCache> caches;
  std::vector<std::vector<double>> probs;
  Replay(params, rollout, caches, probs);
  std::vector<double> s(params.layout.vocab, 0.0);
  for (std::size_t t = 0; t < probs.size(); ++t) {
    for (std::size_t k = 0; k < s.size(); ++k) s[k] -= probs[t][k];
    s[rollout.actions[t]] += 1.0;
  }
  return s;
}

void SaveCheckpoint(const std::filesystem::path& path, const PolicyParams& params) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::string text = kCheckpointMagic;
  text += "\nhash " + params.ConfigHash();
  text += "\nshape " + std::to_string(params.layout.vocab) + " " +
          std::to_string(params.layout.embed) + " " + std::to_string(params.layout.hidden);
  text += "\ncount " + std::to_string(params.values.size()) + "\n";
  for (double v : params.values) {
    AppendDouble(text, v);
    text += '\n';
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << text;
  if (!out) throw std::runtime_error("short write to checkpoint " + path.string());
}

PolicyParams LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  auto fail = [&](const std::string& why) {
    return std::runtime_error("checkpoint " + path.string() + ": " + why);
  };
  std::string magic, key, hash;
  int vocab = 0, embed = 0, hidden = 0;
  std::size_t count = 0;
  if (!std::getline(in, magic) || magic != kCheckpointMagic) throw fail("bad header");
  if (!(in >> key >> hash) || key != "hash") throw fail("missing hash");
  if (!(in >> key >> vocab >> embed >> hidden) || key != "shape") throw fail("missing shape");
  if (!(in >> key >> count) || key != "count") throw fail("missing count");
  PolicyParams p;
  p.layout = PolicyLayout::For(vocab, embed, hidden);
  if (count != p.layout.total) throw fail("parameter count does not match the shape");
  if (p.ConfigHash() != hash) throw fail("config hash mismatch");
  p.values.resize(count);
  std::string tok;
  for (std::size_t k = 0; k < count; ++k) {
    if (!(in >> tok)) throw fail("truncated at parameter " + std::to_string(k));
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), p.values[k]);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw fail("bad number at parameter " + std::to_string(k));
    }
  }
  return p;
}

}  // namespace alphamine
