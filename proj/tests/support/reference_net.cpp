#include "reference_net.hpp"

#include <algorithm>
#include <stdexcept>

namespace swarmcam::oracle {

namespace {

constexpr std::size_t kK = 3;

// out[o] += sum_c w[o][c] (*) in[c], zero padding 1, 3x3, stride 1.
void conv_accumulate(const double* in, std::size_t cin, std::size_t c_first, std::size_t c_count,
                     const double* w, std::size_t cout, std::size_t n, double* out) {
  for (std::size_t o = 0; o < cout; ++o) {
    double* po = out + o * n * n;
    for (std::size_t c = c_first; c < c_first + c_count; ++c) {
      const double* pi = in + (c - c_first) * n * n;
      const double* pw = w + (o * cin + c) * kK * kK;
      for (std::size_t ky = 0; ky < kK; ++ky)
        for (std::size_t kx = 0; kx < kK; ++kx) {
          const double wv = pw[ky * kK + kx];
          for (std::size_t y = 0; y < n; ++y) {
            const long iy = static_cast<long>(y) + static_cast<long>(ky) - 1;
            if (iy < 0 || iy >= static_cast<long>(n)) continue;
            const std::size_t x0 = kx == 0 ? 1 : 0;
            const std::size_t x1 = kx == 2 ? n - 1 : n;
            double* __restrict row = po + y * n;
            const double* __restrict src = pi + static_cast<std::size_t>(iy) * n;
            for (std::size_t x = x0; x < x1; ++x) row[x] += wv * src[x + kx - 1];
          }
        }
    }
  }
}

// out[o] += w[o][c] (*) in[c] for every nonzero input entry, zero padding 1.
void conv_scatter(const double* in, std::size_t cin, const double* w, std::size_t cout, std::size_t n,
                  double* out) {
  const std::size_t plane = n * n;
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t iy = 0; iy < n; ++iy)
      for (std::size_t ix = 0; ix < n; ++ix) {
        const double d = in[c * plane + iy * n + ix];
        if (d == 0.0) continue;
        for (std::size_t ky = 0; ky < kK; ++ky) {
          const long y = static_cast<long>(iy) - static_cast<long>(ky) + 1;
          if (y < 0 || y >= static_cast<long>(n)) continue;
          for (std::size_t kx = 0; kx < kK; ++kx) {
            const long x = static_cast<long>(ix) - static_cast<long>(kx) + 1;
            if (x < 0 || x >= static_cast<long>(n)) continue;
            const std::size_t pos = static_cast<std::size_t>(y) * n + static_cast<std::size_t>(x);
            const double* pw = w + c * kK * kK + ky * kK + kx;
            for (std::size_t o = 0; o < cout; ++o) out[o * plane + pos] += pw[o * cin * kK * kK] * d;
          }
        }
      }
}

double relu(double v) { return v > 0.0 ? v : 0.0; }

}  // namespace

ReferenceNet::ReferenceNet(const model::Model& model, const std::vector<double>& input) {
  const auto& spec = model.spec;
  if (spec.conv.size() != 4 || spec.hidden.size() != 2 || spec.tap_layer != 3)
    throw std::invalid_argument("ReferenceNet: default-shaped spec required");
  std::size_t n = spec.input_size, cin = spec.input_channels;
  for (const auto& c : spec.conv) {
    if (c.kernel != 3 || c.pad != 1) throw std::invalid_argument("ReferenceNet: 3x3 pad-1 convs required");
    stages_.push_back({cin, c.out_channels, n, c.pool_after});
    cin = c.out_channels;
    if (c.pool_after) n /= 2;
  }
  if (stages_.back().pool) throw std::invalid_argument("ReferenceNet: tap stage must not pool");
  for (const auto& p : model.params) {
    params_.emplace_back(p.value.data().begin(), p.value.data().end());
    names_.push_back(p.name);
  }

  std::vector<double> cur = input;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const Stage& st = stages_[s];
    const std::size_t plane = st.size * st.size;
    in_.push_back(cur);
    std::vector<double> z(st.cout * plane);
    for (std::size_t o = 0; o < st.cout; ++o) std::fill_n(z.begin() + o * plane, plane, params_[2 * s + 1][o]);
    conv_accumulate(cur.data(), st.cin, 0, st.cin, params_[2 * s].data(), st.cout, st.size, z.data());
    std::vector<double> a(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) a[i] = relu(z[i]);
    std::vector<std::size_t> pick;
    if (st.pool) {
      const std::size_t h = st.size / 2;
      cur.assign(st.cout * h * h, 0.0);
      pick.resize(cur.size());
      for (std::size_t c = 0; c < st.cout; ++c)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < h; ++x) {
            std::size_t best = c * plane + 2 * y * st.size + 2 * x;
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx) {
                const std::size_t idx = c * plane + (2 * y + dy) * st.size + 2 * x + dx;
                if (a[idx] > a[best]) best = idx;
              }
            pick[c * h * h + y * h + x] = best;
            cur[c * h * h + y * h + x] = a[best];
          }
    } else {
      cur = a;
    }
    z_.push_back(std::move(z));
    a_.push_back(std::move(a));
    pick_.push_back(std::move(pick));
  }
  a4_ = a_.back();

  const std::size_t m1 = spec.hidden[0], n1 = a4_.size();
  w1t_.resize(n1 * m1);
  for (std::size_t i = 0; i < m1; ++i)
    for (std::size_t j = 0; j < n1; ++j) w1t_[j * m1 + i] = params_[8][i * n1 + j];
  h1_ = params_[9];
  for (std::size_t j = 0; j < n1; ++j)
    for (std::size_t i = 0; i < m1; ++i) h1_[i] += a4_[j] * w1t_[j * m1 + i];
  r1_.resize(m1);
  for (std::size_t i = 0; i < m1; ++i) r1_[i] = relu(h1_[i]);
  const std::size_t m2 = spec.hidden[1];
  h2_.resize(m2);
  r2_.resize(m2);
  for (std::size_t i = 0; i < m2; ++i) {
    double acc = params_[11][i];
    for (std::size_t j = 0; j < m1; ++j) acc += params_[10][i * m1 + j] * r1_[j];
    h2_[i] = acc;
    r2_[i] = relu(acc);
  }
  logit_ = params_[13][0];
  for (std::size_t j = 0; j < m2; ++j) logit_ += params_[12][j] * r2_[j];
}

double ReferenceNet::head_from_dh1(const std::vector<double>& dh1, bool frozen) const {
  const std::size_t m1 = h1_.size(), m2 = h2_.size();
  std::vector<double> dh2(m2, 0.0);
  for (std::size_t j = 0; j < m1; ++j) {
    if (dh1[j] == 0.0) continue;
    const double h = h1_[j] + dh1[j];
    if ((h > 0.0) != (h1_[j] > 0.0)) kink_ = true;
    const double dr = (frozen ? (h1_[j] > 0.0 ? h : 0.0) : relu(h)) - r1_[j];
    if (dr == 0.0) continue;
    for (std::size_t i = 0; i < m2; ++i) dh2[i] += params_[10][i * m1 + j] * dr;
  }
  double dlogit = 0.0;
  for (std::size_t i = 0; i < m2; ++i) {
    const double h = h2_[i] + dh2[i];
    if ((h > 0.0) != (h2_[i] > 0.0)) kink_ = true;
    dlogit += params_[12][i] * ((frozen ? (h2_[i] > 0.0 ? h : 0.0) : relu(h)) - r2_[i]);
  }
  return logit_ + dlogit;
}

double ReferenceNet::head_from_da4(const std::vector<double>& da4, std::size_t offset, bool frozen) const {
  const std::size_t m1 = h1_.size();
  std::vector<double> dh1(m1, 0.0);
  for (std::size_t j = 0; j < da4.size(); ++j) {
    const double v = da4[j];
    if (v == 0.0) continue;
    const double* __restrict col = w1t_.data() + (offset + j) * m1;
    double* __restrict h = dh1.data();
    for (std::size_t i = 0; i < m1; ++i) h[i] += v * col[i];
  }
  return head_from_dh1(dh1, frozen);
}

// Stage `s` pre-activation with channel `ch` replaced by `zc`; every other
// channel of that stage is unchanged. Later stages carry only differences
// from the unperturbed pass.
double ReferenceNet::from_stage(std::size_t s, std::size_t ch, const std::vector<double>& zc, bool frozen) const {
  const Stage& st = stages_[s];
  const std::size_t plane = st.size * st.size;
  std::vector<double> ac(plane), dc(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    const double base = z_[s][ch * plane + i];
    if ((zc[i] > 0.0) != (base > 0.0)) kink_ = true;
    ac[i] = frozen ? (base > 0.0 ? zc[i] : 0.0) : relu(zc[i]);
    dc[i] = ac[i] - a_[s][ch * plane + i];
  }
  if (s + 1 == stages_.size()) return head_from_da4(dc, ch * plane, frozen);

  // Pool the changed channel into a delta on one input channel of the next stage.
  const std::size_t h = st.size / 2, hp = h * h;
  std::vector<double> dpool(stages_[s + 1].cin * hp, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < h; ++x) {
      const std::size_t base_pick = pick_[s][ch * hp + y * h + x] - ch * plane;
      std::size_t best = 2 * y * st.size + 2 * x;
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx) {
          const std::size_t idx = (2 * y + dy) * st.size + 2 * x + dx;
          if (ac[idx] > ac[best]) best = idx;
        }
      if (best != base_pick) kink_ = true;
      const std::size_t use = frozen ? base_pick : best;
      dpool[ch * hp + y * h + x] = ac[use] - a_[s][ch * plane + base_pick];
    }

  for (std::size_t t = s + 1;; ++t) {
    const Stage& cs = stages_[t];
    const std::size_t pl = cs.size * cs.size;
    std::vector<double> dz(cs.cout * pl, 0.0);
    conv_scatter(dpool.data(), cs.cin, params_[2 * t].data(), cs.cout, cs.size, dz.data());
    std::vector<double> an = a_[t], da(dz.size(), 0.0);
    for (std::size_t i = 0; i < dz.size(); ++i) {
      if (dz[i] == 0.0) continue;
      const double z = z_[t][i] + dz[i];
      if ((z > 0.0) != (z_[t][i] > 0.0)) kink_ = true;
      an[i] = frozen ? (z_[t][i] > 0.0 ? z : 0.0) : relu(z);
      da[i] = an[i] - a_[t][i];
    }
    if (t + 1 == stages_.size()) return head_from_da4(da, 0, frozen);
    const std::size_t hh = cs.size / 2, hhp = hh * hh;
    dpool.assign(cs.cout * hhp, 0.0);
    for (std::size_t c = 0; c < cs.cout; ++c)
      for (std::size_t y = 0; y < hh; ++y)
        for (std::size_t x = 0; x < hh; ++x) {
          const std::size_t base_pick = pick_[t][c * hhp + y * hh + x];
          std::size_t best = c * pl + 2 * y * cs.size + 2 * x;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = c * pl + (2 * y + dy) * cs.size + 2 * x + dx;
              if (an[idx] > an[best]) best = idx;
            }
          if (best != base_pick) kink_ = true;
          const std::size_t use = frozen ? base_pick : best;
          dpool[c * hhp + y * hh + x] = an[use] - a_[t][base_pick];
        }
  }
}

double ReferenceNet::perturbed_logit(std::size_t param, std::size_t index, double delta, bool frozen) const {
  kink_ = false;
  const std::size_t n_conv = stages_.size();
  if (param < 2 * n_conv) {
    const std::size_t s = param / 2;
    const Stage& st = stages_[s];
    const std::size_t plane = st.size * st.size;
    const std::size_t o = param % 2 == 0 ? index / (st.cin * kK * kK) : index;
    std::vector<double> zc(z_[s].begin() + static_cast<std::ptrdiff_t>(o * plane),
                           z_[s].begin() + static_cast<std::ptrdiff_t>((o + 1) * plane));
    if (param % 2 == 1) {
      for (auto& v : zc) v += delta;
    } else {
      // Exact change of output channel o from one weight: delta times the
      // shifted input channel.
      const std::size_t r = index % (st.cin * kK * kK);
      const std::size_t c = r / (kK * kK), ky = (r / kK) % kK, kx = r % kK;
      const double* in = in_[s].data() + c * plane;
      for (std::size_t y = 0; y < st.size; ++y) {
        const long iy = static_cast<long>(y) + static_cast<long>(ky) - 1;
        if (iy < 0 || iy >= static_cast<long>(st.size)) continue;
        for (std::size_t x = 0; x < st.size; ++x) {
          const long ix = static_cast<long>(x) + static_cast<long>(kx) - 1;
          if (ix < 0 || ix >= static_cast<long>(st.size)) continue;
          zc[y * st.size + x] += delta * in[static_cast<std::size_t>(iy) * st.size + static_cast<std::size_t>(ix)];
        }
      }
    }
    return from_stage(s, o, zc, frozen);
  }

  const std::size_t m1 = h1_.size();
  const std::size_t head = param - 2 * n_conv;
  if (head == 0 || head == 1) {  // fc1: one hidden unit changes
    const std::size_t i = head == 0 ? index / a4_.size() : index;
    const double dh = head == 0 ? delta * a4_[index % a4_.size()] : delta;
    std::vector<double> dh1(m1, 0.0);
    dh1[i] = dh;
    return head_from_dh1(dh1, frozen);
  }
  if (head == 2 || head == 3) {  // fc2
    const std::size_t i = head == 2 ? index / m1 : index;
    const double dh = head == 2 ? delta * r1_[index % m1] : delta;
    const double h2 = h2_[i] + dh;
    if ((h2 > 0.0) != (h2_[i] > 0.0)) kink_ = true;
    const double r = frozen ? (h2_[i] > 0.0 ? h2 : 0.0) : relu(h2);
    return logit_ + params_[12][i] * (r - r2_[i]);
  }
  if (head == 4) return logit_ + delta * r2_[index];
  if (head == 5) return logit_ + delta;
  throw std::out_of_range("ReferenceNet: parameter index");
}

double ReferenceNet::perturbed_tap_logit(std::size_t index, double delta, bool frozen) const {
  kink_ = false;
  return head_from_da4({delta}, index, frozen);
}

}  // namespace swarmcam::oracle
