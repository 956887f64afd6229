#include "spectral.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <utility>

#include "mricolor/errors.hpp"
#include "mricolor/metrics.hpp"

namespace mricolor::metrics {

namespace detail {

namespace {

// fftfreq-style coordinate: 0, 1/n, ..., then the negative half.
torch::Tensor freq_axis(int64_t n) {
  torch::Tensor idx = torch::arange(n, torch::kFloat64);
  torch::Tensor neg = idx - static_cast<double>(n);
  return torch::where(idx <= n / 2, idx, neg) / static_cast<double>(n);
}

GaborBank build_bank(int64_t h, int64_t w) {
  GaborBank bank;
  bank.h = h;
  bank.w = w;
  torch::Tensor fy = freq_axis(h).view({h, 1}).expand({h, w});
  torch::Tensor fx = freq_axis(w).view({1, w}).expand({h, w});
  torch::Tensor radius = torch::sqrt(fx * fx + fy * fy);
  radius[0][0] = 1.0;  // keep log() finite; DC is zeroed below
  torch::Tensor theta = torch::atan2(-fy, fx);
  torch::Tensor sin_t = torch::sin(theta);
  torch::Tensor cos_t = torch::cos(theta);

  const double sigma_f = 0.55;             // radial bandwidth, log-frequency units
  const double sigma_theta = M_PI / 4.8;   // angular spread: (pi/4) / 1.2
  const double log_sf2 = 2.0 * std::log(sigma_f) * std::log(sigma_f);

  for (int64_t s = 0; s < bank.scales; ++s) {
    double wavelength = 6.0 * std::pow(2.0, static_cast<double>(s));
    double f0 = 1.0 / wavelength;
    torch::Tensor lr = torch::log(radius / f0);
    torch::Tensor radial = torch::exp(-(lr * lr) / log_sf2);
    radial[0][0] = 0.0;
    for (int64_t o = 0; o < bank.orients; ++o) {
      double angle = static_cast<double>(o) * M_PI / static_cast<double>(bank.orients);
      // Angular distance to the filter axis; the opposite direction sits at
      // distance pi so the filter is effectively single-sided and the inverse
      // transform of (filter * spectrum) is an analytic signal.
      torch::Tensor ds = sin_t * std::cos(angle) - cos_t * std::sin(angle);
      torch::Tensor dc = cos_t * std::cos(angle) + sin_t * std::sin(angle);
      torch::Tensor dtheta = torch::abs(torch::atan2(ds, dc));
      torch::Tensor spread = torch::exp(-(dtheta * dtheta) / (2.0 * sigma_theta * sigma_theta));
      bank.filters.push_back((radial * spread).contiguous());
    }
  }
  return bank;
}

}  // namespace

const GaborBank& gabor_bank(int64_t h, int64_t w) {
  static std::mutex mu;
  static std::map<std::pair<int64_t, int64_t>, GaborBank> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(h, w);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, build_bank(h, w)).first;
  return it->second;
}

SubbandResponse analyze(const torch::Tensor& img, const GaborBank& bank) {
  torch::Tensor spectrum = torch::fft::fft2(img.to(torch::kFloat64));
  std::vector<torch::Tensor> even, odd;
  even.reserve(bank.filters.size());
  odd.reserve(bank.filters.size());
  for (const torch::Tensor& f : bank.filters) {
    torch::Tensor resp = torch::fft::ifft2(spectrum * f);
    even.push_back(torch::real(resp));
    odd.push_back(torch::imag(resp));
  }
  return {torch::stack(even), torch::stack(odd)};
}

PhaseCongruency phase_congruency(const SubbandResponse& resp, const GaborBank& bank) {
  const double eps = 1e-4;
  torch::Tensor energy_total = torch::zeros({bank.h, bank.w}, torch::kFloat64);
  torch::Tensor amplitude_total = torch::zeros_like(energy_total);
  torch::Tensor even_sum = torch::zeros_like(energy_total);
  for (int64_t o = 0; o < bank.orients; ++o) {
    torch::Tensor e_sum = torch::zeros_like(energy_total);
    torch::Tensor o_sum = torch::zeros_like(energy_total);
    for (int64_t s = 0; s < bank.scales; ++s) {
      torch::Tensor e = resp.even[s * bank.orients + o];
      torch::Tensor od = resp.odd[s * bank.orients + o];
      e_sum += e;
      o_sum += od;
      amplitude_total += torch::sqrt(e * e + od * od);
    }
    energy_total += torch::sqrt(e_sum * e_sum + o_sum * o_sum);
    even_sum += e_sum;
  }
  // Coherent energy over total amplitude: 1 where phases align across scales,
  // small where they cancel. Bounded in [0, 1] by the triangle inequality.
  return {energy_total / (amplitude_total + eps), even_sum};
}

torch::Tensor scharr_magnitude(const torch::Tensor& img) {
  torch::Tensor x = img.view({1, 1, img.size(0), img.size(1)});
  torch::Tensor kx = torch::tensor({{-3.0, 0.0, 3.0}, {-10.0, 0.0, 10.0}, {-3.0, 0.0, 3.0}},
                                   torch::kFloat64) /
                     16.0;
  torch::Tensor ky = kx.t().contiguous();
  namespace F = torch::nn::functional;
  torch::Tensor padded = F::pad(x, F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReplicate));
  torch::Tensor gx = torch::conv2d(padded, kx.view({1, 1, 3, 3}));
  torch::Tensor gy = torch::conv2d(padded, ky.view({1, 1, 3, 3}));
  return torch::sqrt(gx * gx + gy * gy).view({img.size(0), img.size(1)});
}

}  // namespace detail

namespace {

void check_min_size(const torch::Tensor& plane, const char* what) {
  if (plane.size(0) < 32 || plane.size(1) < 32)
    throw ShapeError(std::string(what) + ": inputs must be at least 32x32, got " +
                     std::to_string(plane.size(0)) + "x" + std::to_string(plane.size(1)));
}

}  // namespace

double fsim(const torch::Tensor& a, const torch::Tensor& b) {
  torch::Tensor pa = detail::to_plane(a, "fsim");
  torch::Tensor pb = detail::to_plane(b, "fsim");
  if (pa.size(0) != pb.size(0) || pa.size(1) != pb.size(1))
    throw ShapeError("fsim: input sizes differ");
  check_min_size(pa, "fsim");
  // Joint rescaling to [0, 255] keeps the constants meaningful on unit-range
  // data and makes the score exactly invariant to a shared affine transform.
  detail::joint_normalize(pa, pb, 0.0, 255.0);

  const detail::GaborBank& bank = detail::gabor_bank(pa.size(0), pa.size(1));
  detail::PhaseCongruency ca = detail::phase_congruency(detail::analyze(pa, bank), bank);
  detail::PhaseCongruency cb = detail::phase_congruency(detail::analyze(pb, bank), bank);
  torch::Tensor ga = detail::scharr_magnitude(pa);
  torch::Tensor gb = detail::scharr_magnitude(pb);

  const double t1 = 0.85, t2 = 160.0, t3 = 200.0;
  torch::Tensor s_pc =
      (2.0 * ca.pc * cb.pc + t1) / (ca.pc * ca.pc + cb.pc * cb.pc + t1);
  torch::Tensor s_g = (2.0 * ga * gb + t2) / (ga * ga + gb * gb + t2);
  // Signed even-response agreement: phase congruency and gradient magnitude
  // are both blind to contrast polarity, so an inverted image would otherwise
  // score 1. The summed even responses flip sign under inversion.
  torch::Tensor s_e = (2.0 * ca.even_sum * cb.even_sum + t3) /
                      (ca.even_sum * ca.even_sum + cb.even_sum * cb.even_sum + t3);
  torch::Tensor pcm = torch::maximum(ca.pc, cb.pc);
  double denom = pcm.sum().item<double>();
  if (denom < 1e-12) return 1.0;  // two featureless planes are a perfect match
  return (s_pc * s_g * s_e * pcm).sum().item<double>() / denom;
}

namespace {

namespace F = torch::nn::functional;

torch::Tensor box7(const torch::Tensor& plane) {
  torch::Tensor x = plane.view({1, 1, plane.size(0), plane.size(1)});
  torch::Tensor padded = F::pad(x, F::PadFuncOptions({3, 3, 3, 3}).mode(torch::kReplicate));
  torch::Tensor kernel = torch::full({1, 1, 7, 7}, 1.0 / 49.0, torch::kFloat64);
  return torch::conv2d(padded, kernel).view({plane.size(0), plane.size(1)});
}

// Shift by one pixel with edge clamping; lag-1 neighbor along dim.
torch::Tensor shift1(const torch::Tensor& plane, int64_t dim) {
  torch::Tensor first = plane.narrow(dim, 0, 1);
  torch::Tensor rest = plane.narrow(dim, 0, plane.size(dim) - 1);
  return torch::cat({first, rest}, dim);
}

struct SubbandStats {
  torch::Tensor mu, sigma2, rho_h, rho_v;
};

SubbandStats subband_stats(const torch::Tensor& mag) {
  SubbandStats st;
  st.mu = box7(mag);
  st.sigma2 = torch::clamp_min(box7(mag * mag) - st.mu * st.mu, 0.0);
  auto rho = [&](int64_t dim) {
    torch::Tensor sh = shift1(mag, dim);
    torch::Tensor mu_sh = box7(sh);
    torch::Tensor sig2_sh = torch::clamp_min(box7(sh * sh) - mu_sh * mu_sh, 0.0);
    torch::Tensor cov = box7(mag * sh) - st.mu * mu_sh;
    torch::Tensor r = cov / (torch::sqrt(st.sigma2 * sig2_sh) + 1e-12);
    return torch::clamp(r, -1.0, 1.0);
  };
  st.rho_v = rho(0);
  st.rho_h = rho(1);
  return st;
}

}  // namespace

double stsim(const torch::Tensor& a, const torch::Tensor& b) {
  torch::Tensor pa = detail::to_plane(a, "stsim");
  torch::Tensor pb = detail::to_plane(b, "stsim");
  if (pa.size(0) != pb.size(0) || pa.size(1) != pb.size(1))
    throw ShapeError("stsim: input sizes differ");
  check_min_size(pa, "stsim");
  detail::joint_normalize(pa, pb, 0.0, 1.0);

  const detail::GaborBank& bank = detail::gabor_bank(pa.size(0), pa.size(1));
  detail::SubbandResponse ra = detail::analyze(pa, bank);
  detail::SubbandResponse rb = detail::analyze(pb, bank);

  const double c1 = 1e-4, c2 = 9e-4;
  double log_sum = 0.0;
  int64_t n_bands = static_cast<int64_t>(bank.filters.size());
  for (int64_t k = 0; k < n_bands; ++k) {
    torch::Tensor ma = torch::sqrt(ra.even[k] * ra.even[k] + ra.odd[k] * ra.odd[k]);
    torch::Tensor mb = torch::sqrt(rb.even[k] * rb.even[k] + rb.odd[k] * rb.odd[k]);
    SubbandStats sa = subband_stats(ma);
    SubbandStats sb = subband_stats(mb);
    torch::Tensor l_term = (2.0 * sa.mu * sb.mu + c1) / (sa.mu * sa.mu + sb.mu * sb.mu + c1);
    torch::Tensor c_term = (2.0 * torch::sqrt(sa.sigma2 * sb.sigma2) + c2) /
                           (sa.sigma2 + sb.sigma2 + c2);
    torch::Tensor ah = 1.0 - 0.5 * torch::abs(sa.rho_h - sb.rho_h);
    torch::Tensor av = 1.0 - 0.5 * torch::abs(sa.rho_v - sb.rho_v);
    torch::Tensor score =
        torch::pow(torch::clamp_min(l_term * c_term * ah * av, 0.0), 0.25).mean();
    log_sum += std::log(std::max(score.item<double>(), 1e-12));
  }
  return std::exp(log_sum / static_cast<double>(n_bands));
}

}  // namespace mricolor::metrics
