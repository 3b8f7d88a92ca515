// Acceptance suite: one PASS/FAIL line per criterion, exit code 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gradcheck.hpp"
#include "splatct/io.hpp"
#include "splatct/neural.hpp"
#include "splatct/recon.hpp"
#include "support.hpp"

using namespace splatct;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int g_failed = 0;

void report(int id, bool pass, const std::string& title, const std::string& detail) {
  if (!pass) ++g_failed;
  std::printf("%s  criterion %d: %s  [%s]\n", pass ? "PASS" : "FAIL", id, title.c_str(),
              detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void note(const std::string& line) {
  std::printf("      %s\n", line.c_str());
  std::fflush(stdout);
}

// ---------------------------------------------------------------- criterion 1

void splat_vs_closed_form() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  const ScannerGeometry g =
      ScannerGeometry::for_volume({8, 8, 8}, Vec3(20, 20, 20), 32, 32, {0.0});
  std::uniform_real_distribution<double> angle(0, 2 * std::numbers::pi);
  std::uniform_int_distribution<int> pix(0, 31);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const GaussianView gv = test::random_gaussian(rng, 12.0, 0.5, 3.0);
    const ViewPose pose = pose_at_angle(g, angle(rng));
    // Aim at a pixel near the Gaussian's footprint so the integral is not
    // vanishingly small.
    const auto c = project_point(projection_matrix(pose), gv.mu);
    int u = pix(rng), v = pix(rng);
    if (c) {
      std::uniform_int_distribution<int> jitter(-3, 3);
      u = std::clamp(static_cast<int>((*c)[0]) + jitter(rng), 0, 31);
      v = std::clamp(static_cast<int>((*c)[1]) + jitter(rng), 0, 31);
    }
    const std::vector<GaussianView> one{gv};
    const Projection p = splat_gaussians(one, g, pose, {kNoCutoff, true});
    const double direct = ray_gaussian_integral(gv, pixel_ray(pose, g, u, v));
    const double rel = std::abs(p.at(u, v) - direct) / std::max(std::abs(direct), 1e-300);
    worst = std::max(worst, direct == 0.0 && p.at(u, v) == 0.0 ? 0.0 : rel);
  }
  const double t = seconds_since(t0);
  report(1, worst <= 1e-10 && t < 1.0, "splat path vs closed-form line integral, 100 pairs",
         fmt("max rel err %.2e (<= 1e-10), %.3f s (< 1 s)", worst, t));
}

// ---------------------------------------------------------------- criterion 2

void splat_vs_raymarch() {
#ifdef _OPENMP
  const int threads = omp_get_max_threads();
  omp_set_num_threads(1);
#endif
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  const GridDims dims{16, 16, 16};
  const double box = 20.0, smax = 1.5;
  const ScannerGeometry g =
      ScannerGeometry::for_volume(dims, Vec3(box, box, box), 32, 32, {0.7});
  const ViewPose pose = trajectory_poses(g)[0];
  std::vector<GaussianView> gs;
  for (int i = 0; i < 64; ++i) gs.push_back(test::random_gaussian(rng, box, 0.5, smax));
  const Projection splat = splat_gaussians(gs, g, pose, {6.0, true});
  // Integrate the summed density across a box that holds every Gaussian to
  // beyond 6 sigma.
  const double half = box / 2 + 6.0 * smax;
  const Box field_box{Vec3::Constant(-half), Vec3::Constant(half)};
  const DensityField field = [&](const Vec3& x) {
    double s = 0.0;
    for (const auto& gv : gs) s += gaussian_density_at(gv, x);
    return s;
  };
  const double step = box / dims.nx / 8.0;
  const Projection march = raymarch_project(field, field_box, g, pose, step);
  double peak = 0.0;
  for (double v : march.data) peak = std::max(peak, v);
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < march.data.size(); ++i) {
    if (march.data[i] <= 1e-3 * peak) continue;
    sum += std::abs(splat.data[i] - march.data[i]) / march.data[i];
    ++n;
  }
  const double mean_rel = n > 0 ? sum / n : 1.0;
  const double t = seconds_since(t0);
#ifdef _OPENMP
  omp_set_num_threads(threads);
#endif
  report(2, mean_rel < 0.01 && t < 10.0, "splat vs ray-marched Gaussian field, 64 Gaussians",
         fmt("mean rel pixel err %.2e over %d pixels (< 1e-2), %.2f s single-threaded (< 10 s)",
             mean_rel, n, t));
}

// ---------------------------------------------------------------- criterion 3

void gradient_suite() {
  const auto t0 = Clock::now();
  const int n = 10;
  std::vector<test::CheckStats> all;
  all.push_back(test::check_projector(n, 300));
  for (auto& s : test::check_losses(n, 301)) all.push_back(s);
  all.push_back(test::check_linear(n, 302));
  all.push_back(test::check_layer_norm(n, 303));
  all.push_back(test::check_gelu(n, 304));
  all.push_back(test::check_attention(n, 305, false));
  all.push_back(test::check_attention(n, 306, true));
  all.push_back(test::check_block(n, 307));
  for (auto& s : test::check_toy_model(n, 308)) all.push_back(s);
  const double t = seconds_since(t0);
  bool pass = t < 120.0;
  for (const auto& s : all) {
    pass = pass && s.ok() && s.instances >= n;
    note(fmt("%-28s instances %2d  entries %6ld  failures %ld  worst rel %.1e", s.name.c_str(),
             s.instances, s.checked, s.failures, s.worst));
  }
  report(3, pass, "finite-difference gradient suite",
         fmt("%zu ops x %d instances, %.1f s (< 120 s)", all.size(), n, t));
}

// ---------------------------------------------------------------- criterion 4

void extraction_exactness() {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> dim(1, 12);
  int exact = 0;
  for (int k = 0; k < 20; ++k) {
    VoxelVolume v({dim(rng), dim(rng), dim(rng)}, Vec3(10, 12, 14));
    v.data = test::random_values(v.data.size(), rng, 0, 1);
    if (extract_volume(voxgs_from_volume(v)).data == v.data) ++exact;
  }
  const VoxelVolume sl = shepp_logan_3d({64, 64, 64}, Vec3(128, 128, 128));
  const bool phantom = extract_volume(voxgs_from_volume(sl)).data == sl.data;
  report(4, exact == 20 && phantom, "volume -> VoxGS -> volume is the identity",
         fmt("%d/20 random volumes and the 64^3 phantom %s bit-exact", exact,
             phantom ? "are" : "are NOT"));
}

// ---------------------------------------------------------------- criteria 5, 6

struct ReconRun {
  OptimResult opt;
  double seconds = 0.0;
};

struct ReconCase {
  VoxelVolume gt;
  ProjectionSet projs;
  OptimConfig cfg;
};

ReconCase make_recon_case() {
  ReconCase c;
  const GridDims d{32, 32, 32};
  const Vec3 e(64, 64, 64);
  c.gt = shepp_logan_3d(d, e);
  c.projs.geometry =
      ScannerGeometry::for_volume(d, e, 64, 64, uniform_angles(10, 2 * std::numbers::pi));
  const auto poses = c.projs.poses();
  const double step = default_march_step(c.projs.geometry);
  for (int k = 0; k < 10; ++k) {
    Projection p = raymarch_project(c.gt, c.projs.geometry, poses[k], step);
    p.pose_index = k;
    p.angle = c.projs.geometry.angles[k];
    c.projs.views.push_back(std::move(p));
  }
  c.cfg.iterations = 2000;
  c.cfg.seed = 5;
  c.cfg.deterministic = true;
  return c;
}

ReconRun run_recon(const ReconCase& c) {
  const auto t0 = Clock::now();
  ReconRun r{reconstruct_voxgs_opt(c.projs, c.cfg)};
  r.seconds = seconds_since(t0);
  return r;
}

double ema_at(const std::vector<double>& trace, std::size_t index, int span) {
  const double a = 2.0 / (span + 1.0);
  double ema = trace.front();
  for (std::size_t i = 1; i <= index; ++i) ema = a * trace[i] + (1.0 - a) * ema;
  return ema;
}

void recon_and_novel_views(const ReconCase& c, const ReconRun& run) {
  const auto& trace = run.opt.loss_trace;
  const double ema50 = ema_at(trace, 49, 50);
  const double ema_end = ema_at(trace, trace.size() - 1, 50);
  const VoxelVolume vol = extract_volume(run.opt.cloud);
  const MetricsReport ours = evaluate_recon(vol, c.gt);

  const auto t0 = Clock::now();
  SartConfig sc;
  sc.iterations = 50;
  sc.relaxation = 0.5;
  const SartResult sart = reconstruct_sart(c.projs, sc);
  const double sart_s = seconds_since(t0);
  const MetricsReport base = evaluate_recon(sart.volume, c.gt);

  note(fmt("VoxGS  PSNR %.2f dB  SSIM %.3f  (%.1f s)", ours.psnr_db, ours.ssim, run.seconds));
  note(fmt("SART   PSNR %.2f dB  SSIM %.3f  (%.1f s)", base.psnr_db, base.ssim, sart_s));
  const bool a = ema_end < ema50;
  const bool b = ours.psnr_db > base.psnr_db;
  const bool cc = ours.psnr_db >= 25.0;
  const bool time_ok = run.seconds < 900.0;
  report(5, a && b && cc && time_ok, "end-to-end VoxGS optimization, 32^3 phantom, 10 views",
         fmt("(a) loss EMA %.4f -> %.4f; (b) %.2f dB vs SART %.2f dB; (c) >= 25 dB; %.0f s (< 900 s)",
             ema50, ema_end, ours.psnr_db, base.psnr_db, run.seconds));

  // Held-out angles halfway between training views.
  const ScannerGeometry& g = c.projs.geometry;
  const double step = default_march_step(g);
  double worst = 1e300, mean = 0.0;
  for (int k = 0; k < 5; ++k) {
    const double angle = (2 * k + 0.5) * 2 * std::numbers::pi / 10;
    const ViewPose pose = pose_at_angle(g, angle);
    const Projection truth = raymarch_project(c.gt, g, pose, step);
    const Projection render = splat_project(run.opt.cloud, g, pose);
    double peak = 0.0, se = 0.0;
    for (std::size_t i = 0; i < truth.data.size(); ++i) {
      peak = std::max(peak, truth.data[i]);
      se += (render.data[i] - truth.data[i]) * (render.data[i] - truth.data[i]);
    }
    const double mse = se / truth.data.size();
    const double psnr = mse > 0 ? std::min(kPsnrCapDb, 10 * std::log10(peak * peak / mse)) : kPsnrCapDb;
    worst = std::min(worst, psnr);
    mean += psnr / 5;
  }
  report(6, worst >= 30.0, "novel-view projections from the optimized cloud, 5 held-out angles",
         fmt("projection PSNR min %.2f dB, mean %.2f dB (>= 30 dB)", worst, mean));
}

// ---------------------------------------------------------------- criterion 7

struct ToyCase {
  std::vector<ToySample> train;
  std::vector<ToySample> val;
  ToyModel init;
  ToyTrainConfig cfg;
};

ToyCase make_toy_case() {
  ToyCase c;
  const GridDims d{16, 16, 16};
  const Vec3 e(32, 32, 32);
  c.train = make_toy_dataset(200, d, e, 4, 32, 1);
  c.val = make_toy_dataset(20, d, e, 4, 32, 2);
  ToyModelConfig mc;
  mc.detector_nu = mc.detector_nv = 32;
  mc.reference_pitch = e.x() / d.nx;
  c.init = ToyModel::initialize(mc, 7);
  c.cfg.steps = 5000;
  c.cfg.view_counts = {2, 3, 4};
  c.cfg.seed = 7;
  return c;
}

struct ToyRun {
  ToyTrainResult result;
  double seconds = 0.0;
};

ToyRun run_toy(const ToyCase& c) {
  const auto t0 = Clock::now();
  ToyRun r{train_toy(c.init, c.train, c.cfg)};
  r.seconds = seconds_since(t0);
  return r;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), 1e-12}));
  return worst;
}

void toy_feedforward(const ToyCase& c, const ToyRun& run) {
  const double before = mean_psnr(c.init, c.val);
  const double after = mean_psnr(run.result.model, c.val);
  double perm = 0.0;
  for (const ToySample& s : c.val) {
    const VoxGSCloud a = infer(run.result.model, s.projections);
    ProjectionSet rev = s.projections;
    std::reverse(rev.views.begin(), rev.views.end());
    std::vector<double> angles;
    for (const auto& v : rev.views) angles.push_back(v.angle);
    rev.geometry.angles = angles;
    for (std::size_t k = 0; k < rev.views.size(); ++k) rev.views[k].pose_index = static_cast<int>(k);
    const VoxGSCloud b = infer(run.result.model, rev);
    perm = std::max({perm, max_rel_diff(a.alpha, b.alpha), max_rel_diff(a.scale_param, b.scale_param),
                     max_rel_diff(a.rot_param, b.rot_param)});
  }
  const bool pass = after - before >= 5.0 && perm < 1e-6 && run.seconds < 1800.0;
  report(7, pass, "toy feed-forward model, 200 train / 20 validation phantoms",
         fmt("val PSNR %.2f -> %.2f dB (gain %.2f >= 5); view-permutation rel diff %.1e (< 1e-6); "
             "train %.0f s (< 1800 s)",
             before, after, after - before, perm, run.seconds));
}

// ---------------------------------------------------------------- criterion 8

void sart_checks() {
  std::mt19937_64 rng(8);
  const GridDims d{8, 8, 8};
  const Vec3 e(8, 8, 8);
  const ScannerGeometry g =
      ScannerGeometry::for_volume(d, e, 16, 16, uniform_angles(20, 2 * std::numbers::pi));
  const auto poses = trajectory_poses(g);
  const double step = default_march_step(g);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    VoxelVolume x(d, e);
    x.data = test::random_values(d.count(), rng, -1, 1);
    const std::vector<double> y = test::random_values(256, rng, -1, 1);
    const Projection ax = raymarch_project(x, g, poses[k], step);
    VoxelVolume aty(d, e);
    raymarch_backproject(y, g, poses[k], step, aty);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += ax.data[i] * y[i];
    for (std::size_t i = 0; i < x.data.size(); ++i) rhs += x.data[i] * aty.data[i];
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)));
  }
  VoxelVolume truth(d, e);
  truth.data = test::random_values(d.count(), rng, 0, 1);
  ProjectionSet projs;
  projs.geometry = g;
  for (int k = 0; k < 20; ++k) {
    Projection p = raymarch_project(truth, g, poses[k], step);
    p.pose_index = k;
    p.angle = g.angles[k];
    projs.views.push_back(std::move(p));
  }
  const double initial = projection_residual(projs, VoxelVolume(d, e), step);
  const SartResult r = reconstruct_sart(projs, {});
  const double ratio = projection_residual(projs, r.volume, step) / initial;
  report(8, worst <= 1e-6 && ratio < 0.01, "SART adjoint and convergence on 8^3",
         fmt("adjoint rel err %.1e (<= 1e-6); residual %.2f%% of initial after 50 sweeps (< 1%%)",
             worst, 100 * ratio));
}

// ---------------------------------------------------------------- criterion 9

bool roundtrip(const std::string& bytes, const std::function<std::string(const std::string&)>& re) {
  return re(bytes) == bytes;
}

void determinism_and_formats(const ReconCase& rc, const ReconRun& r1, const ReconRun& r2,
                             const ToyRun& t1, const ToyRun& t2) {
  const std::string vol = io::encode_volume(extract_volume(r1.opt.cloud));
  const std::string cloud = io::encode_cloud(r1.opt.cloud);
  const std::string prj = io::encode_projections(rc.projs.views);
  const std::string mdl = io::encode_model(t1.result.model);
  const bool codecs =
      roundtrip(vol, [](const std::string& b) { return io::encode_volume(io::decode_volume(b)); }) &&
      roundtrip(cloud, [](const std::string& b) { return io::encode_cloud(io::decode_cloud(b)); }) &&
      roundtrip(prj, [](const std::string& b) { return io::encode_projections(io::decode_projections(b)); }) &&
      roundtrip(mdl, [](const std::string& b) { return io::encode_model(io::decode_model(b)); });
  const bool recon_same = r1.opt.cloud.alpha == r2.opt.cloud.alpha &&
                          r1.opt.cloud.scale_param == r2.opt.cloud.scale_param &&
                          r1.opt.cloud.rot_param == r2.opt.cloud.rot_param &&
                          r1.opt.loss_trace == r2.opt.loss_trace;
  bool toy_same = t1.result.loss_trace == t2.result.loss_trace;
  for (const auto& [name, t] : t1.result.model.weights)
    toy_same = toy_same && t.data == t2.result.model.weights.at(name).data;
  report(9, codecs && recon_same && toy_same, "codec round trips and seeded bit-reproducibility",
         fmt("codecs %s; criterion-5 reruns %s; criterion-7 reruns %s",
             codecs ? "byte-identical" : "DIFFER", recon_same ? "bit-identical" : "DIFFER",
             toy_same ? "bit-identical" : "DIFFER"));
}

}  // namespace

// Optional arguments select criteria by number; criterion 9 implies 5 and 7.
int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  auto want = [&](int id) { return wanted.empty() || wanted.contains(id); };
  const bool repeat = want(9);
  const auto t0 = Clock::now();
  if (want(1)) splat_vs_closed_form();
  if (want(2)) splat_vs_raymarch();
  if (want(3)) gradient_suite();
  if (want(4)) extraction_exactness();

  std::optional<ReconCase> rc;
  std::optional<ReconRun> r1;
  if (want(5) || want(6) || repeat) {
    rc = make_recon_case();
    r1 = run_recon(*rc);
    recon_and_novel_views(*rc, *r1);
  }
  std::optional<ToyCase> tc;
  std::optional<ToyRun> t1;
  if (want(7) || repeat) {
    tc = make_toy_case();
    t1 = run_toy(*tc);
    toy_feedforward(*tc, *t1);
  }
  if (want(8)) sart_checks();
  if (repeat) {
    note("repeating the criterion 5 and 7 runs for reproducibility");
    const ReconRun r2 = run_recon(*rc);
    const ToyRun t2 = run_toy(*tc);
    determinism_and_formats(*rc, *r1, r2, *t1, t2);
  }

  std::printf("%d criteria failed, total %.0f s\n", g_failed, seconds_since(t0));
  return g_failed == 0 ? 0 : 1;
}
