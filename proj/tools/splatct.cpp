// splatct: command-line front end for phantoms, projection, reconstruction,
// rendering, metrics and the toy feedforward model.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "splatct/error.hpp"
#include "splatct/io.hpp"
#include "splatct/neural.hpp"
#include "splatct/recon.hpp"

namespace fs = std::filesystem;
using namespace splatct;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitParse = 3;
constexpr int kExitNumerical = 4;

constexpr double kDeg = std::numbers::pi / 180.0;

class Clock {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

struct Common {
  bool force = false;
  int threads = 0;
  std::uint64_t seed = 0;
  bool deterministic = true;
};

io::RunManifest start_manifest(const std::string& command, const Common& c) {
  io::RunManifest m;
  m.command = command;
  m.seed = c.seed;
  m.deterministic = c.deterministic;
  m.version = SPLATCT_VERSION;
  return m;
}

// Every option of the subcommand as parsed, defaults included.
void record_options(io::RunManifest& m, const CLI::App& sub) {
  for (const CLI::Option* opt : sub.get_options()) {
    // Flags are carried by the manifest's own fields.
    if (opt->get_expected_max() == 0) continue;
    std::string value;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : " ") + r;
    } else {
      value = opt->get_default_str();
    }
    if (!value.empty()) m.options.emplace_back(opt->get_name(), value);
  }
}

void write_output(const fs::path& path, const std::string& bytes, const Common& c,
                  io::RunManifest& m, const std::string& role) {
  io::write_file(path, bytes, c.force);
  m.outputs.emplace_back(role, path.string());
}

void write_manifest(const fs::path& primary, const io::RunManifest& m, const Common& c) {
  io::write_file(fs::path(primary.string() + ".manifest.json"), io::manifest_to_json(m), c.force);
}

ScannerGeometry load_geometry(const fs::path& path) {
  return io::geometry_from_json(io::read_file(path));
}

ProjectionSet load_projections(const fs::path& prj, const fs::path& geom) {
  return io::assemble_projections(load_geometry(geom), io::decode_projections(io::read_file(prj)));
}

void check_grid(const ScannerGeometry& g, const VoxelVolume& vol) {
  if (!(g.volume_dims == vol.dims) || (g.volume_extent - vol.extent).cwiseAbs().maxCoeff() > 1e-6)
    std::cerr << "warning: geometry volume grid differs from the volume file; using the volume's\n";
}

// Command line that repeats the run described by a manifest.
std::vector<std::string> replay_args(const io::RunManifest& m, bool force, int threads) {
  std::vector<std::string> args{"splatct"};
  if (force) args.push_back("--force");
  if (threads > 0) args.insert(args.end(), {"--threads", std::to_string(threads)});
  args.push_back(m.command);
  for (const auto& [flag, value] : m.options) args.insert(args.end(), {flag, value});
  const bool takes_seed = std::any_of(m.options.begin(), m.options.end(),
                                      [](const auto& o) { return o.first == "--seed"; });
  if (takes_seed) args.push_back(m.deterministic ? "--deterministic" : "--no-deterministic");
  return args;
}

int run(int argc, const char* const* argv);

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }

namespace {

int run(int argc, const char* const* argv) {
  CLI::App app{"Sparse-view cone-beam CT with voxel Gaussian splatting"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SPLATCT_VERSION);
  Common common;
  app.add_flag("--force", common.force, "Overwrite existing outputs");
  app.add_option("--threads", common.threads, "Worker thread cap (0 = runtime default)")
      ->check(CLI::NonNegativeNumber);

  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Random seed")->capture_default_str();
    sub->add_flag("--deterministic,!--no-deterministic", common.deterministic,
                  "Fixed summation order (default on)");
  };

  // phantom
  CLI::App* phantom = app.add_subcommand("phantom", "Write a Shepp-Logan or random-ellipsoid phantom");
  int ph_size = 64;
  double ph_extent = 0.0;
  std::string ph_kind = "shepp-logan";
  fs::path ph_out;
  phantom->add_option("--size", ph_size, "Voxels per side")->capture_default_str();
  phantom->add_option("--extent-mm", ph_extent, "Side length in mm (default: size)");
  phantom->add_option("--kind", ph_kind, "shepp-logan or random")
      ->check(CLI::IsMember({"shepp-logan", "random"}))
      ->capture_default_str();
  phantom->add_option("--out", ph_out, "Output .vox")->required();
  add_seed(phantom);

  // project
  CLI::App* project = app.add_subcommand("project", "Ray-march projections of a volume");
  fs::path pr_vol, pr_geom, pr_out;
  int pr_views = 50, pr_detector = 64;
  double pr_arc = 360.0, pr_i0 = 0.0, pr_sigma = 0.0;
  project->add_option("--vol", pr_vol, "Input .vox")->required()->check(CLI::ExistingFile);
  project->add_option("--geom", pr_geom, "Geometry JSON (angles are replaced by --views/--arc-deg)")
      ->check(CLI::ExistingFile);
  project->add_option("--detector", pr_detector, "Detector side when --geom is absent")
      ->capture_default_str();
  project->add_option("--views", pr_views, "Number of views")->capture_default_str();
  project->add_option("--arc-deg", pr_arc, "Angular range")->capture_default_str();
  project->add_option("--noise-i0", pr_i0, "Incident photons per ray (0 = noiseless)");
  project->add_option("--noise-sigma", pr_sigma, "Electronic noise std in photons");
  project->add_option("--out", pr_out, "Output .prj; geometry goes to <out>.geom.json")->required();
  add_seed(project);

  // recon
  CLI::App* recon = app.add_subcommand("recon", "Reconstruct a volume from projections");
  fs::path rc_projs, rc_geom, rc_out, rc_cloud, rc_trace, rc_target;
  std::string rc_method = "voxgs";
  OptimConfig ocfg;
  SartConfig scfg;
  recon->add_option("--projs", rc_projs, "Input .prj")->required()->check(CLI::ExistingFile);
  recon->add_option("--geom", rc_geom, "Geometry JSON")->required()->check(CLI::ExistingFile);
  recon->add_option("--method", rc_method, "voxgs or sart")
      ->check(CLI::IsMember({"voxgs", "sart"}))
      ->capture_default_str();
  recon->add_option("--iterations", ocfg.iterations, "VoxGS iterations")->capture_default_str();
  recon->add_option("--lr-alpha", ocfg.learning_rates.alpha)->capture_default_str();
  recon->add_option("--lr-scale", ocfg.learning_rates.scale)->capture_default_str();
  recon->add_option("--lr-rot", ocfg.learning_rates.rot)->capture_default_str();
  recon->add_option("--views-per-step", ocfg.views_per_step)->capture_default_str();
  recon->add_option("--lambda-l1", ocfg.loss_weights.lambda_l1)->capture_default_str();
  recon->add_option("--lambda-ssim", ocfg.loss_weights.lambda_ssim)->capture_default_str();
  recon->add_option("--final-lr-fraction", ocfg.final_lr_fraction)->capture_default_str();
  recon->add_option("--sweeps", scfg.iterations, "SART sweeps")->capture_default_str();
  recon->add_option("--relaxation", scfg.relaxation, "SART relaxation")->capture_default_str();
  recon->add_option("--out", rc_out, "Output .vox")->required();
  recon->add_option("--cloud-out", rc_cloud, "Output .vgs (voxgs; default <out>.vgs)");
  recon->add_option("--trace", rc_trace, "Loss/residual CSV (default <out>.trace.csv)");
  add_seed(recon);

  // render
  CLI::App* render = app.add_subcommand("render", "Splat one view of a Gaussian cloud");
  fs::path rd_cloud, rd_geom, rd_out;
  double rd_angle = 0.0;
  render->add_option("--cloud", rd_cloud, "Input .vgs")->required()->check(CLI::ExistingFile);
  render->add_option("--geom", rd_geom, "Geometry JSON")->required()->check(CLI::ExistingFile);
  render->add_option("--angle-deg", rd_angle, "View angle")->required();
  render->add_option("--out", rd_out, "Output single-view .prj")->required();

  // metrics
  CLI::App* metrics = app.add_subcommand("metrics", "Compare two volumes");
  fs::path mt_a, mt_b;
  double mt_range = 1.0;
  metrics->add_option("--a", mt_a, "Reconstruction .vox")->required()->check(CLI::ExistingFile);
  metrics->add_option("--b", mt_b, "Reference .vox")->required()->check(CLI::ExistingFile);
  metrics->add_option("--range", mt_range, "Data range")->capture_default_str();

  // slice
  CLI::App* slice = app.add_subcommand("slice", "Export one axial slice as 16-bit PGM");
  fs::path sl_vol, sl_out;
  int sl_z = -1;
  double sl_lo = 0.0, sl_hi = 1.0;
  slice->add_option("--vol", sl_vol, "Input .vox")->required()->check(CLI::ExistingFile);
  slice->add_option("--z", sl_z, "Slice index (default: middle)");
  slice->add_option("--lo", sl_lo)->capture_default_str();
  slice->add_option("--hi", sl_hi)->capture_default_str();
  slice->add_option("--out", sl_out, "Output .pgm")->required();

  // make-corpus
  CLI::App* corpus = app.add_subcommand("make-corpus", "Generate random-ellipsoid training data");
  int cp_count = 200, cp_size = 16, cp_views = 4, cp_detector = 32;
  double cp_extent = 32.0;
  fs::path cp_dir;
  corpus->add_option("--count", cp_count)->capture_default_str();
  corpus->add_option("--size", cp_size)->capture_default_str();
  corpus->add_option("--extent-mm", cp_extent)->capture_default_str();
  corpus->add_option("--views", cp_views)->capture_default_str();
  corpus->add_option("--detector", cp_detector)->capture_default_str();
  corpus->add_option("--out-dir", cp_dir)->required();
  add_seed(corpus);

  // train-toy
  CLI::App* train = app.add_subcommand("train-toy", "Train the toy feedforward model");
  fs::path tr_config, tr_data, tr_model, tr_trace;
  train->add_option("--config", tr_config, "Training config JSON")->check(CLI::ExistingFile);
  train->add_option("--data-dir", tr_data, "Corpus from make-corpus")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out-model", tr_model, "Output .mdl")->required();
  train->add_option("--trace", tr_trace, "Loss CSV (default <out-model>.trace.csv)");

  // infer
  CLI::App* infer_cmd = app.add_subcommand("infer", "Feedforward reconstruction with a toy model");
  fs::path in_model, in_projs, in_geom, in_out, in_cloud;
  infer_cmd->add_option("--model", in_model, "Input .mdl")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--projs", in_projs, "Input .prj")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--geom", in_geom, "Geometry JSON")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--out", in_out, "Output .vox")->required();
  infer_cmd->add_option("--cloud-out", in_cloud, "Output .vgs");

  // replay
  CLI::App* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  fs::path rp_manifest;
  replay->add_option("--manifest", rp_manifest)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  if (common.threads > 0) omp_set_num_threads(common.threads);

  try {
    Clock clock;
    if (*replay) {
      const auto args = replay_args(io::manifest_from_json(io::read_file(rp_manifest)),
                                    common.force, common.threads);
      std::vector<const char*> ptrs;
      for (const auto& a : args) ptrs.push_back(a.c_str());
      return run(static_cast<int>(ptrs.size()), ptrs.data());
    } else if (*phantom) {
      io::RunManifest m = start_manifest("phantom", common);
      record_options(m, *phantom);
      const double e = ph_extent > 0.0 ? ph_extent : static_cast<double>(ph_size);
      const GridDims dims{ph_size, ph_size, ph_size};
      const VoxelVolume vol = ph_kind == "random"
                                  ? random_ellipsoid_phantom(dims, Vec3(e, e, e), common.seed)
                                  : shepp_logan_3d(dims, Vec3(e, e, e));
      m.timings_s.emplace_back("generate", clock.lap());
      write_output(ph_out, io::encode_volume(vol), common, m, "volume");
      write_manifest(ph_out, m, common);
    } else if (*project) {
      io::RunManifest m = start_manifest("project", common);
      record_options(m, *project);
      const VoxelVolume vol = io::decode_volume(io::read_file(pr_vol));
      m.inputs.emplace_back("volume", pr_vol.string());
      require(pr_views >= 1, "--views must be >= 1");
      const std::vector<double> angles = uniform_angles(pr_views, pr_arc * kDeg);
      ScannerGeometry geom;
      if (!pr_geom.empty()) {
        geom = load_geometry(pr_geom);
        geom.angles = angles;
        check_grid(geom, vol);
        m.inputs.emplace_back("geometry", pr_geom.string());
      } else {
        geom = ScannerGeometry::for_volume(vol.dims, vol.extent, pr_detector, pr_detector, angles);
      }
      const double step = default_march_step(geom);
      const auto poses = trajectory_poses(geom);
      std::vector<Projection> views;
      for (int k = 0; k < pr_views; ++k) {
        Projection p = raymarch_project(vol, geom, poses[k], step);
        p.pose_index = k;
        p.angle = angles[k];
        if (pr_i0 > 0.0 || pr_sigma > 0.0) {
          require(pr_i0 > 0.0, "--noise-sigma needs --noise-i0");
          p.data = add_projection_noise(p.data, pr_i0, pr_sigma, common.seed + k);
        }
        views.push_back(std::move(p));
      }
      m.timings_s.emplace_back("project", clock.lap());
      write_output(pr_out, io::encode_projections(views), common, m, "projections");
      write_output(pr_out.string() + ".geom.json", io::geometry_to_json(geom), common, m, "geometry");
      write_manifest(pr_out, m, common);
    } else if (*recon) {
      io::RunManifest m = start_manifest("recon", common);
      record_options(m, *recon);
      const ProjectionSet projs = load_projections(rc_projs, rc_geom);
      m.inputs.emplace_back("projections", rc_projs.string());
      m.inputs.emplace_back("geometry", rc_geom.string());
      const fs::path trace = rc_trace.empty() ? fs::path(rc_out.string() + ".trace.csv") : rc_trace;
      m.timings_s.emplace_back("load", clock.lap());
      if (rc_method == "voxgs") {
        ocfg.seed = common.seed;
        ocfg.deterministic = common.deterministic;
        const OptimResult r = reconstruct_voxgs_opt(projs, ocfg);
        m.timings_s.emplace_back("optimize", clock.lap());
        const fs::path cloud = rc_cloud.empty() ? fs::path(rc_out.string() + ".vgs") : rc_cloud;
        write_output(rc_out, io::encode_volume(extract_volume(r.cloud)), common, m, "volume");
        write_output(cloud, io::encode_cloud(r.cloud), common, m, "cloud");
        write_output(trace, io::trace_csv(r.loss_trace, "loss"), common, m, "trace");
      } else {
        const SartResult r = reconstruct_sart(projs, scfg);
        m.timings_s.emplace_back("sart", clock.lap());
        write_output(rc_out, io::encode_volume(r.volume), common, m, "volume");
        write_output(trace, io::trace_csv(r.residual_trace, "residual"), common, m, "trace");
      }
      write_manifest(rc_out, m, common);
    } else if (*render) {
      io::RunManifest m = start_manifest("render", common);
      record_options(m, *render);
      const VoxGSCloud cloud = io::decode_cloud(io::read_file(rd_cloud));
      ScannerGeometry geom = load_geometry(rd_geom);
      geom.angles = {rd_angle * kDeg};
      require(cloud.dims() == geom.volume_dims, "cloud grid does not match the geometry");
      SplatOptions opts;
      opts.deterministic = common.deterministic;
      Projection p = splat_project(cloud, geom, pose_at_angle(geom, geom.angles[0]), opts);
      p.angle = geom.angles[0];
      m.timings_s.emplace_back("render", clock.lap());
      write_output(rd_out, io::encode_projections({p}), common, m, "projection");
      write_manifest(rd_out, m, common);
    } else if (*metrics) {
      const VoxelVolume a = io::decode_volume(io::read_file(mt_a));
      const VoxelVolume b = io::decode_volume(io::read_file(mt_b));
      std::cout << io::metrics_to_json(evaluate_recon(a, b, mt_range));
    } else if (*slice) {
      const VoxelVolume vol = io::decode_volume(io::read_file(sl_vol));
      const int z = sl_z < 0 ? vol.dims.nz / 2 : sl_z;
      io::write_file(sl_out, io::encode_pgm_slice(vol, z, sl_lo, sl_hi), common.force);
    } else if (*corpus) {
      io::RunManifest m = start_manifest("make-corpus", common);
      record_options(m, *corpus);
      const auto data = make_toy_dataset(cp_count, GridDims{cp_size, cp_size, cp_size},
                                         Vec3(cp_extent, cp_extent, cp_extent), cp_views,
                                         cp_detector, common.seed);
      m.timings_s.emplace_back("generate", clock.lap());
      fs::create_directories(cp_dir);
      write_output(cp_dir / "geometry.json", io::geometry_to_json(data[0].projections.geometry),
                   common, m, "geometry");
      for (std::size_t i = 0; i < data.size(); ++i) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "sample_%04zu", i);
        io::write_file(cp_dir / (std::string(stem) + ".vox"), io::encode_volume(data[i].volume), common.force);
        io::write_file(cp_dir / (std::string(stem) + ".prj"),
                       io::encode_projections(data[i].projections.views), common.force);
      }
      m.outputs.emplace_back("samples", std::to_string(data.size()));
      write_manifest(cp_dir / "corpus", m, common);
    } else if (*train) {
      io::RunManifest m = start_manifest("train-toy", common);
      record_options(m, *train);
      io::ToyExperimentConfig cfg;
      if (!tr_config.empty()) {
        cfg = io::toy_config_from_json(io::read_file(tr_config));
        m.inputs.emplace_back("config", tr_config.string());
      }
      const ScannerGeometry geom = load_geometry(tr_data / "geometry.json");
      std::vector<ToySample> data;
      for (int i = 0;; ++i) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "sample_%04d", i);
        const fs::path vox = tr_data / (std::string(stem) + ".vox");
        if (!fs::exists(vox)) break;
        ToySample s;
        s.volume = io::decode_volume(io::read_file(vox));
        s.projections = io::assemble_projections(
            geom, io::decode_projections(io::read_file(tr_data / (std::string(stem) + ".prj"))));
        data.push_back(std::move(s));
      }
      if (data.empty()) throw ParseError("no samples in " + tr_data.string());
      m.inputs.emplace_back("data_dir", tr_data.string());
      m.timings_s.emplace_back("load", clock.lap());
      cfg.model.detector_nu = geom.detector_nu;
      cfg.model.detector_nv = geom.detector_nv;
      cfg.model.reference_pitch = geom.voxel_pitch().minCoeff();
      m.seed = cfg.train.seed;
      const ToyTrainResult r = train_toy(ToyModel::initialize(cfg.model, cfg.init_seed), data, cfg.train);
      m.timings_s.emplace_back("train", clock.lap());
      write_output(tr_model, io::encode_model(r.model), common, m, "model");
      write_output(tr_trace.empty() ? fs::path(tr_model.string() + ".trace.csv") : tr_trace,
                   io::trace_csv(r.loss_trace, "loss"), common, m, "trace");
      write_output(tr_model.string() + ".config.json", io::toy_config_to_json(cfg), common, m, "config");
      write_manifest(tr_model, m, common);
    } else if (*infer_cmd) {
      io::RunManifest m = start_manifest("infer", common);
      record_options(m, *infer_cmd);
      const ToyModel model = io::decode_model(io::read_file(in_model));
      const ProjectionSet projs = load_projections(in_projs, in_geom);
      m.inputs.emplace_back("model", in_model.string());
      m.inputs.emplace_back("projections", in_projs.string());
      m.timings_s.emplace_back("load", clock.lap());
      const VoxGSCloud cloud = infer(model, projs);
      m.timings_s.emplace_back("infer", clock.lap());
      write_output(in_out, io::encode_volume(extract_volume(cloud)), common, m, "volume");
      if (!in_cloud.empty()) write_output(in_cloud, io::encode_cloud(cloud), common, m, "cloud");
      write_manifest(in_out, m, common);
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace
