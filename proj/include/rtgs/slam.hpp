// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rtgs/backprop.hpp"
#include "rtgs/io.hpp"

#include <functional>

namespace rtgs {

struct TrackerConfig {
  int tracking_iterations = 50;
  int mapping_iterations = 50;

  // per-group learning rates, plain gradient descent
  double lr_pose_rotation = 0.02;
  double lr_pose_translation = 0.05;
  double lr_mean = 0.2;
  double lr_scale = 0.5;
  double lr_rotation = 0.5;
  double lr_opacity = 20.0;
  double lr_color = 8.0;

  double lambda_pho = 0.9;
  int keyframe_interval = 8;
  int r0_width = 128;
  int r0_height = 96;
  double m = 2.0;  // downsampling growth factor, > 1
  int K0 = 5;      // initial pruning interval
  double lambda = 0.8;  // covariance weight in the importance score

  // pruning: cap 0 disables (vanilla loop)
  double prune_fraction_cap = 0.5;   // cumulative fraction of the peak population
  double prune_window_fraction = 0.1;  // masked per window, of the unmasked set
  int prune_floor = 64;
  int prune_k_max = 64;

  bool downsampling = true;

  // keyframe mapping insertion (minimal densification stand-in)
  bool insertion = false;
  int insert_max_per_keyframe = 256;
  double insert_error_threshold = 0.15;
  int insert_stride = 4;
  double insert_scale_px = 2.0;
  double insert_opacity = 0.65;

  int divergence_patience = 5;  // consecutive loss increases before halving the step

  RenderOptions render;
};

struct PruneEvent {
  int frame = -1;
  int iteration = -1;
  int masked = 0;
  int removed = 0;
  bool floor_hit = false;
  double change_ratio = 0.0;
  int next_k = 0;
};

struct PruneState {
  int K = 5;
  int K0 = 5;
  int iter_in_window = 0;
  double lambda = 0.8;
  double prune_fraction_cap = 0.5;
  double window_fraction = 0.1;
  int floor = 64;
  int k_max = 64;

  std::map<std::int32_t, double> scores;  // accumulated over the window
  std::vector<std::pair<std::int32_t, std::int32_t>> window_start_pairs;
  bool have_window_start = false;

  std::int64_t peak_population = 0;
  std::int64_t removed_total = 0;
  std::int64_t masked_live = 0;

  std::vector<PruneEvent> events;

  static PruneState from_config(const TrackerConfig& cfg) {
    PruneState st;
    st.K = st.K0 = cfg.K0;
    st.lambda = cfg.lambda;
    st.prune_fraction_cap = cfg.prune_fraction_cap;
    st.window_fraction = cfg.prune_window_fraction;
    st.floor = cfg.prune_floor;
    st.k_max = cfg.prune_k_max;
    return st;
  }
};

// Eq.-style score: |dL/dmean| + lambda * |dL/dSigma|, with the factored
// scale+rotation gradient block standing in for the covariance gradient.
double importance_score(const Grad3D& g, double lambda);

struct PruneStepResult {
  int masked = 0;
  int removed = 0;
  bool floor_hit = false;
  bool window_closed = false;
  double change_ratio = 0.0;
};

// One call per tracking iteration. Accumulates scores; at the end of each
// K-iteration window removes Gaussians that stayed masked for a full
// window, masks the lowest-scoring ones, and adapts K from the
// tile-intersection change ratio.
PruneStepResult prune_step(PruneState& st, Scene& scene, const GradientSet& grads,
                           const TileBinning& binning, int frame_index = -1, int iteration = -1);

// Dynamic downsampling schedule. Keyframes stay at R0; the first
// non-keyframe drops to 1/16 of the area and the factor grows by m per
// frame up to the 1/4 cap, realized as power-of-two per-axis divisors.
std::pair<int, int> select_resolution(int n, int k_last, bool is_keyframe, int r0_width,
                                      int r0_height, double m);

// Box-averages the observed buffers and scales the intrinsics; divisor must
// divide both axes. Depth averages valid samples only.
FrameState downsample_frame(const FrameState& frame, int divisor);

struct IterationSample {
  int frame_index = 0;
  int iteration = 0;
  bool is_keyframe = false;
  const ForwardPass* fp = nullptr;
  const GradientSet* gs = nullptr;
  const FrameState* frame = nullptr;
};
using IterationSink = std::function<void(const IterationSample&)>;

struct TrackStats {
  std::vector<double> loss_trace;
  double final_loss = 0.0;
  int masked = 0;
  int removed = 0;
  bool floor_hit = false;
  int step_halvings = 0;
  std::int64_t pixels = 0;
  std::int64_t fragments = 0;
};

// Pose-only optimization at the frame's resolution; Gaussian parameters are
// frozen. prune may be null (or cap 0) to disable pruning.
TrackStats track_frame(FrameState& frame, Scene& scene, const TrackerConfig& cfg,
                       PruneState* prune, const IterationSink* sink = nullptr);

struct MapStats {
  std::vector<double> loss_trace;
  double final_loss = 0.0;
  int inserted = 0;
  std::int64_t pixels = 0;
  std::int64_t fragments = 0;
};

// Gaussian-parameter optimization with the pose frozen; optionally seeds
// new Gaussians from high-error pixels with valid depth.
MapStats map_keyframe(FrameState& frame, Scene& scene, const TrackerConfig& cfg,
                      const IterationSink* sink = nullptr);

Scene bootstrap_scene(const FrameState& frame, int stride = 4, double opacity = 0.7,
                      double scale_factor = 0.6, std::int32_t first_id = 0);

struct FrameReport {
  int index = 0;
  bool keyframe = false;
  int width = 0;
  int height = 0;
  double final_loss = 0.0;
  double trans_err = 0.0;
  double rot_err_deg = 0.0;
  double psnr = -1.0;  // keyframes only
  int scene_size = 0;
  std::int64_t pixels = 0;
  std::int64_t fragments = 0;
  bool tracking_lost = false;
  Quat est_rotation = Quat::Identity();
  Vec3 est_translation = Vec3::Zero();
};

struct SequenceReport {
  std::vector<FrameReport> frames;
  double ate_rmse = 0.0;
  std::vector<double> keyframe_psnr;
  double mean_keyframe_psnr = 0.0;
  std::int64_t total_pixels = 0;
  std::int64_t total_fragments = 0;
  int final_scene_size = 0;
  std::int64_t pruned_removed = 0;
  std::vector<PruneEvent> prune_events;
  bool any_tracking_lost = false;
};

// Alternating track/map loop over a loaded sequence. The first frame must
// be usable as the bootstrap keyframe; initial_scene, when given, replaces
// the depth back-projection bootstrap.
SequenceReport run_sequence(const LoadedSequence& seq, const TrackerConfig& cfg,
                            const Scene* initial_scene = nullptr,
                            const IterationSink* sink = nullptr);

// Rigid alignment (Umeyama, no scale) of estimated onto ground-truth
// camera centers, then RMSE of the residuals.
double ate_rmse(const std::vector<Vec3>& estimated, const std::vector<Vec3>& ground_truth);

double psnr(const ColorImage& a, const ColorImage& b);

}  // namespace rtgs
