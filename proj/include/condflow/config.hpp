#pragma once
// Flat key=value model/training configuration.  Every field is addressable
// from a config file; unknown or duplicate keys are errors.  serialize() is
// canonical (sorted keys, round-trip-exact doubles) so identical configs
// produce identical bytes — checkpoints depend on that.

#include <cstdint>
#include <string>

namespace condflow {

struct ModelConfig {
  // architecture
  std::int64_t levels = 2;
  std::int64_t steps = 4;  // flow steps per level
  std::int64_t height_a = 8, width_a = 8, channels_a = 1;
  std::int64_t height_b = 8, width_b = 8, channels_b = 1;
  std::int64_t hidden = 64;
  std::string coupling_a = "affine";
  std::string coupling_b = "additive";
  bool pointcloud_a = false;
  bool pointcloud_b = false;
  // squeeze=false is the degenerate single-level mode for inputs too small
  // to squeeze (e.g. a 1x1xC toy); levels must then be 1
  bool squeeze = true;
  std::int64_t hilbert_order = 10;

  // objective / sampling
  double lambda_cycle = 10.0;
  double temperature = 0.9;
  std::string cycle_distance = "auto";  // auto | l1 | chamfer

  // training
  std::uint64_t seed = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::int64_t batch_size = 4;
  std::int64_t train_steps = 1000;
  std::int64_t checkpoint_every = 500;
  bool dequantize = true;  // uniform [0,1/256) noise on image branches in training

  static ModelConfig parse_text(const std::string& text, const std::string& origin);
  static ModelConfig parse_file(const std::string& path);
  std::string serialize() const;
  void validate() const;

  std::string resolved_cycle_distance() const;  // "l1" or "chamfer"
};

}  // namespace condflow
