#ifndef DISCO_TRAIN_HPP
#define DISCO_TRAIN_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "disco/model.hpp"
#include "json.hpp"

namespace disco {

// All optimization knobs. Defaults are the published settings: d=100, q1=0.5,
// q2=0.2, lr1=2.5e-3, lr2=5e-3, k=5, w=0.2, lambda=5e-4.
struct TrainConfig {
  std::size_t d = 100;
  std::size_t hidden = 100;
  std::size_t k = 5;
  double q1 = 0.5;
  double q2 = 0.2;
  double lr1 = 2.5e-3;
  double lr2 = 5e-3;
  double lambda = 5e-4;
  double w = 0.2;

  std::uint64_t seed = 1;
  std::size_t min_count = 1;
  std::size_t batch_size = 1;
  std::size_t phase1_epochs = 30;
  std::size_t phase1_patience = 5;
  std::size_t phase2_epochs = 100;
  std::size_t phase2_patience = 10;
  double teacher_end = 0.5;   // scheduled-sampling floor
  double grad_clip = 0.0;     // global-norm clip, 0 disables
  bool skip_phase1 = false;
  bool fusion_concat = false;
  bool decoder_zero_init = false;
  bool forget_bias_one = true;
  std::string embeddings;     // optional word2vec text file

  // Flat key=value file; '#' comments; unknown keys are config errors.
  static TrainConfig from_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  nlohmann::json to_json() const;

  ModelConfig model_config() const;
  void validate() const;
};

// ---- losses ---------------------------------------------------------------

// Masked mean cross-entropy over the target positions plus (lambda/2) L2 of
// the decoder-side parameter group. Logits go through a stable log-softmax.
Tensor loss_decoder(Tape& tape, const std::vector<Tensor>& logits,
                    const std::vector<std::size_t>& target_ids, const std::vector<bool>& mask,
                    double lambda, const std::vector<Tensor>& theta_de);

// -log dist[gold] plus (lambda/2) L2 of the classifier parameter group.
Tensor loss_classifier(Tape& tape, const Tensor& dist, int gold, double lambda,
                       const std::vector<Tensor>& theta_cl);

// w * l_de + (1 - w) * l_cl.
Tensor loss_joint(Tape& tape, const Tensor& l_de, const Tensor& l_cl, double w);

// ---- optimizer --------------------------------------------------------

// Adam (beta1 0.9, beta2 0.999, eps 1e-8) over parameter groups with
// per-group learning rates. Parameters without a gradient store are treated
// as zero-gradient (non-differentiable paths such as sampling argmaxes);
// a step in which no parameter received any gradient is a training error.
class Optimizer {
 public:
  void add_group(std::vector<Tensor> params, double lr);
  void set_grad_clip(double clip) { grad_clip_ = clip; }

  void step();
  void zero_grad();
  std::size_t steps_taken() const { return t_; }

 private:
  struct Group {
    std::vector<Tensor> params;
    double lr;
    std::vector<std::vector<double>> m, v;
  };
  std::vector<Group> groups_;
  double grad_clip_ = 0.0;
  std::size_t t_ = 0;
};

// ---- training loop ----------------------------------------------------

struct TrainResult {
  Model model;  // restored to the best dev checkpoint
  std::vector<nlohmann::json> history;
  double best_dev_accuracy = 0.0;
  double best_phase1_dev_loss = 0.0;
  std::size_t skipped_train = 0;  // instances rejected at encoding
  std::size_t skipped_dev = 0;
};

// Two-phase schedule: phase 1 minimizes the decoder loss alone with scheduled
// sampling decaying linearly from 1.0 to teacher_end, early-stopped on dev
// decoder loss; phase 2 minimizes the joint loss with memory writes active,
// early-stopped when neither dev accuracy nor dev joint loss improves, and
// the best-dev-accuracy parameters are kept.
TrainResult train_model(const std::vector<Instance>& train_insts,
                        const std::vector<Instance>& dev_insts, const LabelSet& labels,
                        const TrainConfig& cfg, std::ostream* log = nullptr);

}  // namespace disco

#endif
