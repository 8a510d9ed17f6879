#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "oodp/data_pipeline.hpp"
#include "oodp/perception.hpp"
#include "oodp/tensor.hpp"

namespace oodp::objective {

/// OODP+p trains with the proposal loss, OODP−p with the auxiliary
/// reconstruction, consistency and background losses.
enum class Variant { WithProposal, WithoutProposal };

std::string to_string(Variant v);
/// Accepts "+p" / "-p" and the long names "with-proposal" / "without-proposal".
Variant parse_variant(std::string_view text);

struct LossWeights {
  double prediction = 100;
  double entropy = 0.1;
  double reconstruction = 100;
  double consistency = 1;
  double background = 1;
  double proposal = 0;

  static LossWeights for_variant(Variant v);
};

class LossInvariantError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Component losses of one step. Fields a variant does not use stay empty.
struct LossBundle {
  Variant variant = Variant::WithoutProposal;
  LossWeights weights = LossWeights::for_variant(Variant::WithoutProposal);

  double highway = 0;
  double prediction = 0;
  double entropy = 0;
  std::optional<double> reconstruction;
  std::optional<double> consistency;
  std::optional<double> background;
  std::optional<double> proposal;

  static LossBundle make(Variant v) { return {v, LossWeights::for_variant(v)}; }
};

/// L_highway + Σ λ·L over the components of the bundle's variant. Throws
/// LossInvariantError for a negative or non-finite component.
double total_loss(const LossBundle& bundle);

/// Σ_p w_p (Σ_j M_Dj − P)² / (H·W), batch mean, where w_p = #neg/#pos on
/// proposal pixels and 1 elsewhere. `dyn_masks` is [N, n_D, H, W] and
/// `proposals` holds one mask per sample. The gradient is d/d dyn_masks.
template <typename T>
perception::LossGrad<T> proposal_loss(const Tensor<T>& dyn_masks, std::span<const data::ProposalMask> proposals);

/// Per-step CSV: step, each component, total. Unused components are blank.
class TrainLogWriter {
 public:
  explicit TrainLogWriter(const std::filesystem::path& path);
  void write(std::int64_t step, const LossBundle& bundle);

 private:
  std::ofstream out_;
};

}  // namespace oodp::objective
