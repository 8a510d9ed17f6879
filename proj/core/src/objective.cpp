#include "oodp/objective.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace oodp::objective {

std::string to_string(Variant v) { return v == Variant::WithProposal ? "+p" : "-p"; }

Variant parse_variant(std::string_view text) {
  if (text == "+p" || text == "with-proposal" || text == "OODP+p") return Variant::WithProposal;
  if (text == "-p" || text == "without-proposal" || text == "OODP-p") return Variant::WithoutProposal;
  throw std::invalid_argument("unknown variant '" + std::string(text) + "' (expected +p or -p)");
}

LossWeights LossWeights::for_variant(Variant v) {
  if (v == Variant::WithProposal) return {10, 1, 0, 0, 0, 1};
  return {100, 0.1, 100, 1, 1, 0};
}

namespace {

double checked(const char* name, double v) {
  if (!std::isfinite(v) || v < 0) {
    throw LossInvariantError(std::string("loss component ") + name + " must be finite and >= 0, got " +
                             std::to_string(v));
  }
  return v;
}

double required(const char* name, const std::optional<double>& v) {
  if (!v) throw LossInvariantError(std::string("loss component ") + name + " is required by this variant");
  return checked(name, *v);
}

}  // namespace

double total_loss(const LossBundle& b) {
  const LossWeights& w = b.weights;
  double total = checked("highway", b.highway) + w.prediction * checked("prediction", b.prediction) +
                 w.entropy * checked("entropy", b.entropy);
  if (b.variant == Variant::WithProposal) {
    total += w.proposal * required("proposal", b.proposal);
  } else {
    total += w.reconstruction * required("reconstruction", b.reconstruction) +
             w.consistency * required("consistency", b.consistency) +
             w.background * required("background", b.background);
  }
  return total;
}

template <typename T>
perception::LossGrad<T> proposal_loss(const Tensor<T>& dyn_masks, std::span<const data::ProposalMask> proposals) {
  if (proposals.size() != static_cast<std::size_t>(dyn_masks.n())) {
    throw ShapeError("proposal_loss: " + std::to_string(proposals.size()) + " proposals for " +
                     to_string(dyn_masks.shape()));
  }
  const int h = dyn_masks.h(), w = dyn_masks.w();
  const std::size_t plane = dyn_masks.shape().plane();
  const T norm = static_cast<T>(plane) * static_cast<T>(dyn_masks.n());
  perception::LossGrad<T> out{T(0), Tensor<T>(dyn_masks.shape())};
  for (int n = 0; n < dyn_masks.n(); ++n) {
    const auto& prop = proposals[static_cast<std::size_t>(n)];
    if (prop.h != h || prop.w != w || prop.bits.size() != plane) {
      throw ShapeError("proposal_loss: proposal size does not match masks " + to_string(dyn_masks.shape()));
    }
    const std::size_t pos = prop.count();
    const T pos_weight = pos == 0 ? T(0) : static_cast<T>(plane - pos) / static_cast<T>(pos);
    for (std::size_t p = 0; p < plane; ++p) {
      T sum = 0;
      for (int j = 0; j < dyn_masks.c(); ++j) sum += dyn_masks.plane(n, j)[p];
      const bool positive = prop.bits[p] != 0;
      const T wt = positive ? pos_weight : T(1);
      const T d = sum - (positive ? T(1) : T(0));
      out.value += wt * d * d;
      const T g = T(2) * wt * d / norm;
      for (int j = 0; j < dyn_masks.c(); ++j) out.grad.plane(n, j)[p] = g;
    }
  }
  out.value /= norm;
  return out;
}

template perception::LossGrad<float> proposal_loss<float>(const Tensor<float>&, std::span<const data::ProposalMask>);
template perception::LossGrad<double> proposal_loss<double>(const Tensor<double>&,
                                                            std::span<const data::ProposalMask>);

TrainLogWriter::TrainLogWriter(const std::filesystem::path& path) : out_(path) {
  if (!out_) throw std::runtime_error("cannot open training log " + path.string());
  out_ << "step,highway,prediction,entropy,reconstruction,consistency,background,proposal,total\n";
}

void TrainLogWriter::write(std::int64_t step, const LossBundle& b) {
  auto opt = [](const std::optional<double>& v) {
    std::ostringstream s;
    if (v) s << std::setprecision(9) << *v;
    return s.str();
  };
  out_ << step << ',' << std::setprecision(9) << b.highway << ',' << b.prediction << ',' << b.entropy << ','
       << opt(b.reconstruction) << ',' << opt(b.consistency) << ',' << opt(b.background) << ','
       << opt(b.proposal) << ',' << total_loss(b) << '\n';
  out_.flush();
}

}  // namespace oodp::objective
