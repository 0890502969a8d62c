#pragma once

#include <vector>

#include "m2dan/data.hpp"
#include "m2dan/losses.hpp"
#include "m2dan/model.hpp"

namespace m2dan {

enum class ClsLoss { CrossEntropy, Focal };

// Which terms enter the objective; the loss-ablation rows are combinations of
// these switches.
struct LossToggles {
  ClsLoss cls = ClsLoss::Focal;
  bool domain = true;
  bool entropy = true;

  bool operator==(const LossToggles&) const = default;
};

struct ObjectiveTerms {
  Var total;
  Var focal;    // L_fo on the labeled source rows (cross-entropy when cls == CrossEntropy)
  Var entropy;  // L_en on every row of the batch
  Var domain;   // mean over branches of L_d; invalid when the domain term is off
  Var classification;

  double domain_value() const { return domain.valid() ? domain.item() : 0.0; }
};

// Mean over branches of the multi-domain cross-entropy. Each branch went
// through the GRL before the shared discriminator.
inline Var branch_domain_loss(const std::vector<Var>& domain_probs, const Tensor& domain_labels, LogClamp clamp = {}) {
  if (domain_probs.empty()) throw Error(ErrorCode::ShapeMismatch, "no domain predictions");
  Var acc = domain_loss(domain_probs[0], domain_labels, clamp);
  for (std::size_t b = 1; b < domain_probs.size(); ++b) acc = add(acc, domain_loss(domain_probs[b], domain_labels, clamp));
  return affine(acc, 1.0 / static_cast<double>(domain_probs.size()));
}

// lambda * (L_fo + eta * L_en) + L_d.
//
// Descending this single scalar trains G_d to minimise L_d while the GRL in
// front of G_d hands G_m and G_f the gradient of -alpha * L_d, so one SGD step
// realises the min over (f, m, y) / max over d saddle problem.
inline ObjectiveTerms total_objective(const ForwardOutput& out, const DomainBatch& batch, const HyperParams& hp,
                                      const LossToggles& toggles = {}) {
  if (batch.source_rows.empty()) throw Error(ErrorCode::EmptyInput, "batch has no labeled source rows");
  ObjectiveTerms t;
  const double gamma = toggles.cls == ClsLoss::Focal ? hp.gamma : 0.0;
  Var src = select_rows(out.class_probs, batch.source_rows);
  t.focal = focal_loss(src, batch.class_labels, gamma, hp.clamp);
  t.entropy = entropy_loss(out.class_probs, hp.clamp);
  t.classification = toggles.entropy ? classification_loss(t.focal, t.entropy, hp.eta) : t.focal;
  t.total = affine(t.classification, hp.lambda);
  if (toggles.domain && !out.domain_probs.empty()) {
    t.domain = branch_domain_loss(out.domain_probs, batch.domain_labels, hp.clamp);
    t.total = add(t.total, t.domain);
  }
  return t;
}

}  // namespace m2dan
