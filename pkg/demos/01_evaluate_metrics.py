"""Score two synthetic classifiers and read their calibration report cards.

Two failure modes are generated on purpose:

  * "sharpened"  - the generator divides its own sampling logits by
    T = 0.5.  Confidences get pushed toward 0 and 1 on both sides of the
    diagonal, so the signed score MCS nearly cancels while ECE stays large.
  * "biased"     - the generator shifts every logit by b = -1.5 before
    sampling labels, then reports the unshifted confidence.  Every bin
    sits above the diagonal, so MCS is positive and close to ECE.

The rest of the walkthrough (frequent/rare split, per-class table, pooled
reliability curve) runs on the sharpened model, whose S-shaped curve is
the more interesting picture.
"""

from mlcalib import (
    LatentSpec,
    SynthConfig,
    aggregate_multilabel,
    calibration_scores,
    cmap,
    confidences,
    frequent_rare_split,
    generate,
    per_class_scores,
    pooled_reliability,
    pos_counts,
)

M_BINS = 15
LATENT = LatentSpec(means=(-2.5, -1.5, -0.5, 0.5, 1.5, 2.5), stddev=3.0)

sharpened, _ = generate(
    SynthConfig(n=8000, c=6, true_t=0.5, true_b=0.0, seed=42, latent=LATENT)
)
biased, _ = generate(
    SynthConfig(n=8000, c=6, true_t=1.0, true_b=-1.5, seed=42, latent=LATENT)
)

print("=== the two miscalibration shapes ===")
for name, dataset in [("sharpened", sharpened), ("biased", biased)]:
    probs = confidences(dataset)
    per_class = per_class_scores(dataset, probs, M_BINS)
    s = aggregate_multilabel(per_class)
    print(f"{name:10s} cmAP {cmap(dataset, probs):.4f}   "
          f"ECE {s.ece:.4f}  MCS {s.mcs:+.4f}  OCS {s.ocs:.4f}  UCS {s.ucs:.4f}")
print("sharpened: over- and underconfident bins cancel in MCS but add in ECE")
print("biased:    one-sided overconfidence, so MCS tracks ECE")

dataset = sharpened
probs = confidences(dataset)
per_class = per_class_scores(dataset, probs, M_BINS)

print()
print("=== frequent vs rare classes (top classes holding ~50% of positives) ===")
counts = dict(zip(dataset.classes, (int(v) for v in pos_counts(dataset))))
split = frequent_rare_split(counts, target_fraction=0.5)
for name, members in [("frequent", split.frequent), ("rare", split.rare)]:
    group = [m for m in per_class if m.class_id in members]
    s = aggregate_multilabel(group, scope=name)
    print(f"{name:9s} {sorted(m.class_id for m in group)}: "
          f"ECE {s.ece:.4f}  MCS {s.mcs:+.4f}")

print()
print("=== per-class table ===")
print(f"{'class':11s} {'n_pos':>6s} {'AP':>7s} {'ECE':>8s} {'MCS':>8s}")
for m in per_class:
    print(f"{m.class_id:11s} {m.n_pos:6d} {m.ap:7.4f} "
          f"{m.scores.ece:8.4f} {m.scores.mcs:+8.4f}")

print()
print("=== pooled reliability curve (sharpened model) ===")
curve = pooled_reliability(dataset, probs, M_BINS)
pooled = calibration_scores(curve)
print(f"pooled ECE {pooled.ece:.4f}  MCS {pooled.mcs:+.4f}  (n = {curve.n})")
print(f"{'bin':13s} {'count':>7s} {'conf':>7s} {'freq':>7s}  |gap|")
for b in curve.bins:
    if b.count == 0:
        print(f"[{b.lower:.2f},{b.upper:.2f})  (empty)")
        continue
    bar = "+" * int(round(40 * abs(b.conf - b.acc)))
    print(f"[{b.lower:.2f},{b.upper:.2f}) {b.count:7d} {b.conf:7.3f} {b.acc:7.3f}  {bar}")
