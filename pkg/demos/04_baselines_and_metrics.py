"""Classical adaptive-testing baselines and the accuracy/security metrics.

Fits question difficulties on the training cohort, runs maximum-information
and random selection episodes on the test cohort, and compares pooled AUC,
exposure imbalance, and mean test overlap.
"""

import numpy as np

from bilevelcat import (
    BaselineMethodParams,
    MapConfig,
    evaluate,
    fit_irt,
    generate_synthetic,
    map_estimate_theta,
    partition_questions,
    split_students,
)

ds, truth = generate_synthetic(n_students=800, n_questions=50, density=1.0, seed=31)
ds = split_students(ds, (0.5, 0.1, 0.4), seed=32)
partition = partition_questions(ds, 0.8, seed=33)

irt = fit_irt(ds, include_tags=("train",))
r = np.corrcoef(irt.difficulties, truth["difficulties"])[0, 1]
print(f"difficulty recovery: correlation with ground truth {r:.3f}")

theta = map_estimate_theta(irt, [(0, 1), (1, 0), (2, 1)], MapConfig())
print(f"MAP ability after three observed responses: {theta:+.3f}")

params = BaselineMethodParams(irt=irt, map_cfg=MapConfig())
test_ids = ds.students_with_tag("test")
print(f"\n{len(test_ids)} test students, 8 questions each:")
print("method       auc     expose_chi  overlap_mu")
for method in ("irt-active", "irt-random"):
    result = evaluate(method, params, ds, partition, test_ids, 8, eval_seed=34)
    p = result.point
    print(f"{method:<11} {p.auc:.4f}  {p.expose_chi:>10.3f}  {p.overlap_mu:>10.4f}")
print("\nthe active rule is more accurate but concentrates exposure;")
print("random selection is flat on both security metrics.")
