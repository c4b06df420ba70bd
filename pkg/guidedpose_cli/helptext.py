ROOT_DESCRIPTION = """guidedpose command line interface.

Generate analytic synthetic scenes, turn decoder outputs (segmentation, vector
fields, confidences) into 6D poses with differentiable keypoint regression or
RANSAC voting, score poses with ADD(-S) and 2D projection recall, check every
analytic gradient against finite differences and benchmark the pipeline stages.
"""

ROOT_EPILOG = """Commands:
  gen: write a synthetic scene with its seg/field/conf tensors and ground-truth poses.
  infer: estimate one pose per detected class from CPT1 tensors.
  eval: score estimated pose records against a scene's ground truth.
  gradcheck: finite-difference check of the analytic vector-Jacobian products.
  bench: per-stage latency statistics of the inference pipeline.

Exit codes:
  0 ok, 2 usage or I/O error, 3 shape error, 4 content mismatch, 5 gradient check failure.

Examples:
  guidedpose gen --objects 3 --seed 7 --out scene7/
  guidedpose infer --scene scene7/scene.txt --seg scene7/seg.cpt --field scene7/field.cpt --conf scene7/conf.cpt
  guidedpose gradcheck --kernels dkr
"""

GEN_DESCRIPTION = """Generate a synthetic scene.

Renders up to six spheres and boxes as exact silhouettes on a 240 x 320 image
and writes what a perfect decoder would emit for them. Output is identical for
a fixed seed.
"""

GEN_EPILOG = """Examples:
  guidedpose gen --objects 3 --seed 7 --out scene7/
  guidedpose gen --objects 3 --seed 7 --noise-sigma 0.01 --outliers 0.2 --out noisy7/

Output contract:
  Files: scene.txt, seg.cpt (H x W x Nc), field.cpt (H x W x 2m), conf.cpt
  (H x W x m raw confidences), gt_poses.txt (pose records).
  JSON fields: command, out, objects, classes, seed, image_size, keypoints,
  noise_sigma, outliers, foreground_pixels, files.
"""

INFER_DESCRIPTION = """Estimate poses from decoder output tensors.

The segmentation is split into 4-connected components, one region per class is
kept, keypoints are regressed (--mode dkr) or voted (--mode rv) and each class
is solved with EPnP inside RANSAC. Records are sorted by class id and do not
depend on --threads.
"""

INFER_EPILOG = """Examples:
  guidedpose infer --scene d/scene.txt --seg d/seg.cpt --field d/field.cpt --conf d/conf.cpt
  guidedpose infer --scene d/scene.txt --seg d/seg.cpt --field d/field.cpt --conf d/conf.cpt --mode rv --out est.txt

Output contract:
  One line per class: class <id> R <9 floats> t <3 floats> keypoints <2m floats>
  status <ok|low_rank|pnp_failed>, then timing.cc_ms, timing.keypoints_ms and
  timing.pnp_ms lines. --out writes the records alone.
  JSON fields: command, mode, threads, records, statuses, timings.
"""

EVAL_DESCRIPTION = """Score estimated poses against the scene's ground truth.

ADD is used for asymmetric objects and ADD-S for symmetric ones, correct below
10% of the model diameter; 2D projection is correct below 5 pixels. Scene
classes without an estimate count as misses.
"""

EVAL_EPILOG = """Examples:
  guidedpose eval --scene d/scene.txt --estimates est.txt

Output contract:
  A table per class, then class.<id>.adds_recall, class.<id>.proj2d_recall,
  mean.adds_recall and mean.proj2d_recall lines (percent).
  Estimates for classes absent from the scene exit with code 4.
"""

GRADCHECK_DESCRIPTION = """Check analytic gradients against central finite differences.

Every kernel is checked on seeded float64 instances with step 1e-3; a kernel
passes when its maximum relative error stays below 1e-4.
"""

GRADCHECK_EPILOG = """Examples:
  guidedpose gradcheck
  guidedpose gradcheck --kernels dkr,losses --instances 20 --seed 3

Kernels:
  semantic_norm: temperature_softmax, clade
  guided_ops: object_aware_conv, object_aware_upsample
  dkr: dkr, confidence_regularizer
  losses: seg_loss, vector_loss, proxy_voting_loss, keypoint_loss

Output contract:
  One line per kernel, then kernel.<name>.max_rel_error and passed lines.
  Exit code 5 when any kernel fails.
"""

BENCH_DESCRIPTION = """Benchmark the inference pipeline stages.

Runs the full pipeline repeatedly after a warmup and reports the median and
95th percentile latency of connected components, keypoint regression and PnP.
"""

BENCH_EPILOG = """Examples:
  guidedpose bench --scene d/scene.txt --seg d/seg.cpt --field d/field.cpt --conf d/conf.cpt --repetitions 100

Output contract:
  stage.<cc|keypoints|pnp>.median_ms, stage.<...>.p95_ms, repetitions,
  low_confidence (fewer than 100 repetitions) and deterministic lines.
"""
