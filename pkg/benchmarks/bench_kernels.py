"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N] [--json out.json]

Each kernel runs on inputs shaped like the ones the pipeline feeds it; the
end-to-end rows time a full odometry run with each backend swapped in.
"""

import argparse
import json
import sys
import time
from contextlib import contextmanager

import numpy as np

from dynband import _kernels
from dynband.dyn_filter import DepthBandParams, _prepare, keypoint_pixels
from dynband.geom import rigid_fit_batch
from dynband.synth import SceneConfig, generate_sequence
from dynband.vo import run_odometry

KERNELS = ("dilate_square", "min_eig_response", "grid_best", "classify_rules", "count_inliers")


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(rng):
    img = rng.uniform(0, 255, (480, 640))
    mask = np.zeros((480, 640), dtype=np.uint8)
    mask[100:380, 200:330] = rng.random((280, 130)) < 0.8
    resp = _kernels.python_backend.min_eig_response(img)

    sys.path.insert(0, "tests")
    from scenes import random_filter_frame

    kps, masks, depth = random_filter_frame(rng, 640, 480, max_masks=4, max_kps=2000)
    union, _, boxes, limits = _prepare(masks, depth, DepthBandParams(), 3)
    iu, iv = keypoint_pixels(kps, depth.width, depth.height)
    cls_args = (iu, iv, union, depth.depth, depth.valid.astype(np.uint8), boxes, limits)

    prev = rng.normal(size=(400, 3))
    curr = prev + rng.normal(scale=0.02, size=prev.shape)
    R, t, _ = rigid_fit_batch(curr[rng.integers(0, 400, (200, 3))], prev[rng.integers(0, 400, (200, 3))])
    R, t = np.ascontiguousarray(R), np.ascontiguousarray(t)
    return {
        "dilate_square": (mask, 3),
        "min_eig_response": (img,),
        "grid_best": (resp, 8, 0.01 * resp.max()),
        "classify_rules": cls_args,
        "count_inliers": (R, t, prev, curr, 0.0025),
    }


@contextmanager
def backend(module):
    saved = {name: getattr(_kernels, name) for name in KERNELS}
    for name in KERNELS:
        setattr(_kernels, name, getattr(module, name))
    try:
        yield
    finally:
        for name, fn in saved.items():
            setattr(_kernels, name, fn)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--frames", type=int, default=120, help="frames in the end-to-end run")
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)

    py, cy = _kernels.python_backend, _kernels.compiled_backend
    if cy is None:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`",
              file=sys.stderr)
        return 1

    rng = np.random.default_rng(0)
    rows = []
    for name, case in kernel_cases(rng).items():
        t_py = best_of(lambda: getattr(py, name)(*case), args.repeat)
        t_cy = best_of(lambda: getattr(cy, name)(*case), args.repeat)
        rows.append({"case": name, "python_s": t_py, "compiled_s": t_cy, "speedup": t_py / t_cy})

    cfg = SceneConfig(n_frames=args.frames)
    frames, _ = generate_sequence(cfg)
    for use_filter in (True, False):
        times = {}
        for label, module in (("python", py), ("compiled", cy)):
            with backend(module):
                times[label] = best_of(lambda: run_odometry(frames, cfg.intrinsics, use_filter),
                                       max(1, args.repeat // 2))
        rows.append({"case": f"odometry {'filtered' if use_filter else 'unfiltered'} ({args.frames} frames)",
                     "python_s": times["python"], "compiled_s": times["compiled"],
                     "speedup": times["python"] / times["compiled"]})

    width = max(len(r["case"]) for r in rows)
    print(f"{'case':<{width}}  {'python ms':>10}  {'compiled ms':>11}  {'speedup':>7}")
    for r in rows:
        print(f"{r['case']:<{width}}  {1e3 * r['python_s']:>10.2f}  {1e3 * r['compiled_s']:>11.2f}  "
              f"{r['speedup']:>6.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
