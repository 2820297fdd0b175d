"""Line recovery on random digital lines: raw accumulator peaks vs refined lines."""

import argparse
import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from crackmeter.geometry import PolarLine  # noqa: E402
from crackmeter.hough import HoughConfig, accumulate, extract_lines  # noqa: E402
from oracles import digital_line  # noqa: E402


def step_error(found, truth, cfg):
    dt, dr = found.theta - truth.theta, found.rho - truth.rho
    if abs(dt) > math.pi / 2:
        dt -= math.copysign(math.pi, dt)
        dr = -found.rho - truth.rho
    return max(abs(dt) / cfg.theta_step, abs(dr) / cfg.rho_step)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--width", type=int, default=160)
    ap.add_argument("--height", type=int, default=120)
    ap.add_argument("--min-pixels", type=int, default=30)
    ap.add_argument("--theta-step-deg", type=float, default=1.0)
    ap.add_argument("--rho-step", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=613)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    cfg = HoughConfig(theta_step=math.radians(args.theta_step_deg), rho_step=args.rho_step,
                      threshold_vertical=20, threshold_horizontal=20)
    diag = math.hypot(args.width, args.height)
    errs = {"raw": [], "refined": []}
    for _ in range(args.n):
        while True:
            truth = PolarLine(rng.uniform(-diag, diag), rng.uniform(0, math.pi))
            pts = digital_line(truth.rho, truth.theta, args.width, args.height)
            if len(pts) >= args.min_pixels:
                break
        edges = np.zeros((args.height, args.width), bool)
        xs, ys = zip(*pts)
        edges[list(ys), list(xs)] = True
        acc = accumulate(edges, cfg)
        for name, e in (("raw", None), ("refined", edges)):
            hs, vs = extract_lines(acc, cfg, e)
            top = max(hs + vs, key=lambda l: l.votes) if hs + vs else None
            errs[name].append(step_error(top, truth, cfg) if top else math.inf)
    for name, v in errs.items():
        v = np.array(v)
        print(f"{name:>8}: {int((v > 1).sum()):3d}/{args.n} beyond one step, "
              f"median {np.median(v):.3f}, worst {v.max():.3f} steps")


if __name__ == "__main__":
    main()
